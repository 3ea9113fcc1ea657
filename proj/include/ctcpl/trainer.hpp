// ctcpl/trainer.hpp

// Copyright 2026  ctcpl authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Shared training machinery: pooled datasets with per-utterance language
// indices and pseudo-label flags, frame-budget batch iteration with
// per-epoch reshuffling, greedy validation with best-checkpoint tracking,
// and a JSON-lines step log (no timestamps, so reruns are byte-identical).

#ifndef CTCPL_TRAINER_HPP_
#define CTCPL_TRAINER_HPP_

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctcpl/common.hpp"
#include "ctcpl/corpus.hpp"
#include "ctcpl/ctc.hpp"
#include "ctcpl/eval.hpp"
#include "ctcpl/io.hpp"
#include "ctcpl/model.hpp"
#include "ctcpl/rng.hpp"
#include "ctcpl/symbols.hpp"

namespace ctcpl {

// Pooled training data: manifest rows plus language index and a pseudo-label
// flag (pseudo-labeled rows carry no LID loss unless explicitly enabled).
struct PooledData {
  Manifest manifest;
  std::vector<int64_t> lang_index;  // parallel to manifest.entries
  std::vector<char> is_pl;
  std::map<std::string, size_t> by_id;

  void add(const Manifest& m, int64_t lang, bool pl) {
    for (const auto& e : m.entries) {
      by_id[e.id] = manifest.entries.size();
      manifest.entries.push_back(e);
      lang_index.push_back(lang);
      is_pl.push_back(pl ? 1 : 0);
    }
  }
  size_t size() const { return manifest.entries.size(); }
};

inline std::vector<std::string> sorted_languages(const std::vector<Manifest>& manifests) {
  std::set<std::string> langs;
  for (const auto& m : manifests)
    for (const auto& e : m.entries) langs.insert(e.language_id);
  return {langs.begin(), langs.end()};
}

inline int64_t language_index(const std::vector<std::string>& languages, const std::string& id) {
  auto it = std::lower_bound(languages.begin(), languages.end(), id);
  if (it == languages.end() || *it != id) throw Error("unknown language: " + id);
  return it - languages.begin();
}

// ---------------------------------------------------------------------------
// Step logging (JSON lines, machine-readable, timestamp-free)

class JsonlLogger {
 public:
  JsonlLogger() = default;
  explicit JsonlLogger(const std::string& path) {
    os_.open(path, std::ios::binary);
    if (!os_) throw IoError(IoCode::kOpenFailed, "JsonlLogger: cannot open " + path);
  }

  void log_step(int64_t step, const std::string& phase, const std::string& kind, double loss,
                int64_t cache_replacements, int64_t pl_filtered_count, double lr) {
    if (!os_.is_open()) return;
    nlohmann::json j{{"step", step},
                     {"phase", phase},
                     {"kind", kind},
                     {"loss", loss},
                     {"cache_replacements", cache_replacements},
                     {"pl_filtered_count", pl_filtered_count},
                     {"lr", lr}};
    os_ << j.dump() << "\n";
  }

  void log_json(const nlohmann::json& j) {
    if (os_.is_open()) os_ << j.dump() << "\n";
  }

 private:
  std::ofstream os_;
};

// ---------------------------------------------------------------------------
// Validation

struct EvalItem {
  std::string id;
  Mat features;
  std::string ref;
  int64_t lang_index = -1;
  std::string language_id;
  int64_t duration_frames = 0;
};

inline std::vector<EvalItem> load_eval_items(const Manifest& m,
                                             const std::vector<std::string>& languages) {
  std::vector<EvalItem> out;
  for (const auto& e : m.entries) {
    EvalItem it;
    it.id = e.id;
    it.features = read_features(e.feature_path);
    it.ref = e.transcript;
    it.language_id = e.language_id;
    it.lang_index = language_index(languages, e.language_id);
    it.duration_frames = e.duration_frames;
    out.push_back(std::move(it));
  }
  return out;
}

struct ValidResult {
  std::map<std::string, LanguageCell> languages;
  int64_t lid_correct = 0;
  int64_t lid_total = 0;

  double macro_cer() const {
    if (languages.empty()) return 0.0;
    double s = 0.0;
    for (const auto& [id, cell] : languages) s += cell.cer();
    return s / static_cast<double>(languages.size());
  }
  double cer_of(const std::string& lang) const {
    auto it = languages.find(lang);
    if (it == languages.end()) throw Error("ValidResult: no language " + lang);
    return it->second.cer();
  }
  double lid_accuracy() const {
    return lid_total > 0 ? static_cast<double>(lid_correct) / static_cast<double>(lid_total) : 0.0;
  }
};

inline ValidResult evaluate_greedy(const ParamSet& params, const EncoderConfig& cfg,
                                   const SymbolTable& symtab, const std::vector<EvalItem>& items,
                                   int jobs = 1) {
  struct Row {
    int64_t dist = 0, ref_chars = 0;
    bool lid_ok = false;
    std::string lang;
  };
  std::vector<Row> rows(items.size());
  std::vector<std::string> errors(items.size());
  parallel_for(static_cast<int64_t>(items.size()), jobs, [&](int64_t i) {
    try {
      const EvalItem& it = items[static_cast<size_t>(i)];
      EvalOut out = eval_forward(params, cfg, it.features);
      std::string hyp = symtab.decode(greedy_decode(out.ctc_logits));
      RateResult c = cer(it.ref, hyp);
      Row& r = rows[static_cast<size_t>(i)];
      r.dist = c.counts.distance;
      r.ref_chars = c.ref_len;
      r.lang = it.language_id;
      int64_t argmax = 0;
      for (int64_t l = 1; l < out.lid_logits.cols; ++l)
        if (out.lid_logits(0, l) > out.lid_logits(0, argmax)) argmax = l;
      r.lid_ok = argmax == it.lang_index;
    } catch (const std::exception& e) {
      errors[static_cast<size_t>(i)] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) throw Error("evaluate_greedy: " + e);
  ValidResult res;
  for (const auto& r : rows) {
    LanguageCell& cell = res.languages[r.lang];
    cell.chars.distance += r.dist;
    cell.ref_chars += r.ref_chars;
    cell.n_utterances += 1;
    res.lid_total += 1;
    if (r.lid_ok) res.lid_correct += 1;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainLoopConfig {
  int64_t updates = 1000;
  double gamma = 1.0;
  int64_t frame_budget = 2000;
  uint64_t seed = 0;
  int jobs = 1;
  bool specaug_enabled = true;
  SpecAugmentConfig specaug;
  int64_t specaug_delay = 0;  // suppress SpecAugment before this many loop updates
  bool lid_on_pl = false;
  int64_t eval_every = 0;  // 0: only at the end
};

struct CurveRow {
  int64_t step = 0;
  std::map<std::string, double> per_language_cer;
  double macro_cer = 0.0;
  double lid_accuracy = 0.0;
};

struct TrainOutcome {
  int64_t best_step = 0;
  double best_macro_cer = 0.0;
  ParamSet best_params;
  std::vector<CurveRow> curve;
};

inline std::string curve_to_csv(const std::vector<CurveRow>& curve,
                                const std::vector<std::string>& languages) {
  std::string out = "step";
  for (const auto& l : languages) out += ",cer_" + l;
  out += ",macro_cer,lid_accuracy\n";
  for (const auto& r : curve) {
    out += strprintf("%lld", (long long)r.step);
    for (const auto& l : languages) {
      auto it = r.per_language_cer.find(l);
      out += strprintf(",%.6f", it == r.per_language_cer.end() ? 0.0 : it->second);
    }
    out += strprintf(",%.6f,%.6f\n", r.macro_cer, r.lid_accuracy);
  }
  return out;
}

// Builds TrainItems for one batch: loads features, applies SpecAugment when
// allowed, encodes targets. `feature_store` owns the loaded matrices.
inline std::vector<TrainItem> build_batch(const PooledData& data,
                                          const std::vector<std::string>& batch_ids,
                                          const SymbolTable& symtab, bool augment,
                                          const SpecAugmentConfig& sa, uint64_t step_seed,
                                          bool lid_on_pl, std::vector<Mat>& feature_store) {
  std::vector<TrainItem> items;
  feature_store.clear();
  feature_store.reserve(batch_ids.size());
  items.reserve(batch_ids.size());
  for (size_t i = 0; i < batch_ids.size(); ++i) {
    auto idx_it = data.by_id.find(batch_ids[i]);
    if (idx_it == data.by_id.end()) throw Error("build_batch: unknown id " + batch_ids[i]);
    size_t idx = idx_it->second;
    const ManifestEntry& e = data.manifest.entries[idx];
    if (e.transcript.empty()) throw Error("build_batch: unlabeled utterance " + e.id + " in labeled batch");
    Mat feats = read_features(e.feature_path);
    if (augment) {
      Rng rng(derive_seed(step_seed, "specaug", static_cast<uint64_t>(i)));
      apply_specaugment(feats, sa, rng);
    }
    feature_store.push_back(std::move(feats));
    TrainItem item;
    item.target = symtab.encode(e.transcript);
    bool pl = data.is_pl[idx] != 0;
    item.language_index = (pl && !lid_on_pl) ? -1 : data.lang_index[idx];
    items.push_back(std::move(item));
  }
  for (size_t i = 0; i < items.size(); ++i) items[i].features = &feature_store[i];
  return items;
}

// Cycles batches epoch by epoch, reshuffling batch order per epoch.
class BatchCycler {
 public:
  BatchCycler(const Manifest* manifest, int64_t frame_budget, uint64_t seed)
      : manifest_(manifest), frame_budget_(frame_budget), seed_(seed) {
    if (manifest_->entries.empty()) throw Error("BatchCycler: empty manifest");
    next_epoch();
  }

  const std::vector<std::string>& next() {
    if (cursor_ >= plan_.batches.size()) next_epoch();
    return plan_.batches[cursor_++];
  }

  int64_t epoch() const { return epoch_ - 1; }

 private:
  void next_epoch() {
    plan_ = plan_batches(*manifest_, frame_budget_, derive_seed(seed_, "epoch", static_cast<uint64_t>(epoch_)), true);
    cursor_ = 0;
    ++epoch_;
  }

  const Manifest* manifest_;
  int64_t frame_budget_;
  uint64_t seed_;
  BatchPlan plan_;
  size_t cursor_ = 0;
  int64_t epoch_ = 0;
};

// Supervised loop over pooled labeled (and possibly pseudo-labeled) data.
// Validation runs every eval_every updates and at the end; the returned
// parameters are the best macro-CER snapshot (earliest step on ties).
inline TrainOutcome train_loop(TrainState& st, const EncoderConfig& enc, const SymbolTable& symtab,
                               const PooledData& data, const std::vector<EvalItem>& valid_items,
                               const std::vector<std::string>& languages,
                               const TrainLoopConfig& cfg, JsonlLogger* logger = nullptr) {
  if (data.size() == 0) throw Error("train_loop: empty dataset");
  TrainOutcome outcome;
  outcome.best_macro_cer = std::numeric_limits<double>::infinity();

  auto run_eval = [&](int64_t step) {
    ValidResult vr = evaluate_greedy(st.params, enc, symtab, valid_items, cfg.jobs);
    CurveRow row;
    row.step = step;
    for (const auto& [lang, cell] : vr.languages) row.per_language_cer[lang] = cell.cer();
    row.macro_cer = vr.macro_cer();
    row.lid_accuracy = vr.lid_accuracy();
    outcome.curve.push_back(row);
    if (row.macro_cer < outcome.best_macro_cer) {
      outcome.best_macro_cer = row.macro_cer;
      outcome.best_step = step;
      outcome.best_params = st.params;
    }
  };

  BatchCycler cycler(&data.manifest, cfg.frame_budget, derive_seed(cfg.seed, "train-batches"));
  std::vector<Mat> feature_store;
  for (int64_t step = 0; step < cfg.updates; ++step) {
    const auto& batch_ids = cycler.next();
    uint64_t step_seed = derive_seed(cfg.seed, "step", static_cast<uint64_t>(st.update_counter));
    bool augment = cfg.specaug_enabled && step >= cfg.specaug_delay;
    auto items = build_batch(data, batch_ids, symtab, augment, cfg.specaug, step_seed,
                             cfg.lid_on_pl, feature_store);
    BatchResult br = compute_batch_gradients(st.params, enc, items, cfg.gamma, true, step_seed, cfg.jobs);
    if (!std::isfinite(br.loss)) throw Error(strprintf("train_loop: non-finite loss at step %lld",
                                                       (long long)st.update_counter));
    double lr = st.current_lr();
    optimizer_step(st, br.grads);
    if (logger) logger->log_step(st.update_counter, "supervised", "labeled", br.loss, 0, 0, lr);
    if (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 && step + 1 < cfg.updates)
      run_eval(st.update_counter);
  }
  run_eval(st.update_counter);
  if (outcome.best_params.empty()) outcome.best_params = st.params;
  (void)languages;
  return outcome;
}

}  // namespace ctcpl

#endif  // CTCPL_TRAINER_HPP_
