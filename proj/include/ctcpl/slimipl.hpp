// ctcpl/slimipl.hpp

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

// Semi-supervised training with a dynamic pseudo-label cache: a supervised
// warmup, a cache fill of C pseudo-labeled batches, then rounds of exactly
// lambda unlabeled steps followed by one labeled step. A used cache entry is
// replaced with probability p by a freshly pseudo-labeled batch. Long
// utterances are cropped into fixed-length segments (logits stitched back
// together) during the cropping warmup window, full forwards afterwards.
// Pseudo-labeled batches train with the CTC loss only.

#ifndef CTCPL_SLIMIPL_HPP_
#define CTCPL_SLIMIPL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "ctcpl/common.hpp"
#include "ctcpl/ctc.hpp"
#include "ctcpl/mat.hpp"
#include "ctcpl/model.hpp"
#include "ctcpl/rng.hpp"
#include "ctcpl/trainer.hpp"

namespace ctcpl {

struct CacheConfig {
  int64_t cache_size = 1000;
  double replace_prob = 0.1;
  int64_t lambda = 10;              // unlabeled : labeled step ratio
  int64_t labeled_warmup_updates = 0;
  int64_t crop_warmup_updates = 0;  // counted from the start of the slimIPL phase
  int64_t crop_len_frames = 0;      // 0: cropping disabled even in the warmup window
  int64_t pl_max_len = 630;
  int64_t retry_bound = 20;
  bool lid_on_pl = false;
};

inline void validate_cache_config(const CacheConfig& c) {
  if (c.cache_size < 1) throw Error("CacheConfig: cache_size must be >= 1");
  if (c.replace_prob < 0.0 || c.replace_prob > 1.0) throw Error("CacheConfig: replace_prob outside [0,1]");
  if (c.lambda < 1) throw Error("CacheConfig: lambda must be >= 1");
  if (c.labeled_warmup_updates < 0 || c.crop_warmup_updates < 0)
    throw Error("CacheConfig: negative warmup");
  if (c.pl_max_len < 1) throw Error("CacheConfig: pl_max_len must be >= 1");
  if (c.retry_bound < 1) throw Error("CacheConfig: retry_bound must be >= 1");
}

// Accept iff 1 <= len(pl) <= max_len.
inline bool filter_pl(const std::vector<int>& pl, int64_t max_len) {
  return !pl.empty() && static_cast<int64_t>(pl.size()) <= max_len;
}

// Consecutive non-overlapping crops (the last may be shorter, but at least
// one frame); per-crop CTC logits concatenated in order. crop_len must be a
// positive multiple of the conv stride so output frames stay aligned.
inline Mat crop_and_stitch(const ParamSet& params, const EncoderConfig& enc, const Mat& features,
                           int64_t crop_len) {
  if (crop_len < enc.conv_stride) throw Error("crop_and_stitch: crop_len shorter than conv stride");
  if (crop_len % enc.conv_stride != 0)
    throw Error("crop_and_stitch: crop_len must be a multiple of the conv stride");
  int64_t T = features.rows;
  std::vector<Mat> parts;
  int64_t total_rows = 0;
  for (int64_t start = 0; start < T; start += crop_len) {
    int64_t len = std::min(crop_len, T - start);
    Mat crop(len, features.cols);
    for (int64_t t = 0; t < len; ++t)
      for (int64_t d = 0; d < features.cols; ++d) crop(t, d) = features(start + t, d);
    Mat logits = eval_forward(params, enc, crop).ctc_logits;
    total_rows += logits.rows;
    parts.push_back(std::move(logits));
  }
  Mat out(total_rows, parts.front().cols);
  int64_t row = 0;
  for (const Mat& p : parts) {
    for (int64_t t = 0; t < p.rows; ++t, ++row)
      for (int64_t c = 0; c < p.cols; ++c) out(row, c) = p(t, c);
  }
  return out;
}

enum class PlMode { kFull, kCropped };

// Greedy pseudo-label from the current model state, no language model.
inline std::vector<int> pseudo_label(const ParamSet& params, const EncoderConfig& enc,
                                     const Mat& features, PlMode mode, int64_t crop_len = 0) {
  if (mode == PlMode::kCropped && crop_len > 0 && features.rows > crop_len)
    return greedy_decode(crop_and_stitch(params, enc, features, crop_len));
  return greedy_decode(eval_forward(params, enc, features).ctc_logits);
}

// One cached batch: utterance ids with their pseudo-labels and the model
// update counter at generation time.
struct CacheEntry {
  std::vector<size_t> utt_index;          // into the unlabeled manifest
  std::vector<std::vector<int>> pls;
  int64_t model_update_counter = 0;
};

struct SslStats {
  int64_t labeled_steps = 0;
  int64_t unlabeled_steps = 0;
  int64_t replacements = 0;
  int64_t pl_filtered_total = 0;
  int64_t cropped_generations = 0;
  int64_t full_generations = 0;
  int64_t cropped_generations_after_boundary = 0;
  int64_t completed_rounds = 0;
};

struct SslConfig {
  CacheConfig cache;
  int64_t rounds = 100;  // each round: lambda unlabeled steps + 1 labeled step
  TrainLoopConfig train;
};

// Test/diagnostic probe invoked after each slimIPL-phase step.
struct SslProbe {
  std::function<void(const std::string& kind, const std::vector<CacheEntry>& cache,
                     const SslStats& stats, int64_t update_counter)>
      after_step;
};

struct SslOutcome {
  int64_t best_step = 0;
  double best_macro_cer = 0.0;
  ParamSet best_params;
  std::vector<CurveRow> curve;
  SslStats stats;
};

inline SslOutcome ssl_train(TrainState& st, const EncoderConfig& enc, const SymbolTable& symtab,
                            const PooledData& labeled, const Manifest& unlabeled,
                            const std::vector<EvalItem>& valid_items, const SslConfig& cfg,
                            JsonlLogger* logger = nullptr, const SslProbe* probe = nullptr) {
  validate_cache_config(cfg.cache);
  if (labeled.size() == 0) throw Error("ssl_train: empty labeled data");
  if (unlabeled.entries.empty()) throw Error("ssl_train: empty unlabeled manifest");
  if (cfg.cache.crop_len_frames > 0 && cfg.cache.crop_len_frames < enc.conv_filter_len)
    throw Error("ssl_train: crop_len shorter than the encoder receptive field");

  SslOutcome outcome;
  outcome.best_macro_cer = std::numeric_limits<double>::infinity();
  SslStats& stats = outcome.stats;

  auto run_eval = [&](int64_t step) {
    ValidResult vr = evaluate_greedy(st.params, enc, symtab, valid_items, cfg.train.jobs);
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

  BatchCycler labeled_cycler(&labeled.manifest, cfg.train.frame_budget,
                             derive_seed(cfg.train.seed, "ssl-labeled"));
  BatchCycler unlabeled_cycler(&unlabeled, cfg.train.frame_budget,
                               derive_seed(cfg.train.seed, "ssl-unlabeled"));
  Rng cache_rng(derive_seed(cfg.train.seed, "ssl-cache"));
  std::vector<Mat> feature_store;
  std::map<std::string, size_t> unlabeled_by_id;
  for (size_t i = 0; i < unlabeled.entries.size(); ++i) unlabeled_by_id[unlabeled.entries[i].id] = i;

  auto labeled_step = [&](const std::string& phase) {
    const auto& batch_ids = labeled_cycler.next();
    uint64_t step_seed = derive_seed(cfg.train.seed, "step", static_cast<uint64_t>(st.update_counter));
    bool augment = cfg.train.specaug_enabled;
    auto items = build_batch(labeled, batch_ids, symtab, augment, cfg.train.specaug, step_seed,
                             cfg.train.lid_on_pl, feature_store);
    BatchResult br = compute_batch_gradients(st.params, enc, items, cfg.train.gamma, true,
                                             step_seed, cfg.train.jobs);
    if (!std::isfinite(br.loss))
      throw Error(strprintf("ssl_train: non-finite loss at step %lld", (long long)st.update_counter));
    double lr = st.current_lr();
    optimizer_step(st, br.grads);
    ++stats.labeled_steps;
    if (logger) logger->log_step(st.update_counter, phase, "labeled", br.loss, 0, 0, lr);
  };

  // Supervised warmup.
  for (int64_t i = 0; i < cfg.cache.labeled_warmup_updates; ++i) labeled_step("warmup");

  const int64_t ssl_start_counter = st.update_counter;
  const int64_t crop_boundary = ssl_start_counter + cfg.cache.crop_warmup_updates;
  auto current_mode = [&]() {
    return (cfg.cache.crop_len_frames > 0 && st.update_counter < crop_boundary) ? PlMode::kCropped
                                                                                : PlMode::kFull;
  };

  // Pseudo-label one batch; returns the entry and how many utterances the
  // length filter dropped. An entry with no survivors is rejected upstream.
  auto pseudo_label_batch = [&](const std::vector<std::string>& batch_ids, int64_t* dropped) {
    CacheEntry entry;
    entry.model_update_counter = st.update_counter;
    PlMode mode = current_mode();
    std::vector<size_t> idxs;
    for (const auto& id : batch_ids) idxs.push_back(unlabeled_by_id.at(id));
    std::vector<std::vector<int>> pls(idxs.size());
    std::vector<std::string> errors(idxs.size());
    parallel_for(static_cast<int64_t>(idxs.size()), cfg.train.jobs, [&](int64_t i) {
      try {
        const ManifestEntry& e = unlabeled.entries[idxs[static_cast<size_t>(i)]];
        Mat feats = read_features(e.feature_path);
        pls[static_cast<size_t>(i)] =
            pseudo_label(st.params, enc, feats, mode, cfg.cache.crop_len_frames);
      } catch (const std::exception& ex) {
        errors[static_cast<size_t>(i)] = ex.what();
      }
    });
    for (const auto& e : errors)
      if (!e.empty()) throw Error("ssl_train: pseudo-labeling failed: " + e);
    if (mode == PlMode::kCropped) {
      ++stats.cropped_generations;
      if (st.update_counter >= crop_boundary) ++stats.cropped_generations_after_boundary;
    } else {
      ++stats.full_generations;
    }
    for (size_t i = 0; i < idxs.size(); ++i) {
      const ManifestEntry& e = unlabeled.entries[idxs[i]];
      bool ok = filter_pl(pls[i], cfg.cache.pl_max_len) &&
                ctc_admissible(enc.out_len(e.duration_frames), pls[i]);
      if (!ok) {
        ++*dropped;
        continue;
      }
      entry.utt_index.push_back(idxs[i]);
      entry.pls.push_back(std::move(pls[i]));
    }
    return entry;
  };

  auto draw_entry = [&](int64_t* dropped) {
    for (int64_t attempt = 0; attempt < cfg.cache.retry_bound; ++attempt) {
      CacheEntry e = pseudo_label_batch(unlabeled_cycler.next(), dropped);
      if (!e.utt_index.empty()) return e;
    }
    throw Error(strprintf(
        "ssl_train: pseudo-label collapse: %lld consecutive batches produced no usable "
        "pseudo-labels (empty or longer than %lld)",
        (long long)cfg.cache.retry_bound, (long long)cfg.cache.pl_max_len));
  };

  // Cache fill with the current (warmed-up) model.
  std::vector<CacheEntry> cache;
  cache.reserve(static_cast<size_t>(cfg.cache.cache_size));
  {
    int64_t dropped = 0;
    for (int64_t i = 0; i < cfg.cache.cache_size; ++i) cache.push_back(draw_entry(&dropped));
    stats.pl_filtered_total += dropped;
    if (logger) logger->log_step(st.update_counter, "cache-fill", "fill", 0.0, 0, dropped, st.current_lr());
    if (probe && probe->after_step) probe->after_step("fill", cache, stats, st.update_counter);
  }

  auto unlabeled_step = [&]() {
    int64_t idx = cache_rng.uniform_int(0, cfg.cache.cache_size - 1);
    CacheEntry& entry = cache[static_cast<size_t>(idx)];
    uint64_t step_seed = derive_seed(cfg.train.seed, "step", static_cast<uint64_t>(st.update_counter));
    feature_store.clear();
    std::vector<TrainItem> items;
    for (size_t i = 0; i < entry.utt_index.size(); ++i) {
      const ManifestEntry& e = unlabeled.entries[entry.utt_index[i]];
      Mat feats = read_features(e.feature_path);
      if (cfg.train.specaug_enabled) {
        Rng rng(derive_seed(step_seed, "specaug", static_cast<uint64_t>(i)));
        apply_specaugment(feats, cfg.train.specaug, rng);
      }
      feature_store.push_back(std::move(feats));
      TrainItem item;
      item.target = entry.pls[i];
      item.language_index = -1;  // LID supervision stays on labeled data
      items.push_back(std::move(item));
    }
    for (size_t i = 0; i < items.size(); ++i) items[i].features = &feature_store[i];
    BatchResult br = compute_batch_gradients(st.params, enc, items, 0.0, true, step_seed, cfg.train.jobs);
    if (!std::isfinite(br.loss))
      throw Error(strprintf("ssl_train: non-finite loss at step %lld", (long long)st.update_counter));
    double lr = st.current_lr();
    optimizer_step(st, br.grads);
    ++stats.unlabeled_steps;

    int64_t replaced = 0;
    int64_t dropped = 0;
    if (cache_rng.uniform_real() < cfg.cache.replace_prob) {
      cache[static_cast<size_t>(idx)] = draw_entry(&dropped);
      replaced = 1;
      ++stats.replacements;
      stats.pl_filtered_total += dropped;
    }
    if (logger) logger->log_step(st.update_counter, "ssl", "unlabeled", br.loss, replaced, dropped, lr);
    if (probe && probe->after_step) probe->after_step("unlabeled", cache, stats, st.update_counter);
  };

  int64_t steps_done = 0;
  for (int64_t round = 0; round < cfg.rounds; ++round) {
    for (int64_t u = 0; u < cfg.cache.lambda; ++u) {
      unlabeled_step();
      ++steps_done;
      if (cfg.train.eval_every > 0 && steps_done % cfg.train.eval_every == 0) run_eval(st.update_counter);
    }
    labeled_step("ssl");
    if (probe && probe->after_step) probe->after_step("labeled", cache, stats, st.update_counter);
    ++steps_done;
    ++stats.completed_rounds;
    if (cfg.train.eval_every > 0 && steps_done % cfg.train.eval_every == 0) run_eval(st.update_counter);
  }
  run_eval(st.update_counter);
  if (outcome.best_params.empty()) outcome.best_params = st.params;
  return outcome;
}

}  // namespace ctcpl

#endif  // CTCPL_SLIMIPL_HPP_
