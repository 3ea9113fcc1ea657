// ctcpl/recipe.hpp

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

// Staged pipeline: supervised multilingual training, per-language fine-tuning
// and slimIPL, pooled pseudo-label training (fine-tune or from scratch), and
// labeled-only fine-tuning back. Stages are resumable: each writes a record
// with a config hash and is skipped when rerun unchanged. Also hosts the
// comparison scenarios (gamma sweep, wrong-language pools, crop ablation,
// monolingual baselines).

#ifndef CTCPL_RECIPE_HPP_
#define CTCPL_RECIPE_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctcpl/common.hpp"
#include "ctcpl/config.hpp"
#include "ctcpl/corpus.hpp"
#include "ctcpl/io.hpp"
#include "ctcpl/model.hpp"
#include "ctcpl/slimipl.hpp"
#include "ctcpl/trainer.hpp"

namespace ctcpl {

struct RecipeContext {
  RunConfig cfg;
  std::string out_dir;
  uint64_t seed = 0;
  int jobs = 1;
  CorpusLayout corpus;
  std::vector<std::string> languages;            // sorted
  std::vector<std::string> unlabeled_languages;  // subset with an unlabeled pool
  SymbolTable symtab;
  std::map<std::string, Manifest> train_man, valid_man, test_man, unlabeled_man;
  std::map<std::string, std::vector<EvalItem>> valid_items;
  std::map<std::string, std::vector<EvalItem>> test_items;
};

// ---------------------------------------------------------------------------
// Stage records and resumability

struct StageResult {
  std::string dir;
  std::string checkpoint;  // empty for stages without one
  nlohmann::json metrics;
  bool executed = false;  // false when served from a cached record
};

inline std::string hash_hex(uint64_t h) { return strprintf("%016llx", (unsigned long long)h); }

inline std::string stage_config_hash(const RecipeContext& ctx, const nlohmann::json& stage_cfg,
                                     const std::string& input_ckpt) {
  uint64_t h = fnv1a64(stage_cfg.dump());
  h = fnv1a64(encoder_config_to_json(ctx.cfg.model).dump(), h);
  h = fnv1a64(strprintf("seed=%llu", (unsigned long long)ctx.seed), h);
  if (!input_ckpt.empty()) h = fnv1a64(strprintf("in=%016llx", (unsigned long long)file_hash(input_ckpt)), h);
  return hash_hex(h);
}

// Runs `body` unless a record with the same config hash and existing outputs
// is already present. `body` receives the stage directory and returns metrics.
template <typename Body>
StageResult run_stage(const RecipeContext& ctx, const std::string& name,
                      const nlohmann::json& stage_cfg, const std::string& input_ckpt,
                      const std::vector<std::string>& extra_outputs, bool has_checkpoint,
                      Body&& body) {
  namespace fs = std::filesystem;
  StageResult res;
  res.dir = ctx.out_dir + "/stages/" + name;
  res.checkpoint = has_checkpoint ? res.dir + "/checkpoint.ckpt" : "";
  std::string hash = stage_config_hash(ctx, stage_cfg, input_ckpt);
  std::string record_path = res.dir + "/record.json";

  if (fs::exists(record_path)) {
    nlohmann::json rec = nlohmann::json::parse(slurp_file(record_path));
    bool outputs_ok = true;
    if (has_checkpoint && !fs::exists(res.checkpoint)) outputs_ok = false;
    for (const auto& p : extra_outputs)
      if (!fs::exists(p)) outputs_ok = false;
    if (outputs_ok && rec.value("config_hash", "") == hash) {
      res.metrics = rec.value("metrics", nlohmann::json::object());
      res.executed = false;
      return res;
    }
  }

  fs::create_directories(res.dir);
  res.metrics = body(res.dir);
  res.executed = true;

  nlohmann::json rec{{"stage", name},
                     {"input_checkpoint", input_ckpt},
                     {"output_checkpoint", res.checkpoint},
                     {"config_hash", hash},
                     {"metrics", res.metrics}};
  spit_file(record_path, rec.dump(2) + "\n");
  return res;
}

// ---------------------------------------------------------------------------
// Context construction

inline void ensure_corpus(RecipeContext& ctx) {
  namespace fs = std::filesystem;
  ctx.corpus.dir = ctx.out_dir + "/corpus";
  bool missing = false;
  for (const auto& lc : ctx.cfg.corpus.languages)
    if (!fs::exists(ctx.corpus.train(lc.language_id))) missing = true;
  if (missing) {
    fs::create_directories(ctx.corpus.dir);
    generate_corpus(ctx.cfg.corpus, ctx.corpus.dir, derive_seed(ctx.seed, "corpus"));
  }
}

inline RecipeContext make_context(const RunConfig& cfg, const std::string& out_dir, uint64_t seed,
                                  int jobs, bool gen_corpus_if_missing = true) {
  RecipeContext ctx;
  ctx.cfg = cfg;
  ctx.out_dir = out_dir;
  ctx.seed = seed;
  ctx.jobs = jobs;
  ctx.corpus.dir = out_dir + "/corpus";
  if (gen_corpus_if_missing) ensure_corpus(ctx);

  std::vector<Manifest> labeled_manifests;
  for (const auto& lc : cfg.corpus.languages) {
    const std::string& lang = lc.language_id;
    ctx.train_man[lang] = read_manifest(ctx.corpus.train(lang));
    ctx.valid_man[lang] = read_manifest(ctx.corpus.valid(lang));
    ctx.test_man[lang] = read_manifest(ctx.corpus.test(lang));
    labeled_manifests.push_back(ctx.train_man[lang]);
    labeled_manifests.push_back(ctx.valid_man[lang]);
    labeled_manifests.push_back(ctx.test_man[lang]);
    if (lc.n_unlabeled > 0) {
      ctx.unlabeled_man[lang] = read_manifest(ctx.corpus.unlabeled(lang));
      ctx.unlabeled_languages.push_back(lang);
    }
    ctx.languages.push_back(lang);
  }
  std::sort(ctx.languages.begin(), ctx.languages.end());
  std::sort(ctx.unlabeled_languages.begin(), ctx.unlabeled_languages.end());
  ctx.symtab = build_symbol_table(labeled_manifests);
  for (const auto& lang : ctx.languages) {
    ctx.valid_items[lang] = load_eval_items(ctx.valid_man[lang], ctx.languages);
    ctx.test_items[lang] = load_eval_items(ctx.test_man[lang], ctx.languages);
  }
  return ctx;
}

inline std::vector<EvalItem> pooled_items(const RecipeContext& ctx,
                                          const std::map<std::string, std::vector<EvalItem>>& sets) {
  std::vector<EvalItem> out;
  for (const auto& lang : ctx.languages) {
    auto it = sets.find(lang);
    if (it == sets.end()) continue;
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

inline CheckpointMeta make_meta(const RecipeContext& ctx, int64_t update_counter) {
  CheckpointMeta meta;
  meta.config = ctx.cfg.model;
  meta.symbols = ctx.symtab;
  meta.languages = ctx.languages;
  meta.update_counter = update_counter;
  meta.seed = ctx.seed;
  return meta;
}

inline nlohmann::json valid_result_json(const ValidResult& vr) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [lang, cell] : vr.languages) per[lang] = cell.cer();
  return nlohmann::json{{"per_language_cer", per},
                        {"macro_cer", vr.macro_cer()},
                        {"lid_accuracy", vr.lid_accuracy()}};
}

// ---------------------------------------------------------------------------
// Stages

// Pooled supervised multilingual training (no language balancing).
inline StageResult stage_supervised(const RecipeContext& ctx) {
  nlohmann::json scfg{{"kind", "supervised"},
                      {"updates", ctx.cfg.train.updates},
                      {"lr0", ctx.cfg.train.lr0},
                      {"half_at", ctx.cfg.train.half_at},
                      {"gamma", ctx.cfg.train.gamma},
                      {"frame_budget", ctx.cfg.train.frame_budget}};
  return run_stage(ctx, "supervised", scfg, "", {}, true, [&](const std::string& dir) {
    PooledData data;
    for (const auto& lang : ctx.languages)
      data.add(ctx.train_man.at(lang), language_index(ctx.languages, lang), false);
    TrainState st = make_train_state(
        init_params(ctx.cfg.model, ctx.symtab.size(), static_cast<int64_t>(ctx.languages.size()),
                    derive_seed(ctx.seed, "supervised/init")),
        ctx.cfg.train.lr0, ctx.cfg.train.half_at, ctx.seed);
    TrainLoopConfig tl;
    tl.updates = ctx.cfg.train.updates;
    tl.gamma = ctx.cfg.train.gamma;
    tl.frame_budget = ctx.cfg.train.frame_budget;
    tl.seed = derive_seed(ctx.seed, "supervised/train");
    tl.jobs = ctx.jobs;
    tl.specaug_enabled = ctx.cfg.train.specaug_enabled;
    tl.specaug = ctx.cfg.train.specaug;
    tl.eval_every = ctx.cfg.train.eval_every;
    JsonlLogger logger(dir + "/log.jsonl");
    auto valid = pooled_items(ctx, ctx.valid_items);
    TrainOutcome out = train_loop(st, ctx.cfg.model, ctx.symtab, data, valid, ctx.languages, tl, &logger);
    save_checkpoint(dir + "/checkpoint.ckpt", out.best_params, make_meta(ctx, out.best_step));
    spit_file(dir + "/curve.csv", curve_to_csv(out.curve, ctx.languages));
    ValidResult vr = evaluate_greedy(out.best_params, ctx.cfg.model, ctx.symtab, valid, ctx.jobs);
    return nlohmann::json{{"best_step", out.best_step},
                          {"best_macro_cer", out.best_macro_cer},
                          {"valid", valid_result_json(vr)}};
  });
}

// Monolingual fine-tuning of a multilingual checkpoint: one language's
// labeled data, no LID term, lowered learning rate, fresh optimizer state.
inline StageResult stage_finetune(const RecipeContext& ctx, const std::string& lang,
                                  const std::string& input_ckpt) {
  if (!ctx.train_man.count(lang)) throw Error("stage_finetune: unknown language " + lang);
  nlohmann::json scfg{{"kind", "finetune"},
                      {"language", lang},
                      {"updates", ctx.cfg.recipe.finetune_updates},
                      {"lr0", ctx.cfg.recipe.finetune_lr0}};
  return run_stage(ctx, "finetune_" + lang, scfg, input_ckpt, {}, true, [&](const std::string& dir) {
    auto [params, meta] = load_checkpoint(input_ckpt);
    if (!(meta.symbols == ctx.symtab)) throw Error("stage_finetune: symbol table mismatch");
    PooledData data;
    data.add(ctx.train_man.at(lang), language_index(ctx.languages, lang), false);
    TrainState st = make_train_state(std::move(params), ctx.cfg.recipe.finetune_lr0, -1, ctx.seed);
    TrainLoopConfig tl;
    tl.updates = ctx.cfg.recipe.finetune_updates;
    tl.gamma = 0.0;  // constant language label carries no information
    tl.frame_budget = ctx.cfg.train.frame_budget;
    tl.seed = derive_seed(ctx.seed, "finetune/" + lang);
    tl.jobs = ctx.jobs;
    tl.specaug_enabled = ctx.cfg.train.specaug_enabled;
    tl.specaug = ctx.cfg.train.specaug;
    tl.eval_every = ctx.cfg.train.eval_every;
    JsonlLogger logger(dir + "/log.jsonl");
    const auto& valid = ctx.valid_items.at(lang);
    TrainOutcome out = train_loop(st, ctx.cfg.model, ctx.symtab, data, valid, ctx.languages, tl, &logger);
    save_checkpoint(dir + "/checkpoint.ckpt", out.best_params, make_meta(ctx, out.best_step));
    spit_file(dir + "/curve.csv", curve_to_csv(out.curve, {lang}));
    return nlohmann::json{{"best_step", out.best_step}, {"best_valid_cer", out.best_macro_cer}};
  });
}

// slimIPL on one language's unlabeled pool, then the final pseudo-label set
// for every unlabeled utterance (full forwards, length-filtered).
inline StageResult stage_slimipl(const RecipeContext& ctx, const std::string& lang,
                                 const std::string& input_ckpt,
                                 const Manifest* unlabeled_override = nullptr,
                                 const std::string& stage_suffix = "") {
  const Manifest& unlabeled = unlabeled_override ? *unlabeled_override : ctx.unlabeled_man.at(lang);
  std::string stage_name = "slimipl_" + lang + stage_suffix;
  std::string pl_path = ctx.out_dir + "/pl/" + lang + stage_suffix + ".tsv";
  const auto& S = ctx.cfg.slimipl;
  nlohmann::json scfg{{"kind", "slimipl"},
                      {"language", lang},
                      {"rounds", S.rounds},
                      {"cache_size", S.cache.cache_size},
                      {"replace_prob", S.cache.replace_prob},
                      {"lambda", S.cache.lambda},
                      {"labeled_warmup_updates", S.cache.labeled_warmup_updates},
                      {"crop_warmup_updates", S.cache.crop_warmup_updates},
                      {"crop_len_frames", S.cache.crop_len_frames},
                      {"pl_max_len", S.cache.pl_max_len},
                      {"lr0", S.lr0},
                      {"unlabeled_rows", unlabeled.entries.size()}};
  return run_stage(ctx, stage_name, scfg, input_ckpt, {pl_path}, true, [&](const std::string& dir) {
    auto [params, meta] = load_checkpoint(input_ckpt);
    if (!(meta.symbols == ctx.symtab)) throw Error("stage_slimipl: symbol table mismatch");
    PooledData labeled;
    labeled.add(ctx.train_man.at(lang), language_index(ctx.languages, lang), false);
    TrainState st = make_train_state(std::move(params), S.lr0, -1, ctx.seed);
    SslConfig scfg2;
    scfg2.cache = S.cache;
    scfg2.rounds = S.rounds;
    scfg2.train.gamma = 0.0;  // monolingual phase, same rationale as fine-tuning
    scfg2.train.frame_budget = ctx.cfg.train.frame_budget;
    scfg2.train.seed = derive_seed(ctx.seed, "slimipl/" + lang + stage_suffix);
    scfg2.train.jobs = ctx.jobs;
    scfg2.train.specaug_enabled = ctx.cfg.train.specaug_enabled;
    scfg2.train.specaug = ctx.cfg.train.specaug;
    scfg2.train.eval_every = S.eval_every;
    JsonlLogger logger(dir + "/log.jsonl");
    const auto& valid = ctx.valid_items.at(lang);
    SslOutcome out = ssl_train(st, ctx.cfg.model, ctx.symtab, labeled, unlabeled, valid, scfg2, &logger);
    save_checkpoint(dir + "/checkpoint.ckpt", out.best_params, make_meta(ctx, out.best_step));
    spit_file(dir + "/curve.csv", curve_to_csv(out.curve, {lang}));

    // Final pseudo-label pass over the whole pool with the slimIPL model.
    std::filesystem::create_directories(ctx.out_dir + "/pl");
    size_t n = unlabeled.entries.size();
    std::vector<std::vector<int>> pls(n);
    std::vector<std::string> errors(n);
    parallel_for(static_cast<int64_t>(n), ctx.jobs, [&](int64_t i) {
      try {
        Mat feats = read_features(unlabeled.entries[static_cast<size_t>(i)].feature_path);
        pls[static_cast<size_t>(i)] =
            pseudo_label(out.best_params, ctx.cfg.model, feats, PlMode::kFull);
      } catch (const std::exception& e) {
        errors[static_cast<size_t>(i)] = e.what();
      }
    });
    for (const auto& e : errors)
      if (!e.empty()) throw Error("stage_slimipl: final PL pass failed: " + e);
    Manifest pl_man;
    int64_t dropped = 0;
    for (size_t i = 0; i < n; ++i) {
      if (!filter_pl(pls[i], S.cache.pl_max_len) ||
          !ctc_admissible(ctx.cfg.model.out_len(unlabeled.entries[i].duration_frames), pls[i])) {
        ++dropped;
        continue;
      }
      ManifestEntry e = unlabeled.entries[i];
      e.transcript = ctx.symtab.decode(pls[i]);
      pl_man.entries.push_back(std::move(e));
    }
    write_manifest(pl_path, pl_man);
    return nlohmann::json{{"best_step", out.best_step},
                          {"best_valid_cer", out.best_macro_cer},
                          {"pl_rows_in", n},
                          {"pl_rows_out", pl_man.entries.size()},
                          {"pl_rows_dropped", dropped},
                          {"ssl", {{"labeled_steps", out.stats.labeled_steps},
                                   {"unlabeled_steps", out.stats.unlabeled_steps},
                                   {"replacements", out.stats.replacements},
                                   {"pl_filtered_total", out.stats.pl_filtered_total},
                                   {"cropped_generations", out.stats.cropped_generations},
                                   {"cropped_after_boundary", out.stats.cropped_generations_after_boundary}}}};
  });
}

// Pooled labeled + pseudo-labeled training. Modes: "finetune" continues the
// base checkpoint at a lowered LR; "from_scratch_base" / "from_scratch_large"
// train fresh models (large doubles d_model and d_ff), with SpecAugment
// suppressed for the configured number of updates.
inline StageResult stage_final(const RecipeContext& ctx, const std::string& mode,
                               const std::string& base_ckpt,
                               const std::vector<std::string>& pl_manifests) {
  bool from_scratch = mode == "from_scratch_base" || mode == "from_scratch_large";
  if (!from_scratch && mode != "finetune") throw Error("stage_final: unknown mode " + mode);
  nlohmann::json scfg{{"kind", "final"},
                      {"mode", mode},
                      {"updates", ctx.cfg.recipe.final_updates},
                      {"lr0", ctx.cfg.recipe.final_lr0},
                      {"specaugment_delay_updates", ctx.cfg.recipe.specaugment_delay_updates},
                      {"pl_manifests", pl_manifests}};
  std::string input_ckpt = mode == "finetune" ? base_ckpt : "";
  return run_stage(ctx, "final_" + mode, scfg, input_ckpt, {}, true, [&](const std::string& dir) {
    EncoderConfig enc = ctx.cfg.model;
    if (mode == "from_scratch_large") {
      enc.d_model *= 2;
      enc.d_ff *= 2;
    }
    PooledData data;
    for (const auto& lang : ctx.languages)
      data.add(ctx.train_man.at(lang), language_index(ctx.languages, lang), false);
    for (const auto& path : pl_manifests) {
      Manifest pl = read_manifest(path);
      for (const auto& e : pl.entries)
        for (uint32_t cp : utf8_decode(e.transcript))
          if (!ctx.symtab.contains(cp))
            throw Error("stage_final: pseudo-label symbol outside the checkpoint symbol table");
      if (!pl.entries.empty())
        data.add(pl, language_index(ctx.languages, pl.entries.front().language_id), true);
    }
    TrainState st = [&]() {
      if (from_scratch) {
        return make_train_state(
            init_params(enc, ctx.symtab.size(), static_cast<int64_t>(ctx.languages.size()),
                        derive_seed(ctx.seed, "final/" + mode + "/init")),
            ctx.cfg.recipe.final_lr0, ctx.cfg.recipe.final_updates / 2, ctx.seed);
      }
      auto [params, meta] = load_checkpoint(base_ckpt);
      if (!(meta.symbols == ctx.symtab)) throw Error("stage_final: symbol table mismatch");
      return make_train_state(std::move(params), ctx.cfg.recipe.final_lr0, -1, ctx.seed);
    }();
    TrainLoopConfig tl;
    tl.updates = ctx.cfg.recipe.final_updates;
    tl.gamma = ctx.cfg.train.gamma;
    tl.frame_budget = ctx.cfg.train.frame_budget;
    tl.seed = derive_seed(ctx.seed, "final/" + mode);
    tl.jobs = ctx.jobs;
    tl.specaug_enabled = ctx.cfg.train.specaug_enabled;
    tl.specaug = ctx.cfg.train.specaug;
    tl.specaug_delay = from_scratch ? ctx.cfg.recipe.specaugment_delay_updates : 0;
    tl.eval_every = ctx.cfg.train.eval_every;
    JsonlLogger logger(dir + "/log.jsonl");
    auto valid = pooled_items(ctx, ctx.valid_items);
    TrainOutcome out = train_loop(st, enc, ctx.symtab, data, valid, ctx.languages, tl, &logger);
    CheckpointMeta meta = make_meta(ctx, out.best_step);
    meta.config = enc;
    save_checkpoint(dir + "/checkpoint.ckpt", out.best_params, meta);
    spit_file(dir + "/curve.csv", curve_to_csv(out.curve, ctx.languages));
    ValidResult vr = evaluate_greedy(out.best_params, enc, ctx.symtab, valid, ctx.jobs);
    return nlohmann::json{{"best_step", out.best_step},
                          {"best_macro_cer", out.best_macro_cer},
                          {"valid", valid_result_json(vr)}};
  });
}

// Labeled-only continuation of the pooled-PL model, with before/after reports.
inline StageResult stage_finetune_back(const RecipeContext& ctx, const std::string& input_ckpt) {
  nlohmann::json scfg{{"kind", "finetune_back"},
                      {"updates", ctx.cfg.recipe.finetune_back_updates},
                      {"lr0", ctx.cfg.recipe.finetune_back_lr0}};
  return run_stage(ctx, "finetune_back", scfg, input_ckpt, {}, true, [&](const std::string& dir) {
    auto [params, meta] = load_checkpoint(input_ckpt);
    if (!(meta.symbols == ctx.symtab)) throw Error("stage_finetune_back: symbol table mismatch");
    EncoderConfig enc = meta.config;  // may be the large variant
    auto valid = pooled_items(ctx, ctx.valid_items);
    ValidResult before = evaluate_greedy(params, enc, ctx.symtab, valid, ctx.jobs);
    spit_file(dir + "/report_before.json", valid_result_json(before).dump(2) + "\n");

    PooledData data;
    for (const auto& lang : ctx.languages)
      data.add(ctx.train_man.at(lang), language_index(ctx.languages, lang), false);
    TrainState st = make_train_state(std::move(params), ctx.cfg.recipe.finetune_back_lr0, -1, ctx.seed);
    TrainLoopConfig tl;
    tl.updates = ctx.cfg.recipe.finetune_back_updates;
    tl.gamma = ctx.cfg.train.gamma;
    tl.frame_budget = ctx.cfg.train.frame_budget;
    tl.seed = derive_seed(ctx.seed, "finetune_back");
    tl.jobs = ctx.jobs;
    tl.specaug_enabled = ctx.cfg.train.specaug_enabled;
    tl.specaug = ctx.cfg.train.specaug;
    tl.eval_every = ctx.cfg.train.eval_every;
    JsonlLogger logger(dir + "/log.jsonl");
    TrainOutcome out = train_loop(st, enc, ctx.symtab, data, valid, ctx.languages, tl, &logger);
    CheckpointMeta out_meta = make_meta(ctx, out.best_step);
    out_meta.config = enc;
    save_checkpoint(dir + "/checkpoint.ckpt", out.best_params, out_meta);
    spit_file(dir + "/curve.csv", curve_to_csv(out.curve, ctx.languages));
    ValidResult after = evaluate_greedy(out.best_params, enc, ctx.symtab, valid, ctx.jobs);
    spit_file(dir + "/report_after.json", valid_result_json(after).dump(2) + "\n");
    return nlohmann::json{{"best_step", out.best_step},
                          {"before", valid_result_json(before)},
                          {"after", valid_result_json(after)}};
  });
}

// From-scratch monolingual model, same hyperparameters as the multilingual run.
inline StageResult stage_monolingual(const RecipeContext& ctx, const std::string& lang,
                                     int64_t updates) {
  nlohmann::json scfg{{"kind", "monolingual"}, {"language", lang}, {"updates", updates},
                      {"lr0", ctx.cfg.train.lr0}};
  return run_stage(ctx, "monolingual_" + lang, scfg, "", {}, true, [&](const std::string& dir) {
    PooledData data;
    data.add(ctx.train_man.at(lang), language_index(ctx.languages, lang), false);
    TrainState st = make_train_state(
        init_params(ctx.cfg.model, ctx.symtab.size(), static_cast<int64_t>(ctx.languages.size()),
                    derive_seed(ctx.seed, "monolingual/" + lang)),
        ctx.cfg.train.lr0, updates / 2, ctx.seed);
    TrainLoopConfig tl;
    tl.updates = updates;
    tl.gamma = 0.0;
    tl.frame_budget = ctx.cfg.train.frame_budget;
    tl.seed = derive_seed(ctx.seed, "monolingual-train/" + lang);
    tl.jobs = ctx.jobs;
    tl.specaug_enabled = ctx.cfg.train.specaug_enabled;
    tl.specaug = ctx.cfg.train.specaug;
    tl.eval_every = ctx.cfg.train.eval_every;
    JsonlLogger logger(dir + "/log.jsonl");
    const auto& valid = ctx.valid_items.at(lang);
    TrainOutcome out = train_loop(st, ctx.cfg.model, ctx.symtab, data, valid, ctx.languages, tl, &logger);
    save_checkpoint(dir + "/checkpoint.ckpt", out.best_params, make_meta(ctx, out.best_step));
    spit_file(dir + "/curve.csv", curve_to_csv(out.curve, {lang}));
    return nlohmann::json{{"best_step", out.best_step}, {"best_valid_cer", out.best_macro_cer}};
  });
}

// ---------------------------------------------------------------------------
// Full pipeline

struct RecipeOutcome {
  std::string base_checkpoint;
  std::map<std::string, std::string> finetuned;  // language -> checkpoint
  std::map<std::string, std::string> slimipl;    // language -> checkpoint
  std::vector<std::string> pl_manifests;
  std::string final_checkpoint;
  std::string finetune_back_checkpoint;
  nlohmann::json summary;
};

inline nlohmann::json eval_checkpoint_json(const RecipeContext& ctx, const std::string& ckpt,
                                           const std::map<std::string, std::vector<EvalItem>>& sets) {
  auto [params, meta] = load_checkpoint(ckpt);
  ValidResult vr = evaluate_greedy(params, meta.config, ctx.symtab,
                                   pooled_items(ctx, sets), ctx.jobs);
  return valid_result_json(vr);
}

inline RecipeOutcome run_recipe(RecipeContext& ctx) {
  RecipeOutcome out;
  out.base_checkpoint = stage_supervised(ctx).checkpoint;
  for (const auto& lang : ctx.unlabeled_languages) {
    out.finetuned[lang] = stage_finetune(ctx, lang, out.base_checkpoint).checkpoint;
    StageResult sr = stage_slimipl(ctx, lang, out.finetuned[lang]);
    out.slimipl[lang] = sr.checkpoint;
    out.pl_manifests.push_back(ctx.out_dir + "/pl/" + lang + ".tsv");
  }
  out.final_checkpoint =
      stage_final(ctx, ctx.cfg.recipe.final_mode, out.base_checkpoint, out.pl_manifests).checkpoint;
  std::string last = out.final_checkpoint;
  if (ctx.cfg.recipe.finetune_back) {
    out.finetune_back_checkpoint = stage_finetune_back(ctx, out.final_checkpoint).checkpoint;
    last = out.finetune_back_checkpoint;
  }

  nlohmann::json summary{
      {"languages", ctx.languages},
      {"unlabeled_languages", ctx.unlabeled_languages},
      {"base", {{"valid", eval_checkpoint_json(ctx, out.base_checkpoint, ctx.valid_items)},
                {"test", eval_checkpoint_json(ctx, out.base_checkpoint, ctx.test_items)}}},
      {"final", {{"valid", eval_checkpoint_json(ctx, out.final_checkpoint, ctx.valid_items)},
                 {"test", eval_checkpoint_json(ctx, out.final_checkpoint, ctx.test_items)}}}};
  if (!out.finetune_back_checkpoint.empty()) {
    summary["finetune_back"] = {
        {"valid", eval_checkpoint_json(ctx, out.finetune_back_checkpoint, ctx.valid_items)},
        {"test", eval_checkpoint_json(ctx, out.finetune_back_checkpoint, ctx.test_items)}};
  }
  out.summary = summary;
  spit_file(ctx.out_dir + "/summary.json", summary.dump(2) + "\n");
  return out;
}

}  // namespace ctcpl

#endif  // CTCPL_RECIPE_HPP_
