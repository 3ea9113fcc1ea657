// ctcpl/config.hpp

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

// Run configuration: one JSON document with sections
// {corpus, model, train, slimipl, decode, eval, recipe}. Unknown keys are
// rejected everywhere. Numeric defaults follow the reference training setup
// (gamma 1, cache 1000, replace 0.1, lambda 10, 4-gram, PL length cap 630,
// conv filter 7 / stride 3); bundled presets override sizes for desk scale.

#ifndef CTCPL_CONFIG_HPP_
#define CTCPL_CONFIG_HPP_

#include <string>
#include <vector>

#include "json.hpp"

#include "ctcpl/common.hpp"
#include "ctcpl/corpus.hpp"
#include "ctcpl/model.hpp"
#include "ctcpl/slimipl.hpp"

namespace ctcpl {

struct TrainSection {
  double gamma = 1.0;
  double lr0 = 0.03;
  int64_t updates = 2000;
  int64_t half_at = -2;  // -2: default to updates/2; -1: never halve
  int64_t frame_budget = 2000;
  int64_t eval_every = 200;
  bool specaug_enabled = true;
  SpecAugmentConfig specaug;
};

struct SlimiplSection {
  CacheConfig cache;
  int64_t rounds = 120;
  double lr0 = 0.01;  // lowered against the supervised stage
  int64_t eval_every = 200;
};

struct DecodeSection {
  int64_t beam_size = 50;
  double alpha = 0.0;
  double beta = 0.0;
  int64_t lm_order = 4;
  std::vector<double> alpha_grid = {0.0, 0.5, 1.0, 2.0};
  std::vector<double> beta_grid = {-1.0, 0.0, 1.0};
};

struct EvalSection {
  std::vector<int64_t> bucket_edges_frames;  // empty: no duration breakdown
};

struct GammaSweepConfig {
  std::vector<double> gammas = {0.0, 0.1, 1.0, 10.0};
  int64_t updates = 400;
};

struct WrongLanguageConfig {
  std::string labeled_language;
  std::string unlabeled_language;  // deliberately mismatched pool
  int64_t supervised_updates = 400;
  int64_t rounds = 40;
};

struct CropAblationConfig {
  std::string language;
  int64_t rounds = 60;
};

struct MonolingualConfig {
  std::vector<std::string> languages;  // empty: every corpus language
  int64_t updates = 600;
};

struct RecipeSection {
  int64_t finetune_updates = 400;
  double finetune_lr0 = 0.01;
  std::string final_mode = "from_scratch_base";  // finetune | from_scratch_base | from_scratch_large
  int64_t final_updates = 2500;
  double final_lr0 = 0.01;
  int64_t specaugment_delay_updates = 500;  // from-scratch runs only
  bool finetune_back = true;
  int64_t finetune_back_updates = 600;
  double finetune_back_lr0 = 0.01;
  GammaSweepConfig gamma_sweep;
  WrongLanguageConfig wrong_language;
  CropAblationConfig crop_ablation;
  MonolingualConfig monolingual;
};

struct RunConfig {
  CorpusConfig corpus;
  EncoderConfig model;
  TrainSection train;
  SlimiplSection slimipl;
  DecodeSection decode;
  EvalSection eval;
  RecipeSection recipe;
};

namespace detail {

inline SpecAugmentConfig parse_specaug(const nlohmann::json& j) {
  check_json_keys(j, {"n_time_masks", "time_mask_max", "n_freq_masks", "freq_mask_max"},
                  "train.specaug");
  SpecAugmentConfig c;
  c.n_time_masks = j.value("n_time_masks", c.n_time_masks);
  c.time_mask_max = j.value("time_mask_max", c.time_mask_max);
  c.n_freq_masks = j.value("n_freq_masks", c.n_freq_masks);
  c.freq_mask_max = j.value("freq_mask_max", c.freq_mask_max);
  return c;
}

inline TrainSection parse_train(const nlohmann::json& j) {
  check_json_keys(j,
                  {"gamma", "lr0", "updates", "half_at", "frame_budget", "eval_every",
                   "specaug_enabled", "specaug"},
                  "train");
  TrainSection t;
  t.gamma = j.value("gamma", t.gamma);
  t.lr0 = j.value("lr0", t.lr0);
  t.updates = j.value("updates", t.updates);
  t.half_at = j.value("half_at", t.half_at);
  t.frame_budget = j.value("frame_budget", t.frame_budget);
  t.eval_every = j.value("eval_every", t.eval_every);
  t.specaug_enabled = j.value("specaug_enabled", t.specaug_enabled);
  if (j.contains("specaug")) t.specaug = parse_specaug(j["specaug"]);
  return t;
}

inline SlimiplSection parse_slimipl(const nlohmann::json& j) {
  check_json_keys(j,
                  {"cache_size", "replace_prob", "lambda", "labeled_warmup_updates",
                   "crop_warmup_updates", "crop_len_frames", "pl_max_len", "retry_bound",
                   "lid_on_pl", "rounds", "lr0", "eval_every"},
                  "slimipl");
  SlimiplSection s;
  s.cache.cache_size = j.value("cache_size", s.cache.cache_size);
  s.cache.replace_prob = j.value("replace_prob", s.cache.replace_prob);
  s.cache.lambda = j.value("lambda", s.cache.lambda);
  s.cache.labeled_warmup_updates = j.value("labeled_warmup_updates", s.cache.labeled_warmup_updates);
  s.cache.crop_warmup_updates = j.value("crop_warmup_updates", s.cache.crop_warmup_updates);
  s.cache.crop_len_frames = j.value("crop_len_frames", s.cache.crop_len_frames);
  s.cache.pl_max_len = j.value("pl_max_len", s.cache.pl_max_len);
  s.cache.retry_bound = j.value("retry_bound", s.cache.retry_bound);
  s.cache.lid_on_pl = j.value("lid_on_pl", s.cache.lid_on_pl);
  s.rounds = j.value("rounds", s.rounds);
  s.lr0 = j.value("lr0", s.lr0);
  s.eval_every = j.value("eval_every", s.eval_every);
  return s;
}

inline DecodeSection parse_decode(const nlohmann::json& j) {
  check_json_keys(j, {"beam_size", "alpha", "beta", "lm_order", "alpha_grid", "beta_grid"},
                  "decode");
  DecodeSection d;
  d.beam_size = j.value("beam_size", d.beam_size);
  d.alpha = j.value("alpha", d.alpha);
  d.beta = j.value("beta", d.beta);
  d.lm_order = j.value("lm_order", d.lm_order);
  if (j.contains("alpha_grid")) d.alpha_grid = j["alpha_grid"].get<std::vector<double>>();
  if (j.contains("beta_grid")) d.beta_grid = j["beta_grid"].get<std::vector<double>>();
  return d;
}

inline EvalSection parse_eval(const nlohmann::json& j) {
  check_json_keys(j, {"bucket_edges_frames"}, "eval");
  EvalSection e;
  if (j.contains("bucket_edges_frames"))
    e.bucket_edges_frames = j["bucket_edges_frames"].get<std::vector<int64_t>>();
  return e;
}

inline RecipeSection parse_recipe(const nlohmann::json& j) {
  check_json_keys(j,
                  {"finetune_updates", "finetune_lr0", "final_mode", "final_updates", "final_lr0",
                   "specaugment_delay_updates", "finetune_back", "finetune_back_updates",
                   "finetune_back_lr0", "gamma_sweep", "wrong_language", "crop_ablation",
                   "monolingual"},
                  "recipe");
  RecipeSection r;
  r.finetune_updates = j.value("finetune_updates", r.finetune_updates);
  r.finetune_lr0 = j.value("finetune_lr0", r.finetune_lr0);
  r.final_mode = j.value("final_mode", r.final_mode);
  r.final_updates = j.value("final_updates", r.final_updates);
  r.final_lr0 = j.value("final_lr0", r.final_lr0);
  r.specaugment_delay_updates = j.value("specaugment_delay_updates", r.specaugment_delay_updates);
  r.finetune_back = j.value("finetune_back", r.finetune_back);
  r.finetune_back_updates = j.value("finetune_back_updates", r.finetune_back_updates);
  r.finetune_back_lr0 = j.value("finetune_back_lr0", r.finetune_back_lr0);
  if (j.contains("gamma_sweep")) {
    check_json_keys(j["gamma_sweep"], {"gammas", "updates"}, "recipe.gamma_sweep");
    if (j["gamma_sweep"].contains("gammas"))
      r.gamma_sweep.gammas = j["gamma_sweep"]["gammas"].get<std::vector<double>>();
    r.gamma_sweep.updates = j["gamma_sweep"].value("updates", r.gamma_sweep.updates);
  }
  if (j.contains("wrong_language")) {
    check_json_keys(j["wrong_language"],
                    {"labeled_language", "unlabeled_language", "supervised_updates", "rounds"},
                    "recipe.wrong_language");
    r.wrong_language.labeled_language = j["wrong_language"].value("labeled_language", std::string());
    r.wrong_language.unlabeled_language = j["wrong_language"].value("unlabeled_language", std::string());
    r.wrong_language.supervised_updates =
        j["wrong_language"].value("supervised_updates", r.wrong_language.supervised_updates);
    r.wrong_language.rounds = j["wrong_language"].value("rounds", r.wrong_language.rounds);
  }
  if (j.contains("crop_ablation")) {
    check_json_keys(j["crop_ablation"], {"language", "rounds"}, "recipe.crop_ablation");
    r.crop_ablation.language = j["crop_ablation"].value("language", std::string());
    r.crop_ablation.rounds = j["crop_ablation"].value("rounds", r.crop_ablation.rounds);
  }
  if (j.contains("monolingual")) {
    check_json_keys(j["monolingual"], {"languages", "updates"}, "recipe.monolingual");
    if (j["monolingual"].contains("languages"))
      r.monolingual.languages = j["monolingual"]["languages"].get<std::vector<std::string>>();
    r.monolingual.updates = j["monolingual"].value("updates", r.monolingual.updates);
  }
  return r;
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  check_json_keys(j, {"corpus", "model", "train", "slimipl", "decode", "eval", "recipe"}, "root");
  RunConfig cfg;
  if (!j.contains("corpus")) throw Error("config: missing 'corpus' section");
  cfg.corpus = parse_corpus_config(j["corpus"]);
  if (j.contains("model")) {
    check_json_keys(j["model"],
                    {"input_dim", "conv_filter_len", "conv_stride", "n_layers", "n_heads",
                     "d_model", "d_ff", "relpos_clip", "dropout"},
                    "model");
    cfg.model = encoder_config_from_json(j["model"]);
  }
  if (cfg.model.input_dim != cfg.corpus.feature_dim) cfg.model.input_dim = cfg.corpus.feature_dim;
  if (j.contains("train")) cfg.train = detail::parse_train(j["train"]);
  if (j.contains("slimipl")) cfg.slimipl = detail::parse_slimipl(j["slimipl"]);
  if (j.contains("decode")) cfg.decode = detail::parse_decode(j["decode"]);
  if (j.contains("eval")) cfg.eval = detail::parse_eval(j["eval"]);
  if (j.contains("recipe")) cfg.recipe = detail::parse_recipe(j["recipe"]);
  if (cfg.train.half_at == -2) cfg.train.half_at = cfg.train.updates / 2;
  validate_encoder_config(cfg.model);
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(slurp_file(path));
  return parse_run_config(j);
}

}  // namespace ctcpl

#endif  // CTCPL_CONFIG_HPP_
