// ctcpl/corpus.hpp

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

// Synthetic multilingual corpora. Each language owns an alphabet drawn partly
// from a shared pool (shared characters keep the pool's prototype vectors, so
// cross-language transfer is real), a character-bigram transcript model, and a
// per-language channel bias that makes language identity recoverable from the
// frame statistics. Utterances are piecewise-constant prototype runs plus
// white noise, standing in for audio so the whole pipeline trains on a CPU.

#ifndef CTCPL_CORPUS_HPP_
#define CTCPL_CORPUS_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctcpl/common.hpp"
#include "ctcpl/io.hpp"
#include "ctcpl/mat.hpp"
#include "ctcpl/rng.hpp"
#include "ctcpl/symbols.hpp"

namespace ctcpl {

struct Utterance {
  std::string id;
  std::string language_id;
  Mat features;             // T x D, finite, f32-snapped
  std::string transcript;   // empty == unlabeled
  int64_t duration_frames() const { return features.rows; }
};

// Per-language generator state. Symbol index convention inside the spec:
// 0..K-1 are the alphabet characters (sorted by codepoint), K is the space.
struct LanguageSpec {
  std::string language_id;
  std::vector<uint32_t> alphabet;   // sorted, duplicate-free, no space
  Mat char_bigram;                  // (K+1) x (K+1), row-stochastic
  Mat char_prototypes;              // (K+1) x D
  std::vector<int64_t> dur_min;     // per symbol, frames
  std::vector<int64_t> dur_max;
  std::vector<double> channel_bias; // D
  double noise_sigma = 0.0;

  int64_t n_chars() const { return static_cast<int64_t>(alphabet.size()); }
  int64_t n_symbols() const { return n_chars() + 1; }
  int64_t feature_dim() const { return char_prototypes.cols; }
  int64_t space_index() const { return n_chars(); }

  int64_t symbol_index(uint32_t cp) const {
    if (cp == kSpaceCp) return space_index();
    auto it = std::lower_bound(alphabet.begin(), alphabet.end(), cp);
    if (it == alphabet.end() || *it != cp)
      throw Error(language_id + ": character U+" + strprintf("%04X", cp) + " not in alphabet");
    return it - alphabet.begin();
  }
};

inline void validate_language_spec(const LanguageSpec& spec) {
  if (spec.alphabet.empty()) throw Error(spec.language_id + ": empty alphabet");
  for (size_t i = 1; i < spec.alphabet.size(); ++i)
    if (spec.alphabet[i] == spec.alphabet[i - 1])
      throw Error(spec.language_id + ": duplicate character in alphabet");
  int64_t k1 = spec.n_symbols();
  if (spec.char_bigram.rows != k1 || spec.char_bigram.cols != k1)
    throw Error(spec.language_id + ": bigram shape mismatch");
  for (int64_t r = 0; r < k1; ++r) {
    double s = 0.0;
    for (int64_t c = 0; c < k1; ++c) {
      double p = spec.char_bigram(r, c);
      if (p < 0.0) throw Error(spec.language_id + ": negative bigram entry");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9)
      throw Error(strprintf("%s: bigram row %lld sums to %.12g", spec.language_id.c_str(),
                            (long long)r, s));
  }
  if (spec.char_prototypes.rows != k1) throw Error(spec.language_id + ": prototype rows mismatch");
  if (static_cast<int64_t>(spec.dur_min.size()) != k1 ||
      static_cast<int64_t>(spec.dur_max.size()) != k1)
    throw Error(spec.language_id + ": duration range size mismatch");
  for (int64_t i = 0; i < k1; ++i) {
    if (spec.dur_min[i] < 1) throw Error(spec.language_id + ": dur_min < 1");
    if (spec.dur_max[i] < spec.dur_min[i]) throw Error(spec.language_id + ": dur_max < dur_min");
  }
  if (static_cast<int64_t>(spec.channel_bias.size()) != spec.feature_dim())
    throw Error(spec.language_id + ": channel bias dim mismatch");
  if (!(spec.noise_sigma >= 0.0)) throw Error(spec.language_id + ": negative noise sigma");
}

struct GenLanguageConfig {
  std::string language_id = "lang";
  int64_t alphabet_size = 10;
  double overlap = 0.5;          // fraction of the alphabet taken from the shared pool
  int64_t feature_dim = 8;
  double noise_sigma = 0.4;
  int64_t pool_size = 12;
  uint64_t pool_seed = 7001;
  int64_t private_block = 0;     // disjoint codepoint block for private characters
  int64_t char_dur_min = 4;
  int64_t char_dur_max = 8;
  double bias_scale = 0.5;
  double proto_scale = 1.0;
  double space_weight = 1.5;     // relative bigram mass flowing into spaces
};

namespace detail {

inline uint32_t pool_codepoint(int64_t i) {
  if (i < 26) return 0x61 + static_cast<uint32_t>(i);          // a..z
  if (i < 36) return 0x30 + static_cast<uint32_t>(i - 26);     // 0..9
  throw Error("shared pool larger than 36 characters is not supported");
}

inline uint32_t private_codepoint(int64_t block, int64_t i) {
  // Greek block onward, 64 codepoints per language block.
  return 0x3B1 + static_cast<uint32_t>(block * 64 + i);
}

// Prototype vectors are keyed by codepoint under the pool seed, so a shared
// character looks the same in every language that uses it.
inline std::vector<double> prototype_for(uint64_t pool_seed, uint32_t cp, int64_t dim,
                                         double scale) {
  Rng rng(derive_seed(pool_seed, "proto", cp));
  std::vector<double> v(static_cast<size_t>(dim));
  for (auto& x : v) x = scale * rng.gaussian();
  return v;
}

}  // namespace detail

inline LanguageSpec gen_language_spec(uint64_t seed, const GenLanguageConfig& cfg) {
  if (cfg.alphabet_size < 2) throw Error("gen_language_spec: alphabet size must be >= 2");
  if (cfg.overlap < 0.0 || cfg.overlap > 1.0) throw Error("gen_language_spec: overlap outside [0,1]");
  if (cfg.feature_dim < 1) throw Error("gen_language_spec: feature_dim must be >= 1");
  if (!(cfg.noise_sigma >= 0.0)) throw Error("gen_language_spec: negative noise sigma");
  if (cfg.char_dur_min < 1 || cfg.char_dur_max < cfg.char_dur_min)
    throw Error("gen_language_spec: bad duration range");

  int64_t n_shared = std::llround(cfg.overlap * static_cast<double>(cfg.alphabet_size));
  if (n_shared > cfg.pool_size)
    throw Error(strprintf("gen_language_spec: %lld shared characters requested, pool has %lld",
                          (long long)n_shared, (long long)cfg.pool_size));

  Rng rng(derive_seed(seed, "langspec"));

  std::vector<int64_t> pool_idx(static_cast<size_t>(cfg.pool_size));
  std::iota(pool_idx.begin(), pool_idx.end(), 0);
  rng.shuffle(pool_idx);
  pool_idx.resize(static_cast<size_t>(n_shared));

  std::vector<uint32_t> alphabet;
  for (int64_t i : pool_idx) alphabet.push_back(detail::pool_codepoint(i));
  for (int64_t i = 0; i < cfg.alphabet_size - n_shared; ++i)
    alphabet.push_back(detail::private_codepoint(cfg.private_block, i));
  std::sort(alphabet.begin(), alphabet.end());

  LanguageSpec spec;
  spec.language_id = cfg.language_id;
  spec.alphabet = std::move(alphabet);
  spec.noise_sigma = cfg.noise_sigma;

  int64_t k1 = spec.n_symbols();
  spec.char_prototypes = Mat(k1, cfg.feature_dim);
  for (int64_t i = 0; i < k1; ++i) {
    uint32_t cp = i == spec.space_index() ? kSpaceCp : spec.alphabet[static_cast<size_t>(i)];
    auto proto = detail::prototype_for(cfg.pool_seed, cp, cfg.feature_dim, cfg.proto_scale);
    for (int64_t d = 0; d < cfg.feature_dim; ++d) spec.char_prototypes(i, d) = proto[static_cast<size_t>(d)];
  }
  double min_dist2 = std::numeric_limits<double>::infinity();
  for (int64_t i = 0; i < k1; ++i)
    for (int64_t j = i + 1; j < k1; ++j) {
      double d2 = 0.0;
      for (int64_t d = 0; d < cfg.feature_dim; ++d) {
        double diff = spec.char_prototypes(i, d) - spec.char_prototypes(j, d);
        d2 += diff * diff;
      }
      min_dist2 = std::min(min_dist2, d2);
    }
  if (!(min_dist2 > 0.0)) throw Error("gen_language_spec: coincident prototypes");

  spec.char_bigram = Mat(k1, k1);
  {
    Rng brng = rng.fork("bigram");
    for (int64_t r = 0; r < k1; ++r) {
      double total = 0.0;
      for (int64_t c = 0; c < k1; ++c) {
        double w = brng.uniform_real(0.25, 1.0);
        if (c == spec.space_index()) w *= cfg.space_weight;
        if (r == spec.space_index() && c == spec.space_index()) w = 0.0;
        spec.char_bigram(r, c) = w;
        total += w;
      }
      for (int64_t c = 0; c < k1; ++c) spec.char_bigram(r, c) /= total;
    }
  }

  spec.dur_min.assign(static_cast<size_t>(k1), cfg.char_dur_min);
  spec.dur_max.assign(static_cast<size_t>(k1), cfg.char_dur_max);

  spec.channel_bias.resize(static_cast<size_t>(cfg.feature_dim));
  {
    Rng crng = rng.fork("bias");
    for (auto& b : spec.channel_bias) b = cfg.bias_scale * crng.gaussian();
  }

  validate_language_spec(spec);
  return spec;
}

// Bigram walk of an exact sampled length. The first character and the last
// character are conditioned to be non-space, and space never follows space,
// so transcripts carry no leading/trailing/double spaces.
inline std::string sample_transcript(const LanguageSpec& spec, int64_t len_min, int64_t len_max,
                                     uint64_t seed) {
  if (len_min < 1 || len_max < len_min) throw Error("sample_transcript: bad length range");
  Rng rng(derive_seed(seed, "transcript"));
  int64_t len = rng.uniform_int(len_min, len_max);
  int64_t k = spec.n_chars();
  std::vector<int64_t> seq;
  seq.push_back(rng.uniform_int(0, k - 1));
  std::vector<double> w(static_cast<size_t>(spec.n_symbols()));
  for (int64_t t = 1; t < len; ++t) {
    int64_t prev = seq.back();
    double total = 0.0;
    for (int64_t c = 0; c < spec.n_symbols(); ++c) {
      double p = spec.char_bigram(prev, c);
      if (c == spec.space_index() && (prev == spec.space_index() || t == len - 1)) p = 0.0;
      w[static_cast<size_t>(c)] = p;
      total += p;
    }
    if (total > 0.0) {
      seq.push_back(rng.categorical(w));
    } else {
      seq.push_back(rng.uniform_int(0, k - 1));
    }
  }
  std::string out;
  for (int64_t s : seq)
    out += utf8_encode(s == spec.space_index() ? kSpaceCp : spec.alphabet[static_cast<size_t>(s)]);
  return out;
}

// Piecewise-constant prototype runs plus optional white noise; every value is
// f32-snapped so FEA1 round trips are identity.
inline Utterance synthesize_utterance(const LanguageSpec& spec, const std::string& transcript,
                                      uint64_t seed) {
  auto cps = utf8_decode(transcript);
  if (cps.empty()) throw Error("synthesize_utterance: empty transcript");
  Rng rng(derive_seed(seed, "synth"));
  std::vector<int64_t> sym;
  std::vector<int64_t> dur;
  int64_t total = 0;
  for (uint32_t cp : cps) {
    int64_t s = spec.symbol_index(cp);
    int64_t d = rng.uniform_int(spec.dur_min[static_cast<size_t>(s)],
                                spec.dur_max[static_cast<size_t>(s)]);
    sym.push_back(s);
    dur.push_back(d);
    total += d;
  }
  int64_t dim = spec.feature_dim();
  Utterance utt;
  utt.language_id = spec.language_id;
  utt.transcript = transcript;
  utt.features = Mat(total, dim);
  int64_t t = 0;
  for (size_t i = 0; i < sym.size(); ++i) {
    for (int64_t f = 0; f < dur[i]; ++f, ++t) {
      for (int64_t d = 0; d < dim; ++d) {
        double x = spec.char_prototypes(sym[i], d) + spec.channel_bias[static_cast<size_t>(d)];
        if (spec.noise_sigma > 0.0) x += spec.noise_sigma * rng.gaussian();
        utt.features(t, d) = snap_f32(x);
      }
    }
  }
  return utt;
}

// ---------------------------------------------------------------------------
// Batching

struct BatchPlan {
  std::vector<std::vector<std::string>> batches;  // utterance ids
  int64_t frame_budget = 0;
};

// Length-bucketed batching: sort by duration, cut greedily at the frame
// budget, then shuffle batch order only. Oversize utterances ride alone.
inline BatchPlan plan_batches(const Manifest& manifest, int64_t frame_budget, uint64_t seed,
                              bool shuffle) {
  if (frame_budget < 1) throw Error("plan_batches: frame_budget must be >= 1");
  std::vector<const ManifestEntry*> order;
  order.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](const ManifestEntry* a, const ManifestEntry* b) {
    if (a->duration_frames != b->duration_frames) return a->duration_frames < b->duration_frames;
    return a->id < b->id;
  });

  BatchPlan plan;
  plan.frame_budget = frame_budget;
  std::vector<std::string> cur;
  int64_t cur_frames = 0;
  for (const ManifestEntry* e : order) {
    if (!cur.empty() && cur_frames + e->duration_frames > frame_budget) {
      plan.batches.push_back(std::move(cur));
      cur.clear();
      cur_frames = 0;
    }
    cur.push_back(e->id);
    cur_frames += e->duration_frames;
  }
  if (!cur.empty()) plan.batches.push_back(std::move(cur));

  if (shuffle) {
    Rng rng(derive_seed(seed, "batch-order"));
    rng.shuffle(plan.batches);
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Corpus configuration and generation

struct CorpusLanguageConfig {
  std::string language_id;
  int64_t alphabet_size = 10;
  double overlap = 0.5;
  double noise_sigma = 0.4;
  int64_t char_dur_min = 4;
  int64_t char_dur_max = 8;
  double bias_scale = 0.5;
  double proto_scale = 1.0;
  int64_t n_train = 100;
  int64_t n_valid = 20;
  int64_t n_test = 20;
  int64_t n_unlabeled = 0;
  int64_t train_len_min = 8;
  int64_t train_len_max = 16;
  int64_t unlabeled_len_min = 40;
  int64_t unlabeled_len_max = 80;
};

struct CorpusConfig {
  int64_t feature_dim = 8;
  int64_t pool_size = 12;
  uint64_t pool_seed = 7001;
  double space_weight = 1.5;
  std::vector<CorpusLanguageConfig> languages;
};

inline void check_json_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                            const std::string& where) {
  if (!j.is_object()) throw Error("config " + where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw Error("config " + where + ": unknown key '" + it.key() + "'");
  }
}

inline CorpusConfig parse_corpus_config(const nlohmann::json& j) {
  check_json_keys(j, {"feature_dim", "pool_size", "pool_seed", "space_weight", "languages"},
                  "corpus");
  CorpusConfig cfg;
  cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
  cfg.pool_size = j.value("pool_size", cfg.pool_size);
  cfg.pool_seed = j.value("pool_seed", cfg.pool_seed);
  cfg.space_weight = j.value("space_weight", cfg.space_weight);
  if (!j.contains("languages") || !j["languages"].is_array() || j["languages"].empty())
    throw Error("config corpus: 'languages' must be a non-empty array");
  for (const auto& lj : j["languages"]) {
    check_json_keys(lj,
                    {"language_id", "alphabet_size", "overlap", "noise_sigma", "char_dur_min",
                     "char_dur_max", "bias_scale", "proto_scale", "n_train", "n_valid", "n_test",
                     "n_unlabeled", "train_len_min", "train_len_max", "unlabeled_len_min",
                     "unlabeled_len_max"},
                    "corpus.languages[]");
    CorpusLanguageConfig lc;
    if (!lj.contains("language_id")) throw Error("config corpus: language_id required");
    lc.language_id = lj["language_id"].get<std::string>();
    lc.alphabet_size = lj.value("alphabet_size", lc.alphabet_size);
    lc.overlap = lj.value("overlap", lc.overlap);
    lc.noise_sigma = lj.value("noise_sigma", lc.noise_sigma);
    lc.char_dur_min = lj.value("char_dur_min", lc.char_dur_min);
    lc.char_dur_max = lj.value("char_dur_max", lc.char_dur_max);
    lc.bias_scale = lj.value("bias_scale", lc.bias_scale);
    lc.proto_scale = lj.value("proto_scale", lc.proto_scale);
    lc.n_train = lj.value("n_train", lc.n_train);
    lc.n_valid = lj.value("n_valid", lc.n_valid);
    lc.n_test = lj.value("n_test", lc.n_test);
    lc.n_unlabeled = lj.value("n_unlabeled", lc.n_unlabeled);
    lc.train_len_min = lj.value("train_len_min", lc.train_len_min);
    lc.train_len_max = lj.value("train_len_max", lc.train_len_max);
    lc.unlabeled_len_min = lj.value("unlabeled_len_min", lc.unlabeled_len_min);
    lc.unlabeled_len_max = lj.value("unlabeled_len_max", lc.unlabeled_len_max);
    cfg.languages.push_back(std::move(lc));
  }
  return cfg;
}

// Manifest path conventions under a corpus directory.
struct CorpusLayout {
  std::string dir;
  std::string train(const std::string& lang) const { return dir + "/" + lang + "_train.tsv"; }
  std::string valid(const std::string& lang) const { return dir + "/" + lang + "_valid.tsv"; }
  std::string test(const std::string& lang) const { return dir + "/" + lang + "_test.tsv"; }
  std::string unlabeled(const std::string& lang) const { return dir + "/" + lang + "_unlabeled.tsv"; }
  std::string unlabeled_refs(const std::string& lang) const {
    return dir + "/" + lang + "_unlabeled_refs.tsv";
  }
};

inline GenLanguageConfig to_gen_config(const CorpusConfig& cfg, const CorpusLanguageConfig& lc,
                                       int64_t lang_index) {
  GenLanguageConfig g;
  g.language_id = lc.language_id;
  g.alphabet_size = lc.alphabet_size;
  g.overlap = lc.overlap;
  g.feature_dim = cfg.feature_dim;
  g.noise_sigma = lc.noise_sigma;
  g.pool_size = cfg.pool_size;
  g.pool_seed = cfg.pool_seed;
  g.private_block = lang_index;
  g.char_dur_min = lc.char_dur_min;
  g.char_dur_max = lc.char_dur_max;
  g.bias_scale = lc.bias_scale;
  g.proto_scale = lc.proto_scale;
  g.space_weight = cfg.space_weight;
  return g;
}

inline CorpusLayout generate_corpus(const CorpusConfig& cfg, const std::string& out_dir,
                                    uint64_t seed) {
  namespace fs = std::filesystem;
  CorpusLayout layout{out_dir};
  fs::create_directories(out_dir);

  for (size_t li = 0; li < cfg.languages.size(); ++li) {
    const auto& lc = cfg.languages[li];
    LanguageSpec spec = gen_language_spec(derive_seed(seed, "lang-" + lc.language_id),
                                          to_gen_config(cfg, lc, static_cast<int64_t>(li)));
    std::string feat_dir = out_dir + "/feats/" + lc.language_id;
    fs::create_directories(feat_dir);

    auto make_split = [&](const std::string& split, int64_t count, int64_t len_min,
                          int64_t len_max, bool labeled) {
      Manifest man;
      Manifest refs;
      uint64_t split_seed = derive_seed(seed, lc.language_id + "/" + split);
      for (int64_t i = 0; i < count; ++i) {
        uint64_t useed = derive_seed(split_seed, "utt", static_cast<uint64_t>(i));
        std::string transcript = sample_transcript(spec, len_min, len_max, useed);
        Utterance utt = synthesize_utterance(spec, transcript, derive_seed(useed, "feat"));
        ManifestEntry e;
        e.id = strprintf("%s-%s-%05lld", lc.language_id.c_str(), split.c_str(), (long long)i);
        e.feature_path = feat_dir + "/" + e.id + ".fea";
        e.duration_frames = utt.duration_frames();
        e.language_id = lc.language_id;
        e.transcript = labeled ? transcript : "";
        write_features(e.feature_path, utt.features);
        if (!labeled) {
          ManifestEntry r = e;
          r.transcript = transcript;
          refs.entries.push_back(std::move(r));
        }
        man.entries.push_back(std::move(e));
      }
      return std::make_pair(man, refs);
    };

    write_manifest(layout.train(lc.language_id),
                   make_split("train", lc.n_train, lc.train_len_min, lc.train_len_max, true).first);
    write_manifest(layout.valid(lc.language_id),
                   make_split("valid", lc.n_valid, lc.train_len_min, lc.train_len_max, true).first);
    write_manifest(layout.test(lc.language_id),
                   make_split("test", lc.n_test, lc.train_len_min, lc.train_len_max, true).first);
    if (lc.n_unlabeled > 0) {
      auto [man, refs] = make_split("unlab", lc.n_unlabeled, lc.unlabeled_len_min,
                                    lc.unlabeled_len_max, false);
      write_manifest(layout.unlabeled(lc.language_id), man);
      // True transcripts kept next to the pool for diagnostics only.
      write_manifest(layout.unlabeled_refs(lc.language_id), refs);
    }
  }
  return layout;
}

}  // namespace ctcpl

#endif  // CTCPL_CORPUS_HPP_
