// ctcpl/model.hpp

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

// Acoustic model: one strided convolution for subsampling, a pre-LN
// transformer stack with Shaw-style clipped relative position embeddings on
// the keys (one table shared across heads and layers), a per-frame linear CTC
// head and a linear-then-mean-pool LID head. Joint loss is
// ctc_nll + gamma * lid_cross_entropy, averaged over the utterances of a
// batch. Training state is Adagrad with a halve-the-LR-once schedule.

#ifndef CTCPL_MODEL_HPP_
#define CTCPL_MODEL_HPP_

#include <cmath>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctcpl/autodiff.hpp"
#include "ctcpl/common.hpp"
#include "ctcpl/io.hpp"
#include "ctcpl/mat.hpp"
#include "ctcpl/rng.hpp"
#include "ctcpl/symbols.hpp"

namespace ctcpl {

struct EncoderConfig {
  int64_t input_dim = 8;
  int64_t conv_filter_len = 7;
  int64_t conv_stride = 3;
  int64_t n_layers = 2;
  int64_t n_heads = 2;
  int64_t d_model = 64;
  int64_t d_ff = 128;
  int64_t relpos_clip = 16;
  double dropout = 0.1;

  int64_t head_dim() const { return d_model / n_heads; }
  int64_t conv_pad() const { return conv_filter_len / 2; }
  int64_t out_len(int64_t frames) const {
    return (frames + 2 * conv_pad() - conv_filter_len) / conv_stride + 1;
  }
  // Output frames on each side of a crop boundary whose conv receptive field
  // can cross it.
  int64_t halo_out_frames() const { return conv_filter_len / 2; }
};

inline void validate_encoder_config(const EncoderConfig& c) {
  if (c.input_dim < 1 || c.d_model < 1 || c.d_ff < 1 || c.n_heads < 1 || c.n_layers < 0)
    throw Error("EncoderConfig: dimensions must be >= 1");
  if (c.d_model % c.n_heads != 0) throw Error("EncoderConfig: d_model not divisible by n_heads");
  if (c.conv_stride < 1 || c.conv_filter_len < 1) throw Error("EncoderConfig: bad conv geometry");
  if (c.relpos_clip < 0) throw Error("EncoderConfig: relpos_clip must be >= 0");
  if (c.dropout < 0.0 || c.dropout >= 1.0) throw Error("EncoderConfig: dropout outside [0,1)");
}

inline nlohmann::json encoder_config_to_json(const EncoderConfig& c) {
  return nlohmann::json{{"input_dim", c.input_dim},
                        {"conv_filter_len", c.conv_filter_len},
                        {"conv_stride", c.conv_stride},
                        {"n_layers", c.n_layers},
                        {"n_heads", c.n_heads},
                        {"d_model", c.d_model},
                        {"d_ff", c.d_ff},
                        {"relpos_clip", c.relpos_clip},
                        {"dropout", c.dropout}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.input_dim = j.value("input_dim", c.input_dim);
  c.conv_filter_len = j.value("conv_filter_len", c.conv_filter_len);
  c.conv_stride = j.value("conv_stride", c.conv_stride);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_model = j.value("d_model", c.d_model);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.relpos_clip = j.value("relpos_clip", c.relpos_clip);
  c.dropout = j.value("dropout", c.dropout);
  validate_encoder_config(c);
  return c;
}

using ParamSet = std::map<std::string, Mat>;
using GradSet = std::map<std::string, Mat>;

namespace detail {

inline Mat init_tensor(uint64_t seed, const std::string& name, int64_t rows, int64_t cols,
                       double scale) {
  Mat m(rows, cols);
  if (scale > 0.0) {
    Rng rng(derive_seed(seed, "init/" + name));
    for (double& x : m.v) x = rng.uniform_real(-scale, scale);
  }
  return m;
}

}  // namespace detail

inline ParamSet init_params(const EncoderConfig& cfg, int64_t n_symbols, int64_t n_languages,
                            uint64_t seed) {
  validate_encoder_config(cfg);
  if (n_symbols < 2) throw Error("init_params: need at least blank plus one symbol");
  if (n_languages < 1) throw Error("init_params: need at least one language");
  ParamSet p;
  auto put = [&](const std::string& name, int64_t r, int64_t c, double scale) {
    p[name] = detail::init_tensor(seed, name, r, c, scale);
  };
  double s_conv = 1.0 / std::sqrt(static_cast<double>(cfg.conv_filter_len * cfg.input_dim));
  double s_dm = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  double s_ff = 1.0 / std::sqrt(static_cast<double>(cfg.d_ff));
  put("conv.w", cfg.conv_filter_len * cfg.input_dim, cfg.d_model, s_conv);
  put("conv.b", 1, cfg.d_model, 0.0);
  for (int64_t l = 0; l < cfg.n_layers; ++l) {
    std::string pre = strprintf("layer%lld.", (long long)l);
    put(pre + "ln1.g", 1, cfg.d_model, 0.0);
    p[pre + "ln1.g"].fill(1.0);
    put(pre + "ln1.b", 1, cfg.d_model, 0.0);
    for (const char* w : {"wq", "wk", "wv", "wo"}) put(pre + "attn." + w, cfg.d_model, cfg.d_model, s_dm);
    for (const char* b : {"bq", "bk", "bv", "bo"}) put(pre + "attn." + b, 1, cfg.d_model, 0.0);
    put(pre + "ln2.g", 1, cfg.d_model, 0.0);
    p[pre + "ln2.g"].fill(1.0);
    put(pre + "ln2.b", 1, cfg.d_model, 0.0);
    put(pre + "ffn.w1", cfg.d_model, cfg.d_ff, s_dm);
    put(pre + "ffn.b1", 1, cfg.d_ff, 0.0);
    put(pre + "ffn.w2", cfg.d_ff, cfg.d_model, s_ff);
    put(pre + "ffn.b2", 1, cfg.d_model, 0.0);
  }
  put("relpos", 2 * cfg.relpos_clip + 1, cfg.head_dim(), 0.1);
  put("final_ln.g", 1, cfg.d_model, 0.0);
  p["final_ln.g"].fill(1.0);
  put("final_ln.b", 1, cfg.d_model, 0.0);
  put("ctc.w", cfg.d_model, n_symbols, s_dm);
  put("ctc.b", 1, n_symbols, 0.0);
  put("lid.w", cfg.d_model, n_languages, s_dm);
  put("lid.b", 1, n_languages, 0.0);
  return p;
}

// Tape handles of the forward pass plus the parameter-leaf map used to pull
// gradients back out.
struct ForwardIds {
  int hidden = -1;
  int ctc_logits = -1;
  int lid_logits = -1;
  std::map<std::string, int> param_ids;
};

inline void check_forward_shapes(const EncoderConfig& cfg, const ParamSet& params,
                                 const Mat& features) {
  if (features.rows < 1) throw Error("model_forward: empty utterance");
  if (features.cols != cfg.input_dim)
    throw Error(strprintf("model_forward: feature dim %lld != configured input_dim %lld",
                          (long long)features.cols, (long long)cfg.input_dim));
  auto it = params.find("conv.w");
  if (it != params.end() && it->second.rows != cfg.conv_filter_len * cfg.input_dim)
    throw Error("model_forward: parameter shapes disagree with config");
}

inline ForwardIds model_forward(Tape& t, const ParamSet& params, const EncoderConfig& cfg,
                                const Mat& features, bool train = false, Rng* drop_rng = nullptr) {
  check_forward_shapes(cfg, params, features);
  ForwardIds ids;
  auto P = [&](const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw Error("model_forward: missing parameter " + name);
    auto pit = ids.param_ids.find(name);
    if (pit != ids.param_ids.end()) return pit->second;
    int id = t.leaf_ref(&it->second);
    ids.param_ids.emplace(name, id);
    return id;
  };
  bool drop = train && cfg.dropout > 0.0 && drop_rng != nullptr;

  int x = t.leaf(features);
  int cols = t.im2col(x, cfg.conv_filter_len, cfg.conv_stride, cfg.conv_pad());
  int h = t.add_rowvec(t.matmul(cols, P("conv.w")), P("conv.b"));
  h = t.gelu(h);
  if (drop) h = t.dropout(h, cfg.dropout, *drop_rng);

  double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
  for (int64_t l = 0; l < cfg.n_layers; ++l) {
    std::string pre = strprintf("layer%lld.", (long long)l);
    int a = t.layer_norm(h, P(pre + "ln1.g"), P(pre + "ln1.b"));
    int q = t.add_rowvec(t.matmul(a, P(pre + "attn.wq")), P(pre + "attn.bq"));
    int k = t.add_rowvec(t.matmul(a, P(pre + "attn.wk")), P(pre + "attn.bk"));
    int v = t.add_rowvec(t.matmul(a, P(pre + "attn.wv")), P(pre + "attn.bv"));
    std::vector<int> heads;
    for (int64_t hh = 0; hh < cfg.n_heads; ++hh) {
      int64_t off = hh * cfg.head_dim();
      int qh = t.slice_cols(q, off, cfg.head_dim());
      int kh = t.slice_cols(k, off, cfg.head_dim());
      int vh = t.slice_cols(v, off, cfg.head_dim());
      int scores = t.add(t.matmul_nt(qh, kh), t.rel_attn_bias(qh, P("relpos"), cfg.relpos_clip));
      scores = t.scale(scores, inv_sqrt_dh);
      int attn = t.softmax_rows(scores);
      heads.push_back(t.matmul(attn, vh));
    }
    int ctx = heads.size() == 1 ? heads[0] : t.concat_cols(heads);
    int o = t.add_rowvec(t.matmul(ctx, P(pre + "attn.wo")), P(pre + "attn.bo"));
    if (drop) o = t.dropout(o, cfg.dropout, *drop_rng);
    h = t.add(h, o);

    int f = t.layer_norm(h, P(pre + "ln2.g"), P(pre + "ln2.b"));
    f = t.gelu(t.add_rowvec(t.matmul(f, P(pre + "ffn.w1")), P(pre + "ffn.b1")));
    f = t.add_rowvec(t.matmul(f, P(pre + "ffn.w2")), P(pre + "ffn.b2"));
    if (drop) f = t.dropout(f, cfg.dropout, *drop_rng);
    h = t.add(h, f);
  }
  h = t.layer_norm(h, P("final_ln.g"), P("final_ln.b"));

  ids.hidden = h;
  ids.ctc_logits = t.add_rowvec(t.matmul(h, P("ctc.w")), P("ctc.b"));
  // Linear projection first, then mean-pool over time.
  ids.lid_logits = t.mean_rows(t.add_rowvec(t.matmul(h, P("lid.w")), P("lid.b")));
  return ids;
}

// Eval-mode (deterministic) forward pass returning plain matrices.
struct EvalOut {
  Mat hidden;
  Mat ctc_logits;
  Mat lid_logits;
};

inline EvalOut eval_forward(const ParamSet& params, const EncoderConfig& cfg, const Mat& features) {
  Tape t;
  ForwardIds ids = model_forward(t, params, cfg, features, /*train=*/false, nullptr);
  return EvalOut{t.val(ids.hidden), t.val(ids.ctc_logits), t.val(ids.lid_logits)};
}

// ---------------------------------------------------------------------------
// Joint loss and batch gradients

struct TrainItem {
  const Mat* features = nullptr;   // already augmented when training
  std::vector<int> target;         // encoded transcript
  int64_t language_index = -1;     // -1: no LID term for this utterance
};

struct BatchResult {
  double loss = 0.0;       // mean over utterances of ctc + gamma * lid
  double ctc_loss = 0.0;   // mean over utterances
  double lid_loss = 0.0;   // mean over utterances that carried the LID term
  GradSet grads;
};

// Per-utterance tapes run independently (optionally in parallel); gradients
// are reduced in utterance order so results do not depend on `jobs`.
inline BatchResult compute_batch_gradients(const ParamSet& params, const EncoderConfig& cfg,
                                           const std::vector<TrainItem>& items, double gamma,
                                           bool train, uint64_t step_seed, int jobs = 1) {
  if (items.empty()) throw Error("compute_batch_gradients: empty batch");
  if (!std::isfinite(gamma) || gamma < 0.0) throw Error("compute_batch_gradients: bad gamma");
  size_t n = items.size();
  std::vector<GradSet> grads(n);
  std::vector<double> ctc_losses(n, 0.0), lid_losses(n, 0.0);
  std::vector<char> has_lid(n, 0);
  std::vector<std::string> errors(n);

  parallel_for(static_cast<int64_t>(n), jobs, [&](int64_t i) {
    try {
      const TrainItem& item = items[static_cast<size_t>(i)];
      Tape tape;
      Rng drop_rng(derive_seed(step_seed, "dropout", static_cast<uint64_t>(i)));
      ForwardIds ids = model_forward(tape, params, cfg, *item.features, train, &drop_rng);
      int loss = tape.ctc_loss(ids.ctc_logits, item.target);
      ctc_losses[static_cast<size_t>(i)] = tape.val(loss)(0, 0);
      bool lid = gamma > 0.0 && item.language_index >= 0;
      if (item.language_index >= 0) {
        int ce = tape.cross_entropy(ids.lid_logits, item.language_index);
        lid_losses[static_cast<size_t>(i)] = tape.val(ce)(0, 0);
        has_lid[static_cast<size_t>(i)] = 1;
        if (lid) loss = tape.add_weighted(loss, ce, 1.0, gamma);
      }
      tape.backward_from(loss, 1.0 / static_cast<double>(n));
      GradSet& g = grads[static_cast<size_t>(i)];
      for (const auto& [name, id] : ids.param_ids) g[name] = tape.grad_or_zero(id);
    } catch (const std::exception& e) {
      errors[static_cast<size_t>(i)] = e.what();
    }
  });

  for (size_t i = 0; i < n; ++i)
    if (!errors[i].empty()) throw Error("batch gradient (utterance " + std::to_string(i) + "): " + errors[i]);

  BatchResult out;
  for (const auto& [name, m] : params) out.grads[name] = Mat(m.rows, m.cols);
  int64_t n_lid = 0;
  for (size_t i = 0; i < n; ++i) {
    for (auto& [name, g] : grads[i]) {
      Mat& dst = out.grads.at(name);
      for (int64_t j = 0; j < dst.size(); ++j) dst.v[static_cast<size_t>(j)] += g.v[static_cast<size_t>(j)];
    }
    out.ctc_loss += ctc_losses[i];
    if (has_lid[i]) {
      out.lid_loss += lid_losses[i];
      ++n_lid;
    }
  }
  out.ctc_loss /= static_cast<double>(n);
  double mean_lid_all = 0.0;
  for (size_t i = 0; i < n; ++i)
    if (has_lid[i]) mean_lid_all += gamma * lid_losses[i];
  out.loss = out.ctc_loss + mean_lid_all / static_cast<double>(n);
  out.lid_loss = n_lid > 0 ? out.lid_loss / static_cast<double>(n_lid) : 0.0;

  for (const auto& [name, g] : out.grads)
    if (!g.all_finite()) throw Error("non-finite gradient in tensor " + name);
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

struct TrainState {
  ParamSet params;
  std::map<std::string, Mat> accum;  // Adagrad accumulators, shaped like params
  int64_t update_counter = 0;
  double lr0 = 0.03;
  int64_t half_at = -1;  // update index at which the LR halves; -1 = never
  uint64_t seed = 0;

  double current_lr() const {
    return (half_at >= 0 && update_counter >= half_at) ? lr0 / 2.0 : lr0;
  }
};

inline TrainState make_train_state(ParamSet params, double lr0, int64_t half_at, uint64_t seed) {
  TrainState st;
  st.params = std::move(params);
  for (const auto& [name, m] : st.params) st.accum[name] = Mat(m.rows, m.cols);
  st.update_counter = 0;
  st.lr0 = lr0;
  st.half_at = half_at;
  st.seed = seed;
  return st;
}

inline void optimizer_step(TrainState& st, const GradSet& grads, double eps = 1e-8) {
  double lr = st.current_lr();
  for (auto& [name, p] : st.params) {
    auto git = grads.find(name);
    if (git == grads.end()) throw Error("optimizer_step: missing gradient for " + name);
    const Mat& g = git->second;
    if (!g.same_shape(p)) throw Error("optimizer_step: gradient shape mismatch for " + name);
    Mat& acc = st.accum.at(name);
    for (int64_t i = 0; i < p.size(); ++i) {
      double gi = g.v[static_cast<size_t>(i)];
      double a = (acc.v[static_cast<size_t>(i)] += gi * gi);
      p.v[static_cast<size_t>(i)] -= lr * gi / (std::sqrt(a) + eps);
    }
  }
  ++st.update_counter;
}

// ---------------------------------------------------------------------------
// SpecAugment

struct SpecAugmentConfig {
  int64_t n_time_masks = 2;
  int64_t time_mask_max = 50;
  int64_t n_freq_masks = 1;
  int64_t freq_mask_max = 0;  // 0: resolved to input_dim / 4 at apply time
};

// Masks are zeroed in place: width uniform on [0, max], start uniform over
// valid placements. Widths are clamped by callers, not here.
inline void specaugment(Mat& features, int64_t n_time_masks, int64_t time_mask_max,
                        int64_t n_freq_masks, int64_t freq_mask_max, Rng& rng) {
  if (time_mask_max > features.rows || freq_mask_max > features.cols)
    throw Error("specaugment: mask width exceeds dimension");
  if (n_time_masks < 0 || n_freq_masks < 0 || time_mask_max < 0 || freq_mask_max < 0)
    throw Error("specaugment: negative mask parameter");
  for (int64_t m = 0; m < n_time_masks; ++m) {
    int64_t w = rng.uniform_int(0, time_mask_max);
    int64_t start = rng.uniform_int(0, features.rows - w);
    for (int64_t t = start; t < start + w; ++t)
      for (int64_t c = 0; c < features.cols; ++c) features(t, c) = 0.0;
  }
  for (int64_t m = 0; m < n_freq_masks; ++m) {
    int64_t w = rng.uniform_int(0, freq_mask_max);
    int64_t start = rng.uniform_int(0, features.cols - w);
    for (int64_t t = 0; t < features.rows; ++t)
      for (int64_t c = start; c < start + w; ++c) features(t, c) = 0.0;
  }
}

inline void apply_specaugment(Mat& features, const SpecAugmentConfig& cfg, Rng& rng) {
  int64_t t_max = std::min(cfg.time_mask_max, features.rows);
  int64_t f_max = cfg.freq_mask_max > 0 ? cfg.freq_mask_max : std::max<int64_t>(1, features.cols / 4);
  f_max = std::min(f_max, features.cols);
  specaugment(features, cfg.n_time_masks, t_max, cfg.n_freq_masks, f_max, rng);
}

// ---------------------------------------------------------------------------
// Checkpoints: magic CKP1, u32 version, u32 header length + JSON header
// (config, symbols, languages, update counter, seed), then named tensors as
// (u32 name length, name, u32 rank, u32 dims..., f32 LE data) until EOF.

struct CheckpointMeta {
  EncoderConfig config;
  SymbolTable symbols;
  std::vector<std::string> languages;
  int64_t update_counter = 0;
  uint64_t seed = 0;
};

inline void save_checkpoint(const std::string& path, const ParamSet& params,
                            const CheckpointMeta& meta) {
  nlohmann::json header{{"config", encoder_config_to_json(meta.config)},
                        {"symbols", meta.symbols.names()},
                        {"languages", meta.languages},
                        {"update_counter", meta.update_counter},
                        {"seed", meta.seed}};
  std::string hj = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(IoCode::kOpenFailed, "save_checkpoint: cannot open " + path);
  os.write("CKP1", 4);
  detail::put_u32(os, 1);
  detail::put_u32(os, static_cast<uint32_t>(hj.size()));
  os.write(hj.data(), static_cast<std::streamsize>(hj.size()));
  for (const auto& [name, m] : params) {
    detail::put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(os, 2);
    detail::put_u32(os, static_cast<uint32_t>(m.rows));
    detail::put_u32(os, static_cast<uint32_t>(m.cols));
    for (double x : m.v) detail::put_f32(os, static_cast<float>(x));
  }
  if (!os) throw IoError(IoCode::kOpenFailed, "save_checkpoint: write failed " + path);
}

inline std::pair<ParamSet, CheckpointMeta> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(IoCode::kOpenFailed, "load_checkpoint: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "CKP1", 4) != 0)
    throw IoError(IoCode::kBadMagic, "load_checkpoint " + path + ": bad magic");
  uint32_t version = detail::get_u32(is, "checkpoint " + path);
  if (version != 1)
    throw IoError(IoCode::kBadVersion, strprintf("load_checkpoint %s: unsupported version %u",
                                                 path.c_str(), version));
  uint32_t hlen = detail::get_u32(is, "checkpoint " + path);
  std::string hj(hlen, '\0');
  if (!is.read(hj.data(), hlen)) throw IoError(IoCode::kTruncated, "truncated checkpoint header");
  nlohmann::json header = nlohmann::json::parse(hj);
  CheckpointMeta meta;
  meta.config = encoder_config_from_json(header.at("config"));
  meta.symbols = SymbolTable::from_names(header.at("symbols").get<std::vector<std::string>>());
  meta.languages = header.at("languages").get<std::vector<std::string>>();
  meta.update_counter = header.at("update_counter").get<int64_t>();
  meta.seed = header.at("seed").get<uint64_t>();

  ParamSet params;
  while (true) {
    unsigned char lenb[4];
    if (!is.read(reinterpret_cast<char*>(lenb), 4)) break;  // EOF: done
    uint32_t name_len = static_cast<uint32_t>(lenb[0]) | (static_cast<uint32_t>(lenb[1]) << 8) |
                        (static_cast<uint32_t>(lenb[2]) << 16) | (static_cast<uint32_t>(lenb[3]) << 24);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw IoError(IoCode::kTruncated, "truncated tensor name");
    uint32_t rank = detail::get_u32(is, "tensor rank");
    if (rank != 2) throw IoError(IoCode::kBadDims, "load_checkpoint: only rank-2 tensors supported");
    uint32_t rows = detail::get_u32(is, "tensor dims");
    uint32_t cols = detail::get_u32(is, "tensor dims");
    Mat m(rows, cols);
    for (double& x : m.v) x = static_cast<double>(detail::get_f32(is, "tensor data " + name));
    if (!m.all_finite()) throw IoError(IoCode::kNonFinite, "load_checkpoint: non-finite in " + name);
    params[name] = std::move(m);
  }
  return {std::move(params), std::move(meta)};
}

}  // namespace ctcpl

#endif  // CTCPL_MODEL_HPP_
