// ctcpl/autodiff.hpp

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

// Small tape-based reverse-mode engine over dense matrices. One tape per
// utterance; construction order is the topological order, so backward is a
// single reverse sweep. Parameter leaves reference external storage to avoid
// copying the model into every tape.

#ifndef CTCPL_AUTODIFF_HPP_
#define CTCPL_AUTODIFF_HPP_

#include <cmath>
#include <functional>
#include <vector>

#include "ctcpl/common.hpp"
#include "ctcpl/ctc.hpp"
#include "ctcpl/mat.hpp"
#include "ctcpl/rng.hpp"

namespace ctcpl {

class Tape {
 public:
  int leaf(Mat v) {
    nodes_.push_back(Node{std::move(v), nullptr, Mat(), nullptr});
    return last();
  }

  // Leaf whose value lives outside the tape (model parameters). The pointee
  // must outlive the tape.
  int leaf_ref(const Mat* m) {
    nodes_.push_back(Node{Mat(), m, Mat(), nullptr});
    return last();
  }

  const Mat& val(int id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    return n.ext ? *n.ext : n.own;
  }

  Mat& grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty()) {
      const Mat& v = val(id);
      n.grad = Mat(v.rows, v.cols);
    }
    return n.grad;
  }

  bool grad_touched(int id) const { return !nodes_[static_cast<size_t>(id)].grad.empty(); }

  // Returns a zero matrix when the node never received gradient.
  Mat grad_or_zero(int id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad.empty()) return n.grad;
    const Mat& v = val(id);
    return Mat(v.rows, v.cols);
  }

  void backward_from(int root, double upstream = 1.0) {
    const Mat& rv = val(root);
    if (rv.rows != 1 || rv.cols != 1) throw Error("backward_from: root must be a scalar");
    grad(root)(0, 0) += upstream;
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.backward && !n.grad.empty()) n.backward(*this);
    }
  }

  // ---- operators -----------------------------------------------------------

  int matmul(int a, int b) {
    int id = push(ctcpl::matmul(val(a), val(b)));
    set_bw(id, [this, id, a, b](Tape& t) {
      matmul_nt_acc(t.grad(id), t.val(b), t.grad(a));
      matmul_tn_acc(t.val(a), t.grad(id), t.grad(b));
    });
    return id;
  }

  int matmul_nt(int a, int b) {
    int id = push(ctcpl::matmul_nt(val(a), val(b)));
    set_bw(id, [this, id, a, b](Tape& t) {
      matmul_acc(t.grad(id), t.val(b), t.grad(a));
      matmul_tn_acc(t.grad(id), t.val(a), t.grad(b));
    });
    return id;
  }

  int add(int a, int b) {
    const Mat& av = val(a);
    const Mat& bv = val(b);
    if (!av.same_shape(bv)) throw Error("add: shape mismatch");
    Mat out = av;
    for (int64_t i = 0; i < out.size(); ++i) out.v[static_cast<size_t>(i)] += bv.v[static_cast<size_t>(i)];
    int id = push(std::move(out));
    set_bw(id, [id, a, b](Tape& t) {
      acc(t.grad(a), t.grad(id), 1.0);
      acc(t.grad(b), t.grad(id), 1.0);
    });
    return id;
  }

  int add_rowvec(int a, int b) {
    const Mat& av = val(a);
    const Mat& bv = val(b);
    if (bv.rows != 1 || bv.cols != av.cols) throw Error("add_rowvec: shape mismatch");
    Mat out = av;
    for (int64_t r = 0; r < out.rows; ++r)
      for (int64_t c = 0; c < out.cols; ++c) out(r, c) += bv(0, c);
    int id = push(std::move(out));
    set_bw(id, [id, a, b](Tape& t) {
      acc(t.grad(a), t.grad(id), 1.0);
      Mat& db = t.grad(b);
      const Mat& d = t.grad(id);
      for (int64_t r = 0; r < d.rows; ++r)
        for (int64_t c = 0; c < d.cols; ++c) db(0, c) += d(r, c);
    });
    return id;
  }

  int scale(int a, double s) {
    Mat out = val(a);
    for (double& x : out.v) x *= s;
    int id = push(std::move(out));
    set_bw(id, [id, a, s](Tape& t) { acc(t.grad(a), t.grad(id), s); });
    return id;
  }

  // c = wa * a + wb * b, scalars only (loss mixing)
  int add_weighted(int a, int b, double wa, double wb) {
    const Mat& av = val(a);
    const Mat& bv = val(b);
    if (!av.same_shape(bv)) throw Error("add_weighted: shape mismatch");
    Mat out = av;
    for (int64_t i = 0; i < out.size(); ++i)
      out.v[static_cast<size_t>(i)] = wa * av.v[static_cast<size_t>(i)] + wb * bv.v[static_cast<size_t>(i)];
    int id = push(std::move(out));
    set_bw(id, [id, a, b, wa, wb](Tape& t) {
      acc(t.grad(a), t.grad(id), wa);
      acc(t.grad(b), t.grad(id), wb);
    });
    return id;
  }

  int gelu(int a) {
    const Mat& av = val(a);
    Mat out(av.rows, av.cols);
    for (int64_t i = 0; i < av.size(); ++i)
      out.v[static_cast<size_t>(i)] = gelu_fwd(av.v[static_cast<size_t>(i)]);
    int id = push(std::move(out));
    set_bw(id, [id, a](Tape& t) {
      const Mat& x = t.val(a);
      const Mat& d = t.grad(id);
      Mat& dx = t.grad(a);
      for (int64_t i = 0; i < x.size(); ++i)
        dx.v[static_cast<size_t>(i)] += d.v[static_cast<size_t>(i)] * gelu_bwd(x.v[static_cast<size_t>(i)]);
    });
    return id;
  }

  int layer_norm(int x, int gain, int bias, double eps = 1e-5) {
    const Mat& xv = val(x);
    const Mat& g = val(gain);
    const Mat& b = val(bias);
    if (g.rows != 1 || g.cols != xv.cols || b.rows != 1 || b.cols != xv.cols)
      throw Error("layer_norm: affine shape mismatch");
    int64_t C = xv.cols;
    Mat out(xv.rows, C);
    Mat xhat(xv.rows, C);
    std::vector<double> inv_std(static_cast<size_t>(xv.rows));
    for (int64_t r = 0; r < xv.rows; ++r) {
      double mu = 0.0;
      for (int64_t c = 0; c < C; ++c) mu += xv(r, c);
      mu /= static_cast<double>(C);
      double var = 0.0;
      for (int64_t c = 0; c < C; ++c) {
        double d = xv(r, c) - mu;
        var += d * d;
      }
      var /= static_cast<double>(C);
      double istd = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<size_t>(r)] = istd;
      for (int64_t c = 0; c < C; ++c) {
        double xh = (xv(r, c) - mu) * istd;
        xhat(r, c) = xh;
        out(r, c) = g(0, c) * xh + b(0, c);
      }
    }
    int id = push(std::move(out));
    set_bw(id, [id, x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t) {
      const Mat& d = t.grad(id);
      const Mat& g = t.val(gain);
      Mat& dx = t.grad(x);
      Mat& dg = t.grad(gain);
      Mat& db = t.grad(bias);
      int64_t C = d.cols;
      for (int64_t r = 0; r < d.rows; ++r) {
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int64_t c = 0; c < C; ++c) {
          double dxh = d(r, c) * g(0, c);
          sum_dxhat += dxh;
          sum_dxhat_xhat += dxh * xhat(r, c);
          dg(0, c) += d(r, c) * xhat(r, c);
          db(0, c) += d(r, c);
        }
        double istd = inv_std[static_cast<size_t>(r)];
        for (int64_t c = 0; c < C; ++c) {
          double dxh = d(r, c) * g(0, c);
          dx(r, c) += istd * (dxh - (sum_dxhat + xhat(r, c) * sum_dxhat_xhat) / static_cast<double>(C));
        }
      }
    });
    return id;
  }

  int softmax_rows(int a) {
    const Mat& av = val(a);
    Mat out(av.rows, av.cols);
    for (int64_t r = 0; r < av.rows; ++r) {
      double z = logsumexp_row(av.row(r), av.cols);
      for (int64_t c = 0; c < av.cols; ++c) out(r, c) = std::exp(av(r, c) - z);
    }
    int id = push(std::move(out));
    set_bw(id, [this, id, a](Tape& t) {
      const Mat& y = t.val(id);
      const Mat& d = t.grad(id);
      Mat& dx = t.grad(a);
      for (int64_t r = 0; r < y.rows; ++r) {
        double dot = 0.0;
        for (int64_t c = 0; c < y.cols; ++c) dot += d(r, c) * y(r, c);
        for (int64_t c = 0; c < y.cols; ++c) dx(r, c) += y(r, c) * (d(r, c) - dot);
      }
    });
    return id;
  }

  int slice_cols(int a, int64_t c0, int64_t len) {
    const Mat& av = val(a);
    if (c0 < 0 || c0 + len > av.cols) throw Error("slice_cols: out of range");
    Mat out(av.rows, len);
    for (int64_t r = 0; r < av.rows; ++r)
      for (int64_t c = 0; c < len; ++c) out(r, c) = av(r, c0 + c);
    int id = push(std::move(out));
    set_bw(id, [id, a, c0, len](Tape& t) {
      const Mat& d = t.grad(id);
      Mat& da = t.grad(a);
      for (int64_t r = 0; r < d.rows; ++r)
        for (int64_t c = 0; c < len; ++c) da(r, c0 + c) += d(r, c);
    });
    return id;
  }

  int concat_cols(const std::vector<int>& parts) {
    if (parts.empty()) throw Error("concat_cols: empty");
    int64_t rows = val(parts[0]).rows;
    int64_t cols = 0;
    for (int p : parts) {
      if (val(p).rows != rows) throw Error("concat_cols: row mismatch");
      cols += val(p).cols;
    }
    Mat out(rows, cols);
    int64_t off = 0;
    for (int p : parts) {
      const Mat& pv = val(p);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < pv.cols; ++c) out(r, off + c) = pv(r, c);
      off += pv.cols;
    }
    int id = push(std::move(out));
    set_bw(id, [id, parts](Tape& t) {
      const Mat& d = t.grad(id);
      int64_t off = 0;
      for (int p : parts) {
        Mat& dp = t.grad(p);
        for (int64_t r = 0; r < d.rows; ++r)
          for (int64_t c = 0; c < dp.cols; ++c) dp(r, c) += d(r, off + c);
        off += dp.cols;
      }
    });
    return id;
  }

  // Unfold a T x D sequence into conv patches: out (T' x filter*D), with
  // symmetric zero padding. T' = floor((T + 2*pad - filter)/stride) + 1.
  int im2col(int a, int64_t filter, int64_t stride, int64_t pad) {
    const Mat& av = val(a);
    int64_t T = av.rows, D = av.cols;
    int64_t Tp = (T + 2 * pad - filter) / stride + 1;
    if (Tp < 1) throw Error("im2col: output would be empty");
    Mat out(Tp, filter * D);
    for (int64_t tp = 0; tp < Tp; ++tp) {
      int64_t start = tp * stride - pad;
      for (int64_t f = 0; f < filter; ++f) {
        int64_t src = start + f;
        if (src < 0 || src >= T) continue;
        for (int64_t d = 0; d < D; ++d) out(tp, f * D + d) = av(src, d);
      }
    }
    int id = push(std::move(out));
    set_bw(id, [id, a, filter, stride, pad, T, D](Tape& t) {
      const Mat& dg = t.grad(id);
      Mat& da = t.grad(a);
      for (int64_t tp = 0; tp < dg.rows; ++tp) {
        int64_t start = tp * stride - pad;
        for (int64_t f = 0; f < filter; ++f) {
          int64_t src = start + f;
          if (src < 0 || src >= T) continue;
          for (int64_t d = 0; d < D; ++d) da(src, d) += dg(tp, f * D + d);
        }
      }
    });
    return id;
  }

  // Shaw-style content-to-position scores: out(i,j) = q_i . r[clip(j-i)+k].
  int rel_attn_bias(int q, int r, int64_t clip) {
    const Mat& qv = val(q);
    const Mat& rv = val(r);
    if (rv.rows != 2 * clip + 1 || rv.cols != qv.cols)
      throw Error("rel_attn_bias: table shape mismatch");
    int64_t T = qv.rows, dh = qv.cols;
    Mat out(T, T);
    for (int64_t i = 0; i < T; ++i) {
      for (int64_t j = 0; j < T; ++j) {
        int64_t rel = std::clamp(j - i, -clip, clip) + clip;
        double s = 0.0;
        for (int64_t d = 0; d < dh; ++d) s += qv(i, d) * rv(rel, d);
        out(i, j) = s;
      }
    }
    int id = push(std::move(out));
    set_bw(id, [id, q, r, clip](Tape& t) {
      const Mat& dg = t.grad(id);
      const Mat& qv = t.val(q);
      const Mat& rv = t.val(r);
      Mat& dq = t.grad(q);
      Mat& dr = t.grad(r);
      int64_t T = qv.rows, dh = qv.cols;
      for (int64_t i = 0; i < T; ++i) {
        for (int64_t j = 0; j < T; ++j) {
          double g = dg(i, j);
          if (g == 0.0) continue;
          int64_t rel = std::clamp(j - i, -clip, clip) + clip;
          for (int64_t d = 0; d < dh; ++d) {
            dq(i, d) += g * rv(rel, d);
            dr(rel, d) += g * qv(i, d);
          }
        }
      }
    });
    return id;
  }

  int mean_rows(int a) {
    const Mat& av = val(a);
    Mat out(1, av.cols);
    for (int64_t r = 0; r < av.rows; ++r)
      for (int64_t c = 0; c < av.cols; ++c) out(0, c) += av(r, c);
    for (int64_t c = 0; c < av.cols; ++c) out(0, c) /= static_cast<double>(av.rows);
    int id = push(std::move(out));
    set_bw(id, [id, a](Tape& t) {
      const Mat& d = t.grad(id);
      Mat& da = t.grad(a);
      double inv = 1.0 / static_cast<double>(da.rows);
      for (int64_t r = 0; r < da.rows; ++r)
        for (int64_t c = 0; c < da.cols; ++c) da(r, c) += d(0, c) * inv;
    });
    return id;
  }

  // Inverted dropout with a mask drawn at construction time.
  int dropout(int a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    if (rate >= 1.0) throw Error("dropout: rate must be < 1");
    const Mat& av = val(a);
    Mat mask(av.rows, av.cols);
    double keep = 1.0 - rate;
    for (double& m : mask.v) m = rng.uniform_real() < keep ? 1.0 / keep : 0.0;
    Mat out(av.rows, av.cols);
    for (int64_t i = 0; i < av.size(); ++i)
      out.v[static_cast<size_t>(i)] = av.v[static_cast<size_t>(i)] * mask.v[static_cast<size_t>(i)];
    int id = push(std::move(out));
    set_bw(id, [id, a, mask = std::move(mask)](Tape& t) {
      const Mat& d = t.grad(id);
      Mat& da = t.grad(a);
      for (int64_t i = 0; i < d.size(); ++i)
        da.v[static_cast<size_t>(i)] += d.v[static_cast<size_t>(i)] * mask.v[static_cast<size_t>(i)];
    });
    return id;
  }

  // CTC negative log-likelihood of `target` given unnormalized logits.
  // Internally normalizes with log-softmax and runs the f64 forward-backward.
  int ctc_loss(int logits, const std::vector<int>& target) {
    const Mat& lg = val(logits);
    Mat logp(lg.rows, lg.cols);
    Mat softmax(lg.rows, lg.cols);
    for (int64_t r = 0; r < lg.rows; ++r) {
      double z = logsumexp_row(lg.row(r), lg.cols);
      for (int64_t c = 0; c < lg.cols; ++c) {
        logp(r, c) = lg(r, c) - z;
        softmax(r, c) = std::exp(logp(r, c));
      }
    }
    CtcInstance inst{&logp, target};
    CtcResult res = ctc_nll(inst);
    Mat out(1, 1);
    out(0, 0) = res.nll;
    int id = push(std::move(out));
    set_bw(id, [id, logits, softmax = std::move(softmax), post = std::move(res.grad)](Tape& t) {
      double up = t.grad(id)(0, 0);
      Mat& dl = t.grad(logits);
      // d nll / d logits = softmax - posterior; `post` holds -posterior.
      for (int64_t i = 0; i < dl.size(); ++i)
        dl.v[static_cast<size_t>(i)] +=
            up * (softmax.v[static_cast<size_t>(i)] + post.v[static_cast<size_t>(i)]);
    });
    return id;
  }

  // Cross-entropy of a single 1 x L logit row against a one-hot target.
  int cross_entropy(int logits, int64_t target) {
    const Mat& lg = val(logits);
    if (lg.rows != 1) throw Error("cross_entropy: expected a single logit row");
    if (target < 0 || target >= lg.cols) throw Error("cross_entropy: target out of range");
    double z = logsumexp_row(lg.row(0), lg.cols);
    Mat softmax(1, lg.cols);
    for (int64_t c = 0; c < lg.cols; ++c) softmax(0, c) = std::exp(lg(0, c) - z);
    Mat out(1, 1);
    out(0, 0) = z - lg(0, target);
    int id = push(std::move(out));
    set_bw(id, [id, logits, target, softmax = std::move(softmax)](Tape& t) {
      double up = t.grad(id)(0, 0);
      Mat& dl = t.grad(logits);
      for (int64_t c = 0; c < dl.cols; ++c)
        dl(0, c) += up * (softmax(0, c) - (c == target ? 1.0 : 0.0));
    });
    return id;
  }

  size_t n_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Mat own;
    const Mat* ext = nullptr;
    Mat grad;
    std::function<void(Tape&)> backward;
  };

  int push(Mat v) {
    nodes_.push_back(Node{std::move(v), nullptr, Mat(), nullptr});
    return last();
  }

  void set_bw(int id, std::function<void(Tape&)> fn) {
    nodes_[static_cast<size_t>(id)].backward = std::move(fn);
  }

  int last() const { return static_cast<int>(nodes_.size()) - 1; }

  static void acc(Mat& dst, const Mat& src, double w) {
    for (int64_t i = 0; i < dst.size(); ++i)
      dst.v[static_cast<size_t>(i)] += w * src.v[static_cast<size_t>(i)];
  }

  static double gelu_fwd(double x) {
    const double c0 = 0.7978845608028654;  // sqrt(2/pi)
    double u = c0 * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
  }

  static double gelu_bwd(double x) {
    const double c0 = 0.7978845608028654;
    double u = c0 * (x + 0.044715 * x * x * x);
    double th = std::tanh(u);
    double sech2 = 1.0 - th * th;
    return 0.5 * (1.0 + th) + 0.5 * x * sech2 * c0 * (1.0 + 3.0 * 0.044715 * x * x);
  }

  std::vector<Node> nodes_;
};

}  // namespace ctcpl

#endif  // CTCPL_AUTODIFF_HPP_
