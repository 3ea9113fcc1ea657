// ctcpl/ctc.hpp

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

// Exact CTC negative log-likelihood via log-space forward-backward (always
// f64), its analytic gradient w.r.t. the log-probabilities, greedy decoding,
// and an exhaustive alignment-enumeration route used as an oracle.

#ifndef CTCPL_CTC_HPP_
#define CTCPL_CTC_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "ctcpl/common.hpp"
#include "ctcpl/mat.hpp"

namespace ctcpl {

constexpr int kBlank = 0;

// log_probs: T x (V+1) with log-softmax-normalized rows, column 0 = blank.
// target: label ids in 1..V.
struct CtcInstance {
  const Mat* log_probs = nullptr;
  std::vector<int> target;
};

struct CtcResult {
  double nll = 0.0;
  Mat grad;  // d nll / d log_probs, T x (V+1)
};

inline int64_t ctc_repeats(const std::vector<int>& target) {
  int64_t r = 0;
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++r;
  return r;
}

inline bool ctc_admissible(int64_t frames, const std::vector<int>& target) {
  return static_cast<int64_t>(target.size()) + ctc_repeats(target) <= frames;
}

namespace detail {

inline void validate_ctc_instance(const CtcInstance& inst) {
  const Mat& lp = *inst.log_probs;
  if (lp.rows < 1 || lp.cols < 2) throw Error("ctc: log_probs must be T x (V+1) with V >= 1");
  for (int64_t t = 0; t < lp.rows; ++t) {
    double z = logsumexp_row(lp.row(t), lp.cols);
    if (std::abs(z) > 1e-6)
      throw Error(strprintf("ctc: row %lld not log-normalized (logsumexp=%.3g)", (long long)t, z));
  }
  for (int v : inst.target)
    if (v <= kBlank || v >= lp.cols)
      throw Error(strprintf("ctc: target label %d out of range", v));
  if (!ctc_admissible(lp.rows, inst.target))
    throw Error(strprintf(
        "ctc: target of length %zu (+%lld repeats) inadmissible for %lld frames",
        inst.target.size(), (long long)ctc_repeats(inst.target), (long long)lp.rows));
}

}  // namespace detail

inline CtcResult ctc_nll(const CtcInstance& inst) {
  detail::validate_ctc_instance(inst);
  const Mat& lp = *inst.log_probs;
  const int64_t T = lp.rows;
  const int64_t U = static_cast<int64_t>(inst.target.size());
  const int64_t S = 2 * U + 1;
  const double ninf = -std::numeric_limits<double>::infinity();

  auto sym = [&](int64_t s) -> int { return (s % 2 == 0) ? kBlank : inst.target[static_cast<size_t>(s / 2)]; };

  Mat alpha(T, S, ninf);
  Mat beta(T, S, ninf);

  alpha(0, 0) = lp(0, kBlank);
  if (S > 1) alpha(0, 1) = lp(0, sym(1));
  for (int64_t t = 1; t < T; ++t) {
    for (int64_t s = 0; s < S; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = logsumexp2(a, alpha(t - 1, s - 1));
      if (s >= 2 && sym(s) != kBlank && sym(s) != sym(s - 2)) a = logsumexp2(a, alpha(t - 1, s - 2));
      alpha(t, s) = a + lp(t, sym(s));
    }
  }

  beta(T - 1, S - 1) = lp(T - 1, sym(S - 1));
  if (S > 1) beta(T - 1, S - 2) = lp(T - 1, sym(S - 2));
  for (int64_t t = T - 2; t >= 0; --t) {
    for (int64_t s = S - 1; s >= 0; --s) {
      double b = beta(t + 1, s);
      if (s + 1 < S) b = logsumexp2(b, beta(t + 1, s + 1));
      if (s + 2 < S && sym(s + 2) != kBlank && sym(s + 2) != sym(s)) b = logsumexp2(b, beta(t + 1, s + 2));
      beta(t, s) = b + lp(t, sym(s));
    }
  }

  double log_p = logsumexp2(alpha(T - 1, S - 1), S > 1 ? alpha(T - 1, S - 2) : ninf);

  CtcResult res;
  res.nll = -log_p;
  res.grad = Mat(T, lp.cols);
  if (log_p == ninf) throw Error("ctc: target has zero probability");
  // State posterior gamma(t,s) = alpha*beta / (p(t, sym(s)) * P); the frame
  // emission appears in both alpha and beta, so it is divided out once.
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t s = 0; s < S; ++s) {
      double g = alpha(t, s) + beta(t, s) - lp(t, sym(s)) - log_p;
      if (g == ninf) continue;
      res.grad(t, sym(s)) -= std::exp(g);
    }
  }
  return res;
}

// Exhaustive enumeration of all (V+1)^T alignment strings; the independent
// route the forward-backward implementation is checked against.
inline double brute_force_ctc(const CtcInstance& inst) {
  detail::validate_ctc_instance(inst);
  const Mat& lp = *inst.log_probs;
  const int64_t T = lp.rows;
  const int64_t V1 = lp.cols;
  double paths = std::pow(static_cast<double>(V1), static_cast<double>(T));
  if (paths > 1e7) throw Error("brute_force_ctc: instance too large to enumerate");

  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<int> align(static_cast<size_t>(T), 0);
  double log_total = ninf;
  while (true) {
    // collapse: merge adjacent repeats, then drop blanks
    std::vector<int> lab;
    int prev = -1;
    for (int a : align) {
      if (a != prev && a != kBlank) lab.push_back(a);
      prev = a;
    }
    if (lab == inst.target) {
      double lp_path = 0.0;
      for (int64_t t = 0; t < T; ++t) lp_path += lp(t, align[static_cast<size_t>(t)]);
      log_total = logsumexp2(log_total, lp_path);
    }
    // odometer increment
    int64_t pos = T - 1;
    while (pos >= 0) {
      if (++align[static_cast<size_t>(pos)] < V1) break;
      align[static_cast<size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  return -log_total;
}

// Merge adjacent repeats, then delete blanks.
inline std::vector<int> collapse(const std::vector<int>& alignment) {
  std::vector<int> out;
  int prev = -1;
  for (int a : alignment) {
    if (a != prev && a != kBlank) out.push_back(a);
    prev = a;
  }
  return out;
}

// Per-frame argmax (ties to the lowest symbol index) followed by collapse.
inline std::vector<int> greedy_decode(const Mat& logits) {
  std::vector<int> align(static_cast<size_t>(logits.rows));
  for (int64_t t = 0; t < logits.rows; ++t) {
    const double* row = logits.row(t);
    int best = 0;
    for (int64_t v = 1; v < logits.cols; ++v)
      if (row[v] > row[best]) best = static_cast<int>(v);
    align[static_cast<size_t>(t)] = best;
  }
  return collapse(align);
}

}  // namespace ctcpl

#endif  // CTCPL_CTC_HPP_
