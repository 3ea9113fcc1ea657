// ctcpl/beam.hpp

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

// CTC prefix beam search with shallow fusion: maximizes
// log p_acoustic(y|x) + alpha * log p_lm(y) + beta * |y|_words.
// Each prefix keeps separate blank/non-blank path probabilities; duplicate
// prefixes merge by logsumexp. The LM and the word bonus fire when a space
// completes a word, and once more at sequence end for a trailing word.

#ifndef CTCPL_BEAM_HPP_
#define CTCPL_BEAM_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ctcpl/common.hpp"
#include "ctcpl/eval.hpp"
#include "ctcpl/lm.hpp"
#include "ctcpl/mat.hpp"
#include "ctcpl/symbols.hpp"

namespace ctcpl {

struct BeamConfig {
  int64_t beam_size = 50;
  double alpha = 0.0;
  double beta = 0.0;
  bool lm_at_space = true;  // score words as spaces complete them (vs once at the end)
  bool score_eos = false;   // include the </s> term in LM scores
};

struct BeamResult {
  std::vector<int> labels;
  std::string text;
  double acoustic = 0.0;  // log p_theta(y|x)
  double lm_score = 0.0;  // natural-log LM score of the scored words
  int64_t n_words = 0;
  double total = 0.0;     // acoustic + alpha*lm_score + beta*n_words
};

namespace detail {

struct BeamHyp {
  double p_blank = -std::numeric_limits<double>::infinity();
  double p_nonblank = -std::numeric_limits<double>::infinity();
  double lm_score = 0.0;  // completed words only
  int64_t n_words = 0;
  bool lm_init = false;
};

inline std::vector<std::string> prefix_words(const std::vector<int>& prefix,
                                             const SymbolTable& symtab, bool include_trailing) {
  std::vector<std::string> words;
  std::string cur;
  for (int id : prefix) {
    if (id == SymbolTable::kSpaceId) {
      if (!cur.empty()) words.push_back(cur);
      cur.clear();
    } else {
      cur += utf8_encode(symtab.cp_of(id));
    }
  }
  if (include_trailing && !cur.empty()) words.push_back(cur);
  return words;
}

}  // namespace detail

inline BeamResult beam_search(const Mat& logits, const SymbolTable& symtab, const NGramLM* lm,
                              const BeamConfig& cfg) {
  if (cfg.beam_size < 1) throw Error("beam_search: beam_size must be >= 1");
  if (logits.cols != symtab.size())
    throw Error(strprintf("beam_search: logits width %lld != symbol table size %d",
                          (long long)logits.cols, symtab.size()));
  const double ninf = -std::numeric_limits<double>::infinity();

  // Normalize rows to log probabilities (no-op when already normalized).
  Mat lp(logits.rows, logits.cols);
  for (int64_t t = 0; t < logits.rows; ++t) {
    double z = logsumexp_row(logits.row(t), logits.cols);
    for (int64_t c = 0; c < logits.cols; ++c) lp(t, c) = logits(t, c) - z;
  }

  using Prefix = std::vector<int>;
  std::map<Prefix, detail::BeamHyp> beam;
  {
    detail::BeamHyp root;
    root.p_blank = 0.0;
    root.lm_init = true;
    beam.emplace(Prefix{}, root);
  }

  // LM increment when `prefix` (which ends in a space) just completed a word.
  auto word_completion_lm = [&](const Prefix& prefix_before_space) -> double {
    if (!lm) return 0.0;
    auto words = detail::prefix_words(prefix_before_space, symtab, true);
    if (words.empty()) return 0.0;
    std::string last = words.back();
    words.pop_back();
    return lm->cond_logprob(words, last);
  };

  for (int64_t t = 0; t < lp.rows; ++t) {
    std::map<Prefix, detail::BeamHyp> next;
    auto ensure = [&](const Prefix& pfx, const detail::BeamHyp& parent, int added) -> detail::BeamHyp& {
      auto [it, fresh] = next.try_emplace(pfx);
      detail::BeamHyp& h = it->second;
      if (!h.lm_init) {
        h.lm_init = true;
        if (added == SymbolTable::kSpaceId && cfg.lm_at_space) {
          // The space completes the parent's trailing word, if any.
          Prefix before(pfx.begin(), pfx.end() - 1);
          bool has_word = !before.empty() && before.back() != SymbolTable::kSpaceId;
          h.lm_score = parent.lm_score + (has_word ? word_completion_lm(before) : 0.0);
          h.n_words = parent.n_words + (has_word ? 1 : 0);
        } else {
          h.lm_score = parent.lm_score;
          h.n_words = parent.n_words;
        }
      }
      return h;
    };

    for (const auto& [pfx, hyp] : beam) {
      double p_tot = logsumexp2(hyp.p_blank, hyp.p_nonblank);
      // blank keeps the prefix
      {
        detail::BeamHyp& h = ensure(pfx, hyp, kBlank);
        h.p_blank = logsumexp2(h.p_blank, p_tot + lp(t, kBlank));
      }
      for (int c = 1; c < symtab.size(); ++c) {
        double lpc = lp(t, c);
        if (lpc == ninf) continue;
        if (!pfx.empty() && pfx.back() == c) {
          // repeated symbol: merges into the same prefix unless a blank
          // separated the two emissions
          detail::BeamHyp& same = ensure(pfx, hyp, -1);
          same.p_nonblank = logsumexp2(same.p_nonblank, hyp.p_nonblank + lpc);
          Prefix ext = pfx;
          ext.push_back(c);
          detail::BeamHyp& h = ensure(ext, hyp, c);
          h.p_nonblank = logsumexp2(h.p_nonblank, hyp.p_blank + lpc);
        } else {
          Prefix ext = pfx;
          ext.push_back(c);
          detail::BeamHyp& h = ensure(ext, hyp, c);
          h.p_nonblank = logsumexp2(h.p_nonblank, p_tot + lpc);
        }
      }
    }

    if (static_cast<int64_t>(next.size()) > cfg.beam_size) {
      std::vector<std::pair<const Prefix*, const detail::BeamHyp*>> ranked;
      ranked.reserve(next.size());
      for (const auto& [pfx, hyp] : next) ranked.push_back({&pfx, &hyp});
      auto score = [&](const detail::BeamHyp& h) {
        return logsumexp2(h.p_blank, h.p_nonblank) + cfg.alpha * h.lm_score +
               cfg.beta * static_cast<double>(h.n_words);
      };
      std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
        double sa = score(*a.second), sb = score(*b.second);
        if (sa != sb) return sa > sb;
        return *a.first < *b.first;
      });
      std::map<Prefix, detail::BeamHyp> pruned;
      for (int64_t i = 0; i < cfg.beam_size; ++i) pruned.emplace(*ranked[static_cast<size_t>(i)].first, *ranked[static_cast<size_t>(i)].second);
      beam = std::move(pruned);
    } else {
      beam = std::move(next);
    }
  }

  // Final scoring: close the trailing word, optionally the end symbol.
  BeamResult best;
  bool have_best = false;
  const Prefix* best_pfx = nullptr;
  for (const auto& [pfx, hyp] : beam) {
    double acoustic = logsumexp2(hyp.p_blank, hyp.p_nonblank);
    double lm_score = hyp.lm_score;
    int64_t n_words = hyp.n_words;
    if (cfg.lm_at_space) {
      bool trailing = !pfx.empty() && pfx.back() != SymbolTable::kSpaceId;
      if (trailing) {
        if (lm) lm_score += word_completion_lm(pfx);
        n_words += 1;
      }
    } else {
      auto words = detail::prefix_words(pfx, symtab, true);
      n_words = static_cast<int64_t>(words.size());
      lm_score = lm ? lm->logprob(words, false) : 0.0;
    }
    if (cfg.score_eos && lm)
      lm_score += lm->cond_logprob(detail::prefix_words(pfx, symtab, true), "</s>");
    double total = acoustic + cfg.alpha * lm_score + cfg.beta * static_cast<double>(n_words);
    if (!have_best || total > best.total || (total == best.total && pfx < *best_pfx)) {
      have_best = true;
      best_pfx = &pfx;
      best.labels = pfx;
      best.acoustic = acoustic;
      best.lm_score = lm_score;
      best.n_words = n_words;
      best.total = total;
    }
  }
  best.text = symtab.decode(best.labels);
  return best;
}

// ---------------------------------------------------------------------------
// alpha/beta grid search on a dev set

struct GridPoint {
  double alpha = 0.0;
  double beta = 0.0;
  double wer = 0.0;
};

struct DevUtterance {
  const Mat* logits = nullptr;  // acoustic logits, T' x |symbols|
  std::string ref;
};

// Minimizes pooled-token dev WER; ties take the lexicographically smallest
// (alpha, beta).
inline std::pair<GridPoint, std::vector<GridPoint>> grid_search_alpha_beta(
    const std::vector<DevUtterance>& dev, const SymbolTable& symtab, const NGramLM* lm,
    const std::vector<std::pair<double, double>>& grid, int64_t beam_size, int jobs = 1) {
  if (grid.empty()) throw Error("grid_search_alpha_beta: empty grid");
  std::vector<GridPoint> rows;
  for (const auto& [alpha, beta] : grid) {
    BeamConfig cfg;
    cfg.beam_size = beam_size;
    cfg.alpha = alpha;
    cfg.beta = beta;
    std::vector<int64_t> dist(dev.size(), 0), reflen(dev.size(), 0);
    std::vector<std::string> errors(dev.size());
    parallel_for(static_cast<int64_t>(dev.size()), jobs, [&](int64_t i) {
      try {
        BeamResult r = beam_search(*dev[static_cast<size_t>(i)].logits, symtab, lm, cfg);
        RateResult w = wer(dev[static_cast<size_t>(i)].ref, r.text);
        dist[static_cast<size_t>(i)] = w.counts.distance;
        reflen[static_cast<size_t>(i)] = w.ref_len;
      } catch (const std::exception& e) {
        errors[static_cast<size_t>(i)] = e.what();
      }
    });
    for (const auto& e : errors)
      if (!e.empty()) throw Error("grid_search_alpha_beta: " + e);
    int64_t d = 0, n = 0;
    for (size_t i = 0; i < dev.size(); ++i) {
      d += dist[i];
      n += reflen[i];
    }
    rows.push_back({alpha, beta, n > 0 ? static_cast<double>(d) / static_cast<double>(n) : 0.0});
  }
  GridPoint best = rows.front();
  for (const auto& r : rows) {
    if (r.wer < best.wer ||
        (r.wer == best.wer && std::pair(r.alpha, r.beta) < std::pair(best.alpha, best.beta)))
      best = r;
  }
  return {best, rows};
}

}  // namespace ctcpl

#endif  // CTCPL_BEAM_HPP_
