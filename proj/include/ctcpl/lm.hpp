// ctcpl/lm.hpp

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

// Backoff word-level n-gram language model with interpolated Witten-Bell
// smoothing. Stored probabilities are the interpolated values; the backoff
// weight of a context h is T(h)/(c(h)+T(h)), which keeps every conditional
// distribution normalized over the predictable vocabulary
// (words + <unk> + </s>). Probabilities are kept in log10 to match the file
// format bit-for-bit across save/load.

#ifndef CTCPL_LM_HPP_
#define CTCPL_LM_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ctcpl/common.hpp"
#include "ctcpl/io.hpp"

namespace ctcpl {

class NGramLM {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  // Sentinel log10 prob marking context-only entries in the file format
  // (contexts beginning with <s> never carry a probability of their own).
  static constexpr double kNoProb = -99.0;

  int64_t order() const { return order_; }

  // words -> per-word natural-log conditionals, <s>-padded on the left;
  // optionally ends with the </s> term.
  double logprob(const std::vector<std::string>& words, bool include_eos = false) const {
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(id_or_unk(w));
    double lp10 = 0.0;
    for (size_t i = 0; i < ids.size(); ++i) lp10 += cond_log10(ids, i, ids[i]);
    if (include_eos) lp10 += cond_log10(ids, ids.size(), kEos);
    return lp10 * M_LN10;
  }

  // Natural-log conditional of `word` given the full preceding word sequence.
  double cond_logprob(const std::vector<std::string>& context, const std::string& word) const {
    std::vector<int> ids;
    for (const auto& w : context) ids.push_back(id_or_unk(w));
    int wid = word == "</s>" ? kEos : id_or_unk(word);
    return cond_log10(ids, ids.size(), wid) * M_LN10;
  }

  // The words a conditional distribution ranges over (test hook).
  std::vector<std::string> predictable_words() const {
    std::vector<std::string> out = {"<unk>", "</s>"};
    for (size_t i = 3; i < vocab_.size(); ++i) out.push_back(vocab_[i]);
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(IoCode::kOpenFailed, "NGramLM::save: cannot open " + path);
    os << "NGLM " << order_ << "\n";
    // One line per n-gram: words..., log10 prob, log10 backoff weight
    // (0 when the entry is not a stored context).
    std::vector<std::pair<std::vector<std::string>, std::pair<double, double>>> lines;
    for (const auto& [key, lp] : probs_) {
      auto bowit = bows_.find(key);
      lines.push_back({words_of(key), {lp, bowit != bows_.end() ? bowit->second : 0.0}});
    }
    for (const auto& [ctx, bow] : bows_) {
      if (probs_.count(ctx)) continue;
      lines.push_back({words_of(ctx), {kNoProb, bow}});
    }
    std::sort(lines.begin(), lines.end());
    for (const auto& [words, pb] : lines) {
      for (const auto& w : words) os << w << '\t';
      os << strprintf("%.17g\t%.17g\n", pb.first, pb.second);
    }
  }

  static NGramLM load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoCode::kOpenFailed, "NGramLM::load: cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw IoError(IoCode::kTruncated, "NGramLM::load: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream hs(line);
    std::string magic;
    int64_t order = 0;
    hs >> magic >> order;
    if (magic != "NGLM" || order < 1)
      throw IoError(IoCode::kBadMagic, "NGramLM::load " + path + ": bad header");
    NGramLM lm;
    lm.order_ = order;
    int64_t lineno = 1;
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::vector<std::string> f;
      size_t start = 0;
      for (size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == '\t') {
          f.push_back(line.substr(start, i - start));
          start = i + 1;
        }
      }
      if (f.size() < 3)
        throw IoError(IoCode::kBadField, strprintf("NGramLM::load %s:%lld: expected >= 3 fields",
                                                   path.c_str(), (long long)lineno));
      double lp = std::stod(f[f.size() - 2]);
      double bow = std::stod(f[f.size() - 1]);
      std::vector<int> key;
      for (size_t i = 0; i + 2 < f.size(); ++i) key.push_back(lm.intern(f[i]));
      if (key.empty() || static_cast<int64_t>(key.size()) > order)
        throw IoError(IoCode::kBadField, strprintf("NGramLM::load %s:%lld: bad n-gram length",
                                                   path.c_str(), (long long)lineno));
      if (lp > kNoProb + 0.5) lm.probs_[key] = lp;
      if (bow != 0.0) lm.bows_[key] = bow;
    }
    return lm;
  }

  friend NGramLM train_ngram(const std::vector<std::vector<std::string>>& sentences, int64_t order);

 private:
  int id_or_unk(const std::string& w) const {
    auto it = word_id_.find(w);
    return it == word_id_.end() ? kUnk : it->second;
  }

  int intern(const std::string& w) {
    auto it = word_id_.find(w);
    if (it != word_id_.end()) return it->second;
    ensure_reserved();
    if (w == "<unk>") return kUnk;
    if (w == "<s>") return kBos;
    if (w == "</s>") return kEos;
    int id = static_cast<int>(vocab_.size());
    vocab_.push_back(w);
    word_id_[w] = id;
    return id;
  }

  void ensure_reserved() {
    if (!vocab_.empty()) return;
    vocab_ = {"<unk>", "<s>", "</s>"};
    word_id_ = {{"<unk>", kUnk}, {"<s>", kBos}, {"</s>", kEos}};
  }

  std::vector<std::string> words_of(const std::vector<int>& key) const {
    std::vector<std::string> out;
    for (int id : key) out.push_back(vocab_[static_cast<size_t>(id)]);
    return out;
  }

  // log10 p(w | ids[pos-order+1 .. pos-1]) with <s> padding on the left.
  double cond_log10(const std::vector<int>& ids, size_t pos, int w) const {
    std::vector<int> ctx;
    for (int64_t k = static_cast<int64_t>(pos) - (order_ - 1); k < static_cast<int64_t>(pos); ++k)
      ctx.push_back(k < 0 ? kBos : ids[static_cast<size_t>(k)]);
    return backoff_log10(ctx, w);
  }

  double backoff_log10(const std::vector<int>& ctx, int w) const {
    std::vector<int> key = ctx;
    key.push_back(w);
    auto it = probs_.find(key);
    if (it != probs_.end()) return it->second;
    if (ctx.empty()) {
      // Every predictable word has a stored unigram; anything else is <unk>.
      auto uit = probs_.find(std::vector<int>{kUnk});
      if (uit == probs_.end()) throw Error("NGramLM: missing <unk> unigram");
      return uit->second;
    }
    double bow = 0.0;
    auto bit = bows_.find(ctx);
    if (bit != bows_.end()) bow = bit->second;
    return bow + backoff_log10(std::vector<int>(ctx.begin() + 1, ctx.end()), w);
  }

  int64_t order_ = 0;
  std::vector<std::string> vocab_;          // id -> word
  std::map<std::string, int> word_id_;      // word -> id
  std::map<std::vector<int>, double> probs_;  // ngram -> log10 p
  std::map<std::vector<int>, double> bows_;   // context -> log10 backoff
};

inline NGramLM train_ngram(const std::vector<std::vector<std::string>>& sentences, int64_t order) {
  if (order < 1) throw Error("train_ngram: order must be >= 1");
  if (sentences.empty()) throw Error("train_ngram: empty corpus");

  NGramLM lm;
  lm.order_ = order;
  lm.ensure_reserved();

  struct ContextCounts {
    int64_t total = 0;
    std::map<int, int64_t> words;
  };
  // counts[m-1]: contexts of length m-1 with following-word counts
  std::vector<std::map<std::vector<int>, ContextCounts>> counts(static_cast<size_t>(order));

  for (const auto& sent : sentences) {
    std::vector<int> seq(static_cast<size_t>(order - 1), NGramLM::kBos);
    for (const auto& w : sent) {
      if (w == "<unk>" || w == "<s>" || w == "</s>")
        throw Error("train_ngram: reserved token '" + w + "' in training text");
      if (w.empty()) throw Error("train_ngram: empty token");
      seq.push_back(lm.intern(w));
    }
    seq.push_back(NGramLM::kEos);
    for (size_t pos = static_cast<size_t>(order - 1); pos < seq.size(); ++pos) {
      for (int64_t m = 1; m <= order; ++m) {
        std::vector<int> ctx(seq.begin() + static_cast<int64_t>(pos) - (m - 1),
                             seq.begin() + static_cast<int64_t>(pos));
        ContextCounts& cc = counts[static_cast<size_t>(m - 1)][ctx];
        cc.total += 1;
        cc.words[seq[pos]] += 1;
      }
    }
  }

  // Predictable vocabulary: every interned word plus <unk> and </s>.
  std::vector<int> vpred = {NGramLM::kUnk, NGramLM::kEos};
  for (size_t id = 3; id < lm.vocab_.size(); ++id) vpred.push_back(static_cast<int>(id));
  double uniform = 1.0 / static_cast<double>(vpred.size());

  // Orders ascending: each level interpolates with the finalized level below.
  for (int64_t m = 1; m <= order; ++m) {
    for (const auto& [ctx, cc] : counts[static_cast<size_t>(m - 1)]) {
      double types = static_cast<double>(cc.words.size());
      double denom = static_cast<double>(cc.total) + types;
      double bow = types / denom;
      // The empty context never backs anything off; keep it out of the table.
      if (m < order && !ctx.empty()) lm.bows_[ctx] = std::log10(bow);
      if (m == 1) {
        // Base level: interpolate every predictable word with the uniform
        // distribution so unseen words (<unk> included) keep mass.
        for (int w : vpred) {
          auto wit = cc.words.find(w);
          double c = wit == cc.words.end() ? 0.0 : static_cast<double>(wit->second);
          double p = (c + types * uniform) / denom;
          lm.probs_[std::vector<int>{w}] = std::log10(p);
        }
      } else {
        std::vector<int> lower_ctx(ctx.begin() + 1, ctx.end());
        for (const auto& [w, c] : cc.words) {
          double p_lower = std::pow(10.0, lm.backoff_log10(lower_ctx, w));
          double p = (static_cast<double>(c) + types * p_lower) / denom;
          std::vector<int> key = ctx;
          key.push_back(w);
          lm.probs_[key] = std::log10(p);
        }
      }
    }
  }
  return lm;
}

inline std::vector<std::vector<std::string>> tokenize_lines(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> words;
    size_t start = 0;
    for (size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ' ') {
        if (i > start) words.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (!words.empty()) out.push_back(std::move(words));
  }
  return out;
}

}  // namespace ctcpl

#endif  // CTCPL_LM_HPP_
