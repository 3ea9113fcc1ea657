// ctcpl/eval.hpp

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

// Edit-distance metrics (CER/WER with substitution/insertion/deletion
// counts), per-language pooling and macro averaging, checkpoint selection,
// and duration-bucketed WER breakdowns. No text normalization anywhere.

#ifndef CTCPL_EVAL_HPP_
#define CTCPL_EVAL_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctcpl/common.hpp"
#include "ctcpl/symbols.hpp"

namespace ctcpl {

struct EditCounts {
  int64_t distance = 0;
  int64_t substitutions = 0;
  int64_t insertions = 0;  // hypothesis symbols with no reference counterpart
  int64_t deletions = 0;   // reference symbols missing from the hypothesis
};

// Levenshtein with unit costs. Counts come from one optimal alignment with a
// fixed backtrace preference on ties: substitution, then deletion, then
// insertion.
template <typename Seq>
EditCounts edit_distance(const Seq& ref, const Seq& hyp) {
  const int64_t m = static_cast<int64_t>(ref.size());
  const int64_t n = static_cast<int64_t>(hyp.size());
  std::vector<int64_t> dp(static_cast<size_t>((m + 1) * (n + 1)));
  auto at = [&](int64_t i, int64_t j) -> int64_t& { return dp[static_cast<size_t>(i * (n + 1) + j)]; };
  for (int64_t i = 0; i <= m; ++i) at(i, 0) = i;
  for (int64_t j = 0; j <= n; ++j) at(0, j) = j;
  for (int64_t i = 1; i <= m; ++i) {
    for (int64_t j = 1; j <= n; ++j) {
      int64_t sub = at(i - 1, j - 1) + (ref[static_cast<size_t>(i - 1)] == hyp[static_cast<size_t>(j - 1)] ? 0 : 1);
      int64_t del = at(i - 1, j) + 1;
      int64_t ins = at(i, j - 1) + 1;
      at(i, j) = std::min({sub, del, ins});
    }
  }
  EditCounts c;
  c.distance = at(m, n);
  int64_t i = m, j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      bool match = ref[static_cast<size_t>(i - 1)] == hyp[static_cast<size_t>(j - 1)];
      if (at(i, j) == at(i - 1, j - 1) + (match ? 0 : 1)) {
        if (!match) ++c.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++c.deletions;
      --i;
      continue;
    }
    ++c.insertions;
    --j;
  }
  return c;
}

inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  size_t start = 0;
  for (size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ' ') {
      if (i > start) out.push_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

struct RateResult {
  EditCounts counts;
  int64_t ref_len = 0;
  double value = 0.0;
  bool empty_ref = false;
};

// Empty references score every hypothesis symbol as an error against a
// denominator of 1 and raise a flag instead of dividing by zero.
template <typename Seq>
RateResult error_rate(const Seq& ref, const Seq& hyp) {
  RateResult r;
  r.counts = edit_distance(ref, hyp);
  r.ref_len = static_cast<int64_t>(ref.size());
  if (r.ref_len == 0) {
    r.empty_ref = true;
    r.value = static_cast<double>(hyp.size());
    r.ref_len = 0;
  } else {
    r.value = static_cast<double>(r.counts.distance) / static_cast<double>(r.ref_len);
  }
  return r;
}

inline RateResult cer(const std::string& ref_text, const std::string& hyp_text) {
  return error_rate(utf8_decode(ref_text), utf8_decode(hyp_text));
}

inline RateResult wer(const std::string& ref_text, const std::string& hyp_text) {
  return error_rate(split_words(ref_text), split_words(hyp_text));
}

// ---------------------------------------------------------------------------
// Aggregated reports

struct EvalInput {
  std::string id;
  std::string language_id;
  int64_t duration_frames = 0;
  std::string ref;
  std::string hyp;
};

struct LanguageCell {
  EditCounts chars;      // character-level counts
  int64_t ref_chars = 0;
  EditCounts words;
  int64_t ref_words = 0;
  int64_t n_utterances = 0;
  int64_t empty_refs = 0;

  double cer() const { return ref_chars > 0 ? static_cast<double>(chars.distance) / static_cast<double>(ref_chars) : 0.0; }
  double wer() const { return ref_words > 0 ? static_cast<double>(words.distance) / static_cast<double>(ref_words) : 0.0; }
};

struct BucketCell {
  int64_t lo = 0;  // exclusive; <=0 means open
  int64_t hi = 0;  // inclusive; <0 means open
  EditCounts words;
  int64_t ref_words = 0;
  int64_t n_utterances = 0;
  double wer() const { return ref_words > 0 ? static_cast<double>(words.distance) / static_cast<double>(ref_words) : 0.0; }
};

struct EvalReport {
  std::map<std::string, LanguageCell> languages;
  std::vector<BucketCell> buckets;  // empty when no edges were given
  int64_t total_utterances = 0;
};

// Half-open on the left: duration d lands in the bucket with lo < d <= hi,
// so a duration exactly at an edge goes to the lower bucket.
inline int64_t bucket_index(int64_t duration, const std::vector<int64_t>& edges) {
  int64_t b = 0;
  while (b < static_cast<int64_t>(edges.size()) && duration > edges[static_cast<size_t>(b)]) ++b;
  return b;
}

inline EvalReport build_report(const std::vector<EvalInput>& items,
                               const std::vector<int64_t>& bucket_edges = {}) {
  for (size_t i = 1; i < bucket_edges.size(); ++i)
    if (bucket_edges[i] <= bucket_edges[i - 1]) throw Error("build_report: edges must be strictly increasing");
  EvalReport rep;
  if (!bucket_edges.empty()) {
    rep.buckets.resize(bucket_edges.size() + 1);
    for (size_t b = 0; b < rep.buckets.size(); ++b) {
      rep.buckets[b].lo = b == 0 ? 0 : bucket_edges[b - 1];
      rep.buckets[b].hi = b < bucket_edges.size() ? bucket_edges[b] : -1;
    }
  }
  for (const auto& it : items) {
    LanguageCell& cell = rep.languages[it.language_id];
    RateResult c = cer(it.ref, it.hyp);
    RateResult w = wer(it.ref, it.hyp);
    cell.chars.distance += c.counts.distance;
    cell.chars.substitutions += c.counts.substitutions;
    cell.chars.insertions += c.counts.insertions;
    cell.chars.deletions += c.counts.deletions;
    cell.ref_chars += c.ref_len;
    cell.words.distance += w.counts.distance;
    cell.words.substitutions += w.counts.substitutions;
    cell.words.insertions += w.counts.insertions;
    cell.words.deletions += w.counts.deletions;
    cell.ref_words += w.ref_len;
    cell.n_utterances += 1;
    if (c.empty_ref) cell.empty_refs += 1;
    rep.total_utterances += 1;
    if (!rep.buckets.empty()) {
      BucketCell& b = rep.buckets[static_cast<size_t>(bucket_index(it.duration_frames, bucket_edges))];
      b.words.distance += w.counts.distance;
      b.ref_words += w.ref_len;
      b.n_utterances += 1;
    }
  }
  return rep;
}

// Unweighted mean of per-language CER over a language subset.
inline double macro_average_cer(const EvalReport& rep, const std::vector<std::string>& subset) {
  if (subset.empty()) throw Error("macro_average: empty language subset");
  double sum = 0.0;
  for (const auto& lang : subset) {
    auto it = rep.languages.find(lang);
    if (it == rep.languages.end()) throw Error("macro_average: language missing from report: " + lang);
    sum += it->second.cer();
  }
  return sum / static_cast<double>(subset.size());
}

// argmin of the macro-average CER over the history; ties take the earliest step.
inline int64_t select_checkpoint(
    const std::vector<std::pair<int64_t, std::map<std::string, double>>>& history) {
  if (history.empty()) throw Error("select_checkpoint: empty history");
  int64_t best_step = history.front().first;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [step, cells] : history) {
    if (cells.empty()) throw Error("select_checkpoint: entry without languages");
    double sum = 0.0;
    for (const auto& [lang, cer_value] : cells) sum += cer_value;
    double avg = sum / static_cast<double>(cells.size());
    if (avg < best) {
      best = avg;
      best_step = step;
    }
  }
  return best_step;
}

inline nlohmann::json report_to_json(const EvalReport& rep) {
  nlohmann::json langs = nlohmann::json::object();
  double macro_cer = 0.0, macro_wer = 0.0;
  for (const auto& [id, cell] : rep.languages) {
    langs[id] = {{"cer", cell.cer()},
                 {"wer", cell.wer()},
                 {"S", cell.chars.substitutions},
                 {"I", cell.chars.insertions},
                 {"D", cell.chars.deletions},
                 {"ref_chars", cell.ref_chars},
                 {"n", cell.n_utterances},
                 {"empty_refs", cell.empty_refs}};
    macro_cer += cell.cer();
    macro_wer += cell.wer();
  }
  size_t nl = rep.languages.size();
  nlohmann::json buckets = nlohmann::json::array();
  for (const auto& b : rep.buckets) {
    buckets.push_back({{"lo", b.lo},
                       {"hi", b.hi},
                       {"wer", b.wer()},
                       {"ref_words", b.ref_words},
                       {"n", b.n_utterances}});
  }
  return nlohmann::json{
      {"languages", langs},
      {"averages",
       {{"macro_cer", nl ? macro_cer / static_cast<double>(nl) : 0.0},
        {"macro_wer", nl ? macro_wer / static_cast<double>(nl) : 0.0},
        {"n_languages", nl}}},
      {"buckets", buckets},
      {"total_utterances", rep.total_utterances}};
}

inline std::string report_to_tsv(const EvalReport& rep) {
  std::string out = "language\tcer\twer\tS\tI\tD\tref_chars\tn\n";
  for (const auto& [id, cell] : rep.languages) {
    out += strprintf("%s\t%.6f\t%.6f\t%lld\t%lld\t%lld\t%lld\t%lld\n", id.c_str(), cell.cer(),
                     cell.wer(), (long long)cell.chars.substitutions,
                     (long long)cell.chars.insertions, (long long)cell.chars.deletions,
                     (long long)cell.ref_chars, (long long)cell.n_utterances);
  }
  return out;
}

}  // namespace ctcpl

#endif  // CTCPL_EVAL_HPP_
