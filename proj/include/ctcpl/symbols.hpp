// ctcpl/symbols.hpp

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

#ifndef CTCPL_SYMBOLS_HPP_
#define CTCPL_SYMBOLS_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ctcpl/common.hpp"
#include "ctcpl/io.hpp"

namespace ctcpl {

// Minimal UTF-8 codepoint splitter; transcripts are treated as sequences of
// codepoints everywhere (CER, symbol tables, alphabets).
inline std::vector<uint32_t> utf8_decode(const std::string& s) {
  std::vector<uint32_t> out;
  size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    uint32_t cp = 0;
    int extra = 0;
    if (c < 0x80) {
      cp = c;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1f;
      extra = 1;
    } else if ((c >> 4) == 0xe) {
      cp = c & 0x0f;
      extra = 2;
    } else if ((c >> 3) == 0x1e) {
      cp = c & 0x07;
      extra = 3;
    } else {
      throw Error(strprintf("utf8_decode: bad lead byte 0x%02x at %zu", c, i));
    }
    if (i + extra >= s.size()) throw Error("utf8_decode: truncated sequence");
    for (int k = 1; k <= extra; ++k) {
      unsigned char cc = static_cast<unsigned char>(s[i + k]);
      if ((cc >> 6) != 0x2) throw Error("utf8_decode: bad continuation byte");
      cp = (cp << 6) | (cc & 0x3f);
    }
    out.push_back(cp);
    i += 1 + extra;
  }
  return out;
}

inline std::string utf8_encode(uint32_t cp) {
  std::string s;
  if (cp < 0x80) {
    s += static_cast<char>(cp);
  } else if (cp < 0x800) {
    s += static_cast<char>(0xc0 | (cp >> 6));
    s += static_cast<char>(0x80 | (cp & 0x3f));
  } else if (cp < 0x10000) {
    s += static_cast<char>(0xe0 | (cp >> 12));
    s += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
    s += static_cast<char>(0x80 | (cp & 0x3f));
  } else {
    s += static_cast<char>(0xf0 | (cp >> 18));
    s += static_cast<char>(0x80 | ((cp >> 12) & 0x3f));
    s += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
    s += static_cast<char>(0x80 | (cp & 0x3f));
  }
  return s;
}

inline std::string utf8_encode(const std::vector<uint32_t>& cps) {
  std::string s;
  for (uint32_t cp : cps) s += utf8_encode(cp);
  return s;
}

constexpr uint32_t kSpaceCp = 0x20;

// Shared character inventory. Index 0 is the CTC blank, index 1 the space,
// then one index per character sorted by codepoint.
class SymbolTable {
 public:
  static constexpr int kBlankId = 0;
  static constexpr int kSpaceId = 1;

  SymbolTable() = default;

  // chars: every non-space character in the inventory (deduped internally).
  explicit SymbolTable(const std::set<uint32_t>& chars) {
    cps_.push_back(0);  // blank placeholder, never matched by text
    cps_.push_back(kSpaceCp);
    for (uint32_t cp : chars) {
      if (cp == kSpaceCp) continue;
      cps_.push_back(cp);
    }
    std::sort(cps_.begin() + 2, cps_.end());
    for (size_t i = 2; i + 1 < cps_.size(); ++i)
      if (cps_[i] == cps_[i + 1]) throw Error("SymbolTable: duplicate character");
    for (size_t i = 1; i < cps_.size(); ++i) index_[cps_[i]] = static_cast<int>(i);
  }

  int size() const { return static_cast<int>(cps_.size()); }
  int n_labels() const { return size() - 1; }  // non-blank symbols

  bool contains(uint32_t cp) const { return index_.count(cp) > 0; }

  int id_of(uint32_t cp) const {
    auto it = index_.find(cp);
    if (it == index_.end())
      throw Error("SymbolTable: character U+" + strprintf("%04X", cp) + " not in table");
    return it->second;
  }

  uint32_t cp_of(int id) const {
    if (id <= 0 || id >= size()) throw Error(strprintf("SymbolTable: bad id %d", id));
    return cps_[static_cast<size_t>(id)];
  }

  std::string name_of(int id) const {
    if (id == kBlankId) return "<blank>";
    return utf8_encode(cp_of(id));
  }

  std::vector<int> encode(const std::string& text) const {
    std::vector<int> ids;
    for (uint32_t cp : utf8_decode(text)) ids.push_back(id_of(cp));
    return ids;
  }

  std::string decode(const std::vector<int>& ids) const {
    std::string s;
    for (int id : ids) {
      if (id == kBlankId) throw Error("SymbolTable::decode: blank in label sequence");
      s += utf8_encode(cp_of(id));
    }
    return s;
  }

  // Serialized as the list of symbol names (checkpoint headers).
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (int i = 0; i < size(); ++i) out.push_back(name_of(i));
    return out;
  }

  static SymbolTable from_names(const std::vector<std::string>& names) {
    if (names.empty() || names[0] != "<blank>")
      throw Error("SymbolTable::from_names: first symbol must be <blank>");
    std::set<uint32_t> chars;
    for (size_t i = 1; i < names.size(); ++i) {
      auto cps = utf8_decode(names[i]);
      if (cps.size() != 1) throw Error("SymbolTable::from_names: multi-codepoint symbol");
      chars.insert(cps[0]);
    }
    if (!chars.count(kSpaceCp)) throw Error("SymbolTable::from_names: missing space");
    return SymbolTable(chars);
  }

  bool operator==(const SymbolTable& o) const { return cps_ == o.cps_; }

 private:
  std::vector<uint32_t> cps_;
  std::map<uint32_t, int> index_;
};

// Builds the inventory from every transcript seen in the given manifests.
// Unlabeled rows contribute nothing; no transcripts at all yields {blank, space}.
inline SymbolTable build_symbol_table(const std::vector<Manifest>& manifests) {
  std::set<uint32_t> chars;
  for (const auto& m : manifests)
    for (const auto& e : m.entries)
      for (uint32_t cp : utf8_decode(e.transcript)) chars.insert(cp);
  return SymbolTable(chars);
}

}  // namespace ctcpl

#endif  // CTCPL_SYMBOLS_HPP_
