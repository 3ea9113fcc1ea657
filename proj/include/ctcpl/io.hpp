// ctcpl/io.hpp

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

// On-disk containers:
//   FEA1 — `FEA1`, u32 LE rows, u32 LE cols, rows*cols f32 LE, row-major.
//   PCM1 — `PCM1`, u32 LE sample rate, i16 LE mono samples to EOF.
//   Manifest — UTF-8 TSV: id, feature_path, duration_frames, language_id,
//              transcript (may be empty for unlabeled rows).

#ifndef CTCPL_IO_HPP_
#define CTCPL_IO_HPP_

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ctcpl/common.hpp"
#include "ctcpl/mat.hpp"

namespace ctcpl {

struct ManifestEntry {
  std::string id;
  std::string feature_path;
  int64_t duration_frames = 0;
  std::string language_id;
  std::string transcript;  // empty == unlabeled
};

struct Manifest {
  std::vector<ManifestEntry> entries;
};

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw IoError(IoCode::kTruncated, "truncated " + what);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(os, u);
}

inline float get_f32(std::istream& is, const std::string& what) {
  uint32_t u = get_u32(is, what);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace detail

inline void write_features(const std::string& path, const Mat& m) {
  if (m.rows < 1 || m.cols < 1)
    throw IoError(IoCode::kBadDims,
                  strprintf("write_features %s: empty shape %lldx%lld", path.c_str(),
                            (long long)m.rows, (long long)m.cols));
  if (!m.all_finite())
    throw IoError(IoCode::kNonFinite, "write_features " + path + ": non-finite value");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(IoCode::kOpenFailed, "write_features: cannot open " + path);
  os.write("FEA1", 4);
  detail::put_u32(os, static_cast<uint32_t>(m.rows));
  detail::put_u32(os, static_cast<uint32_t>(m.cols));
  for (double x : m.v) detail::put_f32(os, static_cast<float>(x));
  if (!os) throw IoError(IoCode::kOpenFailed, "write_features: write failed " + path);
}

inline Mat read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(IoCode::kOpenFailed, "read_features: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "FEA1", 4) != 0)
    throw IoError(IoCode::kBadMagic, "read_features " + path + ": bad magic");
  uint32_t rows = detail::get_u32(is, "feature header " + path);
  uint32_t cols = detail::get_u32(is, "feature header " + path);
  if (rows < 1 || cols < 1)
    throw IoError(IoCode::kBadDims, strprintf("read_features %s: bad dims %ux%u",
                                              path.c_str(), rows, cols));
  Mat m(rows, cols);
  for (double& x : m.v) x = static_cast<double>(detail::get_f32(is, "feature data " + path));
  if (!m.all_finite())
    throw IoError(IoCode::kNonFinite, "read_features " + path + ": non-finite value");
  return m;
}

inline void write_pcm(const std::string& path, uint32_t sample_rate_hz,
                      const std::vector<int16_t>& samples) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(IoCode::kOpenFailed, "write_pcm: cannot open " + path);
  os.write("PCM1", 4);
  detail::put_u32(os, sample_rate_hz);
  for (int16_t s : samples) {
    unsigned char b[2] = {static_cast<unsigned char>(s & 0xff),
                          static_cast<unsigned char>((static_cast<uint16_t>(s) >> 8) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 2);
  }
}

inline std::vector<int16_t> read_pcm(const std::string& path, uint32_t* sample_rate_hz) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(IoCode::kOpenFailed, "read_pcm: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "PCM1", 4) != 0)
    throw IoError(IoCode::kBadMagic, "read_pcm " + path + ": bad magic");
  *sample_rate_hz = detail::get_u32(is, "pcm header " + path);
  std::vector<int16_t> out;
  unsigned char b[2];
  while (is.read(reinterpret_cast<char*>(b), 2)) {
    out.push_back(static_cast<int16_t>(static_cast<uint16_t>(b[0]) |
                                       (static_cast<uint16_t>(b[1]) << 8)));
  }
  return out;
}

inline void write_manifest(const std::string& path, const Manifest& m) {
  std::set<std::string> seen;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(IoCode::kOpenFailed, "write_manifest: cannot open " + path);
  for (const auto& e : m.entries) {
    if (!seen.insert(e.id).second)
      throw IoError(IoCode::kDuplicateId, "write_manifest " + path + ": duplicate id " + e.id);
    if (e.id.find('\t') != std::string::npos || e.transcript.find('\t') != std::string::npos)
      throw IoError(IoCode::kBadField, "write_manifest " + path + ": tab inside field");
    os << e.id << '\t' << e.feature_path << '\t' << e.duration_frames << '\t'
       << e.language_id << '\t' << e.transcript << '\n';
  }
}

inline Manifest read_manifest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(IoCode::kOpenFailed, "read_manifest: cannot open " + path);
  Manifest m;
  std::set<std::string> seen;
  std::string line;
  int64_t lineno = 0;
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
    if (f.size() != 5)
      throw IoError(IoCode::kBadField, strprintf("read_manifest %s:%lld: expected 5 fields, got %zu",
                                                 path.c_str(), (long long)lineno, f.size()));
    ManifestEntry e;
    e.id = f[0];
    e.feature_path = f[1];
    try {
      size_t pos = 0;
      e.duration_frames = std::stoll(f[2], &pos);
      if (pos != f[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw IoError(IoCode::kBadField, strprintf("read_manifest %s:%lld: bad duration '%s'",
                                                 path.c_str(), (long long)lineno, f[2].c_str()));
    }
    if (e.duration_frames < 1)
      throw IoError(IoCode::kBadField, strprintf("read_manifest %s:%lld: duration < 1",
                                                 path.c_str(), (long long)lineno));
    e.language_id = f[3];
    e.transcript = f[4];
    if (!seen.insert(e.id).second)
      throw IoError(IoCode::kDuplicateId, "read_manifest " + path + ": duplicate id " + e.id);
    m.entries.push_back(std::move(e));
  }
  return m;
}

// Durations in a manifest must match the referenced feature files; verified
// on demand since it stats every file.
inline void check_manifest_durations(const Manifest& m) {
  for (const auto& e : m.entries) {
    Mat f = read_features(e.feature_path);
    if (f.rows != e.duration_frames)
      throw IoError(IoCode::kBadField,
                    strprintf("manifest entry %s: duration %lld != feature rows %lld",
                              e.id.c_str(), (long long)e.duration_frames, (long long)f.rows));
  }
}

inline std::string slurp_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(IoCode::kOpenFailed, "cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void spit_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(IoCode::kOpenFailed, "cannot open " + path);
  os << content;
}

inline uint64_t file_hash(const std::string& path) {
  return fnv1a64(slurp_file(path));
}

}  // namespace ctcpl

#endif  // CTCPL_IO_HPP_
