// ctcpl/common.hpp

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

#ifndef CTCPL_COMMON_HPP_
#define CTCPL_COMMON_HPP_

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace ctcpl {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// File-format failures carry a machine-checkable code next to the message.
enum class IoCode {
  kOpenFailed,
  kBadMagic,
  kTruncated,
  kBadDims,
  kNonFinite,
  kBadField,
  kDuplicateId,
  kBadVersion,
};

class IoError : public Error {
 public:
  IoError(IoCode code, const std::string& msg) : Error(msg), code_(code) {}
  IoCode code() const { return code_; }

 private:
  IoCode code_;
};

inline std::string strprintf(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  va_list ap2;
  va_copy(ap2, ap);
  int n = std::vsnprintf(nullptr, 0, fmt, ap);
  va_end(ap);
  std::string s(n > 0 ? n : 0, '\0');
  std::vsnprintf(s.data(), s.size() + 1, fmt, ap2);
  va_end(ap2);
  return s;
}

// Shortest round-trip decimal form of a double, stable across reruns.
inline std::string dtos(double v) { return strprintf("%.17g", v); }

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64_bytes(const void* data, size_t n,
                              uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

// Snap a double to the nearest f32-representable value. Anything destined for
// an f32 container is snapped at creation so file round trips are identity.
inline double snap_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// Static-partition parallel map. Results must be written only to the caller's
// per-index slots so the reduction order stays fixed regardless of jobs.
template <typename Fn>
void parallel_for(int64_t n, int jobs, Fn&& fn) {
  if (n <= 0) return;
  if (jobs <= 1 || n == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  int workers = static_cast<int>(std::min<int64_t>(jobs, n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int64_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline int default_jobs() {
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace ctcpl

#endif  // CTCPL_COMMON_HPP_
