// ctcpl/rng.hpp

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

// Self-contained xoshiro256++ generator with hand-rolled distributions.
// <random> distributions are implementation-defined, which would break the
// byte-identical-rerun guarantees, so nothing here touches them.

#ifndef CTCPL_RNG_HPP_
#define CTCPL_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "ctcpl/common.hpp"

namespace ctcpl {

inline uint64_t splitmix64(uint64_t& x) {
  uint64_t z = (x += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Stable seed for a named substream; lets independent components derive
// non-overlapping streams from one run seed.
inline uint64_t derive_seed(uint64_t seed, std::string_view tag) {
  uint64_t h = fnv1a64(tag) ^ (seed * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull);
  return splitmix64(h);
}

inline uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t index) {
  uint64_t h = derive_seed(seed, tag) ^ (index * 0xd1342543de82ef95ull + 1);
  return splitmix64(h);
}

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) {
    uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Inclusive range; unbiased via rejection on the top of the 64-bit space.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (lo > hi) throw Error(strprintf("uniform_int: empty range [%lld, %lld]",
                                       (long long)lo, (long long)hi));
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(next_u64());  // full 64-bit range
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return lo + static_cast<int64_t>(v % span);
  }

  // [0, 1) with 53 random mantissa bits.
  double uniform_real() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform_real(); }

  // Box-Muller; the spare value is cached, so draw order matters and is fixed.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform_real();
    } while (u1 <= 0.0);
    u2 = uniform_real();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(0, i);
      std::swap(v[i], v[static_cast<size_t>(j)]);
    }
  }

  // Draw an index from unnormalized non-negative weights.
  int64_t categorical(const std::vector<double>& w) {
    double total = 0.0;
    for (double x : w) total += x;
    if (!(total > 0.0)) throw Error("categorical: weights sum to zero");
    double u = uniform_real() * total;
    double acc = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      if (u < acc) return static_cast<int64_t>(i);
    }
    return static_cast<int64_t>(w.size()) - 1;
  }

  Rng fork(std::string_view tag) { return Rng(derive_seed(next_u64(), tag)); }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ctcpl

#endif  // CTCPL_RNG_HPP_
