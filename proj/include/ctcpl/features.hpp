// ctcpl/features.hpp

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

// Real-signal front end: Hamming-window framing and log mel filterbanks
// (HTK mel scale, power spectrum, triangular filters, log floor 1e-10).
// The synthetic corpus path bypasses this module entirely.

#ifndef CTCPL_FEATURES_HPP_
#define CTCPL_FEATURES_HPP_

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "ctcpl/common.hpp"
#include "ctcpl/io.hpp"
#include "ctcpl/mat.hpp"

namespace ctcpl {

struct FrontendConfig {
  int64_t sample_rate_hz = 16000;
  int64_t window_ms = 25;
  int64_t hop_ms = 10;
  int64_t n_mels = 80;
  int64_t fft_size = 0;  // 0: next power of two >= window length

  int64_t window_samples() const { return sample_rate_hz * window_ms / 1000; }
  int64_t hop_samples() const { return sample_rate_hz * hop_ms / 1000; }
};

inline void validate_frontend_config(const FrontendConfig& c) {
  if (c.sample_rate_hz <= 0) throw Error("FrontendConfig: sample rate must be positive");
  if (c.n_mels < 1) throw Error("FrontendConfig: n_mels must be >= 1");
  if (c.hop_ms > c.window_ms) throw Error("FrontendConfig: hop must not exceed window");
  if (c.window_samples() < 1 || c.hop_samples() < 1)
    throw Error("FrontendConfig: window/hop shorter than one sample");
  if (c.fft_size != 0) {
    if (c.fft_size < c.window_samples()) throw Error("FrontendConfig: fft_size < window length");
    if ((c.fft_size & (c.fft_size - 1)) != 0) throw Error("FrontendConfig: fft_size not a power of two");
  }
}

inline int64_t resolve_fft_size(const FrontendConfig& c) {
  if (c.fft_size != 0) return c.fft_size;
  int64_t n = 1;
  while (n < c.window_samples()) n <<= 1;
  return n;
}

// n_frames = 1 + floor((L - W) / H); frame i starts at i*H and is multiplied
// by the Hamming window w[n] = 0.54 - 0.46 cos(2 pi n / (W-1)).
inline Mat frame_signal(const std::vector<double>& samples, const FrontendConfig& cfg) {
  validate_frontend_config(cfg);
  int64_t W = cfg.window_samples();
  int64_t H = cfg.hop_samples();
  int64_t L = static_cast<int64_t>(samples.size());
  if (L < W) throw Error(strprintf("frame_signal: signal of %lld samples shorter than one %lld-sample window",
                                   (long long)L, (long long)W));
  int64_t n_frames = 1 + (L - W) / H;
  std::vector<double> window(static_cast<size_t>(W));
  for (int64_t n = 0; n < W; ++n)
    window[static_cast<size_t>(n)] =
        W == 1 ? 1.0 : 0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(n) / static_cast<double>(W - 1));
  Mat frames(n_frames, W);
  for (int64_t i = 0; i < n_frames; ++i)
    for (int64_t n = 0; n < W; ++n)
      frames(i, n) = samples[static_cast<size_t>(i * H + n)] * window[static_cast<size_t>(n)];
  return frames;
}

namespace detail {

// Iterative radix-2 FFT, in place.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * M_PI / static_cast<double>(len);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular filters on power-spectrum bins, HTK mel spacing from 0 to Nyquist.
inline Mat mel_filterbank(int64_t n_mels, int64_t fft_size, int64_t sample_rate) {
  int64_t n_bins = fft_size / 2 + 1;
  double nyquist = static_cast<double>(sample_rate) / 2.0;
  double mel_lo = hz_to_mel(0.0);
  double mel_hi = hz_to_mel(nyquist);
  std::vector<double> hz(static_cast<size_t>(n_mels + 2));
  for (int64_t i = 0; i < n_mels + 2; ++i)
    hz[static_cast<size_t>(i)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  Mat fb(n_mels, n_bins);
  for (int64_t m = 0; m < n_mels; ++m) {
    double lo = hz[static_cast<size_t>(m)];
    double mid = hz[static_cast<size_t>(m + 1)];
    double hi = hz[static_cast<size_t>(m + 2)];
    for (int64_t k = 0; k < n_bins; ++k) {
      double f = static_cast<double>(k) * static_cast<double>(sample_rate) / static_cast<double>(fft_size);
      double w = 0.0;
      if (f >= lo && f <= mid && mid > lo) w = (f - lo) / (mid - lo);
      else if (f > mid && f <= hi && hi > mid) w = (hi - f) / (hi - mid);
      fb(m, k) = w;
    }
  }
  return fb;
}

}  // namespace detail

constexpr double kLogMelFloor = 1e-10;

// Per frame: zero-pad to fft_size, squared-magnitude spectrum, mel filters,
// natural log with floor. Output is f32-snapped for the FEA1 container.
inline Mat log_mel(const Mat& frames, const FrontendConfig& cfg) {
  validate_frontend_config(cfg);
  if (frames.cols != cfg.window_samples())
    throw Error("log_mel: frames do not match the configured window length");
  int64_t fft_size = resolve_fft_size(cfg);
  int64_t n_bins = fft_size / 2 + 1;
  Mat fb = detail::mel_filterbank(cfg.n_mels, fft_size, cfg.sample_rate_hz);
  Mat out(frames.rows, cfg.n_mels);
  std::vector<std::complex<double>> buf(static_cast<size_t>(fft_size));
  std::vector<double> power(static_cast<size_t>(n_bins));
  for (int64_t i = 0; i < frames.rows; ++i) {
    for (int64_t k = 0; k < fft_size; ++k)
      buf[static_cast<size_t>(k)] = k < frames.cols ? std::complex<double>(frames(i, k), 0.0) : 0.0;
    detail::fft_radix2(buf);
    for (int64_t k = 0; k < n_bins; ++k) power[static_cast<size_t>(k)] = std::norm(buf[static_cast<size_t>(k)]);
    for (int64_t m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      for (int64_t k = 0; k < n_bins; ++k) e += fb(m, k) * power[static_cast<size_t>(k)];
      out(i, m) = snap_f32(std::log(std::max(e, kLogMelFloor)));
    }
  }
  return out;
}

// PCM1 in, FEA1 out.
inline Mat extract_features(const std::string& pcm_path, const FrontendConfig& cfg_in) {
  uint32_t rate = 0;
  std::vector<int16_t> raw = read_pcm(pcm_path, &rate);
  FrontendConfig cfg = cfg_in;
  cfg.sample_rate_hz = static_cast<int64_t>(rate);
  std::vector<double> samples(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) samples[i] = static_cast<double>(raw[i]) / 32768.0;
  return log_mel(frame_signal(samples, cfg), cfg);
}

}  // namespace ctcpl

#endif  // CTCPL_FEATURES_HPP_
