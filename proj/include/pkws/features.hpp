// Copyright 2026 The pkws Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "pkws/common.hpp"
#include "pkws/tensor.hpp"
#include "pkws/wav.hpp"

namespace pkws {

enum class FeatureKind : uint8_t { log_mel = 0, mfcc = 1 };

/// T x D feature frames plus the framing metadata needed to interpret them.
struct FeatureMatrix {
  Tensor frames;  // [T, D]
  FeatureKind kind = FeatureKind::log_mel;
  int window_samples = 0;
  int shift_samples = 0;
  int sample_rate = 16000;

  int64_t num_frames() const { return frames.dim(0); }
  int64_t dim() const { return frames.dim(1); }
};

struct FeatureConfig {
  double window_seconds = 0.030;
  double shift_seconds = 0.010;
  int num_mels = 40;
  int num_coeffs = 40;  // MFCC only
  FeatureKind kind = FeatureKind::log_mel;
};

// Conventions, fixed so cached features and golden values are stable:
//   - Hann window, w[i] = 0.5 - 0.5 cos(2 pi i / (N - 1))
//   - FFT size: next power of two >= window length (512 for 30 ms @ 16 kHz)
//   - power spectrum (magnitude squared)
//   - triangular mel filters on the HTK scale, 2595 log10(1 + f/700),
//     spanning 0 .. Nyquist
//   - natural log with energy floor 1e-10
inline constexpr double kEnergyFloor = 1e-10;

inline double hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}
inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

namespace featdetail {

/// In-place iterative radix-2 FFT; n must be a power of two.
inline void fft(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

inline int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Triangular filterbank: [num_mels, fft_size/2 + 1].
inline std::vector<std::vector<double>> mel_filterbank(int num_mels,
                                                       int fft_size,
                                                       int sample_rate) {
  const int bins = fft_size / 2 + 1;
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(num_mels + 2);
  for (int m = 0; m < num_mels + 2; ++m)
    edges[m] = mel_to_hz(mel_max * m / (num_mels + 1));
  std::vector<std::vector<double>> fb(num_mels, std::vector<double>(bins, 0.0));
  for (int m = 0; m < num_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      if (f > lo && f < mid)
        fb[m][k] = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        fb[m][k] = (hi - f) / (hi - mid);
    }
  }
  return fb;
}

/// Orthonormal type-II DCT matrix [n_out, n_in]; with n_out == n_in it is
/// orthogonal, so the type-III transpose inverts it exactly.
inline std::vector<std::vector<double>> dct2_matrix(int n_out, int n_in) {
  std::vector<std::vector<double>> m(n_out, std::vector<double>(n_in));
  for (int k = 0; k < n_out; ++k) {
    const double scale =
        std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n_in));
    for (int j = 0; j < n_in; ++j)
      m[k][j] = scale * std::cos(std::numbers::pi * (j + 0.5) * k / n_in);
  }
  return m;
}

}  // namespace featdetail

inline int64_t frame_count(int64_t num_samples, int64_t window, int64_t shift) {
  if (num_samples < window) return 0;
  return (num_samples - window) / shift + 1;
}

/// Log mel-filterbank energies. Rejects waveforms shorter than one window.
inline FeatureMatrix log_mel(const Waveform& w, const FeatureConfig& cfg = {}) {
  const int win = static_cast<int>(std::lround(cfg.window_seconds * w.sample_rate));
  const int shift = static_cast<int>(std::lround(cfg.shift_seconds * w.sample_rate));
  if (win <= 0 || shift <= 0) throw_config("log_mel: non-positive framing");
  if (static_cast<int64_t>(w.samples.size()) < win)
    throw_data("log_mel: waveform shorter than one window (" +
               std::to_string(w.samples.size()) + " < " + std::to_string(win) +
               " samples)");
  const int nfft = featdetail::next_pow2(win);
  const int bins = nfft / 2 + 1;
  const int64_t T = frame_count(static_cast<int64_t>(w.samples.size()), win, shift);

  std::vector<double> window(win);
  for (int i = 0; i < win; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (win - 1));
  const auto fb = featdetail::mel_filterbank(cfg.num_mels, nfft, w.sample_rate);

  FeatureMatrix out;
  out.frames = Tensor({T, cfg.num_mels});
  out.kind = FeatureKind::log_mel;
  out.window_samples = win;
  out.shift_samples = shift;
  out.sample_rate = w.sample_rate;

  std::vector<std::complex<double>> buf(nfft);
  std::vector<double> power(bins);
  for (int64_t t = 0; t < T; ++t) {
    const double* seg = w.samples.data() + t * shift;
    for (int i = 0; i < win; ++i) buf[i] = seg[i] * window[i];
    for (int i = win; i < nfft; ++i) buf[i] = 0.0;
    featdetail::fft(buf);
    for (int k = 0; k < bins; ++k) power[k] = std::norm(buf[k]);
    for (int m = 0; m < cfg.num_mels; ++m) {
      double e = 0.0;
      for (int k = 0; k < bins; ++k) e += fb[m][k] * power[k];
      out.frames.at(t, m) = std::log(e + kEnergyFloor);
    }
  }
  return out;
}

/// Mel-frequency cepstral coefficients: log_mel followed by an orthonormal
/// type-II DCT, keeping the first num_coeffs coefficients.
inline FeatureMatrix mfcc(const Waveform& w, const FeatureConfig& cfg = {}) {
  if (cfg.num_coeffs < 1 || cfg.num_coeffs > cfg.num_mels)
    throw_config("mfcc: num_coeffs must be in [1, num_mels]");
  FeatureMatrix lm = log_mel(w, cfg);
  const auto dct = featdetail::dct2_matrix(cfg.num_coeffs, cfg.num_mels);
  FeatureMatrix out;
  out.frames = Tensor({lm.num_frames(), static_cast<int64_t>(cfg.num_coeffs)});
  out.kind = FeatureKind::mfcc;
  out.window_samples = lm.window_samples;
  out.shift_samples = lm.shift_samples;
  out.sample_rate = lm.sample_rate;
  for (int64_t t = 0; t < lm.num_frames(); ++t) {
    for (int k = 0; k < cfg.num_coeffs; ++k) {
      double s = 0.0;
      for (int m = 0; m < cfg.num_mels; ++m) s += dct[k][m] * lm.frames.at(t, m);
      out.frames.at(t, k) = s;
    }
  }
  return out;
}

/// Extract features per the config's kind.
inline FeatureMatrix extract_features(const Waveform& w,
                                      const FeatureConfig& cfg = {}) {
  return cfg.kind == FeatureKind::mfcc ? mfcc(w, cfg) : log_mel(w, cfg);
}

/// Cuts a stream into consecutive non-overlapping fixed-length clips.
/// A trailing remainder shorter than one segment is dropped.
inline std::vector<Waveform> segment_stream(const Waveform& w,
                                            double segment_seconds = 1.0) {
  if (segment_seconds <= 0.0)
    throw_config("segment_stream: segment length must be positive");
  const size_t seg = static_cast<size_t>(std::lround(segment_seconds * w.sample_rate));
  std::vector<Waveform> out;
  for (size_t off = 0; off + seg <= w.samples.size(); off += seg) {
    Waveform s;
    s.sample_rate = w.sample_rate;
    s.samples.assign(w.samples.begin() + off, w.samples.begin() + off + seg);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature cache file. Layout (all integers little-endian):
//   bytes 0-7   magic "PKWSFEA1"
//   u32         version (1)
//   u32 T, u32 D
//   u8          feature kind (0 = log-mel, 1 = mfcc)
//   u32         window in samples
//   u32         shift in samples
//   u32         sample rate
//   T*D f64     frames, row-major little-endian
// ---------------------------------------------------------------------------

namespace featdetail {
inline void put_u32(std::ostream& os, uint32_t v) {
  uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                  static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline uint32_t get_u32(std::istream& is) {
  uint8_t b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
}  // namespace featdetail

inline void write_feature_cache(const std::string& path, const FeatureMatrix& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_data("write_feature_cache: cannot open " + path);
  out.write("PKWSFEA1", 8);
  featdetail::put_u32(out, 1);
  featdetail::put_u32(out, static_cast<uint32_t>(f.num_frames()));
  featdetail::put_u32(out, static_cast<uint32_t>(f.dim()));
  const uint8_t kind = static_cast<uint8_t>(f.kind);
  out.write(reinterpret_cast<const char*>(&kind), 1);
  featdetail::put_u32(out, static_cast<uint32_t>(f.window_samples));
  featdetail::put_u32(out, static_cast<uint32_t>(f.shift_samples));
  featdetail::put_u32(out, static_cast<uint32_t>(f.sample_rate));
  static_assert(sizeof(double) == 8);
  out.write(reinterpret_cast<const char*>(f.frames.data()),
            static_cast<std::streamsize>(f.frames.numel() * 8));
  if (!out) throw_data("write_feature_cache: write failed for " + path);
}

inline FeatureMatrix read_feature_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("read_feature_cache: cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, "PKWSFEA1", 8) != 0)
    throw_data("read_feature_cache: " + path + ": bad magic");
  const uint32_t version = featdetail::get_u32(in);
  if (version != 1)
    throw_data("read_feature_cache: " + path + ": unsupported version " +
               std::to_string(version));
  const int64_t T = featdetail::get_u32(in);
  const int64_t D = featdetail::get_u32(in);
  uint8_t kind = 0;
  in.read(reinterpret_cast<char*>(&kind), 1);
  FeatureMatrix f;
  f.kind = static_cast<FeatureKind>(kind);
  f.window_samples = static_cast<int>(featdetail::get_u32(in));
  f.shift_samples = static_cast<int>(featdetail::get_u32(in));
  f.sample_rate = static_cast<int>(featdetail::get_u32(in));
  f.frames = Tensor({T, D});
  in.read(reinterpret_cast<char*>(f.frames.data()),
          static_cast<std::streamsize>(T * D * 8));
  if (!in) throw_data("read_feature_cache: " + path + ": truncated payload");
  return f;
}

}  // namespace pkws
