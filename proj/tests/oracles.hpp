// tests/oracles.hpp

// Copyright 2026  The asrp Authors

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

// Slow, straightforward reference implementations used as test oracles. None
// of them call into the library code they check.

#ifndef ASRP_TESTS_ORACLES_HPP_
#define ASRP_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

namespace oracle {

inline double pi() { return std::acos(-1.0); }

/// O(n^2) DFT of x zero-padded to n, bins 0..n/2.
inline std::vector<std::complex<double>> naive_dft(const std::vector<double>& x, int n) {
  std::vector<std::complex<double>> out(static_cast<std::size_t>(n / 2 + 1));
  for (int k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double ang = -2.0 * pi() * k * static_cast<double>(i) / n;
      acc += x[i] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[static_cast<std::size_t>(k)] = acc;
  }
  return out;
}

/// Static MFCCs: symmetric Hann, |DFT|^2, HTK-Mel triangles between 0 Hz and
/// Nyquist with edges placed in Hz, log with floor, orthonormal DCT-II.
inline std::vector<std::vector<double>> reference_mfcc(const std::vector<double>& x, int sr, int flen,
                                                       int hop, int nfft, int nmel, int nceps,
                                                       double floor = 1e-10) {
  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto inv = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  std::vector<double> edges_hz(static_cast<std::size_t>(nmel + 2));
  for (int i = 0; i < nmel + 2; ++i) edges_hz[i] = inv(mel(sr / 2.0) * i / (nmel + 1));
  std::vector<std::vector<double>> out;
  for (std::size_t start = 0; start + flen <= x.size(); start += hop) {
    std::vector<double> fr(static_cast<std::size_t>(flen));
    for (int i = 0; i < flen; ++i)
      fr[i] = x[start + i] * (0.5 - 0.5 * std::cos(2.0 * pi() * i / (flen - 1)));
    const auto spec = naive_dft(fr, nfft);
    std::vector<double> logmel(static_cast<std::size_t>(nmel));
    for (int m = 0; m < nmel; ++m) {
      const double lo = edges_hz[m], mid = edges_hz[m + 1], hi = edges_hz[m + 2];
      double e = 0.0;
      for (int k = 0; k <= nfft / 2; ++k) {
        const double f = static_cast<double>(k) * sr / nfft;
        // Triangles are linear in Mel, so interpolate on the Mel axis.
        double w = 0.0;
        if (f > lo && f < hi) {
          const double fm = mel(f);
          w = f <= mid ? (fm - mel(lo)) / (mel(mid) - mel(lo)) : (mel(hi) - fm) / (mel(hi) - mel(mid));
        }
        e += w * std::norm(spec[k]);
      }
      logmel[m] = std::log(std::max(e, floor));
    }
    std::vector<double> c(static_cast<std::size_t>(nceps));
    for (int i = 0; i < nceps; ++i) {
      double acc = 0.0;
      for (int j = 0; j < nmel; ++j) acc += logmel[j] * std::cos(pi() * i * (2 * j + 1) / (2.0 * nmel));
      c[i] = acc * std::sqrt((i == 0 ? 1.0 : 2.0) / nmel);
    }
    out.push_back(c);
  }
  return out;
}

inline std::vector<double> naive_convolution(const std::vector<double>& x, const std::vector<double>& h) {
  if (x.empty() || h.empty()) return {};
  std::vector<double> y(x.size() + h.size() - 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < h.size(); ++j) y[i + j] += x[i] * h[j];
  return y;
}

/// Minimum unit-cost edit distance.
inline long edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<long> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<long>(i);
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Segmental SNR straight from the definition, blocks of t samples.
inline double snrseg(const std::vector<double>& x, const std::vector<double>& y, std::size_t t) {
  double total = 0.0;
  int k = 0;
  for (std::size_t b = 0; b < x.size(); b += t) {
    double s = 0.0, n = 0.0;
    for (std::size_t i = b; i < std::min(x.size(), b + t); ++i) {
      s += x[i] * x[i];
      n += (y[i] - x[i]) * (y[i] - x[i]);
    }
    if (n == 0.0) continue;
    total += std::log10(s / n);
    ++k;
  }
  return 10.0 * total / k;
}

}  // namespace oracle

#endif  // ASRP_TESTS_ORACLES_HPP_
