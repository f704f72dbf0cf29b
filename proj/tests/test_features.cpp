// tests/test_features.cpp

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

#include <doctest.h>

#include <cmath>

#include "asrp/common.hpp"
#include "asrp/features.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace asrp;

namespace {

Waveform random_wave(Rng& rng, std::size_t n, double amp = 0.3) {
  Waveform w;
  w.samples.resize(n);
  for (auto& s : w.samples) s = amp * rng.normal();
  return w;
}

Waveform vowel(double seconds, int sr = 16000) {
  Waveform w;
  w.samples.resize(static_cast<std::size_t>(seconds * sr));
  const double f0 = 125.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double t = static_cast<double>(i) / sr;
    double v = 0.0;
    for (int h = 1; h <= 30; ++h) {
      const double f = h * f0;
      // Two formant bumps.
      const double amp = std::exp(-std::pow((f - 700.0) / 150.0, 2)) + 0.6 * std::exp(-std::pow((f - 1200.0) / 200.0, 2)) + 0.02;
      v += amp * std::sin(2.0 * oracle::pi() * f * t + 0.3 * h);
    }
    w.samples[i] = 0.1 * v;
  }
  return w;
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("frame counts") {
    FrameConfig c;
    CHECK(c.num_frames(400) == 1);
    CHECK(c.num_frames(560) == 2);
    CHECK(c.num_frames(16000) == 98);
    CHECK_THROWS_AS(c.num_frames(399), ValidationError);
    Waveform w;
    w.samples.assign(560, 0.0);
    const auto frames = frame_signal(w, c);
    REQUIRE(frames.size() == 2);
    CHECK(power_spectrum(frames, c).frame_starts == std::vector<std::size_t>{0, 160});
    for (std::size_t len = 400; len < 2000; len += 37) {
      const std::size_t expect = (len - 400) / 160 + 1;
      CHECK(static_cast<std::size_t>(c.num_frames(len)) == expect);
      CHECK(1 + (c.num_frames(len) - 1) * 160 + 400 - 1 <= static_cast<int>(len));
    }
  }

  TEST_CASE("power spectrum of silence and of a bin-centred sinusoid") {
    FrameConfig c;
    c.frame_length = 512;
    c.hop_length = 512;
    c.window = WindowType::kRectangular;
    const std::vector<std::vector<double>> zero{std::vector<double>(512, 0.0)};
    CHECK(power_spectrum(zero, c).values.isZero());
    std::vector<double> tone(512);
    for (int n = 0; n < 512; ++n) tone[n] = std::sin(2.0 * oracle::pi() * 37 * n / 512.0);
    const auto p = power_spectrum({tone}, c).values;
    CHECK(p(0, 37) / p.sum() > 0.999999);
  }

  TEST_CASE("power spectrum matches a naive DFT") {
    Rng rng(21);
    FrameConfig c;
    c.frame_length = c.hop_length = c.dft_size = 16;
    c.n_mel = c.n_ceps = 4;
    c.window = WindowType::kRectangular;
    for (int k = 0; k < 10; ++k) {
      std::vector<double> frame(16);
      for (auto& v : frame) v = rng.normal();
      const auto got = power_spectrum({frame}, c).values;
      const auto ref = oracle::naive_dft(frame, 16);
      for (int b = 0; b <= 8; ++b)
        CHECK(testutil::rel_err(got(0, b), std::norm(ref[b])) < 1e-10);
    }
    // Hann window applied before the transform.
    c.window = WindowType::kHann;
    std::vector<double> frame(16);
    for (auto& v : frame) v = rng.normal();
    std::vector<double> windowed(16);
    for (int n = 0; n < 16; ++n) windowed[n] = frame[n] * (0.5 - 0.5 * std::cos(2.0 * oracle::pi() * n / 15.0));
    const auto got = power_spectrum({frame}, c).values;
    const auto ref = oracle::naive_dft(windowed, 16);
    for (int b = 0; b <= 8; ++b) CHECK(testutil::rel_err(got(0, b), std::norm(ref[b])) < 1e-10);
  }

  TEST_CASE("static cepstra match the reference implementation") {
    const Waveform w = vowel(0.5);
    FrameConfig c;
    const auto got = extract_features(w, c);
    const auto ref = oracle::reference_mfcc(w.samples, 16000, 400, 160, 512, 23, 13);
    REQUIRE(static_cast<std::size_t>(got.rows()) == ref.size());
    CHECK(got.cols() == 39);
    for (std::size_t t = 0; t < ref.size(); ++t) {
      double scale = 0.0, diff = 0.0;
      for (int k = 0; k < 13; ++k) {
        scale = std::max(scale, std::fabs(ref[t][k]));
        diff = std::max(diff, std::fabs(got(static_cast<Eigen::Index>(t), k) - ref[t][k]));
      }
      CHECK(diff <= 1e-6 * scale);
    }
  }

  TEST_CASE("determinism and constant input") {
    Rng rng(1);
    const Waveform w = random_wave(rng, 4000);
    FrameConfig c;
    CHECK(extract_features(w, c) == extract_features(w, c));
    Waveform dc;
    dc.samples.assign(3200, 0.25);
    const auto f = extract_features(dc, c);
    CHECK(f.rightCols(26).isZero());
  }

  TEST_CASE("deltas and their adjoint") {
    Rng rng(2);
    Eigen::MatrixXd x(7, 3), g(7, 3);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 3; ++j) {
        x(i, j) = rng.normal();
        g(i, j) = rng.normal();
      }
    // Interior frame against the regression formula.
    const auto d = compute_deltas(x, 2);
    const Eigen::RowVectorXd manual = ((x.row(4) - x.row(2)) + 2 * (x.row(5) - x.row(1))) / 10.0;
    CHECK((d.row(3) - manual).norm() < 1e-14);
    const double lhs = (d.array() * g.array()).sum();
    const double rhs = (x.array() * compute_deltas_adjoint(g, 2).array()).sum();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }

  TEST_CASE("waveform gradient: zero, locality and finite differences") {
    Rng rng(3);
    FrameConfig c;
    const Waveform w = random_wave(rng, 560);
    const auto f = extract_features(w, c);
    REQUIRE(f.rows() == 2);

    CHECK(std::all_of(feature_gradient_to_waveform(w, c, Eigen::MatrixXd::Zero(2, 39)).begin(),
                      feature_gradient_to_waveform(w, c, Eigen::MatrixXd::Zero(2, 39)).end(),
                      [](double v) { return v == 0.0; }));

    {
      const Waveform longer = random_wave(rng, 1200);
      const auto fl = extract_features(longer, c);
      Eigen::MatrixXd up = Eigen::MatrixXd::Zero(fl.rows(), 39);
      up(3, 2) = 1.0;
      const auto g = feature_gradient_to_waveform(longer, c, up);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (i < 480 || i >= 880) CHECK(g[i] == 0.0);
    }

    Eigen::MatrixXd up(2, 39);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 39; ++j) up(i, j) = rng.normal();
    const auto g = feature_gradient_to_waveform(w, c, up);
    auto loss = [&](const Waveform& x) { return (extract_features(x, c).array() * up.array()).sum(); };
    const double h = 1e-4;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      Waveform p = w, m = w;
      p.samples[i] += h;
      m.samples[i] -= h;
      const double fd = (loss(p) - loss(m)) / (2 * h);
      num += (fd - g[i]) * (fd - g[i]);
      den += fd * fd;
    }
    CHECK(std::sqrt(num / den) < 1e-4);
  }

  TEST_CASE("partial refresh equals a full recomputation") {
    Rng rng(4);
    FrameConfig c;
    const FeatureExtractor fx(c);
    Waveform w = random_wave(rng, 4000);
    auto tr = fx.trace(w);
    for (std::size_t i = 1000; i < 1100; ++i) w.samples[i] += 0.05;
    fx.refresh(tr, w, 1000, 1100);
    const auto full = fx.trace(w);
    CHECK((tr.features - full.features).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((tr.spectrum - full.spectrum).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("spectral scale of ones is the identity") {
    Rng rng(5);
    FrameConfig c;
    const FeatureExtractor fx(c);
    const Waveform w = random_wave(rng, 1200);
    const auto tr = fx.trace(w);
    Eigen::MatrixXd up(tr.features.rows(), 39);
    for (int i = 0; i < up.rows(); ++i)
      for (int j = 0; j < 39; ++j) up(i, j) = rng.normal();
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(tr.features.rows(), c.num_bins());
    CHECK(fx.backward(tr, up) == fx.backward(tr, up, &ones));
  }

  TEST_CASE("invalid frame configurations") {
    FrameConfig c;
    c.hop_length = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = FrameConfig{};
    c.frame_length = 600;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = FrameConfig{};
    c.n_ceps = 30;
    CHECK_THROWS_AS(c.validate(), ValidationError);
  }
}
