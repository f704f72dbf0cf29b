// tests/test_psychoacoustic.cpp

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
#include "asrp/psychoacoustic.hpp"
#include "test_util.hpp"

using namespace asrp;

namespace {

Eigen::MatrixXd random_db(Rng& rng, int rows, int cols, double lo, double hi) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

Waveform tone(double hz, double amp, std::size_t n = 1200) {
  Waveform w;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = amp * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / 16000.0);
  return w;
}

Spectrogram power_of(const Waveform& w) {
  Spectrogram s;
  s.values = stft(w, FrameConfig{}).cwiseAbs2();
  return s;
}

}  // namespace

TEST_SUITE("psychoacoustic") {
  TEST_CASE("hand example") {
    Eigen::MatrixXd h(2, 2), d = Eigen::MatrixXd::Zero(2, 2);
    h << 0, 10, 20, 30;
    CHECK(clipped_margin(d, h, 0.0) == h);
    const auto s = gradient_scale(d, h, 0.0);
    CHECK(s(0, 0) == doctest::Approx(0.0));
    CHECK(s(0, 1) == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
    CHECK(s(1, 0) == doctest::Approx(4.0 / 9.0).epsilon(1e-14));
    CHECK(s(1, 1) == doctest::Approx(1.0).epsilon(1e-14));
  }

  TEST_CASE("scale stays in the unit interval") {
    Rng rng(1);
    for (int k = 0; k < 100; ++k) {
      const auto d = random_db(rng, 5, 7, -120, 20);
      const auto h = random_db(rng, 5, 7, -10, 90);
      const auto s = gradient_scale(d, h, rng.uniform(-30, 30));
      CHECK(s.minCoeff() >= 0.0);
      CHECK(s.maxCoeff() <= 1.0);
    }
  }

  TEST_CASE("full clipping zeroes the scale") {
    Rng rng(2);
    const auto h = random_db(rng, 4, 6, 0, 40);
    const Eigen::MatrixXd d = (h.array() + 50.0).matrix();
    CHECK(clipped_margin(d, h, 10.0).isZero());
    CHECK(gradient_scale(d, h, 10.0).isZero());
  }

  TEST_CASE("clipped margin is monotone in the margin") {
    Rng rng(3);
    for (int k = 0; k < 100; ++k) {
      const auto d = random_db(rng, 1, 1, -100, 40);
      const auto h = random_db(rng, 1, 1, -10, 90);
      const double a = rng.uniform(-40, 40), b = a + rng.uniform(0, 40);
      CHECK(clipped_margin(d, h, b)(0, 0) >= clipped_margin(d, h, a)(0, 0));
    }
  }

  TEST_CASE("large margin leaves the scale positive where thresholds are above minimum") {
    Rng rng(4);
    const auto d = random_db(rng, 3, 5, -100, 0);
    const auto h = random_db(rng, 3, 5, 0, 60);
    const auto s = gradient_scale(d, h, 1e4);
    const auto hn = minmax_normalize(h);
    const auto zn = minmax_normalize(clipped_margin(d, h, 1e4));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 5; ++j)
        if (hn(i, j) > 0.0 && zn(i, j) > 0.0) CHECK(s(i, j) > 0.0);
  }

  TEST_CASE("normalisation rules") {
    Eigen::MatrixXd c = Eigen::MatrixXd::Constant(2, 3, 4.0);
    CHECK(minmax_normalize(c) == Eigen::MatrixXd::Ones(2, 3));
    CHECK(minmax_normalize(Eigen::MatrixXd::Zero(2, 2)).isZero());
    Eigen::MatrixXd m(1, 3);
    m << -2, 0, 2;
    CHECK(minmax_normalize(m)(0, 1) == doctest::Approx(0.5));
  }

  TEST_CASE("perturbation level") {
    ComplexSpectrogram o(2, 2);
    o << std::complex<double>(2, 0), std::complex<double>(0, 1), std::complex<double>(-1, 0), 0.0;
    CHECK((perturbation_level(o, o).array() == kPerturbationFloorDb).all());
    ComplexSpectrogram p = o;
    p(0, 1) += std::complex<double>(2.0, 0.0);   // |diff| = max|O|
    p(1, 0) += std::complex<double>(0.0, 0.2);   // 0.1 * max|O|
    const auto d = perturbation_level(o, p);
    CHECK(d(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(d(1, 0) == doctest::Approx(-20.0).epsilon(1e-12));
    CHECK(d(0, 0) == kPerturbationFloorDb);
    CHECK_THROWS_AS(perturbation_level(ComplexSpectrogram::Zero(1, 1), o.topLeftCorner(1, 1)), ValidationError);
  }

  TEST_CASE("silence gives the threshold in quiet") {
    Spectrogram s;
    s.values = Eigen::MatrixXd::Zero(3, 257);
    const auto h = hearing_thresholds(s);
    for (int t = 0; t < 3; ++t)
      for (int k = 0; k < 257; ++k) CHECK(h(t, k) == threshold_in_quiet_db(k * 16000.0 / 512));
  }

  TEST_CASE("a loud tone raises nearby thresholds") {
    const auto quiet = hearing_thresholds(power_of(tone(1000.0, 0.0)));
    const auto loud = hearing_thresholds(power_of(tone(1000.0, 0.5)));
    const int bin = 32;  // 1000 Hz
    for (int k = bin - 3; k <= bin + 3; ++k) CHECK(loud(0, k) > quiet(0, k) + 10.0);
  }

  TEST_CASE("doubling the power adds 3 dB to masked bins") {
    Spectrogram a = power_of(tone(1000.0, 0.5));
    Spectrogram b = a;
    b.values *= 2.0;
    const auto ha = hearing_thresholds(a), hb = hearing_thresholds(b);
    const double inc = 10.0 * std::log10(2.0);
    int masked = 0;
    for (int k = 0; k < 257; ++k) {
      const double q = threshold_in_quiet_db(k * 16000.0 / 512);
      if (ha(0, k) > q + 1e-9 && hb(0, k) > q + inc + 1e-9) {
        CHECK(hb(0, k) - ha(0, k) == doctest::Approx(inc).epsilon(1e-9));
        ++masked;
      }
    }
    CHECK(masked > 10);
  }

  TEST_CASE("apply_scale") {
    Rng rng(5);
    const auto g = random_db(rng, 3, 4, -1, 1);
    CHECK(apply_scale(g, Eigen::MatrixXd::Ones(3, 4)) == g);
    CHECK(apply_scale(g, Eigen::MatrixXd::Zero(3, 4)).isZero());
    CHECK_THROWS_AS(apply_scale(g, Eigen::MatrixXd::Ones(2, 4)), ValidationError);
  }

  TEST_CASE("scale enters the backward pass at the complex spectrum") {
    Rng rng(6);
    FrameConfig c;
    const FeatureExtractor fx(c);
    Waveform w;
    w.samples.resize(720);
    for (auto& s : w.samples) s = 0.2 * rng.normal();
    const auto tr = fx.trace(w);
    Eigen::MatrixXd up(tr.features.rows(), 39);
    for (int i = 0; i < up.rows(); ++i)
      for (int j = 0; j < 39; ++j) up(i, j) = rng.normal();
    const int rows = static_cast<int>(tr.features.rows());

    // Zero scale freezes the waveform.
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(rows, 257);
    for (double v : fx.backward(tr, up, &zero)) CHECK(v == 0.0);

    // Halving one bin removes half of that bin's contribution.
    Eigen::MatrixXd half = Eigen::MatrixXd::Ones(rows, 257), only = Eigen::MatrixXd::Zero(rows, 257);
    half(1, 40) = 0.5;
    only(1, 40) = 1.0;
    const auto g_full = fx.backward(tr, up);
    const auto g_half = fx.backward(tr, up, &half);
    const auto g_bin = fx.backward(tr, up, &only);
    double worst = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < g_full.size(); ++i) {
      worst = std::max(worst, std::fabs(g_half[i] - (g_full[i] - 0.5 * g_bin[i])));
      norm = std::max(norm, std::fabs(g_full[i]));
    }
    CHECK(worst <= 1e-12 * norm);

    // The single-bin contribution is the derivative of the loss restricted to
    // that bin's power: finite differences on L(x) = sum_t,k up-chain through
    // a power spectrum where only bin (1, 40) moves.
    const Eigen::MatrixXd mel = mel_filterbank(c, 16000);
    const Eigen::MatrixXd dct = dct_matrix(13, 23);
    const Eigen::MatrixXd base_power = tr.spectrum.cwiseAbs2();
    auto loss_with_bin = [&](double p) {
      Eigen::MatrixXd power = base_power;
      power(1, 40) = p;
      const Eigen::MatrixXd logmel = (power * mel.transpose()).array().max(c.log_floor).log().matrix();
      const Eigen::MatrixXd statics = logmel * dct.transpose();
      Eigen::MatrixXd feats(rows, 39);
      feats << statics, compute_deltas(statics, 2), compute_deltas(compute_deltas(statics, 2), 2);
      return (feats.array() * up.array()).sum();
    };
    const double p0 = base_power(1, 40), h = 1e-6 * std::max(p0, 1e-6);
    const double dl_dp = (loss_with_bin(p0 + h) - loss_with_bin(p0 - h)) / (2 * h);
    // d|X|^2/dx_n summed against the frame's samples.
    const std::size_t start = 160;
    const auto window = make_window(WindowType::kHann, 400);
    const std::complex<double> x = tr.spectrum(1, 40);
    double max_err = 0.0, max_ref = 0.0;
    for (std::size_t n = 0; n < 400; ++n) {
      const double ang = -2.0 * M_PI * 40.0 * static_cast<double>(n) / 512.0;
      const double d_power = 2.0 * window[n] * (x.real() * std::cos(ang) + x.imag() * std::sin(ang));
      const double ref = dl_dp * d_power;
      max_err = std::max(max_err, std::fabs(g_bin[start + n] - ref));
      max_ref = std::max(max_ref, std::fabs(ref));
    }
    CHECK(max_err <= 1e-4 * max_ref);
  }

  TEST_CASE("matrix files round trip") {
    const auto dir = testutil::temp_dir("psy_io");
    Rng rng(7);
    const auto m = random_db(rng, 3, 4, -200, 100);
    write_matrix(dir / "m.txt", m);
    CHECK(read_matrix(dir / "m.txt") == m);
  }
}
