// tests/test_metrics.cpp

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
#include "asrp/metrics.hpp"
#include "oracles.hpp"

using namespace asrp;

namespace {

using Words = std::vector<std::string>;

Words split(const std::string& s) {
  Words out;
  std::string cur;
  for (char ch : s) {
    if (ch == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Waveform wave(std::vector<double> s) {
  Waveform w;
  w.samples = std::move(s);
  return w;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("segment length") { CHECK(snr_segment_length(16000) == 200); }

  TEST_CASE("snrseg examples") {
    Rng rng(1);
    std::vector<double> x(800);
    for (auto& v : x) v = rng.normal();
    std::vector<double> y2(x);
    for (auto& v : y2) v *= 2.0;
    CHECK(snrseg(wave(x), wave(y2)) == doctest::Approx(0.0).epsilon(1e-12));

    // Sinusoid plus noise of known variance over four segments.
    std::vector<double> s(800), y(800);
    for (std::size_t i = 0; i < 800; ++i) {
      s[i] = std::sin(2.0 * M_PI * 440.0 * static_cast<double>(i) / 16000.0);
      y[i] = s[i] + 0.05 * rng.normal();
    }
    CHECK(std::fabs(snrseg(wave(s), wave(y), 200) - oracle::snrseg(s, y, 200)) < 1e-9);

    // Ten times the noise costs exactly 20 dB.
    std::vector<double> y10(800);
    for (std::size_t i = 0; i < 800; ++i) y10[i] = s[i] + 10.0 * (y[i] - s[i]);
    CHECK(snrseg(wave(s), wave(y10)) == doctest::Approx(snrseg(wave(s), wave(y)) - 20.0).epsilon(1e-12));
  }

  TEST_CASE("snrseg skips clean segments and honours regions") {
    std::vector<double> x(600, 0.5), y(x);
    y[450] += 0.1;
    const double one = 10.0 * std::log10(200 * 0.25 / 0.01);
    CHECK(snrseg(wave(x), wave(y)) == doctest::Approx(one));
    CHECK(snrseg(wave(x), wave(y), 200, {{400, 420}}) == doctest::Approx(one));
    CHECK_THROWS_AS(snrseg(wave(x), wave(y), 200, {{0, 100}}), Error);
    CHECK_THROWS_AS(snrseg(wave(x), wave(x)), Error);
    CHECK_THROWS_AS(snrseg(wave(x), wave({1.0})), ValidationError);
    // A shorter final block is a segment of its own.
    std::vector<double> a(250, 1.0), b(a);
    b[240] = 1.5;
    CHECK(snrseg(wave(a), wave(b)) == doctest::Approx(10.0 * std::log10(50.0 / 0.25)));
  }

  TEST_CASE("max perturbation") {
    Rng rng(2);
    std::vector<double> x(100), y(100);
    for (std::size_t i = 0; i < 100; ++i) {
      x[i] = rng.normal();
      y[i] = rng.normal();
    }
    CHECK(max_perturbation(wave(x), wave(x), 0.7) == 0.0);
    std::vector<double> z(x);
    z[10] += 0.7;
    CHECK(max_perturbation(wave(x), wave(z), 0.7) == doctest::Approx(1.0).epsilon(1e-12));
    double scan = 0.0;
    for (std::size_t i = 0; i < 100; ++i) scan = std::max(scan, std::fabs(x[i] - y[i]));
    CHECK(max_perturbation(wave(x), wave(y), 1.0) == scan);
    std::vector<double> nx(x), ny(y);
    for (auto& v : nx) v = -v;
    for (auto& v : ny) v = -v;
    CHECK(max_perturbation(wave(nx), wave(ny), 1.0) == scan);
    CHECK_THROWS_AS(max_perturbation(wave(x), wave(y), 0.0), ValidationError);
  }

  TEST_CASE("word accuracy examples") {
    const auto same = word_accuracy({split("a b"), split("c")}, {split("a b"), split("c")});
    CHECK(same.percent == 100.0);
    CHECK(same.counts.insertions + same.counts.substitutions + same.counts.deletions == 0);

    const auto sub = word_accuracy({split("a b c d")}, {split("a x c d")});
    CHECK(sub.percent == doctest::Approx(75.0));
    CHECK(sub.counts.substitutions == 1);

    const auto ins = word_accuracy({split("a b c")}, {split("a x b c")});
    CHECK(ins.counts.insertions == 1);
    CHECK(ins.counts.substitutions == 0);
    CHECK(ins.counts.deletions == 0);
    CHECK(std::fabs(ins.percent - 200.0 / 3.0) < 1e-9);

    // Many insertions drive accuracy negative.
    CHECK(word_accuracy({split("a")}, {split("x y a z")}).percent == doctest::Approx(-200.0));
    CHECK_THROWS_AS(word_accuracy({Words{}}, {split("a")}), ValidationError);
  }

  TEST_CASE("edit alignment tie-break prefers substitution") {
    // "a b" vs "c": one substitution plus one deletion either way.
    const auto c = align_words(split("a b"), split("c"));
    CHECK(c.substitutions == 1);
    CHECK(c.deletions == 1);
    CHECK(c.insertions == 0);
  }

  TEST_CASE("alignment counts agree with edit distance") {
    Rng rng(3);
    const Words vocab = {"a", "b", "c", "d"};
    for (int k = 0; k < 300; ++k) {
      Words r, h;
      const auto nr = 1 + rng.below(6), nh = rng.below(7);
      for (std::uint64_t i = 0; i < nr; ++i) r.push_back(vocab[rng.below(4)]);
      for (std::uint64_t i = 0; i < nh; ++i) h.push_back(vocab[rng.below(4)]);
      const auto c = align_words(r, h);
      CHECK(c.insertions + c.substitutions + c.deletions == oracle::edit_distance(r, h));
      CHECK(c.n + c.insertions - c.deletions == static_cast<long>(h.size()));
      const auto acc = word_accuracy({r}, {h});
      CHECK((acc.percent == 100.0) == (r == h));
    }
  }

  TEST_CASE("aggregate") {
    std::vector<AttackReport> reports(30);
    for (int i = 0; i < 30; ++i) {
      reports[i].success = i < 26;
      reports[i].snrseg_db = {10.0 + i};
      reports[i].clean_accuracy = 98.0;
      reports[i].rounds = 2;
    }
    const auto row = aggregate(reports, "x");
    CHECK(row.success_rate == doctest::Approx(86.67).epsilon(1e-4));
    CHECK(std::fabs(row.success_rate - 2600.0 / 30.0) < 1e-12);
    CHECK(row.snrseg_db == doctest::Approx(24.5));
    CHECK(row.attack_steps == 2.0);

    for (auto& r : reports) r.success = false;
    CHECK(aggregate(reports).success_rate == 0.0);

    AttackReport one;
    one.success = true;
    one.rounds = 3;
    one.poisoned_seconds = 1.25;
    one.poisoned_samples = 17;
    one.snrseg_db = {12.0, 14.0};
    one.delta_max = 0.3;
    one.clean_accuracy = 97.5;
    one.wall_time_s = 4.0;
    const auto single = aggregate({one});
    CHECK(single.success_rate == 100.0);
    CHECK(single.poisoned_seconds == 1.25);
    CHECK(single.poisoned_samples == 17.0);
    CHECK(single.snrseg_db == 13.0);
    CHECK(single.delta_max == 0.3);
    CHECK(single.clean_accuracy == 97.5);
    CHECK(single.attack_steps == 3.0);
    CHECK(single.wall_time_s == 4.0);
    CHECK_THROWS_AS(aggregate({}), ValidationError);
  }
}
