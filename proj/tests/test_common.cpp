// tests/test_common.cpp

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

#include <atomic>
#include <cmath>
#include <set>

#include "asrp/common.hpp"
#include "asrp/waveform.hpp"
#include "test_util.hpp"

using namespace asrp;

TEST_SUITE("common") {
  TEST_CASE("seed derivation") {
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
    CHECK(derive_seed(1, 2) != derive_seed(2, 2));
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) seen.insert(derive_seed(7, i));
    CHECK(seen.size() == 1000);
  }

  TEST_CASE("random streams") {
    Rng a(5), b(5), c(6);
    for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
    CHECK(a.next_u64() != c.next_u64());
    Rng r(9);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double u = r.uniform();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
      CHECK(r.below(7) < 7);
      const double z = r.normal();
      sum += z;
      sq += z * z;
    }
    CHECK(std::fabs(sum / n) < 0.05);
    CHECK(std::fabs(sq / n - 1.0) < 0.05);
  }

  TEST_CASE("parallel_for visits every index once") {
    for (int workers : {1, 3, 8}) {
      std::vector<std::atomic<int>> hits(257);
      parallel_for(hits.size(), workers, [&](std::size_t i) { ++hits[i]; });
      for (auto& h : hits) CHECK(h.load() == 1);
    }
    CHECK_THROWS_AS(parallel_for(10, 2, [](std::size_t i) {
                      if (i == 4) throw ValidationError("boom");
                    }),
                    ValidationError);
  }
}

TEST_SUITE("waveform") {
  TEST_CASE("wav round trip after quantisation") {
    Rng rng(1);
    Waveform w;
    w.id = "x";
    w.samples.resize(1000);
    for (auto& s : w.samples) s = std::clamp(0.3 * rng.normal(), -1.0, 1.0);
    quantize_to_pcm16(w);
    const auto dir = testutil::temp_dir("wav_io");
    write_wav(dir / "x.wav", w);
    const auto back = read_wav(dir / "x.wav");
    CHECK(back.sample_rate == 16000);
    CHECK(back.id == "x");
    CHECK(back.samples == w.samples);
    Waveform q = back;
    quantize_to_pcm16(q);
    CHECK(q.samples == back.samples);
  }

  TEST_CASE("clipping and validation") {
    Waveform w;
    w.samples = {0.5, 1.5, -2.0, -0.25};
    CHECK(w.peak() == 2.0);
    CHECK(clip_to_unit(w) == 2);
    CHECK(w.samples == std::vector<double>{0.5, 1.0, -1.0, -0.25});
    w.samples[0] = NAN;
    CHECK_THROWS_AS(w.validate(), ValidationError);
    w.samples[0] = 0.0;
    w.sample_rate = 0;
    CHECK_THROWS_AS(w.validate(), ValidationError);
    CHECK_THROWS_AS(read_wav("/nonexistent/x.wav"), Error);
  }
}
