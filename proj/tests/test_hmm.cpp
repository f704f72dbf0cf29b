// tests/test_hmm.cpp

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
#include <filesystem>

#include "asrp/hmm.hpp"
#include "hmm_oracle.hpp"
#include "test_util.hpp"

using namespace asrp;

namespace {

Grammar no_silence() {
  Grammar g;
  g.silence = false;
  return g;
}

Eigen::MatrixXd random_log_posteriors(Rng& rng, int frames, int states) {
  Eigen::MatrixXd lp(frames, states);
  for (int t = 0; t < frames; ++t) {
    Eigen::VectorXd v(states);
    for (int s = 0; s < states; ++s) v[s] = 3.0 * rng.normal();
    const double lse = std::log(v.array().exp().sum());
    lp.row(t) = (v.array() - lse).transpose();
  }
  return lp;
}

HmmModel random_hmm(Rng& rng, int max_states) {
  for (;;) {
    std::vector<LexiconEntry> lex;
    const int words = 1 + static_cast<int>(rng.below(3));
    for (int w = 0; w < words; ++w)
      lex.push_back({"w" + std::to_string(w), 1 + static_cast<int>(rng.below(3))});
    Grammar g;
    g.silence = rng.below(2) == 1;
    g.silence_states = 1 + static_cast<int>(rng.below(2));
    const HmmModel hmm = build_hmm(lex, g);
    if (hmm.num_states() <= max_states) return hmm;
  }
}

}  // namespace

TEST_SUITE("hmm") {
  TEST_CASE("topology sizes") {
    const HmmModel one = build_hmm({{"a", 1}}, no_silence());
    CHECK(one.num_states() == 1);
    CHECK(one.transition(0, 0) == doctest::Approx(std::log(0.5)));

    const HmmModel two = build_hmm({{"a", 2}, {"b", 2}}, no_silence());
    CHECK(two.num_states() == 4);
    CHECK(two.transition(0, 1) == doctest::Approx(std::log(0.5)));
    CHECK(two.transition(2, 3) == doctest::Approx(std::log(0.5)));
    CHECK(two.transition(1, 2) == doctest::Approx(std::log(0.25)));
    CHECK(two.transition(0, 2) == kLogZero);
    CHECK(two.transition(1, 0) == doctest::Approx(std::log(0.25)));

    const HmmModel digits = build_hmm(digits_lexicon(), Grammar{});
    CHECK(digits.num_states() == 95);
    CHECK(digits.num_words() == 12);
    CHECK(digits.words().back().is_silence);
  }

  TEST_CASE("states are numbered in lexicon order with silence last") {
    const HmmModel hmm = build_hmm({{"x", 2}, {"y", 3}}, Grammar{});
    CHECK(hmm.words()[0].first_state == 0);
    CHECK(hmm.words()[1].first_state == 2);
    CHECK(hmm.words()[2].first_state == 5);
    CHECK(hmm.is_silence_state(7));
    CHECK(hmm.word_index("y") == 1);
    CHECK_THROWS_AS(hmm.word_index("z"), ValidationError);
  }

  TEST_CASE("decoding a chain traversed in order yields that word") {
    const HmmModel hmm = build_hmm({{"a", 3}, {"b", 3}}, no_silence());
    Eigen::MatrixXd lp = Eigen::MatrixXd::Constant(6, 6, std::log(1e-6));
    const int path[] = {3, 3, 4, 4, 5, 5};
    for (int t = 0; t < 6; ++t) lp(t, path[t]) = 0.0;
    const auto res = viterbi_decode(hmm, lp);
    CHECK(res.words == std::vector<std::string>{"b"});
    CHECK(res.path == std::vector<int>(std::begin(path), std::end(path)));
  }

  TEST_CASE("decode matches exhaustive enumeration") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      const HmmModel hmm = random_hmm(rng, 8);
      const int frames = 1 + static_cast<int>(rng.below(6));
      const Eigen::MatrixXd lp = random_log_posteriors(rng, frames, hmm.num_states());
      const auto oracle = oracle::brute_force(hmm, lp);
      if (oracle.path.empty()) {
        CHECK_THROWS_AS(viterbi_decode(hmm, lp), Error);
        continue;
      }
      const auto res = viterbi_decode(hmm, lp);
      CHECK(res.path == oracle.path);
      CHECK(res.score == doctest::Approx(oracle.score).epsilon(1e-12));
      CHECK(res.words == oracle::Topology(hmm).readout(oracle.path));
    }
  }

  TEST_CASE("decode ties go to the lower state index") {
    // Two one-state words with identical posteriors.
    const HmmModel hmm = build_hmm({{"a", 1}, {"b", 1}}, no_silence());
    const Eigen::MatrixXd lp = Eigen::MatrixXd::Constant(3, 2, std::log(0.5));
    const auto r1 = viterbi_decode(hmm, lp);
    const auto r2 = viterbi_decode(hmm, lp);
    CHECK(r1.path == std::vector<int>{0, 0, 0});
    CHECK(r1.path == r2.path);
  }

  TEST_CASE("a constant shift of the log-posteriors keeps the path") {
    Rng rng(5);
    const HmmModel hmm = build_hmm({{"a", 2}, {"b", 3}}, Grammar{});
    for (int k = 0; k < 20; ++k) {
      const Eigen::MatrixXd lp = random_log_posteriors(rng, 12, hmm.num_states());
      const auto a = viterbi_decode(hmm, lp);
      const auto b = viterbi_decode(hmm, (lp.array() - 7.25).matrix());
      CHECK(a.path == b.path);
    }
  }

  TEST_CASE("uniform alignment") {
    const HmmModel one2 = build_hmm({{"a", 2}}, no_silence());
    CHECK(uniform_alignment({"a"}, 4, one2).states == std::vector<int>{0, 0, 1, 1});
    const HmmModel one3 = build_hmm({{"a", 3}}, no_silence());
    CHECK(uniform_alignment({"a"}, 7, one3).states == std::vector<int>{0, 0, 0, 1, 1, 2, 2});
    const HmmModel two = build_hmm({{"a", 2}, {"b", 2}}, no_silence());
    CHECK(uniform_alignment({"b", "a"}, 8, two).states == std::vector<int>{2, 2, 3, 3, 0, 0, 1, 1});
    CHECK_THROWS_AS(uniform_alignment({"a", "b"}, 3, two), ValidationError);
  }

  TEST_CASE("forced alignment with as many frames as states is the chain itself") {
    Rng rng(3);
    const HmmModel hmm = build_hmm({{"a", 2}, {"b", 3}}, Grammar{});
    const Eigen::MatrixXd lp = random_log_posteriors(rng, 5, hmm.num_states());
    CHECK(forced_align(hmm, lp, {"a", "b"}).states == std::vector<int>{0, 1, 2, 3, 4});
  }

  TEST_CASE("forced alignment matches constrained enumeration") {
    Rng rng(17);
    int compared = 0;
    for (int trial = 0; trial < 200; ++trial) {
      const HmmModel hmm = random_hmm(rng, 8);
      const int frames = 1 + static_cast<int>(rng.below(6));
      const Eigen::MatrixXd lp = random_log_posteriors(rng, frames, hmm.num_states());
      std::vector<std::string> words;
      for (const auto& w : hmm.words())
        if (!w.is_silence) words.push_back(w.name);
      std::vector<std::string> transcript;
      const int len = 1 + static_cast<int>(rng.below(2));
      for (int i = 0; i < len; ++i) transcript.push_back(words[rng.below(words.size())]);
      const auto oracle = oracle::brute_force(hmm, lp, transcript);
      if (oracle.path.empty()) {
        CHECK_THROWS_AS(forced_align(hmm, lp, transcript), Error);
        continue;
      }
      const auto al = forced_align(hmm, lp, transcript);
      CHECK(al.states == oracle.path);
      CHECK(hmm.readout(al.states) == transcript);
      ++compared;
    }
    CHECK(compared > 50);
  }

  TEST_CASE("forced alignment follows a late state switch") {
    const HmmModel hmm = build_hmm({{"a", 2}}, no_silence());
    Eigen::MatrixXd lp(8, 2);
    for (int t = 0; t < 8; ++t) {
      const double p0 = t < 6 ? 0.9 : 0.1;
      lp(t, 0) = std::log(p0);
      lp(t, 1) = std::log(1.0 - p0);
    }
    const auto al = forced_align(hmm, lp, {"a"});
    CHECK(al.states == std::vector<int>{0, 0, 0, 0, 0, 0, 1, 1});
    CHECK(uniform_alignment({"a"}, 8, hmm).states != al.states);
  }

  TEST_CASE("schedule strings") {
    const Schedule s = Schedule::parse("15N+3V+15N");
    REQUIRE(s.phases.size() == 3);
    CHECK(s.phases[0].epochs == 15);
    CHECK_FALSE(s.phases[0].realign);
    CHECK(s.phases[1].realign);
    CHECK(s.total_epochs() == 33);
    CHECK(s.to_string() == "15N+3V+15N");
    CHECK_THROWS_AS(Schedule::parse("3X"), ValidationError);
    CHECK_THROWS_AS(Schedule::parse(""), ValidationError);
  }

  TEST_CASE("viterbi training without realignment equals plain training") {
    const auto toy = testutil::toy_task(2, 12);
    const AcousticNet init = AcousticNet::init(toy.arch, 4);
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.epochs = 4;
    tc.seed = 9;
    std::vector<Alignment> initial;
    for (const auto& u : toy.utterances)
      initial.push_back(uniform_alignment(u.transcript, static_cast<int>(u.features->rows()), toy.hmm));
    const auto vt = viterbi_training(toy.utterances, toy.hmm, init, tc, Schedule::parse("4N"), initial);
    const auto plain = train(init, make_labeled_frames(init, toy.utterances, initial), tc);
    CHECK(vt.net == plain.net);
  }

  TEST_CASE("viterbi training keeps valid alignments and settles") {
    const auto toy = testutil::toy_task(3, 16);
    TrainConfig tc;
    tc.learning_rate = 3e-3;
    tc.seed = 2;
    const auto res = viterbi_training(toy.utterances, toy.hmm, AcousticNet::init(toy.arch, 1), tc,
                                      Schedule::parse("4N+1V+2N+1V+2N+1V+2N"));
    REQUIRE(res.change_rates.size() == 3);
    for (double r : res.change_rates) CHECK(std::isfinite(r));
    CHECK(res.change_rates.back() <= res.change_rates.front());
    for (std::size_t i = 0; i < res.alignments.size(); ++i) {
      CHECK(toy.hmm.is_valid_path(res.alignments[i].states));
      CHECK(toy.hmm.readout(res.alignments[i].states) == toy.utterances[i].transcript);
    }
  }

  TEST_CASE("alignment and lexicon files round trip") {
    const auto dir = testutil::temp_dir("hmm_io");
    std::vector<Alignment> al = {{"u1", {0, 0, 1}}, {"u2", {2, 3, 3, 3}}};
    write_alignments(dir / "al.txt", al);
    const auto back = read_alignments(dir / "al.txt");
    REQUIRE(back.size() == 2);
    CHECK(back[1].utterance_id == "u2");
    CHECK(back[1].states == al[1].states);

    Grammar g;
    g.silence_states = 2;
    write_lexicon(dir / "lex.json", {{"a", 2}, {"b", 4}}, g);
    const auto [lex, g2] = read_lexicon(dir / "lex.json");
    REQUIRE(lex.size() == 2);
    CHECK(lex[1].num_states == 4);
    CHECK(g2.silence_states == 2);
  }
}
