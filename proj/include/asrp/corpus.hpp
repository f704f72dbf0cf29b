// include/asrp/corpus.hpp

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

#ifndef ASRP_CORPUS_HPP_
#define ASRP_CORPUS_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "asrp/hmm.hpp"
#include "asrp/waveform.hpp"

namespace asrp {

struct Utterance {
  Waveform audio;  // audio.id is the utterance id
  std::vector<std::string> transcript;
  std::string speaker;

  const std::string& id() const { return audio.id; }
};

struct Dataset {
  std::vector<Utterance> utterances;
  std::string split;       // "train", "test", ...
  std::string provenance;  // "synthetic:<seed>" or the manifest path

  std::size_t size() const { return utterances.size(); }
  /// Sorted unique speaker ids.
  std::vector<std::string> speakers() const;
  /// Index of utterance `id`, or -1.
  long find(const std::string& id) const;
  /// Checks id uniqueness and, if `vocabulary` is non-empty, transcripts.
  void validate(const std::vector<std::string>& vocabulary = {}) const;
  /// Largest absolute sample over all utterances.
  double peak() const;
};

/// One stationary stretch of a synthetic word: two sinusoidal bands.
struct ToneSegment {
  double f1 = 0.0;
  double f2 = 0.0;
  double duration_s = 0.1;
};

struct WordRecipe {
  std::string word;
  std::vector<ToneSegment> segments;
};

struct CorpusSpec {
  std::vector<WordRecipe> vocabulary;
  int n_speakers = 10;
  int utterances_per_speaker = 30;
  int min_words = 1;
  int max_words = 3;
  double amplitude = 0.3;
  double noise_floor = 0.02;   // std of the additive Gaussian floor
  double pitch_jitter = 0.15;  // per-speaker relative frequency shift
  double duration_jitter = 0.15;
  double pause_min_s = 0.05;
  double pause_max_s = 0.15;
  double edge_silence_s = 0.15;
  double train_fraction = 0.5;
  int sample_rate = 16000;
  std::uint64_t seed = 1;

  void validate() const;
  std::vector<std::string> words() const;
  /// One HMM state per tone segment.
  std::vector<LexiconEntry> lexicon() const;

  /// Four words with four segments each.
  static CorpusSpec desk_default();
};

/// Renders every utterance from seed-derived streams and splits speakers
/// into train and test.
std::pair<Dataset, Dataset> generate_corpus(const CorpusSpec& spec, int workers = 1);

/// Manifest CSV with header "path,transcript,speaker"; relative paths resolve
/// against the manifest's directory. Transcripts are space separated.
Dataset load_external(const std::filesystem::path& manifest,
                      const std::vector<std::string>& vocabulary = {}, int sample_rate = 16000);

/// Sorted speaker ids, first round(fraction * n) speakers go to the first part.
std::pair<Dataset, Dataset> split_speakers(const Dataset& dataset, double fraction);

/// Writes <dir>/<speaker>/<id>.wav and <dir>/manifest.csv.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);

}  // namespace asrp

#endif  // ASRP_CORPUS_HPP_
