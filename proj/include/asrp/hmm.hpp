// include/asrp/hmm.hpp

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

#ifndef ASRP_HMM_HPP_
#define ASRP_HMM_HPP_

#include <Eigen/Dense>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "asrp/acoustic_model.hpp"

namespace asrp {

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

struct LexiconEntry {
  std::string word;
  int num_states = 1;
};

/// Loop grammar: any word may follow any word, with an optional silence model
/// appended after the lexicon.
struct Grammar {
  bool silence = true;
  std::string silence_word = "sil";
  int silence_states = 3;
};

struct WordModel {
  std::string name;
  int num_states = 0;
  int first_state = 0;
  bool is_silence = false;

  int last_state() const { return first_state + num_states - 1; }
};

/// Words compiled into left-to-right state chains. Global state numbering
/// follows lexicon order, then chain order; the silence word (if any) comes
/// last. Each state has a self-loop and an advance edge (log 0.5 each); the
/// last state of a word exits with log 0.5 split uniformly over the first
/// states of all words.
class HmmModel {
 public:
  const std::vector<WordModel>& words() const { return words_; }
  int num_states() const { return static_cast<int>(state_word_.size()); }
  int num_words() const { return static_cast<int>(words_.size()); }
  int word_of_state(int s) const { return state_word_[s]; }
  int position_in_word(int s) const { return s - words_[state_word_[s]].first_state; }
  bool is_word_initial(int s) const { return position_in_word(s) == 0; }
  bool is_word_final(int s) const { return s == words_[state_word_[s]].last_state(); }
  int silence_index() const { return silence_; }
  bool is_silence_state(int s) const { return silence_ >= 0 && state_word_[s] == silence_; }

  /// Throws ValidationError for unknown words.
  int word_index(const std::string& word) const;

  double log_self() const { return log_self_; }
  double log_advance() const { return log_advance_; }
  double log_exit() const { return log_exit_; }
  double log_initial(int s) const { return is_word_initial(s) ? log_initial_ : kLogZero; }

  /// Score of the best edge i -> j (kLogZero if none). Self-loops dominate a
  /// restart of a one-state word.
  double transition(int from, int to) const;
  /// True if moving from -> to starts a new word (as opposed to staying inside
  /// the current one).
  bool starts_word(int from, int to) const;
  /// Predecessors of each state, sorted by state index.
  const std::vector<std::vector<std::pair<int, double>>>& predecessors() const { return preds_; }

  /// Word readout of a state path, silence removed.
  std::vector<std::string> readout(const std::vector<int>& path) const;
  /// Full readout including silence words.
  std::vector<int> readout_words(const std::vector<int>& path) const;
  bool is_valid_path(const std::vector<int>& path) const;

  friend HmmModel build_hmm(const std::vector<LexiconEntry>& lexicon, const Grammar& grammar);

 private:
  std::vector<WordModel> words_;
  std::vector<int> state_word_;
  std::vector<std::vector<std::pair<int, double>>> preds_;
  std::map<std::string, int> index_;
  int silence_ = -1;
  double log_self_ = 0.0, log_advance_ = 0.0, log_exit_ = 0.0, log_initial_ = 0.0;
};

HmmModel build_hmm(const std::vector<LexiconEntry>& lexicon, const Grammar& grammar);

/// Lexicon with per-word state counts that sum, together with a three-state
/// silence model, to 95 states.
std::vector<LexiconEntry> digits_lexicon();

struct Alignment {
  std::string utterance_id;
  std::vector<int> states;
};

struct DecodeResult {
  std::vector<std::string> words;
  std::vector<int> path;
  double score = kLogZero;
};

/// Exact max-sum Viterbi over log-posteriors (frames x states) plus log
/// transition scores. Ties are broken toward the lower state index.
DecodeResult viterbi_decode(const HmmModel& hmm, const Eigen::MatrixXd& log_posteriors);

/// Evenly distributes n_frames over the concatenated state chain of
/// `transcript`; earlier states take the remainder.
Alignment uniform_alignment(const std::vector<std::string>& transcript, int n_frames,
                            const HmmModel& hmm);

/// Viterbi restricted to paths whose (silence-free) readout equals the
/// transcript. Optional silence is allowed before, between and after words.
Alignment forced_align(const HmmModel& hmm, const Eigen::MatrixXd& log_posteriors,
                       const std::vector<std::string>& transcript);

/// Training phases such as "15N+3V+15N": N epochs train on the current
/// alignment, V epochs realign with the current network first.
struct Phase {
  int epochs = 0;
  bool realign = false;
};

struct Schedule {
  std::vector<Phase> phases;

  static Schedule parse(const std::string& text);
  std::string to_string() const;
  int total_epochs() const;
};

/// One training utterance as seen by the acoustic model.
struct TrainingUtterance {
  std::string id;
  const FeatureMatrix* features = nullptr;
  std::vector<std::string> transcript;
};

/// Builds frame/label pairs by splicing each utterance for `net`.
LabeledFrames make_labeled_frames(const AcousticNet& net,
                                  const std::vector<TrainingUtterance>& utterances,
                                  const std::vector<Alignment>& alignments);

struct ViterbiTrainingResult {
  AcousticNet net;
  std::vector<Alignment> alignments;
  std::vector<double> epoch_losses;
  /// Fraction of frames whose label changed, one entry per realignment.
  std::vector<double> change_rates;
};

/// Alternates acoustic training with forced realignment. Starts from
/// `initial` alignments or, when empty, from uniform alignments (with
/// leading/trailing silence when the HMM has a silence model).
ViterbiTrainingResult viterbi_training(const std::vector<TrainingUtterance>& utterances,
                                       const HmmModel& hmm, const AcousticNet& net,
                                       const TrainConfig& cfg, const Schedule& schedule,
                                       std::vector<Alignment> initial = {});

/// Alignment file: one "utt_id frame_idx state_idx" line per frame.
void write_alignments(const std::filesystem::path& path, const std::vector<Alignment>& alignments);
std::vector<Alignment> read_alignments(const std::filesystem::path& path);

/// Lexicon/grammar config as JSON:
///   {"words": [{"word": "one", "states": 4}, ...],
///    "silence": {"enabled": true, "word": "sil", "states": 3}}
void write_lexicon(const std::filesystem::path& path, const std::vector<LexiconEntry>& lexicon,
                   const Grammar& grammar);
std::pair<std::vector<LexiconEntry>, Grammar> read_lexicon(const std::filesystem::path& path);

}  // namespace asrp

#endif  // ASRP_HMM_HPP_
