// include/asrp/attack.hpp

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

#ifndef ASRP_ATTACK_HPP_
#define ASRP_ATTACK_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "asrp/acoustic_model.hpp"
#include "asrp/corpus.hpp"
#include "asrp/features.hpp"
#include "asrp/hmm.hpp"
#include "asrp/metrics.hpp"
#include "asrp/room.hpp"

namespace asrp {

/// Move the penultimate representation of target frame `target_frame` from
/// state `original_state` (Y) towards `adversarial_state` (Z).
struct PoisonTask {
  int target_frame = 0;
  int original_state = 0;
  int adversarial_state = 0;

  bool operator==(const PoisonTask&) const = default;
};

struct PoisonFrame {
  std::size_t utterance = 0;  // index into the attacker's training set
  int frame = 0;

  bool operator==(const PoisonFrame&) const = default;
};

struct PoisonSet {
  /// Poison frames of each task, parallel to the task list.
  std::vector<std::vector<PoisonFrame>> frames;
  /// Unperturbed copies of every utterance holding a poison frame.
  std::map<std::size_t, Waveform> originals;

  std::size_t total_frames() const;
  /// Sorted indices of utterances holding poison frames.
  std::vector<std::size_t> utterances() const;
  /// Union of poison frame supports in utterance `u`, merged and sorted.
  std::vector<SampleRange> support(std::size_t u, const FrameConfig& frame) const;
};

/// Per-state frame counts of a set of alignments.
std::vector<long> state_frequencies(const std::vector<Alignment>& alignments, int num_states);

/// Frames [begin, end) of the first occurrence of `word` in a state path.
std::pair<int, int> word_span(const HmmModel& hmm, const std::vector<int>& path,
                              const std::string& word);

/// Relabels the span of `original_word` in `target_path` with a monotone path
/// through the states of `adversarial_word`. Frame counts follow the relative
/// state frequencies in `alignments` (largest-remainder rounding, at least one
/// frame per state). One task per frame of the span.
std::vector<PoisonTask> select_target_sequence(const HmmModel& hmm,
                                               const std::vector<Alignment>& alignments,
                                               const std::vector<int>& target_path,
                                               const std::string& original_word,
                                               const std::string& adversarial_word);

/// Splits `length` frames over states in proportion to `weights`.
std::vector<int> proportional_counts(const std::vector<double>& weights, int length);

/// ceil(freq * r_p), at least 1.
long poison_count(long freq, double r_p);

/// Nearest label-Z frames in penultimate space of `net`, disjoint across
/// tasks; ties break on (utterance, frame).
PoisonSet select_poison_frames(const HmmModel& hmm, const std::vector<FeatureMatrix>& features,
                               const std::vector<Alignment>& alignments,
                               const std::vector<PoisonTask>& tasks, double r_p,
                               const AcousticNet& net, const FeatureMatrix& target_features);

/// (1/2M) sum_m ||t_m - c_m||^2 / ||t_m||^2 where c_m is the mean of the rows of
/// poisons[m]. If `grad` is given it receives d loss / d poisons[m].
double bullseye_loss(const std::vector<Eigen::MatrixXd>& poisons,
                     const std::vector<Eigen::VectorXd>& targets,
                     std::vector<Eigen::MatrixXd>* grad = nullptr);

struct SurrogateConfig {
  NetArchitecture arch;
  TrainConfig train;
};

struct VictimConfig {
  NetArchitecture arch;
  TrainConfig train;
  Schedule schedule;
};

struct AttackConfig {
  double r_p = 0.01;
  int surrogates = 2;  // M
  int max_rounds = 10;  // Q
  int max_steps = 50;   // R
  double inner_lr = 1e-4;
  double convergence_delta = 1e-4;
  /// Psychoacoustic margin in dB; empty disables gradient scaling.
  std::optional<double> margin_db;
  SurrogateConfig surrogate;
  VictimConfig victim;
  int workers = 1;

  void validate() const;
};

struct VictimOutcome {
  bool success = false;
  double clean_accuracy = 0.0;
  std::vector<std::string> transcription;
  AcousticNet net;
};

/// Trains a victim from scratch with its own Viterbi schedule (uniform
/// bootstrap), decodes the target and scores the test set.
VictimOutcome evaluate_victim(const HmmModel& hmm, const std::vector<TrainingUtterance>& train,
                              const FeatureMatrix& target_features,
                              const std::vector<std::string>& adversarial_words,
                              const VictimConfig& cfg,
                              const std::vector<FeatureMatrix>& test_features,
                              const std::vector<std::vector<std::string>>& test_references,
                              std::uint64_t seed);

/// Everything the attacker and the victim share across trials: the frozen
/// attacker HMM (alignments and reference network), both training sets and
/// the test set with cached features.
class AttackEnvironment {
 public:
  AttackEnvironment(HmmModel hmm, FrameConfig frame, Dataset attacker_train,
                    std::vector<Alignment> alignments, AcousticNet reference, Dataset victim_train,
                    Dataset test);

  const HmmModel& hmm() const { return hmm_; }
  const FeatureExtractor& extractor() const { return extractor_; }
  const Dataset& attacker_train() const { return attacker_train_; }
  const std::vector<Alignment>& alignments() const { return alignments_; }
  const AcousticNet& reference() const { return reference_; }
  const Dataset& victim_train() const { return victim_train_; }
  const Dataset& test() const { return test_; }
  const std::vector<FeatureMatrix>& attacker_features() const { return attacker_features_; }
  const std::vector<FeatureMatrix>& victim_features() const { return victim_features_; }
  const std::vector<FeatureMatrix>& test_features() const { return test_features_; }
  const std::vector<std::vector<std::string>>& test_references() const { return test_refs_; }
  /// Largest absolute sample of the attacker's training set.
  double nu() const { return nu_; }

  /// Over-the-air rooms used to re-evaluate the target after the attack.
  void set_rooms(std::vector<std::string> names, std::vector<ImpulseResponse> irs);
  const std::vector<std::string>& room_names() const { return room_names_; }
  const std::vector<ImpulseResponse>& room_irs() const { return room_irs_; }

 private:
  HmmModel hmm_;
  FeatureExtractor extractor_;
  Dataset attacker_train_;
  std::vector<Alignment> alignments_;
  AcousticNet reference_;
  Dataset victim_train_;
  Dataset test_;
  std::vector<FeatureMatrix> attacker_features_, victim_features_, test_features_;
  std::vector<std::vector<std::string>> test_refs_;
  double nu_ = 0.0;
  std::vector<std::string> room_names_;
  std::vector<ImpulseResponse> room_irs_;
};

struct LossTracePoint {
  int round = 0;
  int step = 0;
  double loss = 0.0;
};

struct CraftResult {
  Dataset poisoned;  // attacker training set with perturbed poison audio
  std::vector<PoisonTask> tasks;
  PoisonSet poisons;
  AttackReport report;
  std::vector<LossTracePoint> loss_trace;
  AcousticNet victim;
};

/// Runs the attack against `target` (an utterance whose transcript contains
/// `original_word`). A victim is first trained on the clean data; if it
/// already outputs the adversarial sequence the run ends in round 1 without
/// crafting. Otherwise each round retrains the surrogates, runs the inner
/// optimisation on the poison audio and trains a fresh victim. If
/// `checkpoint` is non-empty, round WAVs, loss_trace.csv and report.json are
/// written there.
CraftResult craft_poisons(const AttackEnvironment& env, const Utterance& target,
                          const std::string& original_word, const std::string& adversarial_word,
                          const AttackConfig& cfg, std::uint64_t seed,
                          const std::filesystem::path& checkpoint = {});

/// Report (de)serialisation as JSON.
std::string report_to_json(const AttackReport& report);
AttackReport report_from_json(const std::string& text);

}  // namespace asrp

#endif  // ASRP_ATTACK_HPP_
