// include/asrp/experiment.hpp

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

#ifndef ASRP_EXPERIMENT_HPP_
#define ASRP_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "asrp/attack.hpp"
#include "asrp/corpus.hpp"
#include "asrp/features.hpp"
#include "asrp/metrics.hpp"
#include "asrp/room.hpp"

namespace asrp {

/// Network, optimiser and data settings of one party (attacker or victim).
struct PartyConfig {
  NetArchitecture arch;  // output_size is filled in from the lexicon
  TrainConfig train;
  /// Viterbi schedule used to train this party's system from scratch.
  Schedule schedule;
  /// "all", "split1" or "split2" of the training speakers.
  std::string split = "all";
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int trials = 10;
  int workers = 1;

  CorpusSpec corpus;
  /// External manifests; when set they replace the synthetic corpus.
  std::string train_manifest;
  std::string test_manifest;
  FrameConfig frame;
  Grammar grammar;

  PartyConfig attacker;
  PartyConfig victim;

  // Sweep axes.
  std::vector<double> budgets{0.01};
  std::vector<int> surrogate_counts{2};
  std::vector<std::optional<double>> margins{std::nullopt};

  int max_rounds = 10;
  int max_steps = 50;
  double inner_lr = 2e-3;
  double convergence_delta = 1e-4;

  bool rooms_enabled = false;
  std::vector<RoomSpec> rooms;

  /// Desk-scale defaults used when a field is absent from the config file.
  static ExperimentConfig desk_default();
  void validate() const;
};

/// Parses a JSON config; absent fields keep desk_default() values.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Every field, defaults included.
std::string experiment_config_to_json(const ExperimentConfig& cfg);

/// FNV-1a over the bytes of `text`.
std::uint64_t fnv1a64(const std::string& text);

struct SweepPoint {
  double r_p = 0.01;
  int surrogates = 2;
  std::optional<double> margin_db;

  std::string label() const;
  /// Directory-safe variant of label().
  std::string slug() const;
};

std::vector<SweepPoint> sweep_points(const ExperimentConfig& cfg);

struct TrialRecord {
  SweepPoint point;
  int trial = 0;
  AttackReport report;
};

struct ReportBundle {
  std::vector<SweepPoint> points;
  std::vector<TrialRecord> trials;
  std::vector<SummaryRow> summary;  // one per point
};

/// Clean corpus, attacker baseline and victim settings of one experiment.
struct PreparedExperiment {
  Dataset train;
  Dataset test;
  HmmModel hmm;
  std::unique_ptr<AttackEnvironment> env;
  ViterbiTrainingResult attacker_baseline;
  double attacker_accuracy = 0.0;
  /// Test utterances eligible as targets, in trial order.
  std::vector<std::size_t> targets;
};

/// Loads or generates the corpus, trains the frozen attacker system and
/// selects single-word targets the attacker system transcribes correctly.
PreparedExperiment prepare_experiment(const ExperimentConfig& cfg);

/// Target and adversarial word of trial `k`.
std::pair<std::size_t, std::string> trial_target(const ExperimentConfig& cfg, const PreparedExperiment& prep,
                                                 int k);

struct RunOptions {
  std::filesystem::path out;
  bool resume = false;
  /// Only the first sweep point (the `attack` subcommand).
  bool first_point_only = false;
  std::function<void(const std::string&)> log;
};

/// Runs every sweep point x trial, writes per-trial artifacts under
/// `options.out` and the summary files, and returns the bundle.
ReportBundle run_experiment(const ExperimentConfig& cfg, const RunOptions& options);

/// summary.csv (deterministic columns), trials.csv, timing.csv and summary.txt.
void emit_report(const ReportBundle& bundle, const std::filesystem::path& out);

/// Rebuilds a bundle from the report.json files under `out`.
ReportBundle collect_reports(const std::filesystem::path& out);

/// Aligned text table of the summary rows.
std::string format_summary_table(const std::vector<SummaryRow>& rows, const std::vector<SweepPoint>& points);

}  // namespace asrp

#endif  // ASRP_EXPERIMENT_HPP_
