// include/asrp/metrics.hpp

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

#ifndef ASRP_METRICS_HPP_
#define ASRP_METRICS_HPP_

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "asrp/waveform.hpp"

namespace asrp {

/// Segment length for SNRseg: 12.5 ms, i.e. 200 samples at 16 kHz.
constexpr std::size_t snr_segment_length(int sample_rate) {
  return static_cast<std::size_t>(sample_rate) / 80;
}

using SampleRange = std::pair<std::size_t, std::size_t>;  // [begin, end)

/// Segmental SNR in dB, (10/K) sum_k log10(sum x^2 / sum sigma^2) with
/// sigma = poisoned - original. Segments are consecutive blocks of
/// `segment_length` samples (the last one may be shorter). If `regions` is
/// non-empty only segments overlapping a region are considered. Segments
/// without noise are excluded from K; throws if none remain.
double snrseg(const Waveform& original, const Waveform& poisoned, std::size_t segment_length = 200,
              const std::vector<SampleRange>& regions = {});

/// max_n |x_n / nu - y_n / nu|
double max_perturbation(const Waveform& original, const Waveform& poisoned, double nu);

struct WordAlignmentCounts {
  long n = 0;  // reference words
  long insertions = 0;
  long substitutions = 0;
  long deletions = 0;

  WordAlignmentCounts& operator+=(const WordAlignmentCounts& o) {
    n += o.n;
    insertions += o.insertions;
    substitutions += o.substitutions;
    deletions += o.deletions;
    return *this;
  }
};

/// Minimum edit alignment of one utterance. Among equal-cost alignments the
/// backtrace prefers substitution (or match), then insertion, then deletion.
WordAlignmentCounts align_words(const std::vector<std::string>& reference,
                                const std::vector<std::string>& hypothesis);

struct WordAccuracy {
  double percent = 0.0;
  WordAlignmentCounts counts;
};

/// (N - I - S - D) / N * 100 accumulated over paired utterances.
WordAccuracy word_accuracy(const std::vector<std::vector<std::string>>& references,
                           const std::vector<std::vector<std::string>>& hypotheses);

/// Outcome of one attack trial.
struct AttackReport {
  std::string target_id;
  std::string original_word;
  std::string adversarial_word;
  bool success = false;
  int rounds = 0;
  long inner_steps = 0;
  double wall_time_s = 0.0;
  double poisoned_seconds = 0.0;
  long poisoned_samples = 0;  // poison frames
  std::vector<double> snrseg_db;  // one per poisoned file
  double delta_max = 0.0;
  double clean_accuracy = 0.0;
  /// Clean accuracy of a victim trained before any poisoning.
  double baseline_accuracy = 0.0;
  std::vector<std::string> transcription;
  /// Over-the-air results, one per evaluated room.
  std::vector<std::string> room_names;
  std::vector<bool> room_success;

  double mean_snrseg() const;
};

struct SummaryRow {
  std::string label;
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;
  double clean_accuracy = 0.0;
  double baseline_accuracy = 0.0;
  double poisoned_seconds = 0.0;
  double poisoned_samples = 0.0;
  double snrseg_db = 0.0;
  double delta_max = 0.0;
  double attack_steps = 0.0;
  double wall_time_s = 0.0;
  /// Over-the-air success rate (%) per room, in the order of the reports.
  std::vector<std::string> room_names;
  std::vector<double> room_success_rate;
};

/// Success rate in percent and field means over `reports`; SNRseg is averaged
/// over trials with a finite value.
SummaryRow aggregate(const std::vector<AttackReport>& reports, const std::string& label = "");

}  // namespace asrp

#endif  // ASRP_METRICS_HPP_
