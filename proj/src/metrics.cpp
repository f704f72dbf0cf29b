// src/metrics.cpp

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

#include "asrp/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "asrp/common.hpp"

namespace asrp {

double snrseg(const Waveform& original, const Waveform& poisoned, std::size_t segment_length,
              const std::vector<SampleRange>& regions) {
  if (original.size() != poisoned.size())
    throw ValidationError("snrseg: signals differ in length");
  if (segment_length == 0) throw ValidationError("snrseg: segment length must be positive");
  const std::size_t n = original.size();
  double sum = 0.0;
  long k_used = 0;
  for (std::size_t begin = 0; begin < n; begin += segment_length) {
    const std::size_t end = std::min(n, begin + segment_length);
    if (!regions.empty()) {
      bool overlaps = false;
      for (const auto& [rb, re] : regions)
        if (rb < end && begin < re) {
          overlaps = true;
          break;
        }
      if (!overlaps) continue;
    }
    double sig = 0.0, noise = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const double x = original.samples[i];
      const double s = poisoned.samples[i] - x;
      sig += x * x;
      noise += s * s;
    }
    if (noise == 0.0) continue;
    sum += std::log10(sig / noise);
    ++k_used;
  }
  if (k_used == 0) throw Error("snrseg: no perturbation to measure");
  return 10.0 * sum / static_cast<double>(k_used);
}

double max_perturbation(const Waveform& original, const Waveform& poisoned, double nu) {
  if (original.size() != poisoned.size())
    throw ValidationError("max_perturbation: signals differ in length");
  if (!(nu > 0.0)) throw ValidationError("max_perturbation: nu must be positive");
  double m = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i)
    m = std::max(m, std::fabs(original.samples[i] / nu - poisoned.samples[i] / nu));
  return m;
}

WordAlignmentCounts align_words(const std::vector<std::string>& ref,
                                const std::vector<std::string>& hyp) {
  const std::size_t r = ref.size(), h = hyp.size();
  std::vector<std::vector<long>> d(r + 1, std::vector<long>(h + 1, 0));
  for (std::size_t i = 0; i <= r; ++i) d[i][0] = static_cast<long>(i);
  for (std::size_t j = 0; j <= h; ++j) d[0][j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= r; ++i)
    for (std::size_t j = 1; j <= h; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1), d[i][j - 1] + 1,
                          d[i - 1][j] + 1});

  WordAlignmentCounts c;
  c.n = static_cast<long>(r);
  std::size_t i = r, j = h;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const long sub = ref[i - 1] == hyp[j - 1] ? 0 : 1;
      if (d[i][j] == d[i - 1][j - 1] + sub) {
        c.substitutions += sub;
        --i;
        --j;
        continue;
      }
    }
    if (j > 0 && d[i][j] == d[i][j - 1] + 1) {
      ++c.insertions;
      --j;
      continue;
    }
    ++c.deletions;
    --i;
  }
  return c;
}

WordAccuracy word_accuracy(const std::vector<std::vector<std::string>>& references,
                           const std::vector<std::vector<std::string>>& hypotheses) {
  if (references.size() != hypotheses.size())
    throw ValidationError("word_accuracy: reference and hypothesis counts differ");
  WordAccuracy acc;
  for (std::size_t u = 0; u < references.size(); ++u)
    acc.counts += align_words(references[u], hypotheses[u]);
  const auto& c = acc.counts;
  if (c.n == 0) throw ValidationError("word_accuracy: no reference words");
  acc.percent = 100.0 * static_cast<double>(c.n - c.insertions - c.substitutions - c.deletions) /
                static_cast<double>(c.n);
  return acc;
}

double AttackReport::mean_snrseg() const {
  double s = 0.0;
  long k = 0;
  for (double v : snrseg_db)
    if (std::isfinite(v)) {
      s += v;
      ++k;
    }
  return k ? s / static_cast<double>(k) : std::nan("");
}

SummaryRow aggregate(const std::vector<AttackReport>& reports, const std::string& label) {
  if (reports.empty()) throw ValidationError("aggregate: no reports");
  SummaryRow row;
  row.label = label;
  row.trials = static_cast<int>(reports.size());
  double snr_sum = 0.0;
  long snr_count = 0;
  for (const auto& r : reports) {
    row.successes += r.success ? 1 : 0;
    row.clean_accuracy += r.clean_accuracy;
    row.baseline_accuracy += r.baseline_accuracy;
    row.poisoned_seconds += r.poisoned_seconds;
    row.poisoned_samples += static_cast<double>(r.poisoned_samples);
    row.delta_max += r.delta_max;
    row.attack_steps += r.rounds;
    row.wall_time_s += r.wall_time_s;
    const double s = r.mean_snrseg();
    if (std::isfinite(s)) {
      snr_sum += s;
      ++snr_count;
    }
  }
  const double n = row.trials;
  row.success_rate = 100.0 * row.successes / n;
  row.clean_accuracy /= n;
  row.baseline_accuracy /= n;
  row.poisoned_seconds /= n;
  row.poisoned_samples /= n;
  row.delta_max /= n;
  row.attack_steps /= n;
  row.wall_time_s /= n;
  row.snrseg_db = snr_count ? snr_sum / static_cast<double>(snr_count) : std::nan("");

  row.room_names = reports.front().room_names;
  row.room_success_rate.assign(row.room_names.size(), 0.0);
  for (const auto& r : reports) {
    if (r.room_names != row.room_names)
      throw ValidationError("aggregate: reports evaluated different rooms");
    for (std::size_t k = 0; k < r.room_success.size(); ++k)
      row.room_success_rate[k] += r.room_success[k] ? 100.0 / n : 0.0;
  }
  return row;
}

}  // namespace asrp
