// include/asrp/waveform.hpp

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

#ifndef ASRP_WAVEFORM_HPP_
#define ASRP_WAVEFORM_HPP_

#include <filesystem>
#include <string>
#include <vector>

namespace asrp {

/// Mono audio. Samples are nominally in [-1, 1]; writers clip explicitly via
/// clip_to_unit() rather than silently.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;
  std::string id;

  std::size_t size() const { return samples.size(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  /// Largest absolute sample value (0 for an empty waveform).
  double peak() const;
  /// Throws ValidationError if a sample is non-finite or the rate is invalid.
  void validate() const;
};

/// Clamps every sample to [-1, 1]. Returns the number of samples clipped.
std::size_t clip_to_unit(Waveform& w);

/// Reads a PCM 16-bit little-endian mono WAV file; samples are divided by
/// 32768.
Waveform read_wav(const std::filesystem::path& path);

/// Writes PCM 16-bit mono. Samples are scaled by 32768, rounded to nearest and
/// saturated to the int16 range.
void write_wav(const std::filesystem::path& path, const Waveform& w);

/// Rounds every sample onto the 16-bit grid so a write/read cycle is exact.
void quantize_to_pcm16(Waveform& w);

}  // namespace asrp

#endif  // ASRP_WAVEFORM_HPP_
