// include/asrp/room.hpp

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

#ifndef ASRP_ROOM_HPP_
#define ASRP_ROOM_HPP_

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "asrp/waveform.hpp"

namespace asrp {

using Vec3 = std::array<double, 3>;

/// Shoebox room with one omnidirectional source and microphone.
struct RoomSpec {
  std::string name;
  Vec3 dimensions{};
  Vec3 mic{};
  Vec3 speaker{};
  double rt60 = 0.4;
  int sample_rate = 16000;
  double sound_speed = 343.0;

  void validate() const;
  double volume() const { return dimensions[0] * dimensions[1] * dimensions[2]; }
  double surface() const;
  double source_distance() const;
};

struct ImpulseResponse {
  std::vector<double> taps;
  int sample_rate = 16000;
  /// Sample index of the direct-path arrival.
  std::size_t direct_delay = 0;
};

/// Pressure reflection coefficient for every wall, from Eyring's formula
/// RT60 = 0.161 V / (-S ln(1 - alpha)) with beta = sqrt(1 - alpha).
double eyring_reflection(const RoomSpec& spec);

struct RirOptions {
  /// Maximum reflection order per axis; -1 derives it from the IR length.
  int max_order = -1;
  /// IR length before truncation in seconds; <= 0 selects 1.5 * rt60.
  double length_s = 0.0;
  /// Truncate once the remaining energy falls this far below the total.
  double truncate_db = 60.0;
  /// Refinements of the Eyring coefficient against the Schroeder-measured
  /// decay of the rendered IR; 0 keeps the Eyring value.
  int calibration_steps = 4;
};

/// Allen-Berkley image-source impulse response with 1/r decay and
/// fractional delays rendered through an 8-tap Hann-windowed sinc. The
/// wall coefficient starts from eyring_reflection() and is rescaled in the
/// log domain by measured/configured RT60 until they agree within 1 %.
ImpulseResponse simulate_rir(const RoomSpec& spec, const RirOptions& options = {});

/// Schroeder backward-integrated energy decay curve in dB (0 at the start).
std::vector<double> schroeder_curve(const std::vector<double>& ir);

/// Reverberation time from a linear fit of the decay curve between -5 dB and
/// `-5 - range_db`, extrapolated to 60 dB.
double estimate_rt60(const std::vector<double>& ir, int sample_rate, double range_db = 20.0);

/// Full linear convolution.
std::vector<double> convolve(const std::vector<double>& x, const std::vector<double>& h);

/// Plays `w` through `rir`: convolves, trims to len(w) starting at the direct
/// path onset, and rescales to the input peak.
Waveform transmit(const Waveform& w, const ImpulseResponse& rir);

/// Room grid config (JSON):
///   {"rooms": [{"name": "...", "dimensions": [x,y,z], "mic": [..],
///               "speaker": [..], "rt60": [0.4, 0.6, 0.8, 1.0]}]}
/// Each listed RT produces one RoomSpec.
std::vector<RoomSpec> read_room_grid(const std::filesystem::path& path);
/// Same as read_room_grid() on JSON text; rt60 may be a number or a list.
std::vector<RoomSpec> parse_room_grid(const std::string& text);
void write_room_grid(const std::filesystem::path& path, const std::vector<RoomSpec>& rooms);

/// The three rooms of the over-the-air evaluation, each at RT 0.4/0.6/0.8/1.0.
std::vector<RoomSpec> default_room_grid();

}  // namespace asrp

#endif  // ASRP_ROOM_HPP_
