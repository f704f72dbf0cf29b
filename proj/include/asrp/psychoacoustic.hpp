// include/asrp/psychoacoustic.hpp

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

#ifndef ASRP_PSYCHOACOUSTIC_HPP_
#define ASRP_PSYCHOACOUSTIC_HPP_

#include <Eigen/Dense>
#include <filesystem>
#include <optional>

#include "asrp/features.hpp"

namespace asrp {

/// Masking thresholds in dB on the time x frequency grid of a spectrogram.
using ThresholdMatrix = Eigen::MatrixXd;
/// Multiplicative gradient factors in [0, 1].
using ScaleMatrix = Eigen::MatrixXd;

/// Level floor used for bins where the poison equals the original.
constexpr double kPerturbationFloorDb = -200.0;

/// Parameters of the simplified masking model.
struct MaskingModel {
  int sample_rate = 16000;
  int dft_size = 512;
  /// Window length used for level calibration (a full-scale sinusoid maps to
  /// `full_scale_db`).
  int frame_length = 400;
  double full_scale_db = 96.0;
  /// Masker level minus this offset is the threshold at the masker itself.
  double masking_offset_db = 10.0;
  /// Spreading slopes in dB per Bark toward lower / higher frequencies.
  double slope_lower_db = 27.0;
  double slope_upper_db = 10.0;
};

double hz_to_bark(double hz);
/// Absolute threshold of hearing in quiet (dB SPL), Terhardt's approximation.
double threshold_in_quiet_db(double hz);

/// Per (t, q): max of the threshold in quiet and the strongest masker spread
/// over the Bark scale by a triangular spreading function. `power` must be a
/// power spectrogram of the original signal.
ThresholdMatrix hearing_thresholds(const Spectrogram& power, const MaskingModel& model = {});

/// D(t,q) = 20 log10(|poison - original| / max|original|); zero differences map
/// to kPerturbationFloorDb.
Eigen::MatrixXd perturbation_level(const ComplexSpectrogram& original,
                                   const ComplexSpectrogram& poison);

/// Min-max normalisation onto [0, 1]. A constant matrix maps to all ones,
/// except exact zeros which stay zero.
Eigen::MatrixXd minmax_normalize(const Eigen::MatrixXd& m);

/// zeta*(t,q) = H + margin - D where H + margin >= D, else 0.
Eigen::MatrixXd clipped_margin(const Eigen::MatrixXd& level_db, const ThresholdMatrix& thresholds,
                               double margin_db);

/// normalize(zeta*) .* normalize(H)
ScaleMatrix gradient_scale(const Eigen::MatrixXd& level_db, const ThresholdMatrix& thresholds,
                           double margin_db);

/// Elementwise product of a spectral gradient with a scale matrix.
Eigen::MatrixXd apply_scale(const Eigen::MatrixXd& spectral_gradient, const ScaleMatrix& scale);

/// Text matrix file: header "rows cols", then row-major values.
void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);

}  // namespace asrp

#endif  // ASRP_PSYCHOACOUSTIC_HPP_
