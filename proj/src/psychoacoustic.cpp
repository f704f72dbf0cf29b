// src/psychoacoustic.cpp

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

#include "asrp/psychoacoustic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "asrp/common.hpp"

namespace asrp {

double hz_to_bark(double hz) {
  return 13.0 * std::atan(0.00076 * hz) + 3.5 * std::atan((hz / 7500.0) * (hz / 7500.0));
}

double threshold_in_quiet_db(double hz) {
  const double khz = std::max(hz, 20.0) / 1000.0;
  return 3.64 * std::pow(khz, -0.8) - 6.5 * std::exp(-0.6 * (khz - 3.3) * (khz - 3.3)) +
         1e-3 * std::pow(khz, 4.0);
}

ThresholdMatrix hearing_thresholds(const Spectrogram& power, const MaskingModel& model) {
  if (!power.is_power) throw ValidationError("hearing_thresholds expects a power spectrogram");
  const Eigen::Index frames = power.values.rows(), bins = power.values.cols();
  const double calibration = model.full_scale_db - 20.0 * std::log10(model.frame_length / 4.0);

  std::vector<double> bark(static_cast<std::size_t>(bins)), quiet(static_cast<std::size_t>(bins));
  for (Eigen::Index k = 0; k < bins; ++k) {
    const double hz = static_cast<double>(k) * model.sample_rate / model.dft_size;
    bark[k] = hz_to_bark(hz);
    quiet[k] = threshold_in_quiet_db(hz);
  }

  ThresholdMatrix h(frames, bins);
  std::vector<double> level(static_cast<std::size_t>(bins));
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index k = 0; k < bins; ++k) {
      const double p = power.values(t, k);
      level[k] = p > 0.0 ? 10.0 * std::log10(p) + calibration
                         : -std::numeric_limits<double>::infinity();
    }
    for (Eigen::Index i = 0; i < bins; ++i) {
      double masked = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < bins; ++j) {
        if (!std::isfinite(level[j])) continue;
        const double dz = bark[i] - bark[j];
        const double spread = dz < 0.0 ? model.slope_lower_db * dz : -model.slope_upper_db * dz;
        masked = std::max(masked, level[j] - model.masking_offset_db + spread);
      }
      h(t, i) = std::max(quiet[i], masked);
    }
  }
  return h;
}

Eigen::MatrixXd perturbation_level(const ComplexSpectrogram& original,
                                   const ComplexSpectrogram& poison) {
  if (original.rows() != poison.rows() || original.cols() != poison.cols())
    throw ValidationError("perturbation_level: spectrogram shapes differ");
  const double peak = original.cwiseAbs().maxCoeff();
  if (!(peak > 0.0)) throw ValidationError("perturbation_level: original spectrum is all zero");
  Eigen::MatrixXd d(original.rows(), original.cols());
  for (Eigen::Index t = 0; t < d.rows(); ++t)
    for (Eigen::Index k = 0; k < d.cols(); ++k) {
      const double diff = std::abs(poison(t, k) - original(t, k));
      d(t, k) = diff > 0.0 ? 20.0 * std::log10(diff / peak) : kPerturbationFloorDb;
    }
  return d;
}

Eigen::MatrixXd minmax_normalize(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return m;
  const double lo = m.minCoeff(), hi = m.maxCoeff();
  if (hi > lo) return (m.array() - lo) / (hi - lo);
  return m.unaryExpr([](double v) { return v == 0.0 ? 0.0 : 1.0; });
}

Eigen::MatrixXd clipped_margin(const Eigen::MatrixXd& level_db, const ThresholdMatrix& thresholds,
                               double margin_db) {
  if (level_db.rows() != thresholds.rows() || level_db.cols() != thresholds.cols())
    throw ValidationError("perturbation level and thresholds differ in shape");
  return (thresholds.array() + margin_db - level_db.array()).cwiseMax(0.0);
}

ScaleMatrix gradient_scale(const Eigen::MatrixXd& level_db, const ThresholdMatrix& thresholds,
                           double margin_db) {
  const Eigen::MatrixXd zeta = clipped_margin(level_db, thresholds, margin_db);
  return minmax_normalize(zeta).cwiseProduct(minmax_normalize(thresholds));
}

Eigen::MatrixXd apply_scale(const Eigen::MatrixXd& spectral_gradient, const ScaleMatrix& scale) {
  if (spectral_gradient.rows() != scale.rows() || spectral_gradient.cols() != scale.cols())
    throw ValidationError("apply_scale: gradient and scale differ in shape");
  return spectral_gradient.cwiseProduct(scale);
}

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw Error("cannot write matrix file " + path.string());
  f << m.rows() << ' ' << m.cols() << '\n' << std::setprecision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) f << (c ? " " : "") << m(r, c);
    f << '\n';
  }
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open matrix file " + path.string());
  Eigen::Index rows = -1, cols = -1;
  if (!(f >> rows >> cols) || rows < 0 || cols < 0)
    throw Error(path.string() + ": missing 'rows cols' header");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      if (!(f >> m(r, c))) throw Error(path.string() + ": expected " + std::to_string(rows * cols) + " values");
  return m;
}

}  // namespace asrp
