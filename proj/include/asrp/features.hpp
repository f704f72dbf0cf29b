// include/asrp/features.hpp

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

#ifndef ASRP_FEATURES_HPP_
#define ASRP_FEATURES_HPP_

#include <Eigen/Dense>
#include <vector>

#include "asrp/waveform.hpp"

namespace asrp {

enum class WindowType { kHann, kRectangular };

/// Framing and MFCC parameters. Defaults are the usual 25 ms / 10 ms ASR
/// front end at 16 kHz.
struct FrameConfig {
  int frame_length = 400;
  int hop_length = 160;
  int dft_size = 512;
  int n_mel = 23;
  int n_ceps = 13;
  int delta_window = 2;
  WindowType window = WindowType::kHann;
  double log_floor = 1e-10;

  void validate() const;
  int num_bins() const { return dft_size / 2 + 1; }
  int feature_dim() const { return 3 * n_ceps; }
  /// floor((len - frame_length) / hop) + 1; throws if len < frame_length.
  int num_frames(std::size_t num_samples) const;
};

/// Rows are frames, columns are [static cepstra | delta | delta-delta].
using FeatureMatrix = Eigen::MatrixXd;

/// time x frequency; `is_power` distinguishes |X|^2 from |X|.
struct Spectrogram {
  Eigen::MatrixXd values;
  bool is_power = true;
  std::vector<std::size_t> frame_starts;
};

using ComplexSpectrogram = Eigen::MatrixXcd;

/// Raw (unwindowed) frames; frame i covers [i*hop, i*hop + frame_length).
std::vector<std::vector<double>> frame_signal(const Waveform& w, const FrameConfig& cfg);

/// |DFT|^2 of each windowed, zero-padded frame over dft_size/2 + 1 bins.
Spectrogram power_spectrum(const std::vector<std::vector<double>>& frames,
                           const FrameConfig& cfg);

/// Complex one-sided STFT on the same grid as power_spectrum().
ComplexSpectrogram stft(const Waveform& w, const FrameConfig& cfg);

Spectrogram magnitude(const ComplexSpectrogram& spec);

std::vector<double> make_window(WindowType type, int length);

/// Triangular Mel filters, n_mel x num_bins, spanning 0 Hz to Nyquist (HTK
/// Mel scale).
Eigen::MatrixXd mel_filterbank(const FrameConfig& cfg, int sample_rate);

/// Orthonormal DCT-II truncated to n_ceps rows (n_ceps x n_mel).
Eigen::MatrixXd dct_matrix(int n_ceps, int n_mel);

/// Regression deltas over +/-window frames with edge replication.
Eigen::MatrixXd compute_deltas(const Eigen::MatrixXd& x, int window);

/// Adjoint of compute_deltas: maps a gradient w.r.t. the deltas back onto x.
Eigen::MatrixXd compute_deltas_adjoint(const Eigen::MatrixXd& grad, int window);

/// Intermediate values of one forward pass, kept for the backward pass and for
/// cheap partial recomputation when only a few samples change.
struct FeatureTrace {
  ComplexSpectrogram spectrum;  // frames x bins, windowed DFT
  Eigen::MatrixXd mel;          // frames x n_mel, linear filterbank energies
  Eigen::MatrixXd statics;      // frames x n_ceps
  FeatureMatrix features;       // frames x 3*n_ceps
  std::size_t num_samples = 0;
};

/// Differentiable MFCC front end:
///   frame -> window -> |DFT|^2 -> Mel -> log(max(eps, .)) -> DCT-II -> +delta,
///   +delta-delta.
/// Construction precomputes the window, filterbank and DCT; all methods are
/// const and safe to call concurrently.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const FrameConfig& cfg, int sample_rate = 16000);

  const FrameConfig& config() const { return cfg_; }
  int sample_rate() const { return sample_rate_; }

  FeatureMatrix extract(const Waveform& w) const;
  FeatureTrace trace(const Waveform& w) const;

  /// Recomputes every frame that overlaps samples [begin, end) and refreshes
  /// the delta columns.
  void refresh(FeatureTrace& tr, const Waveform& w, std::size_t begin, std::size_t end) const;

  /// Chain rule from a gradient over the feature matrix back to the samples.
  /// Overlapping frame contributions are summed. If `spectral_scale` is given
  /// (frames x bins), it multiplies the gradient at the complex-spectrum stage,
  /// i.e. between the DFT and the magnitude.
  std::vector<double> backward(const FeatureTrace& tr, const FeatureMatrix& upstream,
                               const Eigen::MatrixXd* spectral_scale = nullptr) const;

 private:
  void compute_frame(const Waveform& w, int frame, FeatureTrace& tr) const;

  FrameConfig cfg_;
  int sample_rate_;
  std::vector<double> window_;
  Eigen::MatrixXd mel_;
  Eigen::MatrixXd dct_;
};

FeatureMatrix extract_features(const Waveform& w, const FrameConfig& cfg);

std::vector<double> feature_gradient_to_waveform(const Waveform& w, const FrameConfig& cfg,
                                                 const FeatureMatrix& upstream);

}  // namespace asrp

#endif  // ASRP_FEATURES_HPP_
