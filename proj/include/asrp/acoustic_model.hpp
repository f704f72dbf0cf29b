// include/asrp/acoustic_model.hpp

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

#ifndef ASRP_ACOUSTIC_MODEL_HPP_
#define ASRP_ACOUSTIC_MODEL_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asrp/common.hpp"
#include "asrp/features.hpp"

namespace asrp {

/// Shape of a rectified-linear feed-forward acoustic model. The input layer
/// sees `feature_dim * (2 * context + 1)` values: the frame itself plus
/// `context` neighbours on each side (edge frames replicated).
struct NetArchitecture {
  std::vector<int> hidden_sizes;
  int output_size = 0;
  int feature_dim = 39;
  int context = 0;

  void validate() const;
  int input_dim() const { return feature_dim * (2 * context + 1); }
  std::size_t parameter_count() const;

  /// Named presets: "dnn2" [100,100], "dnn2plus" [200,100],
  /// "dnn3" [100,100,100], "dnn3plus" [400,300,200].
  static NetArchitecture preset(const std::string& name, int output_size, int feature_dim = 39,
                                int context = 0);
};

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 32;
  int epochs = 25;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Inverted dropout applied after the first hidden layer during training.
  double dropout_p = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
};

/// Frame-level input with aligned state labels, already spliced.
struct LabeledFrames {
  Eigen::MatrixXd inputs;  // frames x input_dim
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

struct NetOutput {
  Eigen::MatrixXd posteriors;      // frames x output_size
  Eigen::MatrixXd log_posteriors;  // frames x output_size
  Eigen::MatrixXd penultimate;     // frames x last hidden size
};

class AcousticNet {
 public:
  AcousticNet() = default;

  /// He-style uniform initialisation, U(-sqrt(6/fan_in), sqrt(6/fan_in)),
  /// zero biases. A pure function of (arch, seed).
  static AcousticNet init(const NetArchitecture& arch, std::uint64_t seed);

  const NetArchitecture& architecture() const { return arch_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  /// Stacks neighbouring frames into network input rows.
  Eigen::MatrixXd splice(const FeatureMatrix& features) const;
  /// Adjoint of splice(): folds a gradient over input rows back onto frames.
  FeatureMatrix unsplice_gradient(const Eigen::MatrixXd& input_grad, Eigen::Index frames) const;

  /// Inference on already-spliced rows (dropout disabled).
  NetOutput forward_inputs(const Eigen::MatrixXd& inputs) const;
  NetOutput forward(const FeatureMatrix& features) const { return forward_inputs(splice(features)); }

  /// Last hidden layer activations only.
  Eigen::MatrixXd penultimate(const Eigen::MatrixXd& inputs) const;

  /// Gradient of a scalar loss w.r.t. the input rows, given the loss gradient
  /// w.r.t. the penultimate activations of those rows.
  Eigen::MatrixXd penultimate_input_gradient(const Eigen::MatrixXd& inputs,
                                             const Eigen::MatrixXd& penultimate_grad) const;

  bool operator==(const AcousticNet& other) const;
  bool all_finite() const;

  void save(const std::filesystem::path& path) const;
  static AcousticNet load(const std::filesystem::path& path);

 private:
  NetArchitecture arch_;
  std::uint64_t seed_ = 0;
  std::vector<DenseLayer> layers_;
};

/// Bernoulli keep-mask with P(zero) = p, scaled by 1/(1-p) where kept.
Eigen::MatrixXd dropout_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols, double p);

/// Mini-batch Adam on per-frame cross-entropy against hard state labels.
/// Keeps optimizer state between calls so that several run_epochs() calls are
/// equivalent to one call with the summed epoch count.
class Trainer {
 public:
  Trainer(AcousticNet net, const TrainConfig& cfg);

  /// Runs `epochs` passes over `data`; returns the mean loss of each epoch.
  std::vector<double> run_epochs(const LabeledFrames& data, int epochs);

  const AcousticNet& net() const { return net_; }
  AcousticNet release() && { return std::move(net_); }

 private:
  double train_batch(const LabeledFrames& data, const std::vector<std::size_t>& order,
                     std::size_t begin, std::size_t end);

  AcousticNet net_;
  TrainConfig cfg_;
  Rng rng_;
  std::vector<DenseLayer> m_, v_;
  long step_ = 0;
};

struct TrainResult {
  AcousticNet net;
  std::vector<double> epoch_losses;
};

TrainResult train(const AcousticNet& net, const LabeledFrames& data, const TrainConfig& cfg);

/// Fraction of frames whose argmax posterior equals the label.
double frame_accuracy(const AcousticNet& net, const LabeledFrames& data);

}  // namespace asrp

#endif  // ASRP_ACOUSTIC_MODEL_HPP_
