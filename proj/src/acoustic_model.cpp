// src/acoustic_model.cpp

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

#include "asrp/acoustic_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace asrp {

namespace {

constexpr char kCheckpointMagic[8] = {'A', 'S', 'R', 'P', 'N', 'E', 'T', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

Eigen::MatrixXd affine(const Eigen::MatrixXd& in, const DenseLayer& layer) {
  Eigen::MatrixXd z = in * layer.weights.transpose();
  z.rowwise() += layer.bias.transpose();
  return z;
}

Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

class Writer {
 public:
  explicit Writer(std::string& out) : out_(out) {}
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i32(int v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

 private:
  std::string& out_;
};

class Reader {
 public:
  Reader(const std::string& in, std::string name) : in_(in), name_(std::move(name)) {}
  std::uint64_t uint(int bytes) {
    if (pos_ + bytes > in_.size()) throw Error(name_ + ": truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += bytes;
    return v;
  }
  int i32() { return static_cast<int>(static_cast<std::uint32_t>(uint(4))); }
  double f64() { return std::bit_cast<double>(uint(8)); }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

void NetArchitecture::validate() const {
  if (hidden_sizes.empty()) throw ValidationError("network needs at least one hidden layer");
  for (int h : hidden_sizes)
    if (h < 1) throw ValidationError("hidden layer widths must be positive");
  if (output_size < 2) throw ValidationError("network output size must be >= 2");
  if (feature_dim < 1 || context < 0) throw ValidationError("invalid network input shape");
}

std::size_t NetArchitecture::parameter_count() const {
  std::size_t total = 0;
  int fan_in = input_dim();
  for (int h : hidden_sizes) {
    total += static_cast<std::size_t>(fan_in) * h + h;
    fan_in = h;
  }
  return total + static_cast<std::size_t>(fan_in) * output_size + output_size;
}

NetArchitecture NetArchitecture::preset(const std::string& name, int output_size,
                                        int feature_dim, int context) {
  NetArchitecture a;
  a.output_size = output_size;
  a.feature_dim = feature_dim;
  a.context = context;
  if (name == "dnn2") {
    a.hidden_sizes = {100, 100};
  } else if (name == "dnn2plus") {
    a.hidden_sizes = {200, 100};
  } else if (name == "dnn3") {
    a.hidden_sizes = {100, 100, 100};
  } else if (name == "dnn3plus") {
    a.hidden_sizes = {400, 300, 200};
  } else {
    throw ValidationError("unknown network preset '" + name + "'");
  }
  return a;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ValidationError("learning_rate must be >= 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ValidationError("dropout_p must be in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ValidationError("adam betas must be in [0, 1)");
}

AcousticNet AcousticNet::init(const NetArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  AcousticNet net;
  net.arch_ = arch;
  net.seed_ = seed;
  Rng rng(derive_seed(seed, 0x1a17));
  int fan_in = arch.input_dim();
  std::vector<int> widths = arch.hidden_sizes;
  widths.push_back(arch.output_size);
  for (int out : widths) {
    DenseLayer layer;
    layer.weights.resize(out, fan_in);
    const double limit = std::sqrt(6.0 / fan_in);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
        layer.weights(r, c) = rng.uniform(-limit, limit);
    layer.bias = Eigen::VectorXd::Zero(out);
    net.layers_.push_back(std::move(layer));
    fan_in = out;
  }
  return net;
}

Eigen::MatrixXd AcousticNet::splice(const FeatureMatrix& features) const {
  if (features.cols() != arch_.feature_dim)
    throw ValidationError("feature width " + std::to_string(features.cols()) +
                          " does not match network input width " +
                          std::to_string(arch_.feature_dim));
  const Eigen::Index frames = features.rows();
  const int ctx = arch_.context;
  if (ctx == 0) return features;
  Eigen::MatrixXd out(frames, arch_.input_dim());
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int o = -ctx; o <= ctx; ++o) {
      const Eigen::Index src = std::clamp<Eigen::Index>(t + o, 0, frames - 1);
      out.block(t, (o + ctx) * arch_.feature_dim, 1, arch_.feature_dim) = features.row(src);
    }
  }
  return out;
}

FeatureMatrix AcousticNet::unsplice_gradient(const Eigen::MatrixXd& input_grad,
                                             Eigen::Index frames) const {
  if (input_grad.cols() != arch_.input_dim() || input_grad.rows() != frames)
    throw ValidationError("unsplice_gradient: shape mismatch");
  const int ctx = arch_.context;
  if (ctx == 0) return input_grad;
  FeatureMatrix g = FeatureMatrix::Zero(frames, arch_.feature_dim);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int o = -ctx; o <= ctx; ++o) {
      const Eigen::Index dst = std::clamp<Eigen::Index>(t + o, 0, frames - 1);
      g.row(dst) += input_grad.block(t, (o + ctx) * arch_.feature_dim, 1, arch_.feature_dim);
    }
  }
  return g;
}

NetOutput AcousticNet::forward_inputs(const Eigen::MatrixXd& inputs) const {
  if (inputs.cols() != arch_.input_dim())
    throw ValidationError("input width " + std::to_string(inputs.cols()) +
                          " does not match network input width " +
                          std::to_string(arch_.input_dim()));
  NetOutput out;
  Eigen::MatrixXd h = inputs;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) h = relu(affine(h, layers_[l]));
  out.penultimate = h;
  out.log_posteriors = log_softmax_rows(affine(h, layers_.back()));
  out.posteriors = out.log_posteriors.array().exp();
  return out;
}

Eigen::MatrixXd AcousticNet::penultimate(const Eigen::MatrixXd& inputs) const {
  if (inputs.cols() != arch_.input_dim()) throw ValidationError("penultimate: input width mismatch");
  Eigen::MatrixXd h = inputs;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) h = relu(affine(h, layers_[l]));
  return h;
}

Eigen::MatrixXd AcousticNet::penultimate_input_gradient(
    const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& penultimate_grad) const {
  const std::size_t hidden = layers_.size() - 1;
  std::vector<Eigen::MatrixXd> pre(hidden);
  Eigen::MatrixXd h = inputs;
  for (std::size_t l = 0; l < hidden; ++l) {
    pre[l] = affine(h, layers_[l]);
    h = relu(pre[l]);
  }
  if (penultimate_grad.rows() != h.rows() || penultimate_grad.cols() != h.cols())
    throw ValidationError("penultimate gradient shape mismatch");
  Eigen::MatrixXd g = penultimate_grad;
  for (std::size_t l = hidden; l-- > 0;) {
    g = g.cwiseProduct((pre[l].array() > 0.0).cast<double>().matrix());
    g = g * layers_[l].weights;
  }
  return g;
}

bool AcousticNet::operator==(const AcousticNet& other) const {
  if (seed_ != other.seed_ || arch_.hidden_sizes != other.arch_.hidden_sizes ||
      arch_.output_size != other.arch_.output_size || arch_.feature_dim != other.arch_.feature_dim ||
      arch_.context != other.arch_.context || layers_.size() != other.layers_.size())
    return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].weights.rows() != other.layers_[l].weights.rows() ||
        layers_[l].weights.cols() != other.layers_[l].weights.cols())
      return false;
    if (std::memcmp(layers_[l].weights.data(), other.layers_[l].weights.data(),
                    sizeof(double) * layers_[l].weights.size()) != 0 ||
        std::memcmp(layers_[l].bias.data(), other.layers_[l].bias.data(),
                    sizeof(double) * layers_[l].bias.size()) != 0)
      return false;
  }
  return true;
}

bool AcousticNet::all_finite() const {
  for (const auto& l : layers_)
    if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

void AcousticNet::save(const std::filesystem::path& path) const {
  std::string buf(kCheckpointMagic, sizeof(kCheckpointMagic));
  Writer w(buf);
  w.u32(kCheckpointVersion);
  w.u64(seed_);
  w.i32(arch_.feature_dim);
  w.i32(arch_.context);
  w.i32(arch_.output_size);
  w.i32(static_cast<int>(arch_.hidden_sizes.size()));
  for (int h : arch_.hidden_sizes) w.i32(h);
  for (const auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.f64(layer.weights(r, c));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) w.f64(layer.bias[r]);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write checkpoint " + path.string());
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

AcousticNet AcousticNet::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(buf.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw Error(path.string() + ": not a network checkpoint");
  const std::string body = buf.substr(sizeof(kCheckpointMagic));
  Reader r(body, path.string());
  if (r.uint(4) != kCheckpointVersion) throw Error(path.string() + ": unsupported version");
  AcousticNet net;
  net.seed_ = r.uint(8);
  net.arch_.feature_dim = r.i32();
  net.arch_.context = r.i32();
  net.arch_.output_size = r.i32();
  const int nh = r.i32();
  if (nh < 1 || nh > 64) throw Error(path.string() + ": corrupt layer count");
  for (int i = 0; i < nh; ++i) net.arch_.hidden_sizes.push_back(r.i32());
  net.arch_.validate();
  int fan_in = net.arch_.input_dim();
  std::vector<int> widths = net.arch_.hidden_sizes;
  widths.push_back(net.arch_.output_size);
  for (int out : widths) {
    DenseLayer layer;
    layer.weights.resize(out, fan_in);
    layer.bias.resize(out);
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(i, c) = r.f64();
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = r.f64();
    net.layers_.push_back(std::move(layer));
    fan_in = out;
  }
  if (!r.done()) throw Error(path.string() + ": trailing bytes in checkpoint");
  return net;
}

Eigen::MatrixXd dropout_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols, double p) {
  Eigen::MatrixXd mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - p);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) mask(r, c) = rng.uniform() < p ? 0.0 : keep_scale;
  return mask;
}

Trainer::Trainer(AcousticNet net, const TrainConfig& cfg)
    : net_(std::move(net)), cfg_(cfg), rng_(derive_seed(cfg.seed, 0x7a1)) {
  cfg_.validate();
  for (const auto& l : net_.layers()) {
    m_.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()),
                  Eigen::VectorXd::Zero(l.bias.size())});
    v_.push_back(m_.back());
  }
}

double Trainer::train_batch(const LabeledFrames& data, const std::vector<std::size_t>& order,
                            std::size_t begin, std::size_t end) {
  const auto batch = static_cast<Eigen::Index>(end - begin);
  auto& layers = net_.mutable_layers();
  const std::size_t hidden = layers.size() - 1;

  Eigen::MatrixXd x(batch, data.inputs.cols());
  for (Eigen::Index i = 0; i < batch; ++i) x.row(i) = data.inputs.row(static_cast<Eigen::Index>(order[begin + i]));

  // Forward, keeping pre-activations and the dropout mask.
  std::vector<Eigen::MatrixXd> acts(hidden + 1), pre(hidden);
  Eigen::MatrixXd mask;
  acts[0] = std::move(x);
  for (std::size_t l = 0; l < hidden; ++l) {
    pre[l] = affine(acts[l], layers[l]);
    acts[l + 1] = relu(pre[l]);
    if (l == 0 && cfg_.dropout_p > 0.0) {
      mask = dropout_mask(rng_, acts[1].rows(), acts[1].cols(), cfg_.dropout_p);
      acts[1] = acts[1].cwiseProduct(mask);
    }
  }
  const Eigen::MatrixXd logp = log_softmax_rows(affine(acts[hidden], layers.back()));

  double loss = 0.0;
  Eigen::MatrixXd g = logp.array().exp();
  for (Eigen::Index i = 0; i < batch; ++i) {
    const int y = data.labels[order[begin + i]];
    loss -= logp(i, y);
    g(i, y) -= 1.0;
  }
  g /= static_cast<double>(batch);

  std::vector<DenseLayer> grads(layers.size());
  for (std::size_t l = layers.size(); l-- > 0;) {
    grads[l].weights = g.transpose() * acts[l];
    grads[l].bias = g.colwise().sum().transpose();
    if (l == 0) break;
    g = g * layers[l].weights;
    if (l == 1 && cfg_.dropout_p > 0.0) g = g.cwiseProduct(mask);
    g = g.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
  }

  ++step_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  const double lr = cfg_.learning_rate;
  auto update = [&](auto& param, auto& m, auto& v, const auto& grad) {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.adam_eps);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weights, m_[l].weights, v_[l].weights, grads[l].weights);
    update(layers[l].bias, m_[l].bias, v_[l].bias, grads[l].bias);
  }
  return loss;
}

std::vector<double> Trainer::run_epochs(const LabeledFrames& data, int epochs) {
  if (data.size() == 0) throw ValidationError("cannot train on an empty dataset");
  if (static_cast<std::size_t>(data.inputs.rows()) != data.size())
    throw ValidationError("training inputs and labels differ in length");
  const int classes = net_.architecture().output_size;
  for (int y : data.labels)
    if (y < 0 || y >= classes) throw ValidationError("training label out of range");

  std::vector<double> losses;
  std::vector<std::size_t> order(data.size());
  for (int e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.below(i)]);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg_.batch_size))
      total += train_batch(data, order, b, std::min(order.size(), b + cfg_.batch_size));
    losses.push_back(total / static_cast<double>(order.size()));
  }
  return losses;
}

TrainResult train(const AcousticNet& net, const LabeledFrames& data, const TrainConfig& cfg) {
  Trainer trainer(net, cfg);
  TrainResult result;
  result.epoch_losses = trainer.run_epochs(data, cfg.epochs);
  result.net = std::move(trainer).release();
  return result;
}

double frame_accuracy(const AcousticNet& net, const LabeledFrames& data) {
  if (data.size() == 0) return 0.0;
  const NetOutput out = net.forward_inputs(data.inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Eigen::Index best;
    out.posteriors.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
    if (best == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace asrp
