// src/features.cpp

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

#include "asrp/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <unsupported/Eigen/FFT>

#include "asrp/common.hpp"

namespace asrp {

namespace {

Eigen::FFT<double>& thread_fft() {
  thread_local Eigen::FFT<double> fft = [] {
    Eigen::FFT<double> f;
    f.SetFlag(Eigen::FFT<double>::Unscaled);
    return f;
  }();
  return fft;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

// One-sided DFT of a windowed frame, zero-padded to dft_size.
void frame_dft(const double* samples, const std::vector<double>& window, int dft_size,
               std::complex<double>* out) {
  thread_local std::vector<double> buf;
  thread_local std::vector<std::complex<double>> spec;
  buf.assign(static_cast<std::size_t>(dft_size), 0.0);
  for (std::size_t n = 0; n < window.size(); ++n) buf[n] = samples[n] * window[n];
  thread_fft().fwd(spec, buf);
  for (int k = 0; k <= dft_size / 2; ++k) out[k] = spec[static_cast<std::size_t>(k)];
}

}  // namespace

void FrameConfig::validate() const {
  if (!(hop_length > 0 && hop_length <= frame_length && frame_length <= dft_size))
    throw ValidationError("frame config: need 0 < hop_length <= frame_length <= dft_size");
  if (n_ceps < 1 || n_mel < 1 || n_ceps > n_mel)
    throw ValidationError("frame config: need 1 <= n_ceps <= n_mel");
  if (delta_window < 1) throw ValidationError("frame config: delta_window must be >= 1");
  if (!(log_floor > 0.0)) throw ValidationError("frame config: log_floor must be positive");
}

int FrameConfig::num_frames(std::size_t num_samples) const {
  if (num_samples < static_cast<std::size_t>(frame_length))
    throw ValidationError("signal of " + std::to_string(num_samples) +
                          " samples is shorter than one frame (" +
                          std::to_string(frame_length) + ")");
  return static_cast<int>((num_samples - frame_length) / hop_length) + 1;
}

std::vector<double> make_window(WindowType type, int length) {
  std::vector<double> w(static_cast<std::size_t>(length), 1.0);
  if (type == WindowType::kHann && length > 1) {
    for (int n = 0; n < length; ++n)
      w[n] = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / (length - 1));
  }
  return w;
}

std::vector<std::vector<double>> frame_signal(const Waveform& w, const FrameConfig& cfg) {
  cfg.validate();
  const int count = cfg.num_frames(w.size());
  std::vector<std::vector<double>> frames(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto begin = w.samples.begin() + static_cast<std::ptrdiff_t>(i) * cfg.hop_length;
    frames[i].assign(begin, begin + cfg.frame_length);
  }
  return frames;
}

Spectrogram power_spectrum(const std::vector<std::vector<double>>& frames,
                           const FrameConfig& cfg) {
  cfg.validate();
  if (frames.empty()) throw ValidationError("power_spectrum: no frames");
  const auto window = make_window(cfg.window, cfg.frame_length);
  const int bins = cfg.num_bins();
  Spectrogram out;
  out.values.resize(static_cast<Eigen::Index>(frames.size()), bins);
  out.frame_starts.resize(frames.size());
  std::vector<std::complex<double>> row(static_cast<std::size_t>(bins));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].size() != static_cast<std::size_t>(cfg.frame_length))
      throw ValidationError("power_spectrum: frame length mismatch");
    frame_dft(frames[t].data(), window, cfg.dft_size, row.data());
    for (int k = 0; k < bins; ++k) out.values(static_cast<Eigen::Index>(t), k) = std::norm(row[k]);
    out.frame_starts[t] = t * static_cast<std::size_t>(cfg.hop_length);
  }
  return out;
}

ComplexSpectrogram stft(const Waveform& w, const FrameConfig& cfg) {
  cfg.validate();
  const int count = cfg.num_frames(w.size());
  const auto window = make_window(cfg.window, cfg.frame_length);
  ComplexSpectrogram out(count, cfg.num_bins());
  std::vector<std::complex<double>> row(static_cast<std::size_t>(cfg.num_bins()));
  for (int t = 0; t < count; ++t) {
    frame_dft(w.samples.data() + static_cast<std::size_t>(t) * cfg.hop_length, window,
              cfg.dft_size, row.data());
    for (int k = 0; k < cfg.num_bins(); ++k) out(t, k) = row[k];
  }
  return out;
}

Spectrogram magnitude(const ComplexSpectrogram& spec) {
  Spectrogram out;
  out.values = spec.cwiseAbs();
  out.is_power = false;
  return out;
}

Eigen::MatrixXd mel_filterbank(const FrameConfig& cfg, int sample_rate) {
  const int bins = cfg.num_bins();
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  const double step = mel_max / (cfg.n_mel + 1);
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.n_mel, bins);
  for (int m = 0; m < cfg.n_mel; ++m) {
    const double left = m * step, center = (m + 1) * step, right = (m + 2) * step;
    for (int k = 0; k < bins; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * sample_rate / cfg.dft_size);
      if (mel > left && mel < right)
        fb(m, k) = mel <= center ? (mel - left) / (center - left) : (right - mel) / (right - center);
    }
  }
  return fb;
}

Eigen::MatrixXd dct_matrix(int n_ceps, int n_mel) {
  Eigen::MatrixXd d(n_ceps, n_mel);
  for (int i = 0; i < n_ceps; ++i) {
    const double scale = i == 0 ? std::sqrt(1.0 / n_mel) : std::sqrt(2.0 / n_mel);
    for (int j = 0; j < n_mel; ++j) d(i, j) = scale * std::cos(M_PI * i * (j + 0.5) / n_mel);
  }
  return d;
}

Eigen::MatrixXd compute_deltas(const Eigen::MatrixXd& x, int window) {
  const Eigen::Index rows = x.rows();
  double denom = 0.0;
  for (int n = 1; n <= window; ++n) denom += 2.0 * n * n;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows, x.cols());
  for (Eigen::Index t = 0; t < rows; ++t) {
    for (int n = 1; n <= window; ++n) {
      const Eigen::Index ahead = std::min<Eigen::Index>(t + n, rows - 1);
      const Eigen::Index behind = std::max<Eigen::Index>(t - n, 0);
      d.row(t) += n * (x.row(ahead) - x.row(behind));
    }
  }
  return d / denom;
}

Eigen::MatrixXd compute_deltas_adjoint(const Eigen::MatrixXd& grad, int window) {
  const Eigen::Index rows = grad.rows();
  double denom = 0.0;
  for (int n = 1; n <= window; ++n) denom += 2.0 * n * n;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(rows, grad.cols());
  for (Eigen::Index t = 0; t < rows; ++t) {
    for (int n = 1; n <= window; ++n) {
      const Eigen::Index ahead = std::min<Eigen::Index>(t + n, rows - 1);
      const Eigen::Index behind = std::max<Eigen::Index>(t - n, 0);
      g.row(ahead) += (n / denom) * grad.row(t);
      g.row(behind) -= (n / denom) * grad.row(t);
    }
  }
  return g;
}

FeatureExtractor::FeatureExtractor(const FrameConfig& cfg, int sample_rate)
    : cfg_(cfg), sample_rate_(sample_rate) {
  cfg_.validate();
  if (sample_rate <= 0) throw ValidationError("sample rate must be positive");
  window_ = make_window(cfg_.window, cfg_.frame_length);
  mel_ = mel_filterbank(cfg_, sample_rate_);
  dct_ = dct_matrix(cfg_.n_ceps, cfg_.n_mel);
}

void FeatureExtractor::compute_frame(const Waveform& w, int t, FeatureTrace& tr) const {
  const int bins = cfg_.num_bins();
  thread_local std::vector<std::complex<double>> row;
  row.resize(static_cast<std::size_t>(bins));
  frame_dft(w.samples.data() + static_cast<std::size_t>(t) * cfg_.hop_length, window_,
            cfg_.dft_size, row.data());
  Eigen::VectorXd power(bins);
  for (int k = 0; k < bins; ++k) {
    tr.spectrum(t, k) = row[k];
    power[k] = std::norm(row[k]);
  }
  Eigen::VectorXd energies = mel_ * power;
  tr.mel.row(t) = energies.transpose();
  Eigen::VectorXd logmel = energies.unaryExpr([&](double e) { return std::log(std::max(cfg_.log_floor, e)); });
  tr.statics.row(t) = (dct_ * logmel).transpose();
}

FeatureTrace FeatureExtractor::trace(const Waveform& w) const {
  if (w.sample_rate != sample_rate_)
    throw ValidationError("waveform '" + w.id + "' has sample rate " +
                          std::to_string(w.sample_rate) + ", extractor expects " +
                          std::to_string(sample_rate_));
  const int count = cfg_.num_frames(w.size());
  FeatureTrace tr;
  tr.num_samples = w.size();
  tr.spectrum.resize(count, cfg_.num_bins());
  tr.mel.resize(count, cfg_.n_mel);
  tr.statics.resize(count, cfg_.n_ceps);
  for (int t = 0; t < count; ++t) compute_frame(w, t, tr);
  const Eigen::MatrixXd d1 = compute_deltas(tr.statics, cfg_.delta_window);
  const Eigen::MatrixXd d2 = compute_deltas(d1, cfg_.delta_window);
  tr.features.resize(count, cfg_.feature_dim());
  tr.features << tr.statics, d1, d2;
  return tr;
}

FeatureMatrix FeatureExtractor::extract(const Waveform& w) const { return trace(w).features; }

void FeatureExtractor::refresh(FeatureTrace& tr, const Waveform& w, std::size_t begin,
                               std::size_t end) const {
  if (w.size() != tr.num_samples) throw ValidationError("refresh: waveform length changed");
  if (begin >= end) return;
  const auto count = static_cast<int>(tr.statics.rows());
  const int hop = cfg_.hop_length, len = cfg_.frame_length;
  // Frame t overlaps [begin, end) iff t*hop < end and t*hop + len > begin.
  const int first = begin + 1 > static_cast<std::size_t>(len)
                        ? static_cast<int>((begin + 1 - len + hop - 1) / hop)
                        : 0;
  const int last = std::min(count - 1, static_cast<int>((end - 1) / hop));
  for (int t = first; t <= last; ++t) compute_frame(w, t, tr);
  const Eigen::MatrixXd d1 = compute_deltas(tr.statics, cfg_.delta_window);
  const Eigen::MatrixXd d2 = compute_deltas(d1, cfg_.delta_window);
  tr.features << tr.statics, d1, d2;
}

std::vector<double> FeatureExtractor::backward(const FeatureTrace& tr,
                                               const FeatureMatrix& upstream,
                                               const Eigen::MatrixXd* spectral_scale) const {
  const Eigen::Index count = tr.features.rows();
  const int nc = cfg_.n_ceps;
  if (upstream.rows() != count || upstream.cols() != tr.features.cols())
    throw ValidationError("feature gradient has shape " + std::to_string(upstream.rows()) + "x" +
                          std::to_string(upstream.cols()) + ", expected " +
                          std::to_string(count) + "x" + std::to_string(tr.features.cols()));
  if (spectral_scale != nullptr &&
      (spectral_scale->rows() != count || spectral_scale->cols() != cfg_.num_bins()))
    throw ValidationError("spectral scale shape does not match the spectrogram");

  // features = [C, D C, D D C]  =>  dC = G0 + D^T (G1 + D^T G2)
  const Eigen::MatrixXd g2 = upstream.middleCols(2 * nc, nc);
  const Eigen::MatrixXd g1 =
      upstream.middleCols(nc, nc) + compute_deltas_adjoint(g2, cfg_.delta_window);
  const Eigen::MatrixXd gc = upstream.leftCols(nc) + compute_deltas_adjoint(g1, cfg_.delta_window);

  std::vector<double> grad(tr.num_samples, 0.0);
  const int bins = cfg_.num_bins();
  const int n = cfg_.dft_size;
  thread_local std::vector<std::complex<double>> coeffs;
  thread_local std::vector<std::complex<double>> time;
  for (Eigen::Index t = 0; t < count; ++t) {
    if (gc.row(t).isZero(0.0)) continue;
    const Eigen::VectorXd g_log = dct_.transpose() * gc.row(t).transpose();
    Eigen::VectorXd g_mel(cfg_.n_mel);
    for (int m = 0; m < cfg_.n_mel; ++m) {
      const double e = tr.mel(t, m);
      g_mel[m] = e > cfg_.log_floor ? g_log[m] / e : 0.0;
    }
    const Eigen::VectorXd g_pow = mel_.transpose() * g_mel;
    // d|X_k|^2 / dX_k (as a complex pair) is 2 X_k.
    coeffs.assign(static_cast<std::size_t>(n), {0.0, 0.0});
    for (int k = 0; k < bins; ++k) {
      double c = 2.0 * g_pow[k];
      if (spectral_scale != nullptr) c *= (*spectral_scale)(t, k);
      coeffs[k] = c * tr.spectrum(t, k);
    }
    thread_fft().inv(time, coeffs);
    double* out = grad.data() + t * cfg_.hop_length;
    for (int i = 0; i < cfg_.frame_length; ++i) out[i] += time[i].real() * window_[i];
  }
  return grad;
}

FeatureMatrix extract_features(const Waveform& w, const FrameConfig& cfg) {
  return FeatureExtractor(cfg, w.sample_rate).extract(w);
}

std::vector<double> feature_gradient_to_waveform(const Waveform& w, const FrameConfig& cfg,
                                                 const FeatureMatrix& upstream) {
  const FeatureExtractor fx(cfg, w.sample_rate);
  return fx.backward(fx.trace(w), upstream);
}

}  // namespace asrp
