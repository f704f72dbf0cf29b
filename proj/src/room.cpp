// src/room.cpp

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

#include "asrp/room.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>
#include <unsupported/Eigen/FFT>

#include "asrp/common.hpp"

namespace asrp {

namespace {

constexpr int kSincHalfWidth = 4;  // 8 taps

double windowed_sinc(double x) {
  if (std::fabs(x) >= kSincHalfWidth) return 0.0;
  const double window = 0.5 * (1.0 + std::cos(M_PI * x / kSincHalfWidth));
  if (x == 0.0) return 1.0;
  return window * std::sin(M_PI * x) / (M_PI * x);
}

std::string vec_str(const Vec3& v) {
  std::ostringstream ss;
  ss << v[0] << "x" << v[1] << "x" << v[2];
  return ss.str();
}

}  // namespace

void RoomSpec::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (!(dimensions[i] > 0.0)) throw ValidationError("room '" + name + "': dimensions must be positive");
    if (!(mic[i] > 0.0 && mic[i] < dimensions[i]))
      throw ValidationError("room '" + name + "': microphone " + vec_str(mic) + " outside room " + vec_str(dimensions));
    if (!(speaker[i] > 0.0 && speaker[i] < dimensions[i]))
      throw ValidationError("room '" + name + "': speaker " + vec_str(speaker) + " outside room " + vec_str(dimensions));
  }
  if (!(rt60 > 0.0)) throw ValidationError("room '" + name + "': rt60 must be positive");
  if (sample_rate <= 0 || !(sound_speed > 0.0))
    throw ValidationError("room '" + name + "': invalid sample rate or sound speed");
}

double RoomSpec::surface() const {
  const auto& d = dimensions;
  return 2.0 * (d[0] * d[1] + d[0] * d[2] + d[1] * d[2]);
}

double RoomSpec::source_distance() const {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += (speaker[i] - mic[i]) * (speaker[i] - mic[i]);
  return std::sqrt(s);
}

double eyring_reflection(const RoomSpec& spec) {
  // beta = sqrt(1 - alpha) = exp(ln(1 - alpha) / 2)
  const double log_one_minus_alpha = -0.161 * spec.volume() / (spec.surface() * spec.rt60);
  return std::exp(0.5 * log_one_minus_alpha);
}

namespace {

ImpulseResponse render_rir(const RoomSpec& spec, const RirOptions& options, double beta) {
  const double direct = spec.source_distance();

  const double fs = spec.sample_rate;
  const double c = spec.sound_speed;
  const double length_s = options.length_s > 0.0 ? options.length_s : 1.5 * spec.rt60;
  const auto length = static_cast<std::size_t>(std::ceil(length_s * fs + direct / c * fs)) + kSincHalfWidth + 1;
  const double max_dist = c * static_cast<double>(length) / fs;

  std::vector<double> h(length, 0.0);
  std::array<int, 3> bound{};
  for (int a = 0; a < 3; ++a)
    bound[a] = static_cast<int>(std::ceil(max_dist / (2.0 * spec.dimensions[a]))) + 1;

  // Per-axis image offsets and reflection counts for (l, u).
  struct AxisImage {
    double offset;
    int reflections;
  };
  std::array<std::vector<AxisImage>, 3> axes;
  for (int a = 0; a < 3; ++a) {
    for (int l = -bound[a]; l <= bound[a]; ++l)
      for (int u = 0; u <= 1; ++u) {
        const double pos = (1 - 2 * u) * spec.speaker[a] + 2.0 * l * spec.dimensions[a];
        axes[a].push_back({pos - spec.mic[a], std::abs(l - u) + std::abs(l)});
      }
  }

  for (const auto& ix : axes[0]) {
    const double dx2 = ix.offset * ix.offset;
    if (dx2 > max_dist * max_dist) continue;
    for (const auto& iy : axes[1]) {
      const double dxy2 = dx2 + iy.offset * iy.offset;
      if (dxy2 > max_dist * max_dist) continue;
      for (const auto& iz : axes[2]) {
        const int order = ix.reflections + iy.reflections + iz.reflections;
        if (options.max_order >= 0 && order > options.max_order) continue;
        const double dist = std::sqrt(dxy2 + iz.offset * iz.offset);
        if (dist > max_dist) continue;
        const double amp = std::pow(beta, order) / (4.0 * M_PI * dist);
        const double delay = dist / c * fs;
        const auto centre = static_cast<long>(std::floor(delay));
        for (long n = centre - kSincHalfWidth + 1; n <= centre + kSincHalfWidth; ++n) {
          if (n < 0 || n >= static_cast<long>(length)) continue;
          h[static_cast<std::size_t>(n)] += amp * windowed_sinc(static_cast<double>(n) - delay);
        }
      }
    }
  }

  ImpulseResponse ir;
  ir.sample_rate = spec.sample_rate;
  ir.direct_delay = static_cast<std::size_t>(std::lround(direct / c * fs));

  // Truncate where the remaining energy drops truncate_db below the total.
  double total = 0.0;
  for (double v : h) total += v * v;
  const double limit = total * std::pow(10.0, -options.truncate_db / 10.0);
  double tail = total;
  std::size_t cut = h.size();
  for (std::size_t n = 0; n < h.size(); ++n) {
    if (n > ir.direct_delay && tail < limit) {
      cut = n;
      break;
    }
    tail -= h[n] * h[n];
  }
  h.resize(cut);
  ir.taps = std::move(h);
  return ir;
}

}  // namespace

ImpulseResponse simulate_rir(const RoomSpec& spec, const RirOptions& options) {
  spec.validate();
  if (spec.source_distance() < 1e-9)
    throw ValidationError("room '" + spec.name + "': speaker and microphone coincide");
  double log_beta = std::log(eyring_reflection(spec));
  ImpulseResponse ir = render_rir(spec, options, std::exp(log_beta));
  for (int step = 0; step < options.calibration_steps; ++step) {
    double measured = 0.0;
    try {
      measured = estimate_rt60(ir.taps, ir.sample_rate);
    } catch (const Error&) {
      break;
    }
    if (std::fabs(measured - spec.rt60) <= 0.01 * spec.rt60) break;
    // Decay rate in dB/s is proportional to -ln(beta).
    log_beta *= measured / spec.rt60;
    ir = render_rir(spec, options, std::exp(log_beta));
  }
  return ir;
}

std::vector<double> schroeder_curve(const std::vector<double>& ir) {
  std::vector<double> energy(ir.size(), 0.0);
  double acc = 0.0;
  for (std::size_t n = ir.size(); n-- > 0;) {
    acc += ir[n] * ir[n];
    energy[n] = acc;
  }
  std::vector<double> db(ir.size());
  const double total = acc > 0.0 ? acc : 1.0;
  for (std::size_t n = 0; n < ir.size(); ++n)
    db[n] = energy[n] > 0.0 ? 10.0 * std::log10(energy[n] / total) : -std::numeric_limits<double>::infinity();
  return db;
}

double estimate_rt60(const std::vector<double>& ir, int sample_rate, double range_db) {
  const auto curve = schroeder_curve(ir);
  const double hi = -5.0, lo = -5.0 - range_db;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve[i] > hi || curve[i] < lo) continue;
    const double x = static_cast<double>(i) / sample_rate;
    sx += x;
    sy += curve[i];
    sxx += x * x;
    sxy += x * curve[i];
    ++n;
  }
  if (n < 2) throw Error("estimate_rt60: decay curve does not span the fit range");
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  if (!(slope < 0.0)) throw Error("estimate_rt60: decay curve is not decreasing");
  return -60.0 / slope;
}

std::vector<double> convolve(const std::vector<double>& x, const std::vector<double>& h) {
  if (x.empty() || h.empty()) return {};
  const std::size_t out_len = x.size() + h.size() - 1;
  std::vector<double> y(out_len, 0.0);
  if (x.size() * h.size() <= 1u << 20) {
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < h.size(); ++j) y[i + j] += x[i] * h[j];
    return y;
  }
  std::size_t n = 1;
  while (n < out_len) n <<= 1;
  Eigen::FFT<double> fft;
  std::vector<double> a(n, 0.0), b(n, 0.0);
  std::copy(x.begin(), x.end(), a.begin());
  std::copy(h.begin(), h.end(), b.begin());
  std::vector<std::complex<double>> fa, fb;
  fft.fwd(fa, a);
  fft.fwd(fb, b);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  std::vector<double> full;
  fft.inv(full, fa);
  std::copy(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(out_len), y.begin());
  return y;
}

Waveform transmit(const Waveform& w, const ImpulseResponse& rir) {
  if (rir.taps.empty()) throw ValidationError("transmit: empty impulse response");
  if (rir.sample_rate != w.sample_rate)
    throw ValidationError("transmit: impulse response and waveform sample rates differ");
  const std::vector<double> full = convolve(w.samples, rir.taps);
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.id = w.id;
  out.samples.assign(w.size(), 0.0);
  for (std::size_t i = 0; i < w.size() && i + rir.direct_delay < full.size(); ++i)
    out.samples[i] = full[i + rir.direct_delay];
  const double in_peak = w.peak(), out_peak = out.peak();
  if (out_peak > 0.0 && in_peak > 0.0) {
    const double g = in_peak / out_peak;
    for (double& s : out.samples) s *= g;
  }
  return out;
}

std::vector<RoomSpec> default_room_grid() {
  struct Row {
    const char* name;
    Vec3 dims, mic, speaker;
  };
  const Row rows[] = {
      {"room1", {10.7, 6.9, 2.6}, {1.0, 4.5, 1.3}, {8.1, 3.3, 1.4}},
      {"room2", {4.6, 6.9, 3.1}, {3.8, 3.2, 1.2}, {3.8, 5.3, 1.0}},
      {"room3", {7.5, 4.6, 3.1}, {0.4, 0.9, 1.1}, {6.9, 1.9, 2.6}},
  };
  std::vector<RoomSpec> grid;
  for (const auto& r : rows)
    for (double rt : {0.4, 0.6, 0.8, 1.0}) {
      RoomSpec s;
      s.name = r.name;
      s.dimensions = r.dims;
      s.mic = r.mic;
      s.speaker = r.speaker;
      s.rt60 = rt;
      grid.push_back(s);
    }
  return grid;
}

std::vector<RoomSpec> parse_room_grid(const std::string& text) {
  std::vector<RoomSpec> grid;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& r : j.at("rooms")) {
      RoomSpec base;
      base.name = r.value("name", std::string("room") + std::to_string(grid.size()));
      base.dimensions = r.at("dimensions").get<Vec3>();
      base.mic = r.at("mic").get<Vec3>();
      base.speaker = r.at("speaker").get<Vec3>();
      base.sample_rate = r.value("sample_rate", 16000);
      base.sound_speed = r.value("sound_speed", 343.0);
      const auto& rts = r.at("rt60");
      const auto list = rts.is_array() ? rts.get<std::vector<double>>() : std::vector<double>{rts.get<double>()};
      for (double rt : list) {
        RoomSpec s = base;
        s.rt60 = rt;
        s.validate();
        grid.push_back(s);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("room grid: ") + e.what());
  }
  return grid;
}

std::vector<RoomSpec> read_room_grid(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open room grid " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  try {
    return parse_room_grid(os.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_room_grid(const std::filesystem::path& path, const std::vector<RoomSpec>& rooms) {
  nlohmann::json j;
  j["rooms"] = nlohmann::json::array();
  for (const auto& r : rooms) {
    // Consecutive specs that differ only in RT share one row.
    if (!j["rooms"].empty()) {
      auto& last = j["rooms"].back();
      if (last["name"] == r.name && last["dimensions"] == nlohmann::json(r.dimensions) &&
          last["mic"] == nlohmann::json(r.mic) && last["speaker"] == nlohmann::json(r.speaker)) {
        last["rt60"].push_back(r.rt60);
        continue;
      }
    }
    j["rooms"].push_back({{"name", r.name},
                          {"dimensions", r.dimensions},
                          {"mic", r.mic},
                          {"speaker", r.speaker},
                          {"sample_rate", r.sample_rate},
                          {"sound_speed", r.sound_speed},
                          {"rt60", {r.rt60}}});
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw Error("cannot write room grid " + path.string());
  f << j.dump(2) << '\n';
}

}  // namespace asrp
