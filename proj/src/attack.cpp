// src/attack.cpp

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

#include "asrp/attack.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "asrp/common.hpp"
#include "asrp/psychoacoustic.hpp"

namespace asrp {

std::size_t PoisonSet::total_frames() const {
  std::size_t n = 0;
  for (const auto& f : frames) n += f.size();
  return n;
}

std::vector<std::size_t> PoisonSet::utterances() const {
  std::set<std::size_t> s;
  for (const auto& task : frames)
    for (const auto& p : task) s.insert(p.utterance);
  return {s.begin(), s.end()};
}

std::vector<SampleRange> PoisonSet::support(std::size_t u, const FrameConfig& frame) const {
  std::vector<SampleRange> ranges;
  for (const auto& task : frames)
    for (const auto& p : task)
      if (p.utterance == u) {
        const auto b = static_cast<std::size_t>(p.frame) * static_cast<std::size_t>(frame.hop_length);
        ranges.push_back({b, b + static_cast<std::size_t>(frame.frame_length)});
      }
  std::sort(ranges.begin(), ranges.end());
  std::vector<SampleRange> merged;
  for (const auto& r : ranges) {
    if (!merged.empty() && r.first <= merged.back().second)
      merged.back().second = std::max(merged.back().second, r.second);
    else
      merged.push_back(r);
  }
  return merged;
}

std::vector<long> state_frequencies(const std::vector<Alignment>& alignments, int num_states) {
  std::vector<long> freq(static_cast<std::size_t>(num_states), 0);
  for (const auto& a : alignments)
    for (int s : a.states) {
      if (s < 0 || s >= num_states) throw ValidationError("alignment state out of range");
      ++freq[static_cast<std::size_t>(s)];
    }
  return freq;
}

std::pair<int, int> word_span(const HmmModel& hmm, const std::vector<int>& path,
                              const std::string& word) {
  const int w = hmm.word_index(word);
  const int n = static_cast<int>(path.size());
  for (int t = 0; t < n; ++t) {
    if (hmm.word_of_state(path[t]) != w) continue;
    int e = t + 1;
    while (e < n && hmm.word_of_state(path[e]) == w && !hmm.starts_word(path[e - 1], path[e])) ++e;
    return {t, e};
  }
  throw ValidationError("word '" + word + "' does not occur in the target alignment");
}

std::vector<int> proportional_counts(const std::vector<double>& weights, int length) {
  const int k = static_cast<int>(weights.size());
  if (k == 0) throw ValidationError("proportional_counts: no states");
  if (length < k)
    throw ValidationError("span of " + std::to_string(length) + " frames is shorter than " +
                          std::to_string(k) + " states");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ValidationError("proportional_counts: negative weight");
    total += w;
  }
  std::vector<double> quota(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i)
    quota[i] = total > 0.0 ? length * weights[i] / total : static_cast<double>(length) / k;

  std::vector<int> n(static_cast<std::size_t>(k));
  int assigned = 0;
  for (int i = 0; i < k; ++i) {
    n[i] = static_cast<int>(std::floor(quota[i] + 1e-9));
    assigned += n[i];
  }
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return quota[a] - n[a] > quota[b] - n[b] + 1e-12;
  });
  for (int r = 0; r < length - assigned; ++r) ++n[order[static_cast<std::size_t>(r % k)]];

  for (int i = 0; i < k; ++i) {
    while (n[i] == 0) {
      int donor = -1;
      for (int j = 0; j < k; ++j)
        if (n[j] > 1 && (donor < 0 || n[j] - quota[j] > n[donor] - quota[donor] + 1e-12)) donor = j;
      --n[donor];
      ++n[i];
    }
  }
  return n;
}

std::vector<PoisonTask> select_target_sequence(const HmmModel& hmm,
                                               const std::vector<Alignment>& alignments,
                                               const std::vector<int>& target_path,
                                               const std::string& original_word,
                                               const std::string& adversarial_word) {
  if (original_word == adversarial_word)
    throw ValidationError("adversarial word equals the original word");
  const int wi = hmm.word_index(adversarial_word);
  const WordModel& wm = hmm.words()[wi];
  if (wm.is_silence) throw ValidationError("adversarial word cannot be silence");
  const auto [begin, end] = word_span(hmm, target_path, original_word);
  if (end - begin < wm.num_states)
    throw ValidationError("span of '" + original_word + "' (" + std::to_string(end - begin) +
                          " frames) is shorter than the " + std::to_string(wm.num_states) +
                          " states of '" + adversarial_word + "'");
  const auto freq = state_frequencies(alignments, hmm.num_states());
  std::vector<double> weights;
  for (int s = wm.first_state; s <= wm.last_state(); ++s)
    weights.push_back(static_cast<double>(freq[static_cast<std::size_t>(s)]));
  const auto counts = proportional_counts(weights, end - begin);

  std::vector<PoisonTask> tasks;
  int t = begin;
  for (int i = 0; i < wm.num_states; ++i)
    for (int c = 0; c < counts[i]; ++c, ++t) tasks.push_back({t, target_path[t], wm.first_state + i});
  return tasks;
}

long poison_count(long freq, double r_p) {
  if (freq < 1) throw ValidationError("poison_count: frequency must be >= 1");
  const double prod = static_cast<double>(freq) * r_p;
  return std::max(1L, static_cast<long>(std::ceil(prod - 1e-9 * std::max(1.0, prod))));
}

PoisonSet select_poison_frames(const HmmModel& hmm, const std::vector<FeatureMatrix>& features,
                               const std::vector<Alignment>& alignments,
                               const std::vector<PoisonTask>& tasks, double r_p,
                               const AcousticNet& net, const FeatureMatrix& target_features) {
  if (!(r_p > 0.0 && r_p < 1.0)) throw ValidationError("r_p must be in (0, 1)");
  if (features.size() != alignments.size())
    throw ValidationError("select_poison_frames: features and alignments differ in count");
  for (std::size_t u = 0; u < features.size(); ++u)
    if (static_cast<std::size_t>(features[u].rows()) != alignments[u].states.size())
      throw ValidationError("select_poison_frames: alignment of '" + alignments[u].utterance_id +
                            "' does not match its features");
  const auto freq = state_frequencies(alignments, hmm.num_states());
  const Eigen::MatrixXd target_phi = net.penultimate(net.splice(target_features));

  std::vector<Eigen::MatrixXd> phi(features.size());
  for (std::size_t u = 0; u < features.size(); ++u) phi[u] = net.penultimate(net.splice(features[u]));

  struct Candidate {
    double dist;
    std::size_t utterance;
    int frame;
  };
  std::set<std::pair<std::size_t, int>> used;
  PoisonSet set;
  for (const auto& task : tasks) {
    if (task.original_state == task.adversarial_state)
      throw ValidationError("poison task with identical original and adversarial state");
    if (task.target_frame < 0 || task.target_frame >= target_phi.rows())
      throw ValidationError("poison task frame outside the target");
    const long need = poison_count(std::max(1L, freq[static_cast<std::size_t>(task.original_state)]), r_p);
    const Eigen::VectorXd t = target_phi.row(task.target_frame).transpose();
    std::vector<Candidate> cand;
    for (std::size_t u = 0; u < alignments.size(); ++u)
      for (int f = 0; f < static_cast<int>(alignments[u].states.size()); ++f)
        if (alignments[u].states[f] == task.adversarial_state && !used.count({u, f}))
          cand.push_back({(phi[u].row(f).transpose() - t).squaredNorm(), u, f});
    if (static_cast<long>(cand.size()) < need) {
      const int z = task.adversarial_state;
      throw ValidationError("insufficient training frames with label " + std::to_string(z) + " (word '" +
                            hmm.words()[hmm.word_of_state(z)].name + "', state " +
                            std::to_string(hmm.position_in_word(z)) + "): " +
                            std::to_string(cand.size()) + " available, " + std::to_string(need) +
                            " needed");
    }
    std::partial_sort(cand.begin(), cand.begin() + need, cand.end(), [](const Candidate& a, const Candidate& b) {
      if (a.dist != b.dist) return a.dist < b.dist;
      if (a.utterance != b.utterance) return a.utterance < b.utterance;
      return a.frame < b.frame;
    });
    std::vector<PoisonFrame> chosen;
    for (long i = 0; i < need; ++i) {
      chosen.push_back({cand[i].utterance, cand[i].frame});
      used.insert({cand[i].utterance, cand[i].frame});
    }
    set.frames.push_back(std::move(chosen));
  }
  return set;
}

double bullseye_loss(const std::vector<Eigen::MatrixXd>& poisons,
                     const std::vector<Eigen::VectorXd>& targets, std::vector<Eigen::MatrixXd>* grad) {
  const std::size_t m_count = poisons.size();
  if (m_count == 0 || targets.size() != m_count)
    throw ValidationError("bullseye_loss: need one target per surrogate");
  if (grad) grad->assign(m_count, Eigen::MatrixXd());
  double loss = 0.0;
  for (std::size_t m = 0; m < m_count; ++m) {
    const Eigen::MatrixXd& p = poisons[m];
    const Eigen::VectorXd& t = targets[m];
    if (p.rows() == 0) throw ValidationError("bullseye_loss: no poison frames");
    if (p.cols() != t.size()) throw ValidationError("bullseye_loss: feature widths differ");
    const double tn = t.squaredNorm();
    if (!(tn > 0.0)) throw Error("bullseye_loss: target feature has zero norm");
    const Eigen::VectorXd c = p.colwise().mean().transpose();
    loss += (t - c).squaredNorm() / tn;
    if (grad) {
      const Eigen::RowVectorXd g =
          (c - t).transpose() / (static_cast<double>(m_count) * static_cast<double>(p.rows()) * tn);
      (*grad)[m] = g.replicate(p.rows(), 1);
    }
  }
  return loss / (2.0 * static_cast<double>(m_count));
}

void AttackConfig::validate() const {
  if (!(r_p > 0.0 && r_p < 1.0)) throw ValidationError("attack: r_p must be in (0, 1)");
  if (surrogates < 1) throw ValidationError("attack: at least one surrogate is required");
  if (max_rounds < 1 || max_steps < 1) throw ValidationError("attack: Q and R must be >= 1");
  if (!(inner_lr >= 0.0)) throw ValidationError("attack: inner_lr must be >= 0");
  if (!(convergence_delta >= 0.0)) throw ValidationError("attack: convergence_delta must be >= 0");
  if (margin_db && !std::isfinite(*margin_db)) throw ValidationError("attack: margin must be finite");
  if (workers < 1) throw ValidationError("attack: workers must be >= 1");
  surrogate.arch.validate();
  surrogate.train.validate();
  victim.arch.validate();
  victim.train.validate();
  if (victim.schedule.phases.empty()) throw ValidationError("attack: victim schedule is empty");
}

VictimOutcome evaluate_victim(const HmmModel& hmm, const std::vector<TrainingUtterance>& train,
                              const FeatureMatrix& target_features,
                              const std::vector<std::string>& adversarial_words,
                              const VictimConfig& cfg,
                              const std::vector<FeatureMatrix>& test_features,
                              const std::vector<std::vector<std::string>>& test_references,
                              std::uint64_t seed) {
  if (cfg.arch.output_size != hmm.num_states())
    throw ValidationError("victim network output size does not match the HMM");
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(seed, 2);
  const auto trained =
      viterbi_training(train, hmm, AcousticNet::init(cfg.arch, derive_seed(seed, 1)), tc, cfg.schedule);
  VictimOutcome out;
  out.net = trained.net;
  out.transcription = viterbi_decode(hmm, out.net.forward(target_features).log_posteriors).words;
  out.success = out.transcription == adversarial_words;
  std::vector<std::vector<std::string>> hyps;
  for (const auto& f : test_features) hyps.push_back(viterbi_decode(hmm, out.net.forward(f).log_posteriors).words);
  out.clean_accuracy = test_references.empty() ? 0.0 : word_accuracy(test_references, hyps).percent;
  return out;
}

namespace {

std::vector<FeatureMatrix> extract_all(const FeatureExtractor& fx, const Dataset& ds) {
  std::vector<FeatureMatrix> out(ds.size());
  parallel_for(ds.size(), default_workers(), [&](std::size_t i) { out[i] = fx.extract(ds.utterances[i].audio); });
  return out;
}

}  // namespace

AttackEnvironment::AttackEnvironment(HmmModel hmm, FrameConfig frame, Dataset attacker_train,
                                     std::vector<Alignment> alignments, AcousticNet reference,
                                     Dataset victim_train, Dataset test)
    : hmm_(std::move(hmm)),
      extractor_(frame),
      attacker_train_(std::move(attacker_train)),
      alignments_(std::move(alignments)),
      reference_(std::move(reference)),
      victim_train_(std::move(victim_train)),
      test_(std::move(test)) {
  if (alignments_.size() != attacker_train_.size())
    throw ValidationError("attack environment: one alignment per training utterance required");
  attacker_features_ = extract_all(extractor_, attacker_train_);
  victim_features_ = extract_all(extractor_, victim_train_);
  test_features_ = extract_all(extractor_, test_);
  for (std::size_t u = 0; u < attacker_train_.size(); ++u)
    if (alignments_[u].utterance_id != attacker_train_.utterances[u].id() ||
        static_cast<std::size_t>(attacker_features_[u].rows()) != alignments_[u].states.size())
      throw ValidationError("attack environment: alignment mismatch for '" +
                            attacker_train_.utterances[u].id() + "'");
  for (const auto& u : test_.utterances) test_refs_.push_back(u.transcript);
  nu_ = attacker_train_.peak();
}

void AttackEnvironment::set_rooms(std::vector<std::string> names, std::vector<ImpulseResponse> irs) {
  if (names.size() != irs.size()) throw ValidationError("set_rooms: names and responses differ in count");
  room_names_ = std::move(names);
  room_irs_ = std::move(irs);
}

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

struct PoisonSlot {
  std::size_t task;
  Eigen::Index p;  // row within the task's poison list
  int frame;
};

struct PoisonedUtterance {
  std::size_t index = 0;
  FeatureTrace trace;
  std::vector<SampleRange> support;
  std::vector<PoisonSlot> slots;
  std::vector<double> grad, adam_m, adam_v;
  ComplexSpectrogram original_spectrum;
  ThresholdMatrix thresholds;
};

std::string csv_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

class Crafter {
 public:
  Crafter(const AttackEnvironment& env, const AttackConfig& cfg, Dataset& data, const PoisonSet& poisons,
          std::size_t n_tasks)
      : env_(env), cfg_(cfg), data_(data), n_tasks_(n_tasks) {
    const auto& fc = env.extractor().config();
    for (std::size_t u : poisons.utterances()) {
      PoisonedUtterance pu;
      pu.index = u;
      pu.support = poisons.support(u, fc);
      if (cfg.margin_db) {
        pu.original_spectrum = stft(poisons.originals.at(u), fc);
        Spectrogram power;
        power.values = pu.original_spectrum.cwiseAbs2();
        power.is_power = true;
        MaskingModel mm;
        mm.sample_rate = data.utterances[u].audio.sample_rate;
        mm.dft_size = fc.dft_size;
        mm.frame_length = fc.frame_length;
        pu.thresholds = hearing_thresholds(power, mm);
      }
      utts_.push_back(std::move(pu));
    }
    task_sizes_.assign(n_tasks, 0);
    for (std::size_t k = 0; k < poisons.frames.size(); ++k)
      for (std::size_t p = 0; p < poisons.frames[k].size(); ++p) {
        const auto& pf = poisons.frames[k][p];
        auto it = std::find_if(utts_.begin(), utts_.end(), [&](const auto& x) { return x.index == pf.utterance; });
        it->slots.push_back({k, static_cast<Eigen::Index>(p), pf.frame});
        ++task_sizes_[k];
      }
  }

  /// Fresh surrogates and target features for a round; resets Adam.
  void start_round(std::vector<AcousticNet> nets, const std::vector<Eigen::MatrixXd>& target_phi,
                   const std::vector<PoisonTask>& tasks) {
    nets_ = std::move(nets);
    targets_.assign(n_tasks_, {});
    for (std::size_t k = 0; k < n_tasks_; ++k)
      for (std::size_t m = 0; m < nets_.size(); ++m)
        targets_[k].push_back(target_phi[m].row(tasks[k].target_frame).transpose());
    for (auto& pu : utts_) {
      const Waveform& w = data_.utterances[pu.index].audio;
      pu.trace = env_.extractor().trace(w);
      pu.adam_m.assign(w.size(), 0.0);
      pu.adam_v.assign(w.size(), 0.0);
    }
    step_ = 0;
  }

  /// Loss at the current poisons; gradients land in each utterance's `grad`.
  double evaluate() {
    const std::size_t m_count = nets_.size();
    std::vector<std::vector<Eigen::MatrixXd>> phi(n_tasks_, std::vector<Eigen::MatrixXd>(m_count));
    std::vector<Eigen::MatrixXd> inputs(utts_.size());
    for (std::size_t k = 0; k < n_tasks_; ++k)
      for (std::size_t m = 0; m < m_count; ++m)
        phi[k][m].resize(task_sizes_[k], nets_[m].layers()[nets_[m].layers().size() - 2].bias.size());
    for (std::size_t i = 0; i < utts_.size(); ++i) {
      const auto& pu = utts_[i];
      const Eigen::MatrixXd spliced = nets_[0].splice(pu.trace.features);
      inputs[i].resize(static_cast<Eigen::Index>(pu.slots.size()), spliced.cols());
      for (std::size_t s = 0; s < pu.slots.size(); ++s) inputs[i].row(s) = spliced.row(pu.slots[s].frame);
      for (std::size_t m = 0; m < m_count; ++m) {
        const Eigen::MatrixXd h = nets_[m].penultimate(inputs[i]);
        for (std::size_t s = 0; s < pu.slots.size(); ++s) phi[pu.slots[s].task][m].row(pu.slots[s].p) = h.row(s);
      }
    }
    double loss = 0.0;
    std::vector<std::vector<Eigen::MatrixXd>> grads(n_tasks_);
    for (std::size_t k = 0; k < n_tasks_; ++k) loss += bullseye_loss(phi[k], targets_[k], &grads[k]);
    const double scale = 1.0 / static_cast<double>(n_tasks_);
    loss *= scale;

    for (std::size_t i = 0; i < utts_.size(); ++i) {
      auto& pu = utts_[i];
      const Eigen::Index frames = pu.trace.features.rows();
      Eigen::MatrixXd g_in = Eigen::MatrixXd::Zero(frames, nets_[0].architecture().input_dim());
      for (std::size_t m = 0; m < m_count; ++m) {
        Eigen::MatrixXd dphi(static_cast<Eigen::Index>(pu.slots.size()), phi[0][m].cols());
        for (std::size_t s = 0; s < pu.slots.size(); ++s)
          dphi.row(s) = grads[pu.slots[s].task][m].row(pu.slots[s].p) * scale;
        const Eigen::MatrixXd gi = nets_[m].penultimate_input_gradient(inputs[i], dphi);
        for (std::size_t s = 0; s < pu.slots.size(); ++s) g_in.row(pu.slots[s].frame) += gi.row(s);
      }
      const FeatureMatrix upstream = nets_[0].unsplice_gradient(g_in, frames);
      if (cfg_.margin_db) {
        const Eigen::MatrixXd d = perturbation_level(pu.original_spectrum, pu.trace.spectrum);
        const ScaleMatrix s = gradient_scale(d, pu.thresholds, *cfg_.margin_db);
        pu.grad = env_.extractor().backward(pu.trace, upstream, &s);
      } else {
        pu.grad = env_.extractor().backward(pu.trace, upstream);
      }
    }
    return loss;
  }

  /// One Adam step on the poison supports, clipped to [-1, 1].
  void update() {
    ++step_;
    const double c1 = 1.0 - std::pow(kAdamBeta1, step_);
    const double c2 = 1.0 - std::pow(kAdamBeta2, step_);
    for (auto& pu : utts_) {
      Waveform& w = data_.utterances[pu.index].audio;
      for (const auto& [b, e] : pu.support) {
        for (std::size_t n = b; n < e && n < w.size(); ++n) {
          const double g = pu.grad[n];
          pu.adam_m[n] = kAdamBeta1 * pu.adam_m[n] + (1.0 - kAdamBeta1) * g;
          pu.adam_v[n] = kAdamBeta2 * pu.adam_v[n] + (1.0 - kAdamBeta2) * g * g;
          const double step = cfg_.inner_lr * (pu.adam_m[n] / c1) / (std::sqrt(pu.adam_v[n] / c2) + kAdamEps);
          w.samples[n] = std::clamp(w.samples[n] - step, -1.0, 1.0);
        }
      }
      if (!pu.support.empty())
        env_.extractor().refresh(pu.trace, w, pu.support.front().first,
                                 std::min(pu.support.back().second, w.size()));
    }
  }

 private:
  const AttackEnvironment& env_;
  const AttackConfig& cfg_;
  Dataset& data_;
  std::size_t n_tasks_;
  std::vector<PoisonedUtterance> utts_;
  std::vector<long> task_sizes_;
  std::vector<AcousticNet> nets_;
  std::vector<std::vector<Eigen::VectorXd>> targets_;
  long step_ = 0;
};

void write_checkpoint_round(const std::filesystem::path& dir, int round, const Dataset& data,
                            const PoisonSet& poisons) {
  std::ostringstream name;
  name << "round_" << std::setw(2) << std::setfill('0') << round;
  for (std::size_t u : poisons.utterances())
    write_wav(dir / name.str() / (data.utterances[u].id() + ".wav"), data.utterances[u].audio);
}

}  // namespace

CraftResult craft_poisons(const AttackEnvironment& env, const Utterance& target,
                          const std::string& original_word, const std::string& adversarial_word,
                          const AttackConfig& cfg, std::uint64_t seed,
                          const std::filesystem::path& checkpoint) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  const HmmModel& hmm = env.hmm();
  const FeatureExtractor& fx = env.extractor();
  if (cfg.surrogate.arch.output_size != hmm.num_states())
    throw ValidationError("surrogate network output size does not match the HMM");

  CraftResult res;
  AttackReport& report = res.report;
  report.target_id = target.id();
  report.original_word = original_word;
  report.adversarial_word = adversarial_word;
  res.poisoned = env.attacker_train();

  std::vector<std::string> wanted = target.transcript;
  const auto pos = std::find(wanted.begin(), wanted.end(), original_word);
  if (pos == wanted.end())
    throw ValidationError("target '" + target.id() + "' does not contain '" + original_word + "'");
  *pos = adversarial_word;

  const FeatureMatrix target_features = fx.extract(target.audio);
  const Alignment target_alignment =
      forced_align(hmm, env.reference().forward(target_features).log_posteriors, target.transcript);
  res.tasks = select_target_sequence(hmm, env.alignments(), target_alignment.states, original_word,
                                     adversarial_word);
  res.poisons = select_poison_frames(hmm, env.attacker_features(), env.alignments(), res.tasks, cfg.r_p,
                                     env.reference(), target_features);
  const auto poisoned_utts = res.poisons.utterances();
  for (std::size_t u : poisoned_utts) res.poisons.originals[u] = res.poisoned.utterances[u].audio;

  // Victim training data: its own clean set with poisoned audio substituted
  // (or appended when the poisoned utterance is not part of it).
  std::map<std::string, std::size_t> victim_index;
  for (std::size_t i = 0; i < env.victim_train().size(); ++i) victim_index[env.victim_train().utterances[i].id()] = i;
  std::vector<FeatureMatrix> poisoned_features(poisoned_utts.size());
  auto victim_data = [&](bool use_poison) {
    std::vector<TrainingUtterance> tu;
    for (std::size_t i = 0; i < env.victim_train().size(); ++i) {
      const auto& u = env.victim_train().utterances[i];
      tu.push_back({u.id(), &env.victim_features()[i], u.transcript});
    }
    if (!use_poison) return tu;
    for (std::size_t k = 0; k < poisoned_utts.size(); ++k) {
      const auto& u = res.poisoned.utterances[poisoned_utts[k]];
      poisoned_features[k] = fx.extract(u.audio);
      auto it = victim_index.find(u.id());
      if (it != victim_index.end())
        tu[it->second].features = &poisoned_features[k];
      else
        tu.push_back({u.id(), &poisoned_features[k], u.transcript});
    }
    return tu;
  };

  auto finish = [&](const VictimOutcome& v) {
    res.victim = v.net;
    report.success = v.success;
    report.clean_accuracy = v.clean_accuracy;
    report.transcription = v.transcription;
    report.poisoned_samples = static_cast<long>(res.poisons.total_frames());
    double seconds = 0.0;
    for (std::size_t u : poisoned_utts) {
      const auto sup = res.poisons.support(u, fx.config());
      const Waveform& orig = res.poisons.originals.at(u);
      const Waveform& cur = res.poisoned.utterances[u].audio;
      for (const auto& [b, e] : sup) seconds += static_cast<double>(std::min(e, orig.size()) - b);
      try {
        report.snrseg_db.push_back(snrseg(orig, cur, snr_segment_length(orig.sample_rate), sup));
      } catch (const Error&) {
      }
      if (env.nu() > 0.0) report.delta_max = std::max(report.delta_max, max_perturbation(orig, cur, env.nu()));
    }
    report.poisoned_seconds = seconds / env.attacker_train().utterances.front().audio.sample_rate;
    for (std::size_t r = 0; r < env.room_irs().size(); ++r) {
      const Waveform played = transmit(target.audio, env.room_irs()[r]);
      const auto words = viterbi_decode(hmm, v.net.forward(fx.extract(played)).log_posteriors).words;
      report.room_names.push_back(env.room_names()[r]);
      report.room_success.push_back(words == wanted);
    }
    report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!checkpoint.empty()) {
      std::filesystem::create_directories(checkpoint);
      std::ofstream trace(checkpoint / "loss_trace.csv");
      trace << "round,inner_step,loss\n";
      for (const auto& p : res.loss_trace) trace << p.round << ',' << p.step << ',' << csv_double(p.loss) << '\n';
      std::ofstream poisons(checkpoint / "poisons.csv");
      poisons << "task,target_frame,original_state,adversarial_state,utterance,frame\n";
      for (std::size_t k = 0; k < res.tasks.size(); ++k)
        for (const auto& pf : res.poisons.frames[k])
          poisons << k << ',' << res.tasks[k].target_frame << ',' << res.tasks[k].original_state << ','
                  << res.tasks[k].adversarial_state << ',' << res.poisoned.utterances[pf.utterance].id() << ','
                  << pf.frame << '\n';
      std::ofstream rep(checkpoint / "report.json");
      rep << report_to_json(report) << '\n';
    }
  };

  const VictimOutcome clean = evaluate_victim(hmm, victim_data(false), target_features, wanted, cfg.victim,
                                              env.test_features(), env.test_references(),
                                              derive_seed(seed, 0x51c7ULL, 0));
  report.baseline_accuracy = clean.clean_accuracy;
  if (clean.success) {
    report.rounds = 1;
    finish(clean);
    return res;
  }

  Crafter crafter(env, cfg, res.poisoned, res.poisons, res.tasks.size());
  VictimOutcome last;
  for (int round = 1; round <= cfg.max_rounds; ++round) {
    // Surrogates see the current poisons with the frozen labels.
    std::vector<FeatureMatrix> feats = env.attacker_features();
    for (std::size_t u : poisoned_utts) feats[u] = fx.extract(res.poisoned.utterances[u].audio);
    std::vector<TrainingUtterance> tu;
    for (std::size_t u = 0; u < feats.size(); ++u)
      tu.push_back({res.poisoned.utterances[u].id(), &feats[u], res.poisoned.utterances[u].transcript});
    const LabeledFrames data =
        make_labeled_frames(AcousticNet::init(cfg.surrogate.arch, 0), tu, env.alignments());
    std::vector<AcousticNet> nets(static_cast<std::size_t>(cfg.surrogates));
    parallel_for(nets.size(), cfg.workers, [&](std::size_t m) {
      TrainConfig tc = cfg.surrogate.train;
      tc.seed = derive_seed(seed, round, m, 2);
      nets[m] = train(AcousticNet::init(cfg.surrogate.arch, derive_seed(seed, round, m, 1)), data, tc).net;
    });
    std::vector<Eigen::MatrixXd> target_phi;
    for (const auto& net : nets) target_phi.push_back(net.penultimate(net.splice(target_features)));
    crafter.start_round(std::move(nets), target_phi, res.tasks);

    double prev = std::numeric_limits<double>::infinity();
    for (int j = 0; j <= cfg.max_steps; ++j) {
      const double loss = crafter.evaluate();
      res.loss_trace.push_back({round, j, loss});
      if (j > 0 && prev - loss < cfg.convergence_delta) break;
      if (j == cfg.max_steps) break;
      prev = loss;
      crafter.update();
      ++report.inner_steps;
    }
    if (!checkpoint.empty()) write_checkpoint_round(checkpoint, round, res.poisoned, res.poisons);

    last = evaluate_victim(hmm, victim_data(true), target_features, wanted, cfg.victim, env.test_features(),
                           env.test_references(), derive_seed(seed, 0x51c7ULL, round));
    report.rounds = round;
    if (last.success) break;
  }
  finish(last);
  return res;
}

std::string report_to_json(const AttackReport& r) {
  nlohmann::ordered_json j;
  j["target_id"] = r.target_id;
  j["original_word"] = r.original_word;
  j["adversarial_word"] = r.adversarial_word;
  j["success"] = r.success;
  j["rounds"] = r.rounds;
  j["inner_steps"] = r.inner_steps;
  j["wall_time_s"] = r.wall_time_s;
  j["poisoned_seconds"] = r.poisoned_seconds;
  j["poisoned_samples"] = r.poisoned_samples;
  j["snrseg_db"] = r.snrseg_db;
  j["delta_max"] = r.delta_max;
  j["clean_accuracy"] = r.clean_accuracy;
  j["baseline_accuracy"] = r.baseline_accuracy;
  j["transcription"] = r.transcription;
  j["rooms"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < r.room_names.size(); ++k)
    j["rooms"].push_back({{"name", r.room_names[k]}, {"success", static_cast<bool>(r.room_success[k])}});
  return j.dump(2);
}

AttackReport report_from_json(const std::string& text) {
  AttackReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.target_id = j.at("target_id").get<std::string>();
    r.original_word = j.at("original_word").get<std::string>();
    r.adversarial_word = j.at("adversarial_word").get<std::string>();
    r.success = j.at("success").get<bool>();
    r.rounds = j.at("rounds").get<int>();
    r.inner_steps = j.at("inner_steps").get<long>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    r.poisoned_seconds = j.at("poisoned_seconds").get<double>();
    r.poisoned_samples = j.at("poisoned_samples").get<long>();
    r.snrseg_db = j.at("snrseg_db").get<std::vector<double>>();
    r.delta_max = j.at("delta_max").get<double>();
    r.clean_accuracy = j.at("clean_accuracy").get<double>();
    r.baseline_accuracy = j.value("baseline_accuracy", 0.0);
    r.transcription = j.at("transcription").get<std::vector<std::string>>();
    for (const auto& room : j.value("rooms", nlohmann::json::array())) {
      r.room_names.push_back(room.at("name").get<std::string>());
      r.room_success.push_back(room.at("success").get<bool>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
  return r;
}

}  // namespace asrp
