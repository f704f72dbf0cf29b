// src/hmm.cpp

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

#include "asrp/hmm.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace asrp {

namespace {

// Best predecessor search shared by decoding and forced alignment: `delta`
// holds scores for frame t-1, predecessors are sorted by index so the first
// strict maximum wins ties toward the lower index.
struct Trellis {
  Eigen::MatrixXd score;
  Eigen::MatrixXi back;
};

Trellis run_viterbi(const std::vector<std::vector<std::pair<int, double>>>& preds,
                    const std::vector<double>& initial, const Eigen::MatrixXd& emissions) {
  const Eigen::Index frames = emissions.rows();
  const auto states = static_cast<Eigen::Index>(preds.size());
  Trellis tr;
  tr.score.setConstant(frames, states, kLogZero);
  tr.back.setConstant(frames, states, -1);
  for (Eigen::Index s = 0; s < states; ++s)
    if (initial[s] > kLogZero) tr.score(0, s) = initial[s] + emissions(0, s);
  for (Eigen::Index t = 1; t < frames; ++t) {
    for (Eigen::Index j = 0; j < states; ++j) {
      double best = kLogZero;
      int arg = -1;
      for (const auto& [i, logp] : preds[j]) {
        const double prev = tr.score(t - 1, i);
        if (prev == kLogZero) continue;
        const double cand = prev + logp;
        if (cand > best) {
          best = cand;
          arg = i;
        }
      }
      if (arg >= 0) {
        tr.score(t, j) = best + emissions(t, j);
        tr.back(t, j) = arg;
      }
    }
  }
  return tr;
}

std::vector<int> backtrace(const Trellis& tr, int last) {
  const auto frames = static_cast<int>(tr.score.rows());
  std::vector<int> path(frames);
  path[frames - 1] = last;
  for (int t = frames - 1; t > 0; --t) path[t - 1] = tr.back(t, path[t]);
  return path;
}

void check_posteriors(const HmmModel& hmm, const Eigen::MatrixXd& lp) {
  if (lp.rows() == 0) throw ValidationError("cannot decode zero frames");
  if (lp.cols() != hmm.num_states())
    throw ValidationError("posterior width " + std::to_string(lp.cols()) +
                          " does not match HMM state count " + std::to_string(hmm.num_states()));
}

}  // namespace

int HmmModel::word_index(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) throw ValidationError("word '" + word + "' is not in the lexicon");
  return it->second;
}

double HmmModel::transition(int from, int to) const {
  if (from == to) return log_self_;
  if (state_word_[from] == state_word_[to] && to == from + 1) return log_advance_;
  if (is_word_final(from) && is_word_initial(to)) return log_exit_;
  return kLogZero;
}

bool HmmModel::starts_word(int from, int to) const {
  return from != to && is_word_final(from) && is_word_initial(to);
}

std::vector<int> HmmModel::readout_words(const std::vector<int>& path) const {
  std::vector<int> out;
  for (std::size_t t = 0; t < path.size(); ++t)
    if (t == 0 || starts_word(path[t - 1], path[t])) out.push_back(state_word_[path[t]]);
  return out;
}

std::vector<std::string> HmmModel::readout(const std::vector<int>& path) const {
  std::vector<std::string> out;
  for (int w : readout_words(path))
    if (w != silence_) out.push_back(words_[w].name);
  return out;
}

bool HmmModel::is_valid_path(const std::vector<int>& path) const {
  if (path.empty()) return false;
  for (int s : path)
    if (s < 0 || s >= num_states()) return false;
  if (!is_word_initial(path.front()) || !is_word_final(path.back())) return false;
  for (std::size_t t = 1; t < path.size(); ++t)
    if (transition(path[t - 1], path[t]) == kLogZero) return false;
  return true;
}

HmmModel build_hmm(const std::vector<LexiconEntry>& lexicon, const Grammar& grammar) {
  if (lexicon.empty()) throw ValidationError("lexicon is empty");
  HmmModel hmm;
  auto add = [&](const std::string& name, int k, bool silence) {
    if (name.empty()) throw ValidationError("lexicon word names must be nonempty");
    if (k < 1) throw ValidationError("word '" + name + "' needs at least one state");
    if (hmm.index_.count(name)) throw ValidationError("duplicate lexicon word '" + name + "'");
    WordModel w{name, k, static_cast<int>(hmm.state_word_.size()), silence};
    hmm.index_[name] = static_cast<int>(hmm.words_.size());
    for (int i = 0; i < k; ++i) hmm.state_word_.push_back(static_cast<int>(hmm.words_.size()));
    hmm.words_.push_back(w);
  };
  for (const auto& e : lexicon) add(e.word, e.num_states, false);
  if (grammar.silence) {
    hmm.silence_ = static_cast<int>(hmm.words_.size());
    add(grammar.silence_word, grammar.silence_states, true);
  }
  const double n_words = static_cast<double>(hmm.words_.size());
  hmm.log_self_ = std::log(0.5);
  hmm.log_advance_ = std::log(0.5);
  hmm.log_exit_ = std::log(0.5) - std::log(n_words);
  hmm.log_initial_ = -std::log(n_words);

  const int s = hmm.num_states();
  hmm.preds_.assign(s, {});
  for (int j = 0; j < s; ++j)
    for (int i = 0; i < s; ++i) {
      const double lp = hmm.transition(i, j);
      if (lp > kLogZero) hmm.preds_[j].emplace_back(i, lp);
    }
  return hmm;
}

std::vector<LexiconEntry> digits_lexicon() {
  // 92 word states + 3 silence states = 95.
  return {{"one", 8},   {"two", 8},   {"three", 8}, {"four", 8}, {"five", 9}, {"six", 9},
          {"seven", 10}, {"eight", 8}, {"nine", 8},  {"zero", 9}, {"oh", 7}};
}

DecodeResult viterbi_decode(const HmmModel& hmm, const Eigen::MatrixXd& log_posteriors) {
  check_posteriors(hmm, log_posteriors);
  std::vector<double> initial(hmm.num_states());
  for (int s = 0; s < hmm.num_states(); ++s) initial[s] = hmm.log_initial(s);
  const Trellis tr = run_viterbi(hmm.predecessors(), initial, log_posteriors);
  const Eigen::Index last = log_posteriors.rows() - 1;
  DecodeResult res;
  int best = -1;
  for (int s = 0; s < hmm.num_states(); ++s) {
    if (!hmm.is_word_final(s)) continue;
    if (tr.score(last, s) > res.score) {
      res.score = tr.score(last, s);
      best = s;
    }
  }
  if (best < 0) throw Error("no complete path through the HMM for " + std::to_string(last + 1) + " frames");
  res.path = backtrace(tr, best);
  res.words = hmm.readout(res.path);
  return res;
}

Alignment uniform_alignment(const std::vector<std::string>& transcript, int n_frames,
                            const HmmModel& hmm) {
  std::vector<int> chain;
  for (const auto& w : transcript) {
    const WordModel& m = hmm.words()[hmm.word_index(w)];
    for (int k = 0; k < m.num_states; ++k) chain.push_back(m.first_state + k);
  }
  if (chain.empty()) throw ValidationError("uniform_alignment: empty transcript");
  const auto states = static_cast<int>(chain.size());
  if (n_frames < states)
    throw ValidationError("uniform_alignment: " + std::to_string(n_frames) +
                          " frames cannot cover " + std::to_string(states) + " states");
  const int base = n_frames / states, extra = n_frames % states;
  Alignment a;
  for (int i = 0; i < states; ++i)
    a.states.insert(a.states.end(), base + (i < extra ? 1 : 0), chain[i]);
  if (!hmm.is_valid_path(a.states))
    throw ValidationError("uniform_alignment: transcript does not form a valid state path");
  return a;
}

Alignment forced_align(const HmmModel& hmm, const Eigen::MatrixXd& log_posteriors,
                       const std::vector<std::string>& transcript) {
  check_posteriors(hmm, log_posteriors);
  if (transcript.empty()) throw ValidationError("forced_align: empty transcript");

  // Word instances: [sil] w1 [sil] w2 ... wn [sil]
  struct Instance {
    int word;
    bool optional;
    int first;  // index into the expanded state list
  };
  std::vector<Instance> inst;
  const int sil = hmm.silence_index();
  if (sil >= 0) inst.push_back({sil, true, 0});
  for (const auto& w : transcript) {
    const int idx = hmm.word_index(w);
    if (idx == sil) throw ValidationError("forced_align: transcript must not contain silence");
    inst.push_back({idx, false, 0});
    if (sil >= 0) inst.push_back({sil, true, 0});
  }
  std::vector<int> global;  // expanded index -> HMM state
  for (auto& in : inst) {
    in.first = static_cast<int>(global.size());
    const WordModel& m = hmm.words()[in.word];
    for (int k = 0; k < m.num_states; ++k) global.push_back(m.first_state + k);
  }
  const auto n = static_cast<int>(global.size());
  std::vector<std::vector<std::pair<int, double>>> preds(n);
  auto add_edge = [&](int from, int to, double lp) { preds[to].emplace_back(from, lp); };
  for (std::size_t a = 0; a < inst.size(); ++a) {
    const int k = hmm.words()[inst[a].word].num_states;
    for (int i = 0; i < k; ++i) {
      add_edge(inst[a].first + i, inst[a].first + i, hmm.log_self());
      if (i + 1 < k) add_edge(inst[a].first + i, inst[a].first + i + 1, hmm.log_advance());
    }
    const int last = inst[a].first + k - 1;
    auto connect = [&](std::size_t b) {
      // A direct hop between identical one-state instances would read as a
      // self-loop in the full model, so it is not a word boundary.
      if (global[last] == global[inst[b].first]) return;
      add_edge(last, inst[b].first, hmm.log_exit());
    };
    if (inst[a].word == sil) connect(a);  // silence may repeat
    if (a + 1 < inst.size()) connect(a + 1);
    if (a + 2 < inst.size() && inst[a + 1].optional) connect(a + 2);
  }
  for (auto& p : preds) std::sort(p.begin(), p.end());

  std::vector<double> initial(n, kLogZero);
  initial[inst[0].first] = hmm.log_initial(global[inst[0].first]);
  if (inst[0].optional) initial[inst[1].first] = hmm.log_initial(global[inst[1].first]);

  Eigen::MatrixXd emissions(log_posteriors.rows(), n);
  for (int e = 0; e < n; ++e) emissions.col(e) = log_posteriors.col(global[e]);
  const Trellis tr = run_viterbi(preds, initial, emissions);

  std::vector<int> finals;
  const Instance& tail = inst.back();
  finals.push_back(tail.first + hmm.words()[tail.word].num_states - 1);
  if (tail.optional) {
    const Instance& prev = inst[inst.size() - 2];
    finals.push_back(prev.first + hmm.words()[prev.word].num_states - 1);
  }
  std::sort(finals.begin(), finals.end());
  const Eigen::Index t_last = log_posteriors.rows() - 1;
  int best = -1;
  double best_score = kLogZero;
  for (int f : finals)
    if (tr.score(t_last, f) > best_score) {
      best_score = tr.score(t_last, f);
      best = f;
    }
  if (best < 0)
    throw Error("forced_align: " + std::to_string(t_last + 1) +
                " frames are too few for the transcript");
  Alignment out;
  for (int e : backtrace(tr, best)) out.states.push_back(global[e]);
  return out;
}

Schedule Schedule::parse(const std::string& text) {
  Schedule s;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, '+')) {
    if (part.size() < 2) throw ValidationError("bad schedule phase '" + part + "' in '" + text + "'");
    const char kind = part.back();
    if (kind != 'N' && kind != 'V')
      throw ValidationError("schedule phases end in N or V: '" + part + "'");
    int epochs = 0;
    try {
      std::size_t used = 0;
      epochs = std::stoi(part.substr(0, part.size() - 1), &used);
      if (used != part.size() - 1) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ValidationError("bad epoch count in schedule phase '" + part + "'");
    }
    if (epochs < 1) throw ValidationError("schedule phases need at least one epoch");
    s.phases.push_back({epochs, kind == 'V'});
  }
  if (s.phases.empty()) throw ValidationError("empty training schedule");
  return s;
}

std::string Schedule::to_string() const {
  std::string out;
  for (const auto& p : phases) {
    if (!out.empty()) out += '+';
    out += std::to_string(p.epochs) + (p.realign ? 'V' : 'N');
  }
  return out;
}

int Schedule::total_epochs() const {
  int n = 0;
  for (const auto& p : phases) n += p.epochs;
  return n;
}

LabeledFrames make_labeled_frames(const AcousticNet& net,
                                  const std::vector<TrainingUtterance>& utterances,
                                  const std::vector<Alignment>& alignments) {
  if (utterances.size() != alignments.size())
    throw ValidationError("every utterance needs an alignment");
  Eigen::Index total = 0;
  for (std::size_t u = 0; u < utterances.size(); ++u) {
    if (static_cast<std::size_t>(utterances[u].features->rows()) != alignments[u].states.size())
      throw ValidationError("alignment of '" + utterances[u].id + "' has " +
                            std::to_string(alignments[u].states.size()) + " labels for " +
                            std::to_string(utterances[u].features->rows()) + " frames");
    total += utterances[u].features->rows();
  }
  LabeledFrames out;
  out.inputs.resize(total, net.architecture().input_dim());
  out.labels.reserve(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (std::size_t u = 0; u < utterances.size(); ++u) {
    const Eigen::MatrixXd spliced = net.splice(*utterances[u].features);
    out.inputs.middleRows(row, spliced.rows()) = spliced;
    row += spliced.rows();
    out.labels.insert(out.labels.end(), alignments[u].states.begin(), alignments[u].states.end());
  }
  return out;
}

ViterbiTrainingResult viterbi_training(const std::vector<TrainingUtterance>& utterances,
                                       const HmmModel& hmm, const AcousticNet& net,
                                       const TrainConfig& cfg, const Schedule& schedule,
                                       std::vector<Alignment> initial) {
  if (utterances.empty()) throw ValidationError("viterbi_training: empty dataset");
  std::vector<Alignment> align = std::move(initial);
  if (align.empty()) {
    const bool with_sil = hmm.silence_index() >= 0;
    const std::string sil = with_sil ? hmm.words()[hmm.silence_index()].name : "";
    for (const auto& u : utterances) {
      const auto frames = static_cast<int>(u.features->rows());
      std::vector<std::string> chain = u.transcript;
      if (with_sil) {
        std::vector<std::string> padded{sil};
        padded.insert(padded.end(), chain.begin(), chain.end());
        padded.push_back(sil);
        int needed = 0;
        for (const auto& w : padded) needed += hmm.words()[hmm.word_index(w)].num_states;
        if (frames >= needed) chain = std::move(padded);
      }
      Alignment a = uniform_alignment(chain, frames, hmm);
      a.utterance_id = u.id;
      align.push_back(std::move(a));
    }
  }

  ViterbiTrainingResult result;
  Trainer trainer(net, cfg);
  LabeledFrames data = make_labeled_frames(trainer.net(), utterances, align);
  for (const Phase& phase : schedule.phases) {
    if (!phase.realign) {
      const auto losses = trainer.run_epochs(data, phase.epochs);
      result.epoch_losses.insert(result.epoch_losses.end(), losses.begin(), losses.end());
      continue;
    }
    for (int e = 0; e < phase.epochs; ++e) {
      std::size_t changed = 0, total = 0;
      for (std::size_t u = 0; u < utterances.size(); ++u) {
        const NetOutput out = trainer.net().forward(*utterances[u].features);
        Alignment a = forced_align(hmm, out.log_posteriors, utterances[u].transcript);
        a.utterance_id = utterances[u].id;
        for (std::size_t t = 0; t < a.states.size(); ++t)
          changed += a.states[t] != align[u].states[t] ? 1 : 0;
        total += a.states.size();
        align[u] = std::move(a);
      }
      result.change_rates.push_back(static_cast<double>(changed) / static_cast<double>(total));
      std::size_t offset = 0;
      for (const auto& a : align) {
        std::copy(a.states.begin(), a.states.end(), data.labels.begin() + static_cast<std::ptrdiff_t>(offset));
        offset += a.states.size();
      }
      const auto losses = trainer.run_epochs(data, 1);
      result.epoch_losses.insert(result.epoch_losses.end(), losses.begin(), losses.end());
    }
  }
  result.net = std::move(trainer).release();
  result.alignments = std::move(align);
  return result;
}

void write_alignments(const std::filesystem::path& path, const std::vector<Alignment>& alignments) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw Error("cannot write alignment file " + path.string());
  for (const auto& a : alignments)
    for (std::size_t t = 0; t < a.states.size(); ++t)
      f << a.utterance_id << ' ' << t << ' ' << a.states[t] << '\n';
}

std::vector<Alignment> read_alignments(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open alignment file " + path.string());
  std::vector<Alignment> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id;
    long frame = -1, state = -1;
    if (!(ss >> id >> frame >> state) || frame < 0 || state < 0)
      throw Error(path.string() + ":" + std::to_string(lineno) + ": malformed alignment line");
    if (out.empty() || out.back().utterance_id != id) {
      if (frame != 0)
        throw Error(path.string() + ":" + std::to_string(lineno) + ": utterance must start at frame 0");
      out.push_back({id, {}});
    }
    if (static_cast<std::size_t>(frame) != out.back().states.size())
      throw Error(path.string() + ":" + std::to_string(lineno) + ": frames out of order");
    out.back().states.push_back(static_cast<int>(state));
  }
  return out;
}

void write_lexicon(const std::filesystem::path& path, const std::vector<LexiconEntry>& lexicon,
                   const Grammar& grammar) {
  nlohmann::json j;
  j["words"] = nlohmann::json::array();
  for (const auto& e : lexicon) j["words"].push_back({{"word", e.word}, {"states", e.num_states}});
  j["silence"] = {{"enabled", grammar.silence},
                  {"word", grammar.silence_word},
                  {"states", grammar.silence_states}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw Error("cannot write lexicon " + path.string());
  f << j.dump(2) << '\n';
}

std::pair<std::vector<LexiconEntry>, Grammar> read_lexicon(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open lexicon " + path.string());
  nlohmann::json j;
  try {
    f >> j;
    std::vector<LexiconEntry> lex;
    for (const auto& w : j.at("words")) lex.push_back({w.at("word").get<std::string>(), w.at("states").get<int>()});
    Grammar g;
    if (j.contains("silence")) {
      const auto& s = j["silence"];
      g.silence = s.value("enabled", true);
      g.silence_word = s.value("word", std::string("sil"));
      g.silence_states = s.value("states", 3);
    }
    return {lex, g};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace asrp
