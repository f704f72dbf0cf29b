// src/experiment.cpp

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

#include "asrp/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "asrp/common.hpp"

namespace asrp {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

PartyConfig desk_party() {
  PartyConfig p;
  p.arch.hidden_sizes = {64, 64};
  p.arch.context = 0;
  p.train.learning_rate = 1e-3;
  p.train.batch_size = 32;
  p.train.epochs = 20;
  p.schedule = Schedule::parse("3N+2V+3N");
  return p;
}

void check_split(const std::string& s, const char* who) {
  if (s != "all" && s != "split1" && s != "split2")
    throw ValidationError(std::string(who) + ".split must be all, split1 or split2");
}

ojson party_to_json(const PartyConfig& p) {
  ojson j;
  j["hidden"] = p.arch.hidden_sizes;
  j["context"] = p.arch.context;
  j["learning_rate"] = p.train.learning_rate;
  j["batch_size"] = p.train.batch_size;
  j["epochs"] = p.train.epochs;
  j["dropout"] = p.train.dropout_p;
  j["schedule"] = p.schedule.to_string();
  j["split"] = p.split;
  return j;
}

void party_from_json(const nlohmann::json& j, PartyConfig& p) {
  if (j.contains("preset")) {
    const auto a = NetArchitecture::preset(j["preset"].get<std::string>(), 2);
    p.arch.hidden_sizes = a.hidden_sizes;
  }
  p.arch.hidden_sizes = j.value("hidden", p.arch.hidden_sizes);
  p.arch.context = j.value("context", p.arch.context);
  p.train.learning_rate = j.value("learning_rate", p.train.learning_rate);
  p.train.batch_size = j.value("batch_size", p.train.batch_size);
  p.train.epochs = j.value("epochs", p.train.epochs);
  p.train.dropout_p = j.value("dropout", p.train.dropout_p);
  if (j.contains("schedule")) p.schedule = Schedule::parse(j["schedule"].get<std::string>());
  p.split = j.value("split", p.split);
}

ojson corpus_to_json(const CorpusSpec& c) {
  ojson j;
  j["n_speakers"] = c.n_speakers;
  j["utterances_per_speaker"] = c.utterances_per_speaker;
  j["min_words"] = c.min_words;
  j["max_words"] = c.max_words;
  j["amplitude"] = c.amplitude;
  j["noise_floor"] = c.noise_floor;
  j["pitch_jitter"] = c.pitch_jitter;
  j["duration_jitter"] = c.duration_jitter;
  j["pause_min_s"] = c.pause_min_s;
  j["pause_max_s"] = c.pause_max_s;
  j["edge_silence_s"] = c.edge_silence_s;
  j["train_fraction"] = c.train_fraction;
  j["sample_rate"] = c.sample_rate;
  j["seed"] = c.seed;
  j["vocabulary"] = ojson::array();
  for (const auto& w : c.vocabulary) {
    ojson segs = ojson::array();
    for (const auto& s : w.segments) segs.push_back({s.f1, s.f2, s.duration_s});
    j["vocabulary"].push_back({{"word", w.word}, {"segments", segs}});
  }
  return j;
}

void corpus_from_json(const nlohmann::json& j, CorpusSpec& c) {
  c.n_speakers = j.value("n_speakers", c.n_speakers);
  c.utterances_per_speaker = j.value("utterances_per_speaker", c.utterances_per_speaker);
  c.min_words = j.value("min_words", c.min_words);
  c.max_words = j.value("max_words", c.max_words);
  c.amplitude = j.value("amplitude", c.amplitude);
  c.noise_floor = j.value("noise_floor", c.noise_floor);
  c.pitch_jitter = j.value("pitch_jitter", c.pitch_jitter);
  c.duration_jitter = j.value("duration_jitter", c.duration_jitter);
  c.pause_min_s = j.value("pause_min_s", c.pause_min_s);
  c.pause_max_s = j.value("pause_max_s", c.pause_max_s);
  c.edge_silence_s = j.value("edge_silence_s", c.edge_silence_s);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.seed = j.value("seed", c.seed);
  if (j.contains("vocabulary")) {
    c.vocabulary.clear();
    for (const auto& w : j["vocabulary"]) {
      WordRecipe r;
      r.word = w.at("word").get<std::string>();
      for (const auto& s : w.at("segments")) {
        const auto v = s.get<std::vector<double>>();
        if (v.size() != 3) throw ValidationError("vocabulary segments are [f1, f2, duration_s]");
        r.segments.push_back({v[0], v[1], v[2]});
      }
      c.vocabulary.push_back(std::move(r));
    }
  }
}

std::string fmt(double v, int precision = 6) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string margin_text(const std::optional<double>& m) { return m ? fmt(*m, 1) : "none"; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string join(const std::vector<std::string>& v, const char* sep = " ") {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Dataset pick_split(const Dataset& train, const std::string& split) {
  if (split == "all") return train;
  auto [a, b] = split_speakers(train, 0.5);
  return split == "split1" ? a : b;
}

std::string room_label(const RoomSpec& r) { return r.name + "_rt" + fmt(r.rt60, 1); }

ojson point_to_json(const SweepPoint& p) {
  ojson j;
  j["r_p"] = p.r_p;
  j["surrogates"] = p.surrogates;
  j["margin_db"] = p.margin_db ? ojson(*p.margin_db) : ojson(nullptr);
  return j;
}

SweepPoint point_from_json(const nlohmann::json& j) {
  SweepPoint p;
  p.r_p = j.at("r_p").get<double>();
  p.surrogates = j.at("surrogates").get<int>();
  if (!j.at("margin_db").is_null()) p.margin_db = j["margin_db"].get<double>();
  return p;
}

}  // namespace

ExperimentConfig ExperimentConfig::desk_default() {
  ExperimentConfig c;
  c.corpus = CorpusSpec::desk_default();
  c.attacker = desk_party();
  c.victim = desk_party();
  c.rooms = default_room_grid();
  return c;
}

void ExperimentConfig::validate() const {
  if (trials < 1) throw ValidationError("trials must be >= 1");
  if (workers < 0) throw ValidationError("workers must be >= 0");
  if (train_manifest.empty() != test_manifest.empty())
    throw ValidationError("train and test manifests must be given together");
  if (train_manifest.empty()) corpus.validate();
  frame.validate();
  for (const PartyConfig* p : {&attacker, &victim}) {
    NetArchitecture a = p->arch;
    a.output_size = 2;
    a.validate();
    p->train.validate();
    if (p->schedule.phases.empty()) throw ValidationError("schedule must have at least one phase");
  }
  check_split(attacker.split, "attacker");
  check_split(victim.split, "victim");
  if (budgets.empty() || surrogate_counts.empty() || margins.empty())
    throw ValidationError("every sweep axis needs at least one value");
  for (double r : budgets)
    if (!(r > 0.0 && r <= 1.0)) throw ValidationError("r_p must be in (0, 1]");
  for (int m : surrogate_counts)
    if (m < 1) throw ValidationError("surrogate count must be >= 1");
  for (const auto& m : margins)
    if (m && !std::isfinite(*m)) throw ValidationError("margin must be finite");
  if (max_rounds < 1 || max_steps < 1) throw ValidationError("max_rounds and max_steps must be >= 1");
  if (!(inner_lr > 0.0)) throw ValidationError("inner_lr must be positive");
  if (!(convergence_delta >= 0.0)) throw ValidationError("convergence_delta must be >= 0");
  if (rooms_enabled) {
    if (rooms.empty()) throw ValidationError("rooms enabled without a room grid");
    for (const auto& r : rooms) r.validate();
  }
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig c = ExperimentConfig::desk_default();
  try {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    c.seed = j.value("seed", c.seed);
    c.trials = j.value("trials", c.trials);
    c.workers = j.value("workers", c.workers);
    if (j.contains("corpus")) corpus_from_json(j["corpus"], c.corpus);
    if (j.contains("manifests")) {
      c.train_manifest = j["manifests"].value("train", c.train_manifest);
      c.test_manifest = j["manifests"].value("test", c.test_manifest);
    }
    if (j.contains("frame")) {
      const auto& f = j["frame"];
      c.frame.frame_length = f.value("frame_length", c.frame.frame_length);
      c.frame.hop_length = f.value("hop_length", c.frame.hop_length);
      c.frame.dft_size = f.value("dft_size", c.frame.dft_size);
      c.frame.n_mel = f.value("n_mel", c.frame.n_mel);
      c.frame.n_ceps = f.value("n_ceps", c.frame.n_ceps);
      c.frame.delta_window = f.value("delta_window", c.frame.delta_window);
    }
    if (j.contains("silence")) {
      const auto& s = j["silence"];
      c.grammar.silence = s.value("enabled", c.grammar.silence);
      c.grammar.silence_word = s.value("word", c.grammar.silence_word);
      c.grammar.silence_states = s.value("states", c.grammar.silence_states);
    }
    if (j.contains("attacker")) party_from_json(j["attacker"], c.attacker);
    if (j.contains("victim")) party_from_json(j["victim"], c.victim);
    if (j.contains("attack")) {
      const auto& a = j["attack"];
      c.budgets = a.value("r_p", c.budgets);
      c.surrogate_counts = a.value("surrogates", c.surrogate_counts);
      if (a.contains("margin_db")) {
        c.margins.clear();
        for (const auto& m : a["margin_db"])
          c.margins.push_back(m.is_null() ? std::nullopt : std::optional<double>(m.get<double>()));
      }
      c.max_rounds = a.value("max_rounds", c.max_rounds);
      c.max_steps = a.value("max_steps", c.max_steps);
      c.inner_lr = a.value("inner_lr", c.inner_lr);
      c.convergence_delta = a.value("convergence_delta", c.convergence_delta);
    }
    if (j.contains("rooms")) {
      const auto& r = j["rooms"];
      c.rooms_enabled = r.value("enabled", c.rooms_enabled);
      if (r.contains("grid")) {
        const auto& g = r["grid"];
        if (g.is_array())
          c.rooms = parse_room_grid(nlohmann::json{{"rooms", g}}.dump());
        else
          c.rooms = g.get<std::string>() == "default" ? default_room_grid() : read_room_grid(g.get<std::string>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open config " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return parse_experiment_config(os.str());
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["trials"] = c.trials;
  j["workers"] = c.workers;
  j["corpus"] = corpus_to_json(c.corpus);
  j["manifests"] = {{"train", c.train_manifest}, {"test", c.test_manifest}};
  j["frame"] = {{"frame_length", c.frame.frame_length}, {"hop_length", c.frame.hop_length},
                {"dft_size", c.frame.dft_size},         {"n_mel", c.frame.n_mel},
                {"n_ceps", c.frame.n_ceps},             {"delta_window", c.frame.delta_window}};
  j["silence"] = {{"enabled", c.grammar.silence},
                  {"word", c.grammar.silence_word},
                  {"states", c.grammar.silence_states}};
  j["attacker"] = party_to_json(c.attacker);
  j["victim"] = party_to_json(c.victim);
  ojson margins = ojson::array();
  for (const auto& m : c.margins) margins.push_back(m ? ojson(*m) : ojson(nullptr));
  j["attack"] = {{"r_p", c.budgets},
                 {"surrogates", c.surrogate_counts},
                 {"margin_db", margins},
                 {"max_rounds", c.max_rounds},
                 {"max_steps", c.max_steps},
                 {"inner_lr", c.inner_lr},
                 {"convergence_delta", c.convergence_delta}};
  ojson rooms = ojson::array();
  for (const auto& r : c.rooms)
    rooms.push_back({{"name", r.name},
                     {"dimensions", r.dimensions},
                     {"mic", r.mic},
                     {"speaker", r.speaker},
                     {"sample_rate", r.sample_rate},
                     {"sound_speed", r.sound_speed},
                     {"rt60", r.rt60}});
  j["rooms"] = {{"enabled", c.rooms_enabled}, {"grid", rooms}};
  return j.dump(2) + "\n";
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string SweepPoint::label() const {
  std::ostringstream os;
  os << "r_p=" << fmt(r_p * 100.0, 2) << "% M=" << surrogates << " margin=" << margin_text(margin_db);
  return os.str();
}

std::string SweepPoint::slug() const {
  std::ostringstream os;
  os << "rp" << fmt(r_p * 100.0, 2) << "_m" << surrogates << "_";
  os << (margin_db ? "a" + fmt(*margin_db, 1) : std::string("none"));
  std::string s = os.str();
  std::replace(s.begin(), s.end(), '.', 'p');
  std::replace(s.begin(), s.end(), '-', 'n');
  return s;
}

std::vector<SweepPoint> sweep_points(const ExperimentConfig& cfg) {
  std::vector<SweepPoint> pts;
  for (double r : cfg.budgets)
    for (int m : cfg.surrogate_counts)
      for (const auto& a : cfg.margins) pts.push_back({r, m, a});
  return pts;
}

PreparedExperiment prepare_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  PreparedExperiment prep;
  std::vector<LexiconEntry> lexicon;
  if (cfg.train_manifest.empty()) {
    auto [tr, te] = generate_corpus(cfg.corpus, cfg.workers);
    prep.train = std::move(tr);
    prep.test = std::move(te);
    lexicon = cfg.corpus.lexicon();
  } else {
    const auto words = cfg.corpus.words();
    const int sr = cfg.corpus.sample_rate;
    prep.train = load_external(cfg.train_manifest, words, sr);
    prep.test = load_external(cfg.test_manifest, words, sr);
    lexicon = cfg.corpus.lexicon();
  }
  prep.hmm = build_hmm(lexicon, cfg.grammar);

  const Dataset attacker_train = pick_split(prep.train, cfg.attacker.split);
  const Dataset victim_train = pick_split(prep.train, cfg.victim.split);
  if (attacker_train.size() == 0 || victim_train.size() == 0 || prep.test.size() == 0)
    throw ValidationError("empty training or test set");

  const FeatureExtractor fx(cfg.frame, cfg.corpus.sample_rate);
  std::vector<FeatureMatrix> feats(attacker_train.size());
  parallel_for(feats.size(), cfg.workers,
               [&](std::size_t i) { feats[i] = fx.extract(attacker_train.utterances[i].audio); });
  std::vector<TrainingUtterance> tu;
  for (std::size_t i = 0; i < feats.size(); ++i)
    tu.push_back({attacker_train.utterances[i].id(), &feats[i], attacker_train.utterances[i].transcript});
  NetArchitecture arch = cfg.attacker.arch;
  arch.output_size = prep.hmm.num_states();
  arch.feature_dim = cfg.frame.feature_dim();
  TrainConfig tc = cfg.attacker.train;
  tc.seed = derive_seed(cfg.seed, 0xa7aULL, 2);
  prep.attacker_baseline = viterbi_training(tu, prep.hmm, AcousticNet::init(arch, derive_seed(cfg.seed, 0xa7aULL, 1)),
                                            tc, cfg.attacker.schedule);

  prep.env = std::make_unique<AttackEnvironment>(prep.hmm, cfg.frame, attacker_train,
                                                 prep.attacker_baseline.alignments,
                                                 prep.attacker_baseline.net, victim_train, prep.test);

  // Targets: single-word test utterances the attacker system gets right and
  // whose word lasts long enough for any adversarial word.
  const auto& env = *prep.env;
  const auto& net = prep.attacker_baseline.net;
  int longest = 0;
  for (const auto& w : prep.hmm.words())
    if (!w.is_silence) longest = std::max(longest, w.num_states);
  std::vector<std::vector<std::string>> hyps(prep.test.size());
  std::vector<char> eligible(prep.test.size(), 0);
  parallel_for(prep.test.size(), cfg.workers, [&](std::size_t i) {
    const auto lp = net.forward(env.test_features()[i]).log_posteriors;
    const auto dec = viterbi_decode(prep.hmm, lp);
    hyps[i] = dec.words;
    const auto& ref = prep.test.utterances[i].transcript;
    if (ref.size() != 1 || dec.words != ref) return;
    const auto al = forced_align(prep.hmm, lp, ref);
    const auto [b, e] = word_span(prep.hmm, al.states, ref[0]);
    eligible[i] = e - b >= longest ? 1 : 0;
  });
  prep.attacker_accuracy = word_accuracy(env.test_references(), hyps).percent;
  for (std::size_t i = 0; i < eligible.size(); ++i)
    if (eligible[i]) prep.targets.push_back(i);
  if (prep.targets.empty()) throw Error("no eligible target utterances in the test set");
  Rng rng(derive_seed(cfg.seed, 0x7a67ULL));
  for (std::size_t i = prep.targets.size(); i > 1; --i)
    std::swap(prep.targets[i - 1], prep.targets[rng.below(i)]);
  return prep;
}

std::pair<std::size_t, std::string> trial_target(const ExperimentConfig& cfg, const PreparedExperiment& prep,
                                                 int k) {
  const std::size_t idx = prep.targets[static_cast<std::size_t>(k) % prep.targets.size()];
  const std::string& orig = prep.test.utterances[idx].transcript.front();
  std::vector<std::string> others;
  for (const auto& w : prep.hmm.words())
    if (!w.is_silence && w.name != orig) others.push_back(w.name);
  if (others.empty()) throw ValidationError("vocabulary needs at least two words");
  Rng rng(derive_seed(cfg.seed, 0xadd0ULL, k));
  return {idx, others[rng.below(others.size())]};
}

ReportBundle run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  cfg.validate();
  std::mutex log_mu;
  auto log = [&](const std::string& msg) {
    if (!options.log) return;
    std::lock_guard<std::mutex> lock(log_mu);
    options.log(msg);
  };
  fs::create_directories(options.out);
  const std::string cfg_json = experiment_config_to_json(cfg);
  write_text(options.out / "config.json", cfg_json);

  log("preparing corpus and attacker system");
  PreparedExperiment prep = prepare_experiment(cfg);
  {
    ojson b;
    b["train_utterances"] = prep.train.size();
    b["test_utterances"] = prep.test.size();
    b["attacker_train_utterances"] = prep.env->attacker_train().size();
    b["victim_train_utterances"] = prep.env->victim_train().size();
    b["hmm_states"] = prep.hmm.num_states();
    b["attacker_accuracy"] = prep.attacker_accuracy;
    b["eligible_targets"] = prep.targets.size();
    write_text(options.out / "baseline" / "baseline.json", b.dump(2) + "\n");
    prep.attacker_baseline.net.save(options.out / "baseline" / "attacker.net");
    write_alignments(options.out / "baseline" / "alignments.txt", prep.attacker_baseline.alignments);
    log("attacker system word accuracy " + fmt(prep.attacker_accuracy, 2) + "%, " +
        std::to_string(prep.targets.size()) + " eligible targets");
  }

  if (cfg.rooms_enabled) {
    std::vector<std::string> names;
    std::vector<ImpulseResponse> irs(cfg.rooms.size());
    for (const auto& r : cfg.rooms) names.push_back(room_label(r));
    parallel_for(irs.size(), cfg.workers, [&](std::size_t i) { irs[i] = simulate_rir(cfg.rooms[i]); });
    prep.env->set_rooms(names, irs);
  }

  ReportBundle bundle;
  bundle.points = sweep_points(cfg);
  if (options.first_point_only) bundle.points.resize(1);

  const int trials = cfg.trials;
  const int outer = std::max(1, std::min(cfg.workers == 0 ? default_workers() : cfg.workers, trials));
  const int inner = std::max(1, (cfg.workers == 0 ? default_workers() : cfg.workers) / outer);
  for (std::size_t p = 0; p < bundle.points.size(); ++p) {
    const SweepPoint& pt = bundle.points[p];
    std::vector<TrialRecord> recs(static_cast<std::size_t>(trials));
    parallel_for(recs.size(), outer, [&](std::size_t k) {
      const int trial = static_cast<int>(k);
      const fs::path dir = options.out / "points" / pt.slug() / ("trial_" + std::to_string(trial));
      const std::string hash = hex64(fnv1a64(cfg_json + "|" + pt.label() + "|" + std::to_string(trial)));
      recs[k].point = pt;
      recs[k].trial = trial;
      if (options.resume && fs::exists(dir / "report.json") && fs::exists(dir / "trial.json")) {
        const auto tj = nlohmann::json::parse(read_text(dir / "trial.json"));
        if (tj.value("config_hash", std::string()) == hash) {
          recs[k].report = report_from_json(read_text(dir / "report.json"));
          log(pt.label() + " trial " + std::to_string(trial) + ": resumed");
          return;
        }
      }
      AttackConfig ac;
      ac.r_p = pt.r_p;
      ac.surrogates = pt.surrogates;
      ac.margin_db = pt.margin_db;
      ac.max_rounds = cfg.max_rounds;
      ac.max_steps = cfg.max_steps;
      ac.inner_lr = cfg.inner_lr;
      ac.convergence_delta = cfg.convergence_delta;
      ac.workers = inner;
      NetArchitecture sa = cfg.attacker.arch, va = cfg.victim.arch;
      sa.output_size = va.output_size = prep.hmm.num_states();
      sa.feature_dim = va.feature_dim = cfg.frame.feature_dim();
      ac.surrogate = {sa, cfg.attacker.train};
      ac.victim = {va, cfg.victim.train, cfg.victim.schedule};
      const auto [idx, adv] = trial_target(cfg, prep, trial);
      const Utterance& target = prep.test.utterances[idx];
      const std::string orig = target.transcript.front();
      // The trial seed ignores the sweep point so that points share targets
      // and initial conditions.
      const CraftResult res =
          craft_poisons(*prep.env, target, orig, adv, ac, derive_seed(cfg.seed, 0x7419ULL, trial), dir);
      recs[k].report = res.report;
      ojson tj;
      tj["point_index"] = p;
      tj["point"] = point_to_json(pt);
      tj["trial"] = trial;
      tj["config_hash"] = hash;
      write_text(dir / "trial.json", tj.dump(2) + "\n");
      log(pt.label() + " trial " + std::to_string(trial) + ": " + target.id() + " " + orig + "->" + adv +
          (res.report.success ? " success" : " failure") + " after " + std::to_string(res.report.rounds) +
          " rounds");
    });
    std::vector<AttackReport> reps;
    for (auto& r : recs) {
      reps.push_back(r.report);
      bundle.trials.push_back(std::move(r));
    }
    bundle.summary.push_back(aggregate(reps, pt.label()));
  }
  emit_report(bundle, options.out);

  ojson man;
  man["config"] = "config.json";
  man["baseline"] = {"baseline/baseline.json", "baseline/attacker.net", "baseline/alignments.txt"};
  man["reports"] = {"summary.csv", "trials.csv", "timing.csv", "summary.txt"};
  man["trials"] = ojson::array();
  for (const auto& t : bundle.trials)
    man["trials"].push_back("points/" + t.point.slug() + "/trial_" + std::to_string(t.trial));
  write_text(options.out / "manifest.json", man.dump(2) + "\n");
  return bundle;
}

void emit_report(const ReportBundle& b, const fs::path& out) {
  if (b.summary.empty() || b.trials.empty()) throw ValidationError("emit_report: empty bundle");
  if (b.points.size() != b.summary.size()) throw ValidationError("emit_report: points and rows differ");
  fs::create_directories(out);
  std::vector<std::string> rooms = b.summary.empty() ? std::vector<std::string>{} : b.summary[0].room_names;

  std::ostringstream s;
  s << "point,r_p,surrogates,margin_db,trials,successes,success_rate,clean_accuracy,baseline_accuracy,"
       "poisoned_seconds,poisoned_samples,snrseg_db,delta_max,attack_steps";
  for (const auto& r : rooms) s << ",ota_" << r;
  s << '\n';
  for (std::size_t i = 0; i < b.summary.size(); ++i) {
    const auto& row = b.summary[i];
    const auto& p = b.points[i];
    s << csv_field(row.label) << ',' << fmt(p.r_p) << ',' << p.surrogates << ','
      << (p.margin_db ? fmt(*p.margin_db) : "") << ',' << row.trials << ',' << row.successes << ','
      << fmt(row.success_rate) << ',' << fmt(row.clean_accuracy) << ',' << fmt(row.baseline_accuracy) << ','
      << fmt(row.poisoned_seconds) << ',' << fmt(row.poisoned_samples) << ',' << fmt(row.snrseg_db) << ','
      << fmt(row.delta_max) << ',' << fmt(row.attack_steps);
    for (double v : row.room_success_rate) s << ',' << fmt(v);
    s << '\n';
  }
  write_text(out / "summary.csv", s.str());

  std::ostringstream t, tm;
  t << "point,trial,target,original,adversarial,success,rounds,inner_steps,clean_accuracy,baseline_accuracy,"
       "poisoned_seconds,poisoned_samples,snrseg_db,delta_max,transcription";
  for (const auto& r : rooms) t << ",ota_" << r;
  t << '\n';
  tm << "point,trial,wall_time_s\n";
  for (const auto& rec : b.trials) {
    const auto& r = rec.report;
    t << csv_field(rec.point.label()) << ',' << rec.trial << ',' << r.target_id << ',' << r.original_word << ','
      << r.adversarial_word << ',' << (r.success ? 1 : 0) << ',' << r.rounds << ',' << r.inner_steps << ','
      << fmt(r.clean_accuracy) << ',' << fmt(r.baseline_accuracy) << ',' << fmt(r.poisoned_seconds) << ','
      << r.poisoned_samples << ',' << fmt(r.mean_snrseg()) << ',' << fmt(r.delta_max) << ','
      << csv_field(join(r.transcription));
    for (std::size_t k = 0; k < rooms.size(); ++k)
      t << ',' << (k < r.room_success.size() && r.room_success[k] ? 1 : 0);
    t << '\n';
    tm << csv_field(rec.point.label()) << ',' << rec.trial << ',' << fmt(r.wall_time_s, 3) << '\n';
  }
  write_text(out / "trials.csv", t.str());
  write_text(out / "timing.csv", tm.str());
  write_text(out / "summary.txt", format_summary_table(b.summary, b.points));
}

ReportBundle collect_reports(const fs::path& out) {
  const fs::path root = out / "points";
  if (!fs::is_directory(root)) throw ValidationError("no trial results under " + out.string());
  struct Found {
    std::size_t point_index;
    TrialRecord rec;
  };
  std::vector<Found> found;
  for (const auto& pd : fs::directory_iterator(root)) {
    if (!pd.is_directory()) continue;
    for (const auto& td : fs::directory_iterator(pd.path())) {
      if (!fs::exists(td.path() / "trial.json") || !fs::exists(td.path() / "report.json")) continue;
      try {
        const auto tj = nlohmann::json::parse(read_text(td.path() / "trial.json"));
        Found f;
        f.point_index = tj.at("point_index").get<std::size_t>();
        f.rec.point = point_from_json(tj.at("point"));
        f.rec.trial = tj.at("trial").get<int>();
        f.rec.report = report_from_json(read_text(td.path() / "report.json"));
        found.push_back(std::move(f));
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(td.path().string() + ": " + e.what());
      }
    }
  }
  if (found.empty()) throw ValidationError("no trial results under " + out.string());
  std::sort(found.begin(), found.end(), [](const Found& a, const Found& b) {
    return a.point_index != b.point_index ? a.point_index < b.point_index : a.rec.trial < b.rec.trial;
  });
  ReportBundle bundle;
  std::vector<AttackReport> reps;
  std::size_t current = found.front().point_index;
  auto flush = [&]() {
    bundle.summary.push_back(aggregate(reps, bundle.points.back().label()));
    reps.clear();
  };
  bundle.points.push_back(found.front().rec.point);
  for (auto& f : found) {
    if (f.point_index != current) {
      flush();
      current = f.point_index;
      bundle.points.push_back(f.rec.point);
    }
    reps.push_back(f.rec.report);
    bundle.trials.push_back(std::move(f.rec));
  }
  flush();
  return bundle;
}

std::string format_summary_table(const std::vector<SummaryRow>& rows, const std::vector<SweepPoint>& points) {
  std::vector<std::string> head = {"r_p (%)", "M", "margin (dB)", "success (%)", "clean acc (%)",
                                   "baseline acc (%)", "poisoned (s)", "poison frames", "SNRseg (dB)",
                                   "delta_max", "attack steps", "time (s)"};
  const std::vector<std::string> rooms = rows.empty() ? std::vector<std::string>{} : rows[0].room_names;
  for (const auto& r : rooms) head.push_back("OTA " + r + " (%)");
  std::vector<std::vector<std::string>> cells;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& p = points[i];
    std::vector<std::string> c = {fmt(p.r_p * 100.0, 2),
                                  std::to_string(p.surrogates),
                                  margin_text(p.margin_db),
                                  fmt(r.success_rate, 1) + " (" + std::to_string(r.successes) + "/" +
                                      std::to_string(r.trials) + ")",
                                  fmt(r.clean_accuracy, 2),
                                  fmt(r.baseline_accuracy, 2),
                                  fmt(r.poisoned_seconds, 2),
                                  fmt(r.poisoned_samples, 1),
                                  fmt(r.snrseg_db, 2),
                                  fmt(r.delta_max, 3),
                                  fmt(r.attack_steps, 2),
                                  fmt(r.wall_time_s, 1)};
    for (double v : r.room_success_rate) c.push_back(fmt(v, 1));
    cells.push_back(std::move(c));
  }
  std::vector<std::size_t> width(head.size());
  for (std::size_t k = 0; k < head.size(); ++k) {
    width[k] = head[k].size();
    for (const auto& c : cells) width[k] = std::max(width[k], c[k].size());
  }
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& v) {
    for (std::size_t k = 0; k < v.size(); ++k)
      os << (k ? " | " : "") << std::setw(static_cast<int>(width[k])) << v[k];
    os << '\n';
  };
  line(head);
  for (std::size_t k = 0; k < head.size(); ++k) os << (k ? "-+-" : "") << std::string(width[k], '-');
  os << '\n';
  for (const auto& c : cells) line(c);
  return os.str();
}

}  // namespace asrp
