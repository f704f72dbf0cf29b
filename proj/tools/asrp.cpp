// tools/asrp.cpp

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

// Command-line front end: corpus generation, baseline training, decoding,
// attack runs and sweeps, room simulation and report assembly.

#include <CLI11.hpp>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "asrp/experiment.hpp"

namespace fs = std::filesystem;
using namespace asrp;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool resume = false;
};

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg =
      c.config.empty() ? ExperimentConfig::desk_default() : load_experiment_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.corpus.seed = *c.seed;
  }
  cfg.validate();
  return cfg;
}

fs::path require_out(const Common& c) {
  if (c.out.empty()) throw ValidationError("--out is required");
  fs::create_directories(c.out);
  return c.out;
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + p.string());
  f << text;
}

void log_line(const std::string& s) { std::cerr << "[asrp] " << s << std::endl; }

void add_common(CLI::App* app, Common& c, bool with_resume) {
  app->add_option("--config", c.config, "experiment config (JSON)");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--seed", c.seed, "base seed override");
  if (with_resume) app->add_flag("--resume", c.resume, "skip trials already completed under --out");
}

void cmd_gen_corpus(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const fs::path out = require_out(c);
  auto [train, test] = generate_corpus(cfg.corpus, cfg.workers);
  save_dataset(out / "train", train);
  save_dataset(out / "test", test);
  write_file(out / "config.json", experiment_config_to_json(cfg));
  nlohmann::ordered_json m;
  m["config"] = "config.json";
  m["train"] = {{"manifest", "train/manifest.csv"}, {"utterances", train.size()}, {"speakers", train.speakers()}};
  m["test"] = {{"manifest", "test/manifest.csv"}, {"utterances", test.size()}, {"speakers", test.speakers()}};
  write_file(out / "manifest.json", m.dump(2) + "\n");
  log_line("wrote " + std::to_string(train.size()) + " train and " + std::to_string(test.size()) +
           " test utterances to " + out.string());
}

void cmd_train_baseline(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const fs::path out = require_out(c);
  const auto t0 = std::chrono::steady_clock::now();
  PreparedExperiment prep = prepare_experiment(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  prep.attacker_baseline.net.save(out / "model.net");
  write_alignments(out / "alignments.txt", prep.attacker_baseline.alignments);
  write_lexicon(out / "lexicon.json", cfg.corpus.lexicon(), cfg.grammar);
  write_file(out / "config.json", experiment_config_to_json(cfg));
  nlohmann::ordered_json j;
  j["word_accuracy"] = prep.attacker_accuracy;
  j["train_utterances"] = prep.env->attacker_train().size();
  j["test_utterances"] = prep.test.size();
  j["epoch_losses"] = prep.attacker_baseline.epoch_losses;
  j["realignment_change_rates"] = prep.attacker_baseline.change_rates;
  j["seconds"] = secs;
  write_file(out / "baseline.json", j.dump(2) + "\n");
  nlohmann::ordered_json m;
  m["artifacts"] = {"config.json", "model.net", "alignments.txt", "lexicon.json", "baseline.json"};
  write_file(out / "manifest.json", m.dump(2) + "\n");
  std::cout << "word accuracy " << prep.attacker_accuracy << " %\n";
}

void cmd_decode(const Common& c, const std::string& model, const std::string& lexicon,
                const std::vector<std::string>& wavs) {
  const ExperimentConfig cfg = load(c);
  std::vector<LexiconEntry> lex = cfg.corpus.lexicon();
  Grammar grammar = cfg.grammar;
  if (!lexicon.empty()) std::tie(lex, grammar) = read_lexicon(lexicon);
  const HmmModel hmm = build_hmm(lex, grammar);
  const AcousticNet net = AcousticNet::load(model);
  if (net.architecture().output_size != hmm.num_states())
    throw ValidationError("model outputs do not match the lexicon's state count");
  const FeatureExtractor fx(cfg.frame, cfg.corpus.sample_rate);
  for (const auto& p : wavs) {
    const Waveform w = read_wav(p);
    if (w.sample_rate != fx.sample_rate()) throw ValidationError(p + ": unexpected sample rate");
    const auto dec = viterbi_decode(hmm, net.forward(fx.extract(w)).log_posteriors);
    std::cout << p << '\t';
    for (std::size_t i = 0; i < dec.words.size(); ++i) std::cout << (i ? " " : "") << dec.words[i];
    std::cout << '\n';
  }
}

void cmd_run(const Common& c, bool first_point_only) {
  const ExperimentConfig cfg = load(c);
  RunOptions opt;
  opt.out = require_out(c);
  opt.resume = c.resume;
  opt.first_point_only = first_point_only;
  opt.log = log_line;
  const ReportBundle b = run_experiment(cfg, opt);
  std::cout << format_summary_table(b.summary, b.points);
}

void cmd_simulate_room(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const fs::path out = require_out(c);
  const auto& rooms = cfg.rooms.empty() ? default_room_grid() : cfg.rooms;
  std::vector<ImpulseResponse> irs(rooms.size());
  parallel_for(rooms.size(), cfg.workers, [&](std::size_t i) { irs[i] = simulate_rir(rooms[i]); });
  std::ostringstream csv;
  csv << "room,rt60,measured_rt60,taps,direct_delay,file\n";
  nlohmann::ordered_json m;
  m["artifacts"] = {"rooms.json", "rooms.csv"};
  for (std::size_t i = 0; i < rooms.size(); ++i) {
    std::ostringstream name;
    name << rooms[i].name << "_rt" << static_cast<int>(std::lround(rooms[i].rt60 * 1000)) << "ms.wav";
    // Stored at unit peak so the PCM file keeps the decay shape.
    Waveform w;
    w.sample_rate = irs[i].sample_rate;
    w.samples = irs[i].taps;
    double peak = 0.0;
    for (double v : w.samples) peak = std::max(peak, std::fabs(v));
    if (peak > 0.0)
      for (double& v : w.samples) v /= peak;
    write_wav(out / name.str(), w);
    const double measured = estimate_rt60(irs[i].taps, irs[i].sample_rate);
    csv << rooms[i].name << ',' << rooms[i].rt60 << ',' << measured << ',' << irs[i].taps.size() << ','
        << irs[i].direct_delay << ',' << name.str() << '\n';
    m["artifacts"].push_back(name.str());
    std::cout << rooms[i].name << " rt60 " << rooms[i].rt60 << " measured " << measured << '\n';
  }
  write_room_grid(out / "rooms.json", rooms);
  write_file(out / "rooms.csv", csv.str());
  write_file(out / "manifest.json", m.dump(2) + "\n");
}

void cmd_report(const Common& c) {
  const fs::path out = require_out(c);
  const ReportBundle b = collect_reports(out);
  emit_report(b, out);
  std::cout << format_summary_table(b.summary, b.points);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poisoning testbed for a hybrid DNN-HMM recognizer"};
  app.require_subcommand(1);
  Common common;
  std::string model, lexicon;
  std::vector<std::string> wavs;

  auto* gen = app.add_subcommand("gen-corpus", "render the synthetic corpus to WAV files");
  add_common(gen, common, false);
  auto* base = app.add_subcommand("train-baseline", "Viterbi-train the baseline recognizer");
  add_common(base, common, false);
  auto* dec = app.add_subcommand("decode", "transcribe WAV files");
  add_common(dec, common, false);
  dec->add_option("--model", model, "network file")->required();
  dec->add_option("--lexicon", lexicon, "lexicon file (default: from config)");
  dec->add_option("wavs", wavs, "input WAV files")->required();
  auto* atk = app.add_subcommand("attack", "run the first sweep point of a config");
  add_common(atk, common, true);
  auto* sweep = app.add_subcommand("sweep", "run every sweep point of a config");
  add_common(sweep, common, true);
  auto* room = app.add_subcommand("simulate-room", "render room impulse responses");
  add_common(room, common, false);
  auto* rep = app.add_subcommand("report", "rebuild summary files from trial results");
  add_common(rep, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) cmd_gen_corpus(common);
    else if (base->parsed()) cmd_train_baseline(common);
    else if (dec->parsed()) cmd_decode(common, model, lexicon, wavs);
    else if (atk->parsed()) cmd_run(common, true);
    else if (sweep->parsed()) cmd_run(common, false);
    else if (room->parsed()) cmd_simulate_room(common);
    else if (rep->parsed()) cmd_report(common);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
