// src/corpus.cpp

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

#include "asrp/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "asrp/common.hpp"

namespace asrp {

namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream ss(s);
  std::vector<std::string> out;
  for (std::string w; ss >> w;) out.push_back(w);
  return out;
}

std::string join_words(const std::vector<std::string>& w) {
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) out += (i ? " " : "") + w[i];
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string two_digits(int v, int width) {
  std::ostringstream ss;
  ss << std::setw(width) << std::setfill('0') << v;
  return ss.str();
}

struct SpeakerVoice {
  double pitch = 1.0;
  double rate = 1.0;
  double gain = 1.0;
  double balance = 0.5;  // share of the first band
};

void add_silence(std::vector<double>& out, double seconds, int sr) {
  out.insert(out.end(), static_cast<std::size_t>(std::lround(seconds * sr)), 0.0);
}

void render_word(std::vector<double>& out, const WordRecipe& recipe, const SpeakerVoice& voice,
                 const CorpusSpec& spec, Rng& rng) {
  const double sr = spec.sample_rate;
  double phase1 = rng.uniform(0.0, 2.0 * M_PI), phase2 = rng.uniform(0.0, 2.0 * M_PI);
  for (const auto& seg : recipe.segments) {
    const double dur = seg.duration_s * voice.rate * (1.0 + rng.uniform(-0.5, 0.5) * spec.duration_jitter);
    const auto n = static_cast<std::size_t>(std::max(1.0, std::round(dur * sr)));
    const double f1 = seg.f1 * voice.pitch * (1.0 + rng.uniform(-0.01, 0.01));
    const double f2 = seg.f2 * voice.pitch * (1.0 + rng.uniform(-0.01, 0.01));
    const double ramp = std::min(0.005 * sr, n / 4.0);
    for (std::size_t i = 0; i < n; ++i) {
      double env = 1.0;
      const double t = static_cast<double>(i);
      if (t < ramp) env = 0.5 - 0.5 * std::cos(M_PI * t / ramp);
      const double tail = static_cast<double>(n - 1 - i);
      if (tail < ramp) env = std::min(env, 0.5 - 0.5 * std::cos(M_PI * tail / ramp));
      phase1 += 2.0 * M_PI * f1 / sr;
      phase2 += 2.0 * M_PI * f2 / sr;
      out.push_back(spec.amplitude * voice.gain * env *
                    (voice.balance * std::sin(phase1) + (1.0 - voice.balance) * std::sin(phase2)));
    }
  }
}

}  // namespace

std::vector<std::string> Dataset::speakers() const {
  std::set<std::string> s;
  for (const auto& u : utterances) s.insert(u.speaker);
  return {s.begin(), s.end()};
}

long Dataset::find(const std::string& id) const {
  for (std::size_t i = 0; i < utterances.size(); ++i)
    if (utterances[i].id() == id) return static_cast<long>(i);
  return -1;
}

void Dataset::validate(const std::vector<std::string>& vocabulary) const {
  std::set<std::string> ids;
  const std::set<std::string> vocab(vocabulary.begin(), vocabulary.end());
  for (const auto& u : utterances) {
    if (!ids.insert(u.id()).second) throw ValidationError("duplicate utterance id '" + u.id() + "'");
    u.audio.validate();
    if (!vocab.empty())
      for (const auto& w : u.transcript)
        if (!vocab.count(w))
          throw ValidationError("utterance '" + u.id() + "': unknown word '" + w + "'");
  }
}

double Dataset::peak() const {
  double p = 0.0;
  for (const auto& u : utterances) p = std::max(p, u.audio.peak());
  return p;
}

void CorpusSpec::validate() const {
  if (vocabulary.size() < 2) throw ValidationError("corpus: vocabulary needs at least 2 words");
  std::set<std::string> names;
  for (const auto& r : vocabulary) {
    if (r.word.empty() || !names.insert(r.word).second)
      throw ValidationError("corpus: word names must be unique and non-empty");
    if (r.segments.empty()) throw ValidationError("corpus: word '" + r.word + "' has no segments");
    for (const auto& s : r.segments)
      if (!(s.f1 > 0.0 && s.f2 > 0.0 && s.f1 < sample_rate / 2.0 && s.f2 < sample_rate / 2.0 &&
            s.duration_s > 0.0))
        throw ValidationError("corpus: word '" + r.word + "' has an invalid segment");
  }
  for (std::size_t a = 0; a < vocabulary.size(); ++a)
    for (std::size_t b = a + 1; b < vocabulary.size(); ++b) {
      const auto& x = vocabulary[a].segments;
      const auto& y = vocabulary[b].segments;
      bool same = x.size() == y.size();
      for (std::size_t i = 0; same && i < x.size(); ++i)
        same = x[i].f1 == y[i].f1 && x[i].f2 == y[i].f2 && x[i].duration_s == y[i].duration_s;
      if (same)
        throw ValidationError("corpus: words '" + vocabulary[a].word + "' and '" +
                              vocabulary[b].word + "' share a recipe");
    }
  if (n_speakers < 2) throw ValidationError("corpus: need at least 2 speakers");
  if (utterances_per_speaker < 1) throw ValidationError("corpus: utterances_per_speaker must be >= 1");
  if (min_words < 1 || max_words < min_words) throw ValidationError("corpus: invalid words-per-utterance range");
  if (!(amplitude > 0.0 && amplitude <= 1.0)) throw ValidationError("corpus: amplitude must be in (0, 1]");
  if (!(noise_floor >= 0.0)) throw ValidationError("corpus: noise_floor must be >= 0");
  if (!(pause_min_s >= 0.0 && pause_max_s >= pause_min_s && edge_silence_s >= 0.0))
    throw ValidationError("corpus: invalid pause lengths");
  if (!(pitch_jitter >= 0.0 && pitch_jitter < 0.5 && duration_jitter >= 0.0 && duration_jitter < 1.0))
    throw ValidationError("corpus: jitter out of range");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValidationError("corpus: train_fraction must be in (0, 1)");
  if (sample_rate <= 0) throw ValidationError("corpus: sample_rate must be positive");
}

std::vector<std::string> CorpusSpec::words() const {
  std::vector<std::string> w;
  for (const auto& r : vocabulary) w.push_back(r.word);
  return w;
}

std::vector<LexiconEntry> CorpusSpec::lexicon() const {
  std::vector<LexiconEntry> lex;
  for (const auto& r : vocabulary) lex.push_back({r.word, static_cast<int>(r.segments.size())});
  return lex;
}

CorpusSpec CorpusSpec::desk_default() {
  // Two candidate segments per position; every pair of words differs in
  // exactly two positions, so words share units the way digits share phones.
  const ToneSegment a{300, 2300, 0.09}, b{650, 1500, 0.09};
  const ToneSegment c{550, 1900, 0.11}, d{400, 2700, 0.11};
  const ToneSegment e{750, 1300, 0.10}, f{350, 3100, 0.10};
  const ToneSegment g{450, 2500, 0.08}, h{900, 1700, 0.08};
  CorpusSpec s;
  s.vocabulary = {
      {"one", {a, c, e, g}},
      {"two", {b, d, e, g}},
      {"three", {b, c, f, g}},
      {"four", {b, c, e, h}},
  };
  return s;
}

std::pair<Dataset, Dataset> generate_corpus(const CorpusSpec& spec, int workers) {
  spec.validate();
  const int sr = spec.sample_rate;
  Dataset all;
  all.provenance = "synthetic:" + std::to_string(spec.seed);
  const std::size_t total =
      static_cast<std::size_t>(spec.n_speakers) * static_cast<std::size_t>(spec.utterances_per_speaker);
  all.utterances.resize(total);
  const int spk_width = spec.n_speakers > 100 ? 3 : 2;

  parallel_for(total, workers, [&](std::size_t index) {
    const int s = static_cast<int>(index / spec.utterances_per_speaker);
    const int u = static_cast<int>(index % spec.utterances_per_speaker);
    Rng vr(derive_seed(spec.seed, 0x5eacULL, s));
    SpeakerVoice voice;
    voice.pitch = 1.0 + vr.uniform(-1.0, 1.0) * spec.pitch_jitter;
    voice.rate = 1.0 + vr.uniform(-0.5, 0.5) * spec.duration_jitter;
    voice.gain = vr.uniform(0.6, 1.0);
    voice.balance = vr.uniform(0.35, 0.65);

    Rng rng(derive_seed(spec.seed, 0x0777ULL, s, u));
    Utterance utt;
    utt.speaker = "spk" + two_digits(s, spk_width);
    utt.audio.sample_rate = sr;
    utt.audio.id = utt.speaker + "_u" + two_digits(u, 3);
    const int n_words =
        spec.min_words + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_words - spec.min_words + 1)));
    auto& x = utt.audio.samples;
    add_silence(x, spec.edge_silence_s * rng.uniform(0.8, 1.2), sr);
    for (int k = 0; k < n_words; ++k) {
      if (k) add_silence(x, rng.uniform(spec.pause_min_s, spec.pause_max_s), sr);
      const auto& recipe = spec.vocabulary[rng.below(spec.vocabulary.size())];
      utt.transcript.push_back(recipe.word);
      render_word(x, recipe, voice, spec, rng);
    }
    add_silence(x, spec.edge_silence_s * rng.uniform(0.8, 1.2), sr);
    for (double& v : x) v += spec.noise_floor * rng.normal();
    clip_to_unit(utt.audio);
    quantize_to_pcm16(utt.audio);
    all.utterances[index] = std::move(utt);
  });

  auto [train, test] = split_speakers(all, spec.train_fraction);
  train.split = "train";
  test.split = "test";
  return {std::move(train), std::move(test)};
}

Dataset load_external(const std::filesystem::path& manifest, const std::vector<std::string>& vocabulary,
                      int sample_rate) {
  std::ifstream f(manifest);
  if (!f) throw ValidationError("cannot open manifest " + manifest.string());
  Dataset ds;
  ds.provenance = manifest.string();
  ds.split = "external";
  const std::set<std::string> vocab(vocabulary.begin(), vocabulary.end());
  const auto base = manifest.parent_path();
  std::string line;
  int row = 0;
  while (std::getline(f, line)) {
    ++row;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (row == 1 && line.rfind("path,", 0) == 0) continue;
    const std::string where = manifest.string() + ":" + std::to_string(row) + ": ";
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw ValidationError(where + "expected 'path,transcript,speaker'");
    std::filesystem::path path = trim(line.substr(0, c1));
    if (path.is_relative()) path = base / path;
    Utterance u;
    u.transcript = split_words(line.substr(c1 + 1, c2 - c1 - 1));
    u.speaker = trim(line.substr(c2 + 1));
    if (u.speaker.empty()) throw ValidationError(where + "empty speaker id");
    if (!std::filesystem::exists(path)) throw ValidationError(where + "missing file " + path.string());
    try {
      u.audio = read_wav(path);
    } catch (const Error& e) {
      throw ValidationError(where + e.what());
    }
    if (u.audio.sample_rate != sample_rate)
      throw ValidationError(where + "sample rate " + std::to_string(u.audio.sample_rate) +
                            " Hz, expected " + std::to_string(sample_rate) + " Hz");
    for (const auto& w : u.transcript)
      if (!vocab.empty() && !vocab.count(w)) throw ValidationError(where + "unknown word '" + w + "'");
    u.audio.id = path.stem().string();
    if (ds.find(u.id()) >= 0) throw ValidationError(where + "duplicate utterance id '" + u.id() + "'");
    ds.utterances.push_back(std::move(u));
  }
  return ds;
}

std::pair<Dataset, Dataset> split_speakers(const Dataset& dataset, double fraction) {
  const auto speakers = dataset.speakers();
  if (speakers.size() < 2) throw ValidationError("split_speakers: need at least 2 speakers");
  const auto cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(speakers.size())));
  if (!(fraction > 0.0) || cut == 0 || cut >= speakers.size())
    throw ValidationError("split_speakers: fraction leaves one side empty");
  const std::set<std::string> first(speakers.begin(), speakers.begin() + static_cast<std::ptrdiff_t>(cut));
  Dataset a, b;
  a.provenance = b.provenance = dataset.provenance;
  a.split = dataset.split + (dataset.split.empty() ? "" : "/") + "split1";
  b.split = dataset.split + (dataset.split.empty() ? "" : "/") + "split2";
  for (const auto& u : dataset.utterances) (first.count(u.speaker) ? a : b).utterances.push_back(u);
  return {std::move(a), std::move(b)};
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir);
  std::ofstream m(dir / "manifest.csv");
  if (!m) throw Error("cannot write manifest in " + dir.string());
  m << "path,transcript,speaker\n";
  for (const auto& u : dataset.utterances) {
    const std::filesystem::path rel = std::filesystem::path(u.speaker) / (u.id() + ".wav");
    write_wav(dir / rel, u.audio);
    m << rel.generic_string() << ',' << join_words(u.transcript) << ',' << u.speaker << '\n';
  }
}

}  // namespace asrp
