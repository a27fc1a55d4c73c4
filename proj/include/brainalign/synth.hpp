#pragma once

// Synthetic experiment with a known linear ground truth.
//
// Latent word features Z [n_words x k_latent] are Gaussian. Each "layer"
// exposes them through a random linear embedding into hidden_dim dimensions,
// optionally plus layer-dependent nuisance noise. Brain data is
//   lag(pool(Z)) * W_true * signal_scale + sigma * noise
// on the full (untrimmed) timeline, so the pipeline sees exactly the
// structure it is designed to recover.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"

#include "brainalign/align.hpp"
#include "brainalign/errors.hpp"
#include "brainalign/hash.hpp"
#include "brainalign/philox.hpp"
#include "brainalign/searchlight.hpp"
#include "brainalign/tensor_io.hpp"
#include "brainalign/textprep.hpp"

namespace brainalign::synth {

struct SynthSpec {
  std::size_t n_words = 0; // 0: derived as total TRs * words_per_tr
  std::size_t words_per_tr = align::kWordsPerTR;
  std::vector<std::size_t> run_lengths{100, 100, 100, 100};
  std::size_t trim_start = align::kDefaultTrimStart;
  std::size_t trim_end = align::kDefaultTrimEnd;
  std::size_t n_voxels = 50;
  std::size_t k_latent = 10;
  std::size_t hidden_dim = 32;
  std::size_t n_layers = 1;
  std::size_t n_lags = align::kDefaultLags;
  std::size_t n_subjects = 1;
  double noise_sigma = 1.0;
  /// When > 0, sigma is set so mean signal variance / noise variance == snr.
  double snr = 0.0;
  double signal_scale = 1.0;
  /// Nuisance noise added to layer l's features: layer_noise * l.
  double layer_noise = 0.0;
  /// Fraction of true weights forced to zero.
  double sparsity = 0.0;
  std::uint64_t seed = 0;
  std::string model = "synth";
  std::vector<std::size_t> seq_lengths{10};
  std::vector<std::string> scenarios{"none"};

  std::size_t total_trs() const {
    std::size_t n = 0;
    for (auto r : run_lengths)
      n += r;
    return n;
  }
  std::size_t words() const { return n_words ? n_words : total_trs() * words_per_tr; }

  void validate() const {
    require(!run_lengths.empty(), "synth: run_lengths is empty");
    for (auto r : run_lengths)
      require(r >= 1, "synth: run lengths must be >= 1");
    require(words_per_tr >= 1 && n_voxels >= 1 && k_latent >= 1 && hidden_dim >= 1 &&
                n_layers >= 1 && n_lags >= 1 && n_subjects >= 1,
            "synth: all counts must be >= 1");
    require(hidden_dim >= k_latent, "synth: hidden_dim must be >= k_latent");
    require(words() == total_trs() * words_per_tr,
            "synth: n_words must equal sum(run_lengths) * words_per_tr");
    require(noise_sigma >= 0.0 && snr >= 0.0, "synth: noise_sigma and snr must be >= 0");
    require(sparsity >= 0.0 && sparsity < 1.0, "synth: sparsity must be in [0, 1)");
    for (const auto &s : scenarios)
      textprep::parse_scenario(s);
  }

  align::RunLayout layout() const { return {run_lengths, trim_start, trim_end}; }
};

inline SynthSpec spec_from_json(const nlohmann::json &j) {
  SynthSpec s;
  try {
    s.n_words = j.value("n_words", s.n_words);
    s.words_per_tr = j.value("words_per_tr", s.words_per_tr);
    s.run_lengths = j.value("run_lengths", s.run_lengths);
    s.trim_start = j.value("trim_start", s.trim_start);
    s.trim_end = j.value("trim_end", s.trim_end);
    s.n_voxels = j.value("n_voxels", s.n_voxels);
    s.k_latent = j.value("k_latent", s.k_latent);
    s.hidden_dim = j.value("hidden_dim", s.hidden_dim);
    s.n_layers = j.value("n_layers", s.n_layers);
    s.n_lags = j.value("n_lags", s.n_lags);
    s.n_subjects = j.value("n_subjects", s.n_subjects);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.snr = j.value("snr", s.snr);
    s.signal_scale = j.value("signal_scale", s.signal_scale);
    s.layer_noise = j.value("layer_noise", s.layer_noise);
    s.sparsity = j.value("sparsity", s.sparsity);
    s.seed = j.value("seed", s.seed);
    s.model = j.value("model", s.model);
    s.seq_lengths = j.value("seq_lengths", s.seq_lengths);
    s.scenarios = j.value("scenarios", s.scenarios);
  } catch (const nlohmann::json::exception &e) {
    throw ParseError("synth spec", e.what());
  }
  s.validate();
  return s;
}

/// Deterministic Gaussian source: Box-Muller over a Philox stream.
class Gaussian {
public:
  Gaussian(std::uint64_t seed, std::uint64_t stream) : rng_(seed, stream) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - rng_.uniform01(); // (0, 1]
    const double u2 = rng_.uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        m(r, c) = (*this)();
    return m;
  }

  Philox4x64 &rng() { return rng_; }

private:
  Philox4x64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stream ids, one per generated quantity.
enum Stream : std::uint64_t {
  kLatent = 1,
  kEmbedding = 100,   // + layer
  kNuisance = 1000,   // + layer
  kWeights = 10000,   // + subject
  kSparsity = 20000,  // + subject
  kNoise = 30000,     // + subject
  kWords = 40000,
};

struct SubjectData {
  std::string id;
  Eigen::MatrixXd brain;        // total_trs x n_voxels
  Eigen::MatrixXd true_weights; // (k_latent * n_lags) x n_voxels
  double noise_sigma = 0.0;
};

struct SynthData {
  SynthSpec spec;
  textprep::WordStream words;
  align::TimingTable timing;
  align::RunLayout layout;
  searchlight::NeighborhoodMap neighborhoods;
  Eigen::MatrixXd latent;                   // n_words x k_latent
  std::vector<Eigen::MatrixXd> layer_feats; // per layer, n_words x hidden_dim
  std::vector<SubjectData> subjects;
};

inline std::string subject_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sub-%02zu", i + 1);
  return buf;
}

/// Small vocabulary that includes every token the punctuation scenarios touch.
inline textprep::WordStream make_words(std::size_t n, std::uint64_t seed) {
  static const std::array<const char *, 16> vocab{
      "Harry", "looked", "at", "the", "castle", "and", "Hermione", "said",
      "+",     ".",      "?",  "—",   "…",      "--",  "wand",     "ran"};
  Philox4x64 rng(seed, kWords);
  textprep::WordStream s{{}, "synth"};
  s.words.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    s.words.emplace_back(vocab[rng.uniform(vocab.size())]);
  return s;
}

inline SynthData generate(const SynthSpec &spec) {
  spec.validate();
  SynthData d;
  d.spec = spec;
  d.layout = spec.layout();
  d.layout.validate();
  const auto n_words = static_cast<Eigen::Index>(spec.words());
  const auto n_trs = spec.total_trs();
  const auto k = static_cast<Eigen::Index>(spec.k_latent);

  d.words = make_words(spec.words(), spec.seed);
  d.timing.word_trs.resize(spec.words());
  for (std::size_t w = 0; w < spec.words(); ++w)
    d.timing.word_trs[w] = w / spec.words_per_tr;
  d.neighborhoods = searchlight::grid_neighborhoods(spec.n_voxels);

  d.latent = Gaussian(spec.seed, kLatent).matrix(n_words, k);

  for (std::size_t l = 0; l < spec.n_layers; ++l) {
    Eigen::MatrixXd embed = Gaussian(spec.seed, kEmbedding + l)
                                .matrix(k, static_cast<Eigen::Index>(spec.hidden_dim)) /
                            std::sqrt(static_cast<double>(spec.k_latent));
    Eigen::MatrixXd feats = d.latent * embed;
    if (spec.layer_noise > 0.0 && l > 0)
      feats += spec.layer_noise * static_cast<double>(l) *
               Gaussian(spec.seed, kNuisance + l).matrix(n_words, feats.cols());
    d.layer_feats.push_back(std::move(feats));
  }

  const Eigen::MatrixXd design =
      align::lag_concat(align::pool_words_to_tr(d.latent, d.timing, n_trs), spec.n_lags);
  const auto v = static_cast<Eigen::Index>(spec.n_voxels);

  for (std::size_t s = 0; s < spec.n_subjects; ++s) {
    SubjectData sub;
    sub.id = subject_id(s);
    sub.true_weights = Gaussian(spec.seed, kWeights + s).matrix(design.cols(), v);
    if (spec.sparsity > 0.0) {
      Philox4x64 mask(spec.seed, kSparsity + s);
      for (Eigen::Index i = 0; i < sub.true_weights.size(); ++i)
        if (mask.uniform01() < spec.sparsity)
          sub.true_weights.data()[i] = 0.0;
    }
    const Eigen::MatrixXd signal = spec.signal_scale * (design * sub.true_weights);
    sub.noise_sigma = spec.noise_sigma;
    if (spec.snr > 0.0) {
      const Eigen::MatrixXd c = signal.rowwise() - signal.colwise().mean();
      const double mean_var = c.colwise().squaredNorm().mean() / static_cast<double>(c.rows() - 1);
      if (mean_var > 0.0)
        sub.noise_sigma = std::sqrt(mean_var / spec.snr);
    }
    sub.brain = signal + sub.noise_sigma * Gaussian(spec.seed, kNoise + s)
                                               .matrix(static_cast<Eigen::Index>(n_trs), v);
    d.subjects.push_back(std::move(sub));
  }
  return d;
}

// ---- on-disk layout --------------------------------------------------------

inline std::string feature_dir(const std::string &model, const std::string &scenario,
                               std::size_t seq_len) {
  return "features/" + model + "/" + scenario + "/S" + std::to_string(seq_len);
}

/// Extractor-style manifest for one feature directory.
inline nlohmann::json feature_manifest(const std::string &dir, const std::string &model,
                                       const std::string &scenario, std::size_t seq_len,
                                       std::size_t n_layers, std::size_t hidden) {
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::string file = "layer" + std::to_string(l) + ".btmx";
    tensors.push_back({{"layer", l},
                       {"file", file},
                       {"sha256", sha256_hex(read_file(dir + "/" + file))}});
  }
  return {{"model", model},     {"scenario", scenario}, {"seq_len", seq_len},
          {"n_layers", n_layers}, {"hidden_size", hidden}, {"pooling", "synthetic"},
          {"tensors", tensors}};
}

/// Writes the full file set `brainalign run` consumes, plus ground truth and
/// a ready-to-run experiment config (exp.json).
inline void write_dataset(const SynthData &d, const std::string &out_dir) {
  namespace fs = std::filesystem;
  const auto &spec = d.spec;
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/brain");
  fs::create_directories(out_dir + "/truth");

  textprep::write_words(out_dir + "/words.txt", d.words);
  align::write_timing_csv(out_dir + "/timing.csv", d.timing);
  align::write_layout_json(out_dir + "/layout.json", d.layout);
  searchlight::write_neighborhoods(out_dir + "/neighborhoods.jsonl", d.neighborhoods);
  write_matrix(out_dir + "/truth/latent.btmx", d.latent, {{"seed", std::to_string(spec.seed)}});

  for (const auto &scen : spec.scenarios)
    for (auto S : spec.seq_lengths) {
      const std::string dir = out_dir + "/" + feature_dir(spec.model, scen, S);
      fs::create_directories(dir);
      for (std::size_t l = 0; l < d.layer_feats.size(); ++l)
        write_matrix(dir + "/layer" + std::to_string(l) + ".btmx", d.layer_feats[l],
                     {{"model", spec.model},
                      {"layer", std::to_string(l)},
                      {"seq_len", std::to_string(S)},
                      {"scenario", scen}});
      std::ofstream(dir + "/manifest.json", std::ios::binary | std::ios::trunc)
          << feature_manifest(dir, spec.model, scen, S, d.layer_feats.size(), spec.hidden_dim)
                 .dump(2)
          << '\n';
    }

  nlohmann::json subjects = nlohmann::json::array();
  for (const auto &sub : d.subjects) {
    char sigma[64];
    std::snprintf(sigma, sizeof sigma, "%.17g", sub.noise_sigma);
    write_matrix(out_dir + "/brain/" + sub.id + ".btmx", sub.brain,
                 {{"subject", sub.id}, {"noise_sigma", sigma}});
    write_matrix(out_dir + "/truth/weights_" + sub.id + ".btmx", sub.true_weights,
                 {{"subject", sub.id}});
    subjects.push_back(sub.id);
  }

  nlohmann::json exp = {
      {"subjects", subjects},
      {"models", {{{"id", spec.model}, {"layers", spec.n_layers}, {"embedding", false}}}},
      {"seq_lengths", spec.seq_lengths},
      {"scenarios", spec.scenarios},
      {"paths",
       {{"timing", "timing.csv"},
        {"layout", "layout.json"},
        {"neighborhoods", "neighborhoods.jsonl"},
        {"features", "features/{model}/{scenario}/S{S}/layer{layer}.btmx"},
        {"brain", "brain/{subject}.btmx"}}},
      {"output_dir", "results"},
      {"n_lags", spec.n_lags},
      {"eval", {{"master_seed", spec.seed}}}};
  std::ofstream(out_dir + "/exp.json", std::ios::binary | std::ios::trunc) << exp.dump(2) << '\n';
}

} // namespace brainalign::synth
