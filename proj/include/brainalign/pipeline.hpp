#pragma once

// Run-based cross-validation of the full encoding pipeline:
//   PCA -> pool words per TR -> lag concat -> trim run edges
//   -> ridge (lambda chosen on training runs) -> predict held-out run
//   -> searchlight 20v20 on the held-out run.
// One fold per run. A cell is (model, layer, S, scenario, subject).

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "brainalign/align.hpp"
#include "brainalign/errors.hpp"
#include "brainalign/hash.hpp"
#include "brainalign/parallel.hpp"
#include "brainalign/reduce.hpp"
#include "brainalign/ridge.hpp"
#include "brainalign/searchlight.hpp"
#include "brainalign/tensor_io.hpp"
#include "brainalign/textprep.hpp"

namespace brainalign::pipeline {

struct PipelineOptions {
  std::size_t pca_dims = reduce::kDefaultDims;
  /// Fit PCA on training-run words only instead of the whole feature matrix.
  bool pca_per_fold = false;
  align::Pooling pooling = align::Pooling::mean;
  std::size_t n_lags = align::kDefaultLags;
  ridge::LambdaGrid grid = ridge::LambdaGrid::stock();
  std::size_t inner_folds = ridge::kDefaultInnerFolds;
  searchlight::EvalConfig eval;
};

/// Everything one cell needs, already in memory.
struct CellInputs {
  Eigen::MatrixXd word_feats; // n_words x hidden
  Eigen::MatrixXd brain;      // total TRs x voxels
  align::TimingTable timing;
  align::RunLayout layout;
  searchlight::NeighborhoodMap neighborhoods;

  void validate(const std::string &label = "cell") const {
    layout.validate();
    require(static_cast<std::size_t>(brain.rows()) == layout.total(),
            label + ": brain has " + std::to_string(brain.rows()) + " TRs, layout expects " +
                std::to_string(layout.total()));
    require(static_cast<std::size_t>(word_feats.rows()) == timing.size(),
            label + ": features have " + std::to_string(word_feats.rows()) +
                " rows, timing lists " + std::to_string(timing.size()) + " words");
    timing.validate(layout.total());
    neighborhoods.validate(static_cast<std::size_t>(brain.cols()));
  }
};

struct FoldResult {
  Eigen::VectorXd accuracy; // per voxel
  ridge::RidgeFit fit;
  reduce::PcaModel pca;
  Eigen::MatrixXd y_true; // held-out rows
  Eigen::MatrixXd y_pred;
};

/// Row indices (into the trimmed matrices) of the test run and of the rest.
struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline FoldSplit split_rows(const align::RunLayout &layout, std::size_t fold) {
  require(fold < layout.n_runs(), "fold " + std::to_string(fold) + " >= run count " +
                                      std::to_string(layout.n_runs()));
  FoldSplit s;
  const auto runs = layout.kept_runs();
  for (std::size_t i = 0; i < runs.size(); ++i)
    (runs[i] == fold ? s.test : s.train).push_back(i);
  return s;
}

/// Trimmed design matrix for the given PCA model.
inline Eigen::MatrixXd build_design(const Eigen::MatrixXd &word_feats, const reduce::PcaModel &pca,
                                    const align::TimingTable &timing,
                                    const align::RunLayout &layout, const PipelineOptions &opt) {
  const Eigen::MatrixXd scores = reduce::pca_transform(pca, word_feats);
  const Eigen::MatrixXd pooled =
      align::pool_words_to_tr(scores, timing, layout.total(), opt.pooling);
  return align::trim_edges(align::lag_concat(pooled, opt.n_lags), layout);
}

inline reduce::PcaModel fit_pca(const CellInputs &in, std::size_t fold,
                                const PipelineOptions &opt) {
  if (!opt.pca_per_fold)
    return reduce::pca_fit(in.word_feats, opt.pca_dims);
  const auto tr_run = in.layout.tr_runs();
  std::vector<std::size_t> rows;
  for (std::size_t w = 0; w < in.timing.size(); ++w)
    if (tr_run[in.timing.word_trs[w]] != fold)
      rows.push_back(w);
  return reduce::pca_fit(align::take_rows(in.word_feats, rows), opt.pca_dims);
}

inline FoldResult run_fold(const CellInputs &in, std::size_t fold, const PipelineOptions &opt,
                           std::size_t workers = 1) {
  in.validate();
  const auto split = split_rows(in.layout, fold);

  FoldResult r;
  r.pca = fit_pca(in, fold, opt);
  const Eigen::MatrixXd design = build_design(in.word_feats, r.pca, in.timing, in.layout, opt);
  const Eigen::MatrixXd brain = align::trim_edges(in.brain, in.layout);

  // Ridge only ever sees training rows.
  r.fit = ridge::train(align::take_rows(design, split.train), align::take_rows(brain, split.train),
                       opt.grid, opt.inner_folds);
  r.y_true = align::take_rows(brain, split.test);
  r.y_pred = ridge::predict(r.fit, align::take_rows(design, split.test));
  r.accuracy =
      searchlight::classify_fold(r.y_true, r.y_pred, in.neighborhoods, opt.eval, fold, workers);
  return r;
}

/// voxels x folds accuracy for one cell.
inline Eigen::MatrixXd run_cell(const CellInputs &in, const PipelineOptions &opt,
                                std::size_t workers = 1) {
  const auto n_folds = in.layout.n_runs();
  Eigen::MatrixXd acc(in.brain.cols(), static_cast<Eigen::Index>(n_folds));
  for (std::size_t f = 0; f < n_folds; ++f)
    acc.col(static_cast<Eigen::Index>(f)) = run_fold(in, f, opt, workers).accuracy;
  return acc;
}

// ---- experiment configuration ---------------------------------------------

struct ModelSpec {
  std::string id;
  std::size_t layers = 1;
  bool embedding = false;
  std::size_t n_tensors() const { return layers + (embedding ? 1 : 0); }
};

struct ExperimentConfig {
  std::vector<std::string> subjects;
  std::vector<ModelSpec> models;
  std::vector<std::size_t> seq_lengths{textprep::kStockSeqLengths.begin(),
                                       textprep::kStockSeqLengths.end()};
  std::vector<std::string> scenarios{"none"};

  std::string timing_path;
  std::string layout_path;
  std::string neighborhoods_path;
  std::string features_template; // {model} {scenario} {S} {layer}
  std::string brain_template;    // {subject}
  std::string output_dir = "results";
  bool verify_manifests = true;
  std::string averaging = "voxels,folds,subjects";

  PipelineOptions options;
};

inline std::string substitute(std::string s, const std::map<std::string, std::string> &vars) {
  for (const auto &[k, v] : vars) {
    const std::string key = "{" + k + "}";
    for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + v.size()))
      s.replace(pos, key.size(), v);
  }
  return s;
}

inline ExperimentConfig config_from_json(const nlohmann::json &j, const std::string &base_dir = ".") {
  namespace fs = std::filesystem;
  auto resolve = [&](const std::string &p) {
    return fs::path(p).is_absolute() ? p : (fs::path(base_dir) / p).lexically_normal().string();
  };
  ExperimentConfig c;
  try {
    c.subjects = j.at("subjects").get<std::vector<std::string>>();
    for (const auto &m : j.at("models")) {
      ModelSpec ms;
      ms.id = m.at("id").get<std::string>();
      ms.layers = m.value("layers", std::size_t{1});
      ms.embedding = m.value("embedding", false);
      c.models.push_back(ms);
    }
    c.seq_lengths = j.value("seq_lengths", c.seq_lengths);
    c.scenarios = j.value("scenarios", c.scenarios);
    const auto &p = j.at("paths");
    c.timing_path = resolve(p.at("timing").get<std::string>());
    c.layout_path = resolve(p.at("layout").get<std::string>());
    c.neighborhoods_path = resolve(p.at("neighborhoods").get<std::string>());
    c.features_template = resolve(p.at("features").get<std::string>());
    c.brain_template = resolve(p.at("brain").get<std::string>());
    c.output_dir = resolve(j.value("output_dir", c.output_dir));
    c.verify_manifests = j.value("verify_manifests", c.verify_manifests);
    c.averaging = j.value("averaging", c.averaging);

    auto &o = c.options;
    o.pca_dims = j.value("pca_dims", o.pca_dims);
    o.pca_per_fold = j.value("pca_per_fold", o.pca_per_fold);
    o.pooling = align::parse_pooling(j.value("pooling", std::string("mean")));
    o.n_lags = j.value("n_lags", o.n_lags);
    o.inner_folds = j.value("inner_folds", o.inner_folds);
    if (j.contains("lambda_exponents")) {
      const auto &le = j["lambda_exponents"];
      if (le.is_array())
        o.grid.exponents = le.get<std::vector<int>>();
      else
        o.grid = ridge::LambdaGrid::range(le.at("min").get<int>(), le.at("max").get<int>());
    }
    if (j.contains("eval")) {
      const auto &e = j["eval"];
      o.eval.chunk_len = e.value("chunk_len", o.eval.chunk_len);
      o.eval.n_trials = e.value("n_trials", o.eval.n_trials);
      o.eval.master_seed = e.value("master_seed", o.eval.master_seed);
      o.eval.allow_overlap = e.value("allow_overlap", o.eval.allow_overlap);
      o.eval.tie_score = e.value("tie_score", o.eval.tie_score);
    }
  } catch (const nlohmann::json::exception &e) {
    throw ParseError("config", e.what());
  }
  require(!c.subjects.empty() && !c.models.empty() && !c.seq_lengths.empty() &&
              !c.scenarios.empty(),
          "config: subjects, models, seq_lengths and scenarios must be non-empty");
  for (const auto &s : c.scenarios)
    textprep::parse_scenario(s);
  c.options.grid.validate();
  require(c.averaging == "voxels,folds,subjects" || c.averaging == "pooled",
          "config: averaging must be \"voxels,folds,subjects\" or \"pooled\"");
  return c;
}

inline ExperimentConfig load_config(const std::string &path) {
  const auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded())
    throw ParseError("config", path + ": not valid JSON");
  return config_from_json(j, std::filesystem::path(path).parent_path().string());
}

struct Cell {
  std::string model;
  std::string scenario;
  std::size_t seq_len = 0;
  std::size_t layer = 0;
  std::string subject;

  std::string key() const {
    return model + "__" + scenario + "__S" + std::to_string(seq_len) + "__L" +
           std::to_string(layer) + "__" + subject;
  }
  Meta meta() const {
    return {{"model", model},
            {"scenario", scenario},
            {"seq_len", std::to_string(seq_len)},
            {"layer", std::to_string(layer)},
            {"subject", subject}};
  }
};

/// Deterministic order: model, scenario, S, layer, subject.
inline std::vector<Cell> enumerate_cells(const ExperimentConfig &c) {
  std::vector<Cell> cells;
  for (const auto &m : c.models)
    for (const auto &sc : c.scenarios)
      for (auto S : c.seq_lengths)
        for (std::size_t l = 0; l < m.n_tensors(); ++l)
          for (const auto &sub : c.subjects)
            cells.push_back({m.id, sc, S, l, sub});
  return cells;
}

inline std::string features_path(const ExperimentConfig &c, const Cell &cell) {
  return substitute(c.features_template, {{"model", cell.model},
                                          {"scenario", cell.scenario},
                                          {"S", std::to_string(cell.seq_len)},
                                          {"layer", std::to_string(cell.layer)}});
}

inline std::string brain_path(const ExperimentConfig &c, const std::string &subject) {
  return substitute(c.brain_template, {{"subject", subject}});
}

/// If the feature file's directory carries an extractor manifest, the file's
/// SHA-256 must match the recorded one.
inline void verify_feature_file(const std::string &path) {
  namespace fs = std::filesystem;
  const auto manifest_path = fs::path(path).parent_path() / "manifest.json";
  if (!fs::exists(manifest_path))
    return;
  const auto m = nlohmann::json::parse(read_file(manifest_path.string()), nullptr, false);
  if (m.is_discarded() || !m.contains("tensors"))
    throw ParseError("manifest", manifest_path.string() + ": malformed");
  const auto file = fs::path(path).filename().string();
  for (const auto &t : m["tensors"])
    if (t.value("file", std::string()) == file) {
      const auto actual = sha256_hex(read_file(path));
      if (actual != t.value("sha256", std::string()))
        throw ParseError("manifest", path + ": content hash does not match " +
                                         manifest_path.string());
      return;
    }
  throw ParseError("manifest", path + ": not listed in " + manifest_path.string());
}

// ---- results ----------------------------------------------------------------

struct ResultRow {
  std::string model;
  std::string scenario;
  std::size_t seq_len = 0;
  std::size_t layer = 0;
  std::string subject;
  std::size_t fold = 0;
  double mean_voxel_accuracy = 0.0;
};

inline constexpr const char *kResultsHeader =
    "model,scenario,S,layer,subject,fold,mean_voxel_accuracy";

inline std::string csv_field(const std::string &s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos)
    return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"')
      out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string results_csv(const std::vector<ResultRow> &rows) {
  std::string out = std::string(kResultsHeader) + "\r\n";
  for (const auto &r : rows)
    out += csv_field(r.model) + "," + csv_field(r.scenario) + "," + std::to_string(r.seq_len) +
           "," + std::to_string(r.layer) + "," + csv_field(r.subject) + "," +
           std::to_string(r.fold) + "," + format_double(r.mean_voxel_accuracy) + "\r\n";
  return out;
}

/// RFC-4180 record splitting (quoted fields, doubled quotes, CRLF or LF).
inline std::vector<std::vector<std::string>> parse_csv(const std::string &text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> rec;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
      any = true;
    } else if (ch == ',') {
      rec.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (ch == '\r' || ch == '\n') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n')
        ++i;
      if (any || !field.empty()) {
        rec.push_back(std::move(field));
        records.push_back(std::move(rec));
      }
      rec.clear();
      field.clear();
      any = false;
    } else {
      field += ch;
      any = true;
    }
  }
  if (any || !field.empty()) {
    rec.push_back(std::move(field));
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::vector<ResultRow> read_results_csv(const std::string &path) {
  const auto records = parse_csv(read_file(path));
  if (records.empty())
    throw ParseError("results", path + ": empty");
  const auto header = parse_csv(std::string(kResultsHeader) + "\n").front();
  if (records.front() != header)
    throw ParseError("results", path + ": unexpected header");
  std::vector<ResultRow> rows;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto &r = records[i];
    if (r.size() != 7)
      throw ParseError("results", path + ": record " + std::to_string(i) + " has " +
                                      std::to_string(r.size()) + " fields");
    try {
      rows.push_back({r[0], r[1], std::stoul(r[2]), std::stoul(r[3]), r[4], std::stoul(r[5]),
                      std::stod(r[6])});
    } catch (const std::exception &e) {
      throw ParseError("results", path + ": record " + std::to_string(i) + ": " + e.what());
    }
  }
  return rows;
}

// ---- experiment driver -------------------------------------------------------

struct RunSummary {
  std::vector<ResultRow> rows;
  std::size_t cells_computed = 0;
  std::size_t cells_resumed = 0;
};

/// Runs every cell of the experiment, writing
///   <output_dir>/results.csv          ResultRow table
///   <output_dir>/maps/<cell>.btmx     voxels x folds accuracy
///   <output_dir>/manifest.json        completed cells (for resuming)
///   <output_dir>/run_meta.json        options that shaped the numbers
/// Completed cells listed in an existing manifest are loaded, not recomputed.
inline RunSummary run_experiment(const ExperimentConfig &cfg, std::size_t workers) {
  namespace fs = std::filesystem;
  const auto cells = enumerate_cells(cfg);

  // Every referenced input must exist before any work starts.
  std::vector<std::string> missing;
  for (const auto &p : {cfg.timing_path, cfg.layout_path, cfg.neighborhoods_path})
    if (!fs::exists(p))
      missing.push_back(p);
  for (const auto &sub : cfg.subjects)
    if (!fs::exists(brain_path(cfg, sub)))
      missing.push_back(brain_path(cfg, sub));
  for (const auto &cell : cells)
    if (!fs::exists(features_path(cfg, cell)))
      missing.push_back(features_path(cfg, cell));
  if (!missing.empty()) {
    std::string msg = "missing input files:";
    for (const auto &m : missing)
      msg += "\n  " + m;
    throw IoError(missing.front(), msg);
  }

  const auto timing = align::read_timing_csv(cfg.timing_path);
  const auto layout = align::read_layout_json(cfg.layout_path);
  const auto nb = searchlight::read_neighborhoods(cfg.neighborhoods_path);
  const auto n_folds = layout.n_runs();

  fs::create_directories(cfg.output_dir + "/maps");
  const std::string manifest_path = cfg.output_dir + "/manifest.json";
  nlohmann::json manifest = {{"cells", nlohmann::json::object()}};
  if (fs::exists(manifest_path)) {
    auto old = nlohmann::json::parse(read_file(manifest_path), nullptr, false);
    if (!old.is_discarded() && old.contains("cells"))
      manifest["cells"] = old["cells"];
  }
  std::mutex manifest_mutex;
  auto save_manifest = [&] {
    write_file(manifest_path, manifest.dump(2) + "\n");
  };

  std::map<std::string, Eigen::MatrixXd> brains;
  for (const auto &sub : cfg.subjects)
    brains[sub] = read_matrix(brain_path(cfg, sub));

  std::vector<Eigen::MatrixXd> maps(cells.size());
  std::vector<char> resumed(cells.size(), 0);
  const std::size_t cell_workers = cells.size() >= workers ? workers : 1;
  const std::size_t inner_workers = cell_workers == 1 ? workers : 1;

  parallel_for(cells.size(), cell_workers, [&](std::size_t i) {
    const auto &cell = cells[i];
    const std::string key = cell.key();
    const std::string map_rel = "maps/" + key + ".btmx";
    const std::string map_path = cfg.output_dir + "/" + map_rel;
    {
      std::lock_guard lock(manifest_mutex);
      if (manifest["cells"].contains(key) && fs::exists(map_path)) {
        maps[i] = searchlight::load_accuracy_map(map_path).accuracy;
        resumed[i] = 1;
        return;
      }
    }
    const auto fpath = features_path(cfg, cell);
    if (cfg.verify_manifests)
      verify_feature_file(fpath);
    CellInputs in{read_matrix(fpath), brains.at(cell.subject), timing, layout, nb};
    in.validate("cell " + key);
    maps[i] = run_cell(in, cfg.options, inner_workers);

    searchlight::AccuracyMap am{maps[i], cell.meta()};
    am.keys["n_trials"] = std::to_string(cfg.options.eval.n_trials);
    searchlight::save_accuracy_map(map_path, am);
    std::lock_guard lock(manifest_mutex);
    manifest["cells"][key] = {{"map", map_rel}, {"sha256", sha256_hex(read_file(map_path))}};
    save_manifest();
  });
  save_manifest();

  RunSummary summary;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    (resumed[i] ? summary.cells_resumed : summary.cells_computed)++;
    require(static_cast<std::size_t>(maps[i].cols()) == n_folds,
            "cell " + cells[i].key() + ": stored map has the wrong fold count");
    for (std::size_t f = 0; f < n_folds; ++f)
      summary.rows.push_back({cells[i].model, cells[i].scenario, cells[i].seq_len, cells[i].layer,
                              cells[i].subject, f,
                              maps[i].col(static_cast<Eigen::Index>(f)).mean()});
  }
  write_file(cfg.output_dir + "/results.csv", results_csv(summary.rows));

  const auto &o = cfg.options;
  nlohmann::json meta = {{"averaging", cfg.averaging},
                         {"pooling", align::to_string(o.pooling)},
                         {"pca_dims", o.pca_dims},
                         {"pca_per_fold", o.pca_per_fold},
                         {"n_lags", o.n_lags},
                         {"trim_start", layout.trim_start},
                         {"trim_end", layout.trim_end},
                         {"lambda_exponents", o.grid.exponents},
                         {"inner_folds", o.inner_folds},
                         {"chunk_len", o.eval.chunk_len},
                         {"n_trials", o.eval.n_trials},
                         {"master_seed", o.eval.master_seed},
                         {"allow_overlap", o.eval.allow_overlap},
                         {"tie_score", o.eval.tie_score},
                         {"prng", searchlight::EvalConfig::prng()},
                         {"n_folds", n_folds}};
  write_file(cfg.output_dir + "/run_meta.json", meta.dump(2) + "\n");
  return summary;
}

} // namespace brainalign::pipeline
