#pragma once

// 20-vs-20 searchlight classification of held-out predictions.
//
// For each center voxel and trial: draw a correct chunk start c and a
// distractor start w, restrict true and predicted data to the voxel's
// neighborhood, and score the trial correct when the prediction of chunk c is
// strictly closer (Euclidean) to the true chunk c than the prediction of
// chunk w is. Every (fold, voxel) pair owns a Philox stream, so results are
// independent of evaluation order and worker count.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "brainalign/errors.hpp"
#include "brainalign/parallel.hpp"
#include "brainalign/philox.hpp"
#include "brainalign/tensor_io.hpp"

namespace brainalign::searchlight {

inline constexpr std::size_t kDefaultChunkLen = 20;
inline constexpr std::size_t kDefaultTrials = 1000;

struct NeighborhoodMap {
  std::vector<std::vector<std::size_t>> neighbors; // indexed by center voxel

  std::size_t size() const { return neighbors.size(); }

  void validate(std::size_t n_voxels) const {
    require(neighbors.size() == n_voxels, "neighborhood map covers " +
                                              std::to_string(neighbors.size()) +
                                              " voxels, data has " + std::to_string(n_voxels));
    for (std::size_t v = 0; v < neighbors.size(); ++v) {
      require(!neighbors[v].empty(), "voxel " + std::to_string(v) + " has an empty neighborhood");
      for (auto j : neighbors[v])
        require(j < n_voxels, "voxel " + std::to_string(v) + " lists neighbor " +
                                  std::to_string(j) + " >= " + std::to_string(n_voxels));
    }
  }
};

struct EvalConfig {
  std::size_t chunk_len = kDefaultChunkLen;
  std::size_t n_trials = kDefaultTrials;
  std::uint64_t master_seed = 0;
  /// Distractor chunks may overlap the correct chunk (never equal to it).
  bool allow_overlap = false;
  /// Score for a trial whose two distances are equal.
  double tie_score = 0.0;

  static constexpr const char *prng() { return Philox4x64::kAlgorithm; }

  void validate(std::size_t n_test) const {
    require(chunk_len >= 1, "chunk_len must be >= 1");
    require(n_trials >= 1, "n_trials must be >= 1");
    require(2 * chunk_len <= n_test, "test fold of " + std::to_string(n_test) +
                                         " TRs is too short for two " +
                                         std::to_string(chunk_len) + "-TR chunks");
    require(tie_score == 0.0 || tie_score == 0.5, "tie_score must be 0 or 0.5");
  }
};

/// Stream for one (fold, voxel): key = (master_seed, fold << 32 | voxel).
inline Philox4x64 stream_for(const EvalConfig &cfg, std::size_t fold, std::size_t voxel) {
  return Philox4x64(cfg.master_seed, (static_cast<std::uint64_t>(fold) << 32) |
                                         static_cast<std::uint64_t>(voxel & 0xFFFFFFFFu));
}

struct Draw {
  std::size_t correct = 0;
  std::size_t wrong = 0;
  friend bool operator==(const Draw &, const Draw &) = default;
};

/// Number of distractor starts available for correct start c.
inline std::size_t wrong_start_count(std::size_t n, std::size_t len, std::size_t c,
                                     bool allow_overlap) {
  const std::size_t starts = n - len + 1;
  if (allow_overlap)
    return starts - 1;
  const std::size_t left = c >= len ? c - len + 1 : 0;
  const std::size_t right = c + 2 * len <= n ? n - len - (c + len) + 1 : 0;
  return left + right;
}

/// c is uniform over 0..n-len; a c with no admissible distractor is redrawn.
/// w is uniform over the admissible distractor starts for c.
inline Draw draw_trial(Philox4x64 &rng, std::size_t n, std::size_t len, bool allow_overlap) {
  const std::size_t starts = n - len + 1;
  for (;;) {
    const auto c = static_cast<std::size_t>(rng.uniform(starts));
    const std::size_t count = wrong_start_count(n, len, c, allow_overlap);
    if (count == 0)
      continue;
    const auto idx = static_cast<std::size_t>(rng.uniform(count));
    if (allow_overlap)
      return {c, idx < c ? idx : idx + 1};
    const std::size_t left = c >= len ? c - len + 1 : 0;
    return {c, idx < left ? idx : c + len + (idx - left)};
  }
}

inline std::vector<Draw> record_draws(const EvalConfig &cfg, std::size_t fold, std::size_t voxel,
                                      std::size_t n_test) {
  cfg.validate(n_test);
  auto rng = stream_for(cfg, fold, voxel);
  std::vector<Draw> draws(cfg.n_trials);
  for (auto &d : draws)
    d = draw_trial(rng, n_test, cfg.chunk_len, cfg.allow_overlap);
  return draws;
}

/// Row-major so that a chunk of consecutive TRs is one contiguous block.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline RowMatrix take_cols(const Eigen::MatrixXd &m, const std::vector<std::size_t> &cols) {
  RowMatrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(cols[j]));
  return out;
}

/// Score of one trial on neighborhood-restricted data.
inline double score_trial(const RowMatrix &truth, const RowMatrix &pred,
                          const Draw &d, std::size_t len, double tie_score) {
  const auto k = truth.cols();
  const auto size = static_cast<Eigen::Index>(len) * k;
  using Chunk = Eigen::Map<const Eigen::ArrayXd>;
  const Chunk true_chunk(truth.data() + static_cast<Eigen::Index>(d.correct) * k, size);
  const Chunk pred_correct(pred.data() + static_cast<Eigen::Index>(d.correct) * k, size);
  const Chunk pred_wrong(pred.data() + static_cast<Eigen::Index>(d.wrong) * k, size);
  // Squared distances order identically to the distances themselves.
  const double to_correct = (pred_correct - true_chunk).square().sum();
  const double to_wrong = (pred_wrong - true_chunk).square().sum();
  if (to_correct < to_wrong)
    return 1.0;
  if (to_correct == to_wrong)
    return tie_score;
  return 0.0;
}

/// Accuracy for one voxel from an explicit list of draws.
inline double replay(const Eigen::MatrixXd &y_true, const Eigen::MatrixXd &y_pred,
                     const std::vector<std::size_t> &neighborhood, const std::vector<Draw> &draws,
                     const EvalConfig &cfg) {
  require(!neighborhood.empty(), "empty neighborhood");
  require(!draws.empty(), "replay needs at least one draw");
  const auto t = take_cols(y_true, neighborhood);
  const auto p = take_cols(y_pred, neighborhood);
  double sum = 0.0;
  for (const auto &d : draws)
    sum += score_trial(t, p, d, cfg.chunk_len, cfg.tie_score);
  return sum / static_cast<double>(draws.size());
}

/// Per-voxel accuracy over one test fold.
inline Eigen::VectorXd classify_fold(const Eigen::MatrixXd &y_true, const Eigen::MatrixXd &y_pred,
                                     const NeighborhoodMap &nb, const EvalConfig &cfg,
                                     std::size_t fold = 0, std::size_t workers = 1) {
  require(y_true.rows() == y_pred.rows() && y_true.cols() == y_pred.cols(),
          "classify_fold: true and predicted shapes differ");
  const auto n_test = static_cast<std::size_t>(y_true.rows());
  const auto n_vox = static_cast<std::size_t>(y_true.cols());
  cfg.validate(n_test);
  nb.validate(n_vox);

  Eigen::VectorXd acc(static_cast<Eigen::Index>(n_vox));
  parallel_for(n_vox, workers, [&](std::size_t v) {
    acc(static_cast<Eigen::Index>(v)) =
        replay(y_true, y_pred, nb.neighbors[v], record_draws(cfg, fold, v, n_test), cfg);
  });
  return acc;
}

// ---- neighborhoods ----------------------------------------------------------

/// Voxels laid out row-major on the smallest cube holding n_voxels; each
/// neighborhood is the k nearest voxels (squared Euclidean distance, ties by
/// index), center first. Interior voxels get exactly their 3x3x3 box.
inline NeighborhoodMap grid_neighborhoods(std::size_t n_voxels, std::size_t k = 27) {
  require(n_voxels >= 1, "grid_neighborhoods: need at least one voxel");
  require(k >= 1, "grid_neighborhoods: k must be >= 1");
  std::size_t side = 1;
  while (side * side * side < n_voxels)
    ++side;
  auto coord = [side](std::size_t v) {
    return std::array<long, 3>{static_cast<long>(v / (side * side)),
                               static_cast<long>((v / side) % side), static_cast<long>(v % side)};
  };
  const std::size_t take = std::min(k, n_voxels);
  NeighborhoodMap nb;
  nb.neighbors.resize(n_voxels);
  std::vector<std::pair<long, std::size_t>> order(n_voxels);
  for (std::size_t v = 0; v < n_voxels; ++v) {
    const auto a = coord(v);
    for (std::size_t u = 0; u < n_voxels; ++u) {
      const auto b = coord(u);
      const long d2 = (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                      (a[2] - b[2]) * (a[2] - b[2]);
      order[u] = {d2, u};
    }
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(take), order.end());
    for (std::size_t i = 0; i < take; ++i)
      nb.neighbors[v].push_back(order[i].second);
  }
  return nb;
}

/// JSON lines: `[center, [neighbor, ...]]`, every center exactly once.
inline NeighborhoodMap read_neighborhoods(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError(path, "cannot open neighborhood file");
  std::vector<std::pair<std::size_t, std::vector<std::size_t>>> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty())
      continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_array() || j.size() != 2 || !j[0].is_number_unsigned() ||
        !j[1].is_array())
      throw ParseError("neighborhoods", path + ":" + std::to_string(lineno) +
                                            ": expected [center, [neighbors...]]");
    entries.emplace_back(j[0].get<std::size_t>(), j[1].get<std::vector<std::size_t>>());
  }
  NeighborhoodMap nb;
  nb.neighbors.resize(entries.size());
  std::vector<bool> seen(entries.size(), false);
  for (auto &[c, list] : entries) {
    if (c >= entries.size() || seen[c])
      throw ParseError("neighborhoods", path + ": center " + std::to_string(c) +
                                            " is out of range or repeated");
    seen[c] = true;
    nb.neighbors[c] = std::move(list);
  }
  nb.validate(nb.size());
  return nb;
}

inline void write_neighborhoods(const std::string &path, const NeighborhoodMap &nb) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError(path, "cannot open for writing");
  for (std::size_t v = 0; v < nb.size(); ++v)
    out << nlohmann::json::array({v, nb.neighbors[v]}).dump() << '\n';
}

// ---- accuracy maps ----------------------------------------------------------

struct AccuracyMap {
  Eigen::MatrixXd accuracy; // voxels x folds
  Meta keys;                // subject, model, layer, seq_len, scenario, ...
};

inline void save_accuracy_map(const std::string &path, const AccuracyMap &m) {
  write_matrix(path, m.accuracy, m.keys);
}

/// float32 storage cannot hold k/n_trials exactly; when the map records
/// n_trials, entries are snapped back onto the 1/(2 n_trials) lattice, which
/// restores the exact doubles for both tie scores.
inline AccuracyMap load_accuracy_map(const std::string &path) {
  AccuracyMap m;
  m.accuracy = read_matrix(path, &m.keys);
  if (auto it = m.keys.find("n_trials"); it != m.keys.end()) {
    const double steps = 2.0 * std::stod(it->second);
    m.accuracy = (m.accuracy.array() * steps).round() / steps;
  }
  return m;
}

} // namespace brainalign::searchlight
