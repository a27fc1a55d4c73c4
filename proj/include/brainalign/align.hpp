#pragma once

// Word features -> per-TR design rows: pooling words inside a TR, lag
// concatenation on the global timeline, then removal of run edges.

#include <Eigen/Dense>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "brainalign/errors.hpp"

namespace brainalign::align {

inline constexpr std::size_t kStockTotalTRs = 1351;
inline constexpr std::size_t kStockTrimmedTRs = 1211;
inline constexpr std::size_t kStockRuns = 4;
inline constexpr std::size_t kDefaultTrimStart = 20;
inline constexpr std::size_t kDefaultTrimEnd = 15;
inline constexpr std::size_t kDefaultLags = 5;
/// 2 s TR / 0.5 s per word.
inline constexpr std::size_t kWordsPerTR = 4;

struct TimingTable {
  /// word index -> global 0-based TR index
  std::vector<std::size_t> word_trs;

  std::size_t size() const { return word_trs.size(); }

  void validate(std::size_t n_trs, std::size_t max_words_per_tr = kWordsPerTR) const {
    require(!word_trs.empty(), "timing table is empty");
    std::size_t run = 0;
    for (std::size_t i = 0; i < word_trs.size(); ++i) {
      require(word_trs[i] < n_trs, "timing: word " + std::to_string(i) + " maps to TR " +
                                       std::to_string(word_trs[i]) + " >= " +
                                       std::to_string(n_trs) + " TRs");
      if (i > 0) {
        require(word_trs[i] >= word_trs[i - 1],
                "timing: TR index decreases at word " + std::to_string(i));
        run = word_trs[i] == word_trs[i - 1] ? run + 1 : 1;
      } else {
        run = 1;
      }
      require(run <= max_words_per_tr, "timing: TR " + std::to_string(word_trs[i]) +
                                           " holds more than " +
                                           std::to_string(max_words_per_tr) + " words");
    }
  }
};

struct RunLayout {
  std::vector<std::size_t> run_lengths;
  std::size_t trim_start = kDefaultTrimStart;
  std::size_t trim_end = kDefaultTrimEnd;

  std::size_t n_runs() const { return run_lengths.size(); }
  std::size_t total() const {
    return std::accumulate(run_lengths.begin(), run_lengths.end(), std::size_t{0});
  }
  std::size_t kept_per_run(std::size_t run) const {
    return run_lengths.at(run) - trim_start - trim_end;
  }
  std::size_t trimmed_total() const {
    std::size_t n = 0;
    for (std::size_t r = 0; r < n_runs(); ++r)
      n += kept_per_run(r);
    return n;
  }
  std::size_t run_offset(std::size_t run) const {
    return std::accumulate(run_lengths.begin(), run_lengths.begin() + run, std::size_t{0});
  }

  void validate() const {
    require(!run_lengths.empty(), "run layout has no runs");
    for (std::size_t r = 0; r < n_runs(); ++r)
      require(trim_start + trim_end < run_lengths[r],
              "run " + std::to_string(r) + " of length " + std::to_string(run_lengths[r]) +
                  " cannot drop " + std::to_string(trim_start) + "+" +
                  std::to_string(trim_end) + " edge TRs");
  }

  /// Global TR indices that survive trimming, in run order.
  std::vector<std::size_t> kept_indices() const {
    validate();
    std::vector<std::size_t> idx;
    idx.reserve(trimmed_total());
    std::size_t off = 0;
    for (auto len : run_lengths) {
      for (std::size_t t = trim_start; t < len - trim_end; ++t)
        idx.push_back(off + t);
      off += len;
    }
    return idx;
  }

  /// Run id of each trimmed row.
  std::vector<std::size_t> kept_runs() const {
    std::vector<std::size_t> runs;
    runs.reserve(trimmed_total());
    for (std::size_t r = 0; r < n_runs(); ++r)
      runs.insert(runs.end(), kept_per_run(r), r);
    return runs;
  }

  /// Run id of every untrimmed TR.
  std::vector<std::size_t> tr_runs() const {
    std::vector<std::size_t> runs;
    runs.reserve(total());
    for (std::size_t r = 0; r < n_runs(); ++r)
      runs.insert(runs.end(), run_lengths[r], r);
    return runs;
  }
};

enum class Pooling { mean, last };

inline Pooling parse_pooling(const std::string &s) {
  if (s == "mean")
    return Pooling::mean;
  if (s == "last")
    return Pooling::last;
  throw ContractViolation("unknown pooling mode \"" + s + "\" (expected mean|last)");
}

inline std::string to_string(Pooling p) { return p == Pooling::mean ? "mean" : "last"; }

/// Row t is the mean (or the last) of the feature rows of words shown during
/// TR t. TRs without words stay zero.
inline Eigen::MatrixXd pool_words_to_tr(const Eigen::MatrixXd &word_feats,
                                        const TimingTable &timing, std::size_t n_trs,
                                        Pooling pooling = Pooling::mean) {
  require(static_cast<std::size_t>(word_feats.rows()) == timing.size(),
          "pool: " + std::to_string(word_feats.rows()) + " feature rows vs " +
              std::to_string(timing.size()) + " timing entries");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_trs), word_feats.cols());
  std::vector<std::size_t> counts(n_trs, 0);
  for (std::size_t w = 0; w < timing.size(); ++w) {
    const auto tr = timing.word_trs[w];
    require(tr < n_trs, "pool: word " + std::to_string(w) + " maps to TR " +
                            std::to_string(tr) + " beyond " + std::to_string(n_trs));
    const auto row = static_cast<Eigen::Index>(tr);
    if (pooling == Pooling::mean)
      out.row(row) += word_feats.row(static_cast<Eigen::Index>(w));
    else
      out.row(row) = word_feats.row(static_cast<Eigen::Index>(w));
    ++counts[tr];
  }
  if (pooling == Pooling::mean)
    for (std::size_t t = 0; t < n_trs; ++t)
      if (counts[t] > 1)
        out.row(static_cast<Eigen::Index>(t)) /= static_cast<double>(counts[t]);
  return out;
}

/// Row t becomes [row t-n_lags+1 | ... | row t], oldest block first; rows
/// before the start of the matrix are zero blocks.
inline Eigen::MatrixXd lag_concat(const Eigen::MatrixXd &tr_feats, std::size_t n_lags) {
  require(n_lags >= 1, "lag_concat: n_lags must be >= 1");
  const Eigen::Index n = tr_feats.rows();
  const Eigen::Index k = tr_feats.cols();
  const auto lags = static_cast<Eigen::Index>(n_lags);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, k * lags);
  for (Eigen::Index t = 0; t < n; ++t)
    for (Eigen::Index b = 0; b < lags; ++b) {
      const Eigen::Index src = t - (lags - 1 - b);
      if (src >= 0)
        out.block(t, b * k, 1, k) = tr_feats.row(src);
    }
  return out;
}

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd &mat, const std::vector<std::size_t> &rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), mat.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = mat.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

/// Drops trim_start/trim_end rows at each run edge. Applied identically to
/// brain data and design matrices so row i refers to the same TR in both.
inline Eigen::MatrixXd trim_edges(const Eigen::MatrixXd &mat, const RunLayout &layout) {
  require(static_cast<std::size_t>(mat.rows()) == layout.total(),
          "trim_edges: matrix has " + std::to_string(mat.rows()) + " rows, layout has " +
              std::to_string(layout.total()) + " TRs");
  return take_rows(mat, layout.kept_indices());
}

// ---- files ----------------------------------------------------------------

/// CSV with header `word_index,tr_index`; word indices must be 0..n-1 in order.
inline TimingTable read_timing_csv(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError(path, "cannot open timing table");
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("timing", path + ": empty file");
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  if (line != "word_index,tr_index")
    throw ParseError("timing", path + ": expected header 'word_index,tr_index'");
  TimingTable t;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos)
        throw std::invalid_argument("missing comma");
      const auto w = std::stoull(line.substr(0, comma));
      const auto tr = std::stoull(line.substr(comma + 1));
      if (w != t.word_trs.size())
        throw std::invalid_argument("word index out of sequence");
      t.word_trs.push_back(tr);
    } catch (const std::exception &e) {
      throw ParseError("timing", path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return t;
}

inline void write_timing_csv(const std::string &path, const TimingTable &t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError(path, "cannot open for writing");
  out << "word_index,tr_index\n";
  for (std::size_t i = 0; i < t.word_trs.size(); ++i)
    out << i << ',' << t.word_trs[i] << '\n';
}

inline RunLayout layout_from_json(const nlohmann::json &j) {
  RunLayout l;
  try {
    l.run_lengths = j.at("run_lengths").get<std::vector<std::size_t>>();
    l.trim_start = j.value("trim_start", kDefaultTrimStart);
    l.trim_end = j.value("trim_end", kDefaultTrimEnd);
  } catch (const nlohmann::json::exception &e) {
    throw ParseError("layout", e.what());
  }
  l.validate();
  return l;
}

inline nlohmann::json layout_to_json(const RunLayout &l) {
  return {{"run_lengths", l.run_lengths}, {"trim_start", l.trim_start}, {"trim_end", l.trim_end}};
}

inline RunLayout read_layout_json(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError(path, "cannot open run layout");
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded())
    throw ParseError("layout", path + ": not valid JSON");
  return layout_from_json(j);
}

inline void write_layout_json(const std::string &path, const RunLayout &l) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError(path, "cannot open for writing");
  out << layout_to_json(l).dump(2) << '\n';
}

} // namespace brainalign::align
