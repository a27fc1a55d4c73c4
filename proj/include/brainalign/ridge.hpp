#pragma once

// Per-voxel ridge regression over a geometric lambda grid.
//
// One thin SVD of the standardized design X = U S V^T serves every lambda:
//   W(lambda) = V diag(s / (s^2 + lambda)) U^T Y
// Lambda is chosen per voxel by contiguous-block inner CV on the training
// rows only; the final weights reuse a single SVD of the full training set.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "brainalign/errors.hpp"
#include "brainalign/tensor_io.hpp"

namespace brainalign::ridge {

inline constexpr std::size_t kDefaultInnerFolds = 5;

struct LambdaGrid {
  std::vector<int> exponents;

  /// 10^-9 ... 10^9, integer exponents.
  static LambdaGrid stock() { return range(-9, 9); }

  static LambdaGrid range(int lo, int hi) {
    require(lo <= hi, "lambda grid: empty exponent range");
    LambdaGrid g;
    for (int e = lo; e <= hi; ++e)
      g.exponents.push_back(e);
    return g;
  }

  std::size_t size() const { return exponents.size(); }
  double value(std::size_t i) const { return std::pow(10.0, exponents.at(i)); }

  std::size_t index_of(int exponent) const {
    for (std::size_t i = 0; i < exponents.size(); ++i)
      if (exponents[i] == exponent)
        return i;
    throw ContractViolation("exponent " + std::to_string(exponent) + " not in lambda grid");
  }

  void validate() const {
    require(!exponents.empty(), "lambda grid is empty");
    for (std::size_t i = 1; i < exponents.size(); ++i)
      require(exponents[i] > exponents[i - 1], "lambda grid must be strictly increasing");
  }
};

/// Column z-scoring with statistics from the rows it was fit on. Constant
/// columns keep scale 1 so they map to zero.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd &x) {
    require(x.rows() >= 2, "standardizer needs at least 2 rows");
    Standardizer s;
    s.mean = x.colwise().mean();
    const Eigen::MatrixXd c = x.rowwise() - s.mean;
    s.scale = (c.colwise().squaredNorm() / static_cast<double>(x.rows() - 1)).cwiseSqrt();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j)
      if (!(s.scale(j) > 0.0))
        s.scale(j) = 1.0;
    return s;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd &x) const {
    require(x.cols() == mean.size(), "standardizer: column count mismatch");
    return (x.rowwise() - mean).array().rowwise() / scale.array();
  }
};

/// Thin SVD of a design matrix with numerically-null directions removed, so
/// the filter factors are exactly zero there.
struct DesignSvd {
  Eigen::MatrixXd u; // n x r
  Eigen::VectorXd s; // r
  Eigen::MatrixXd v; // d x r

  explicit DesignSvd(const Eigen::MatrixXd &x) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd &sv = svd.singularValues();
    const double tol = sv.size() ? sv(0) * std::numeric_limits<double>::epsilon() *
                                       static_cast<double>(std::max(x.rows(), x.cols()))
                                 : 0.0;
    Eigen::Index r = 0;
    while (r < sv.size() && sv(r) > tol)
      ++r;
    u = svd.matrixU().leftCols(r);
    s = sv.head(r);
    v = svd.matrixV().leftCols(r);
  }

  Eigen::VectorXd filter(double lambda) const {
    return (s.array() / (s.array().square() + lambda)).matrix();
  }

  /// d x v weights for one lambda given U^T Y.
  Eigen::MatrixXd weights(const Eigen::MatrixXd &uty, double lambda) const {
    return v * (filter(lambda).asDiagonal() * uty);
  }
};

/// W(lambda) for every grid value. X is expected standardized and Y centered.
inline std::vector<Eigen::MatrixXd> ridge_path(const Eigen::MatrixXd &x, const Eigen::MatrixXd &y,
                                               const LambdaGrid &grid) {
  require(x.rows() >= 2 && x.cols() >= 1 && y.cols() >= 1, "ridge_path: need n>=2, d>=1, v>=1");
  require(x.rows() == y.rows(), "ridge_path: X and Y row counts differ");
  require(x.allFinite() && y.allFinite(), "ridge_path: non-finite input");
  grid.validate();
  const DesignSvd svd(x);
  const Eigen::MatrixXd uty = svd.u.transpose() * y;
  std::vector<Eigen::MatrixXd> out;
  out.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    out.push_back(svd.weights(uty, grid.value(i)));
  return out;
}

struct LambdaSelection {
  std::vector<int> exponents;   // per voxel
  std::vector<bool> degenerate; // zero-variance training response
  Eigen::MatrixXd cv_error;     // grid x voxels, summed squared error
};

/// Contiguous [begin, end) row blocks.
inline std::vector<std::pair<std::size_t, std::size_t>> contiguous_folds(std::size_t n,
                                                                         std::size_t k) {
  std::vector<std::pair<std::size_t, std::size_t>> folds;
  for (std::size_t f = 0; f < k; ++f)
    folds.emplace_back(f * n / k, (f + 1) * n / k);
  return folds;
}

inline LambdaSelection select_lambda(const Eigen::MatrixXd &x_train,
                                     const Eigen::MatrixXd &y_train, const LambdaGrid &grid,
                                     std::size_t inner_folds = kDefaultInnerFolds) {
  grid.validate();
  const auto n = static_cast<std::size_t>(x_train.rows());
  const auto nv = y_train.cols();
  require(inner_folds >= 2, "select_lambda: inner_folds must be >= 2");
  require(x_train.rows() == y_train.rows(), "select_lambda: X and Y row counts differ");
  require(n >= 2 * inner_folds, "select_lambda: " + std::to_string(n) +
                                    " training rows are too few for " +
                                    std::to_string(inner_folds) + " inner folds");
  require(x_train.allFinite() && y_train.allFinite(), "select_lambda: non-finite training data");

  LambdaSelection sel;
  sel.cv_error = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(grid.size()), nv);

  for (auto [b, e] : contiguous_folds(n, inner_folds)) {
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < n; ++i)
      (i >= b && i < e ? va : tr).push_back(i);
    Eigen::MatrixXd xt(tr.size(), x_train.cols()), yt(tr.size(), nv);
    Eigen::MatrixXd xv(va.size(), x_train.cols()), yv(va.size(), nv);
    for (std::size_t i = 0; i < tr.size(); ++i) {
      xt.row(i) = x_train.row(tr[i]);
      yt.row(i) = y_train.row(tr[i]);
    }
    for (std::size_t i = 0; i < va.size(); ++i) {
      xv.row(i) = x_train.row(va[i]);
      yv.row(i) = y_train.row(va[i]);
    }
    const auto stdz = Standardizer::fit(xt);
    const Eigen::RowVectorXd ymean = yt.colwise().mean();
    const DesignSvd svd(stdz.apply(xt));
    const Eigen::MatrixXd uty = svd.u.transpose() * (yt.rowwise() - ymean);
    const Eigen::MatrixXd xvs = stdz.apply(xv);
    const Eigen::MatrixXd yvc = yv.rowwise() - ymean;
    for (std::size_t li = 0; li < grid.size(); ++li) {
      const Eigen::MatrixXd resid = yvc - xvs * svd.weights(uty, grid.value(li));
      sel.cv_error.row(static_cast<Eigen::Index>(li)) += resid.colwise().squaredNorm();
    }
  }

  const Eigen::RowVectorXd ymean = y_train.colwise().mean();
  const Eigen::RowVectorXd yvar = (y_train.rowwise() - ymean).colwise().squaredNorm();
  sel.exponents.resize(nv);
  sel.degenerate.assign(nv, false);
  for (Eigen::Index v = 0; v < nv; ++v) {
    if (!(yvar(v) > 0.0)) {
      sel.exponents[v] = grid.exponents.back();
      sel.degenerate[v] = true;
      continue;
    }
    // Scan from the largest lambda down; only a strictly smaller error moves
    // the choice, so ties resolve toward stronger regularization.
    std::size_t best = grid.size() - 1;
    for (std::size_t li = grid.size() - 1; li-- > 0;)
      if (sel.cv_error(static_cast<Eigen::Index>(li), v) <
          sel.cv_error(static_cast<Eigen::Index>(best), v))
        best = li;
    sel.exponents[v] = grid.exponents[best];
  }
  return sel;
}

struct RidgeFit {
  Eigen::MatrixXd weights;       // d x v, on standardized features
  std::vector<int> chosen_exponent;
  std::vector<bool> degenerate;
  Eigen::RowVectorXd x_mean;
  Eigen::RowVectorXd x_scale;
  Eigen::RowVectorXd y_mean;

  Eigen::Index n_features() const { return weights.rows(); }
  Eigen::Index n_voxels() const { return weights.cols(); }
};

/// Final weights for given per-voxel exponents from one SVD of the full
/// training set.
inline RidgeFit fit_with_exponents(const Eigen::MatrixXd &x_train, const Eigen::MatrixXd &y_train,
                                   const std::vector<int> &exponents) {
  require(x_train.rows() == y_train.rows(), "ridge fit: X and Y row counts differ");
  require(static_cast<Eigen::Index>(exponents.size()) == y_train.cols(),
          "ridge fit: one exponent per voxel required");
  require(x_train.allFinite() && y_train.allFinite(), "ridge fit: non-finite training data");

  RidgeFit fit;
  const auto stdz = Standardizer::fit(x_train);
  fit.x_mean = stdz.mean;
  fit.x_scale = stdz.scale;
  fit.y_mean = y_train.colwise().mean();
  fit.chosen_exponent = exponents;
  fit.degenerate.assign(exponents.size(), false);

  const DesignSvd svd(stdz.apply(x_train));
  const Eigen::MatrixXd uty = svd.u.transpose() * (y_train.rowwise() - fit.y_mean);
  fit.weights.resize(x_train.cols(), y_train.cols());
  for (Eigen::Index v = 0; v < y_train.cols(); ++v) {
    const double lambda = std::pow(10.0, exponents[v]);
    fit.weights.col(v) = svd.v * (svd.filter(lambda).asDiagonal() * uty.col(v));
  }
  return fit;
}

inline RidgeFit train(const Eigen::MatrixXd &x_train, const Eigen::MatrixXd &y_train,
                      const LambdaGrid &grid, std::size_t inner_folds = kDefaultInnerFolds) {
  const auto sel = select_lambda(x_train, y_train, grid, inner_folds);
  auto fit = fit_with_exponents(x_train, y_train, sel.exponents);
  fit.degenerate = sel.degenerate;
  return fit;
}

inline Eigen::MatrixXd predict(const RidgeFit &fit, const Eigen::MatrixXd &x_test) {
  require(x_test.cols() == fit.n_features(), "predict: X_test has " +
                                                 std::to_string(x_test.cols()) +
                                                 " columns, fit expects " +
                                                 std::to_string(fit.n_features()));
  const Eigen::MatrixXd xs = (x_test.rowwise() - fit.x_mean).array().rowwise() / fit.x_scale.array();
  return (xs * fit.weights).rowwise() + fit.y_mean;
}

// Persistence: <prefix>.weights.btmx [d x v] plus <prefix>.json holding the
// chosen exponents, degeneracy flags and normalization statistics in double.
inline void save_fit(const std::string &prefix, const RidgeFit &fit, const Meta &meta = {}) {
  write_matrix(prefix + ".weights.btmx", fit.weights, meta);
  auto vec = [](const Eigen::RowVectorXd &r) {
    return std::vector<double>(r.data(), r.data() + r.size());
  };
  nlohmann::json j = {{"chosen_exponent", fit.chosen_exponent},
                      {"degenerate", fit.degenerate},
                      {"x_mean", vec(fit.x_mean)},
                      {"x_scale", vec(fit.x_scale)},
                      {"y_mean", vec(fit.y_mean)}};
  std::ofstream out(prefix + ".json", std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError(prefix + ".json", "cannot open for writing");
  out << j.dump() << '\n';
}

inline RidgeFit load_fit(const std::string &prefix) {
  RidgeFit fit;
  fit.weights = read_matrix(prefix + ".weights.btmx");
  const auto j = nlohmann::json::parse(read_file(prefix + ".json"));
  auto row = [](const std::vector<double> &v) {
    return Eigen::RowVectorXd(Eigen::Map<const Eigen::RowVectorXd>(v.data(), v.size()));
  };
  fit.chosen_exponent = j.at("chosen_exponent").get<std::vector<int>>();
  fit.degenerate = j.at("degenerate").get<std::vector<bool>>();
  fit.x_mean = row(j.at("x_mean").get<std::vector<double>>());
  fit.x_scale = row(j.at("x_scale").get<std::vector<double>>());
  fit.y_mean = row(j.at("y_mean").get<std::vector<double>>());
  return fit;
}

} // namespace brainalign::ridge
