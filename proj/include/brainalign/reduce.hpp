#pragma once

// Exact, deterministic PCA. Components come from a full SVD of the centered
// data (no randomized solver), with a fixed sign rule so that repeated fits
// on identical input are bit-identical.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <string>

#include "brainalign/errors.hpp"
#include "brainalign/tensor_io.hpp"

namespace brainalign::reduce {

inline constexpr std::size_t kDefaultDims = 10;

struct PcaModel {
  Eigen::VectorXd mean;        // input_dims
  Eigen::MatrixXd components;  // k x input_dims, rows orthonormal
  Eigen::VectorXd explained_variance; // k, non-increasing

  Eigen::Index k() const { return components.rows(); }
  Eigen::Index input_dims() const { return components.cols(); }
};

/// Flip each row so its largest-magnitude entry is positive; on ties the
/// lowest index decides.
inline void fix_signs(Eigen::MatrixXd &rows) {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      const double a = std::abs(rows(i, j));
      if (a > best) {
        best = a;
        arg = j;
      }
    }
    if (rows(i, arg) < 0)
      rows.row(i) *= -1.0;
  }
}

inline void check_model(const PcaModel &m, double tol = 1e-10) {
  const Eigen::MatrixXd gram = m.components * m.components.transpose();
  require((gram - Eigen::MatrixXd::Identity(m.k(), m.k())).cwiseAbs().maxCoeff() <= tol,
          "pca: components are not orthonormal");
  for (Eigen::Index i = 1; i < m.explained_variance.size(); ++i)
    require(m.explained_variance(i) <= m.explained_variance(i - 1),
            "pca: explained variance is not non-increasing");
}

inline PcaModel pca_fit(const Eigen::MatrixXd &x, std::size_t k = kDefaultDims) {
  const auto n = x.rows();
  const auto d = x.cols();
  require(n >= 2, "pca_fit: need at least 2 rows, got " + std::to_string(n));
  require(k >= 1 && static_cast<Eigen::Index>(k) <= std::min(n, d),
          "pca_fit: k=" + std::to_string(k) + " exceeds min(n, d)=" +
              std::to_string(std::min(n, d)));
  require(x.allFinite(), "pca_fit: input contains non-finite values");

  PcaModel m;
  m.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - m.mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const auto kk = static_cast<Eigen::Index>(k);
  m.components = svd.matrixV().leftCols(kk).transpose();
  fix_signs(m.components);
  m.explained_variance =
      svd.singularValues().head(kk).array().square() / static_cast<double>(n - 1);
  check_model(m);
  return m;
}

inline Eigen::MatrixXd pca_transform(const PcaModel &m, const Eigen::MatrixXd &x) {
  require(x.cols() == m.input_dims(), "pca_transform: input has " + std::to_string(x.cols()) +
                                          " dims, model expects " +
                                          std::to_string(m.input_dims()));
  return (x.rowwise() - m.mean.transpose()) * m.components.transpose();
}

/// Map scores back into the input space (mean + scores * components).
inline Eigen::MatrixXd pca_inverse(const PcaModel &m, const Eigen::MatrixXd &scores) {
  require(scores.cols() == m.k(), "pca_inverse: score dimension mismatch");
  return (scores * m.components).rowwise() + m.mean.transpose();
}

// Persisted as two BTMX files: <prefix>.mean.btmx [d] and
// <prefix>.components.btmx [k x d]; explained variance rides in the
// components' meta as a JSON array string.
inline void save_model(const std::string &prefix, const PcaModel &m, Meta meta = {}) {
  write_matrix(prefix + ".mean.btmx", m.mean, meta);
  nlohmann::json ev = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.explained_variance.size(); ++i)
    ev.push_back(m.explained_variance(i));
  meta["explained_variance"] = ev.dump();
  meta["k"] = std::to_string(m.k());
  write_matrix(prefix + ".components.btmx", m.components, meta);
}

inline PcaModel load_model(const std::string &prefix) {
  PcaModel m;
  Meta meta;
  m.mean = read_matrix(prefix + ".mean.btmx").col(0);
  m.components = read_matrix(prefix + ".components.btmx", &meta);
  require(m.components.cols() == m.mean.size(), "pca model: mean/components dimension mismatch");
  m.explained_variance = Eigen::VectorXd::Zero(m.components.rows());
  if (auto it = meta.find("explained_variance"); it != meta.end()) {
    auto ev = nlohmann::json::parse(it->second);
    for (std::size_t i = 0; i < ev.size() && i < static_cast<std::size_t>(m.k()); ++i)
      m.explained_variance(static_cast<Eigen::Index>(i)) = ev[i].get<double>();
  }
  return m;
}

} // namespace brainalign::reduce
