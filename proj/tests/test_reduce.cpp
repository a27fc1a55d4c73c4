#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "brainalign/reduce.hpp"

using namespace brainalign;
using namespace brainalign::reduce;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = n(rng);
  return m;
}

bool bit_equal(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

// Eigendecomposition of the scatter matrix, independent of the SVD path:
// eigenvalues in descending order.
Eigen::VectorXd scatter_spectrum(const Eigen::MatrixXd &x) {
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.transpose() * c);
  Eigen::VectorXd ev = es.eigenvalues().reverse();
  return ev.cwiseMax(0.0);
}

} // namespace

TEST(Pca, PerfectlyCorrelatedColumns) {
  Eigen::MatrixXd x(100, 2);
  for (int t = 1; t <= 100; ++t)
    x.row(t - 1) << t, 2.0 * t;
  const auto m = pca_fit(x, 1);
  EXPECT_NEAR(m.components(0, 0), 1.0 / std::sqrt(5.0), 1e-12);
  EXPECT_NEAR(m.components(0, 1), 2.0 / std::sqrt(5.0), 1e-12);
}

TEST(Pca, AxisAlignedDataGivesSignedPermutation) {
  Eigen::MatrixXd x(6, 3);
  x << 0, 2, 0, //
      1, 0, 0,  //
      0, 0, -3, //
      0, -2, 0, //
      -1, 0, 0, //
      0, 0, 3;
  const auto m = pca_fit(x, 3);
  const auto scores = pca_transform(m, x);
  // each component is +-e_j; with the sign rule exactly +e_j, ordered by variance
  Eigen::MatrixXd expected_c(3, 3);
  expected_c << 0, 0, 1, 0, 1, 0, 1, 0, 0;
  EXPECT_TRUE(m.components.isApprox(expected_c, 1e-12));
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 3; ++j)
      EXPECT_NEAR(std::abs(scores(i, j)), std::abs(x(i, 2 - j)), 1e-12);
}

TEST(Pca, RepeatedMeanRowMapsToZero) {
  const auto x = random_matrix(20, 5, 1);
  const auto m = pca_fit(x, 3);
  const Eigen::MatrixXd means = m.mean.transpose().replicate(4, 1);
  EXPECT_TRUE(pca_transform(m, means).isZero(1e-12));
}

TEST(Pca, SingleRowShape) {
  const auto m = pca_fit(random_matrix(10, 6, 2), 4);
  const auto out = pca_transform(m, random_matrix(1, 6, 3));
  EXPECT_EQ(out.rows(), 1);
  EXPECT_EQ(out.cols(), 4);
}

TEST(Pca, ZeroVarianceInput) {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(8, 4, 2.5);
  const auto m = pca_fit(x, 2);
  EXPECT_NO_THROW(check_model(m));
  EXPECT_TRUE(pca_transform(m, x).isZero(0));
}

TEST(Pca, Errors) {
  const auto x = random_matrix(5, 3, 4);
  EXPECT_THROW(pca_fit(x, 4), ContractViolation);
  EXPECT_THROW(pca_fit(x, 0), ContractViolation);
  EXPECT_THROW(pca_fit(random_matrix(1, 3, 5), 1), ContractViolation);
  const auto m = pca_fit(x, 2);
  EXPECT_THROW(pca_transform(m, random_matrix(2, 4, 6)), ContractViolation);
}

TEST(Pca, ReconstructionErrorMatchesDiscardedSpectrum) {
  std::mt19937 rng(11);
  for (int rep = 0; rep < 30; ++rep) {
    std::uniform_int_distribution<int> nd(3, 40), dd(2, 12);
    const int n = nd(rng), d = dd(rng);
    const int k = std::uniform_int_distribution<int>(1, std::min(n, d))(rng);
    const auto x = random_matrix(n, d, 100 + rep);
    const auto m = pca_fit(x, k);
    const Eigen::MatrixXd c = x.rowwise() - m.mean.transpose();
    const double err = (c - pca_transform(m, x) * m.components).squaredNorm();
    const auto spectrum = scatter_spectrum(x);
    const double discarded = spectrum.tail(d - k).sum();
    EXPECT_NEAR(err, discarded, 1e-8 * std::max(1.0, spectrum.sum())) << n << "x" << d << " k=" << k;
  }
}

TEST(Pca, DeterministicAndSignRule) {
  const auto x = random_matrix(50, 12, 9);
  const auto a = pca_fit(x, 10);
  const auto b = pca_fit(x, 10);
  EXPECT_TRUE(bit_equal(a.components, b.components));
  EXPECT_TRUE(bit_equal(a.mean, b.mean));
  for (Eigen::Index i = 0; i < a.k(); ++i) {
    Eigen::Index arg;
    a.components.row(i).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(a.components(i, arg), 0.0);
  }
}

TEST(Pca, SignRuleTieGoesToLowerIndex) {
  Eigen::MatrixXd rows(1, 3);
  rows << -0.5, 0.5, 0.1;
  fix_signs(rows);
  EXPECT_GT(rows(0, 0), 0.0);
}

TEST(Pca, GramInvariantUnderRotation) {
  for (int rep = 0; rep < 10; ++rep) {
    const auto x = random_matrix(40, 6, 200 + rep);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(6, 6, 300 + rep));
    const Eigen::MatrixXd r = qr.householderQ();
    for (int k : {3, 6}) {
      const auto s1 = pca_transform(pca_fit(x, k), x);
      const Eigen::MatrixXd xr = x * r;
      const auto s2 = pca_transform(pca_fit(xr, k), xr);
      EXPECT_LE(((s1 * s1.transpose()) - (s2 * s2.transpose())).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(Pca, SaveLoadRoundTrip) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "brainalign_test_reduce";
  fs::create_directories(dir);
  const auto m = pca_fit(random_matrix(30, 8, 21), 5);
  save_model((dir / "pca").string(), m, {{"layer", "3"}});
  const auto back = load_model((dir / "pca").string());
  EXPECT_EQ(back.k(), 5);
  EXPECT_TRUE(back.components.isApprox(m.components, 1e-6));
  EXPECT_TRUE(back.mean.isApprox(m.mean, 1e-6));
  EXPECT_TRUE(back.explained_variance.isApprox(m.explained_variance, 1e-12));
}
