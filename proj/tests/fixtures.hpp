#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "brainalign/pipeline.hpp"
#include "brainalign/synth.hpp"

namespace fixtures {

inline brainalign::pipeline::CellInputs cell_from(const brainalign::synth::SynthData &d,
                                                  std::size_t layer = 0, std::size_t subject = 0) {
  return {d.layer_feats.at(layer), d.subjects.at(subject).brain, d.timing, d.layout,
          d.neighborhoods};
}

inline double r_squared(const Eigen::VectorXd &y, const Eigen::VectorXd &yhat) {
  const double ss_res = (y - yhat).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).matrix().squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Fresh empty directory under the system temp dir.
inline std::string scratch(const std::string &name) {
  namespace fs = std::filesystem;
  const auto p = fs::temp_directory_path() / ("brainalign_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

} // namespace fixtures
