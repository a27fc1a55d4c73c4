// Acceptance suite: one PASS/FAIL line per primary criterion. Exits nonzero
// if any criterion fails.

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "brainalign/brainalign.hpp"
#include "fixtures.hpp"

using namespace brainalign;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const char *name, double budget_s, const std::function<Outcome()> &body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception &e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = budget_s <= 0 || secs < budget_s;
  const bool pass = o.pass && in_time;
  failures += !pass;
  std::printf("%s  %-22s %s [%.2f s%s]\n", pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs,
              budget_s > 0 ? (in_time ? "" : ", over budget") : "");
  std::fflush(stdout);
}

std::string fmt(const char *f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

// (X^T X + lambda I)^{-1} X^T Y, Gaussian elimination with partial pivoting
// in extended precision.
Eigen::MatrixXd normal_equation_solve(const Eigen::MatrixXd &x, const Eigen::MatrixXd &y,
                                      double lambda) {
  const LMatrix xl = x.cast<long double>();
  LMatrix a = xl.transpose() * xl;
  a.diagonal().array() += static_cast<long double>(lambda);
  LMatrix b = xl.transpose() * y.cast<long double>();
  const Eigen::Index d = a.rows();
  for (Eigen::Index k = 0; k < d; ++k) {
    Eigen::Index p = k;
    for (Eigen::Index i = k + 1; i < d; ++i)
      if (std::abs(a(i, k)) > std::abs(a(p, k)))
        p = i;
    a.row(k).swap(a.row(p));
    b.row(k).swap(b.row(p));
    for (Eigen::Index i = k + 1; i < d; ++i) {
      const long double f = a(i, k) / a(k, k);
      a.row(i) -= f * a.row(k);
      b.row(i) -= f * b.row(k);
    }
  }
  LMatrix w(d, y.cols());
  for (Eigen::Index k = d - 1; k >= 0; --k)
    w.row(k) = (b.row(k) - a.row(k).tail(d - k - 1) * w.bottomRows(d - k - 1)) / a(k, k);
  return w.cast<double>();
}

Eigen::MatrixXd gaussian(std::mt19937_64 &rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = n(rng);
  return m;
}

/// Grand mean (voxels, then folds, then subjects) for every subject of `d`,
/// through the same aggregation the report uses.
double grand_mean(const synth::SynthData &d, const pipeline::PipelineOptions &opt,
                  std::vector<double> *per_subject = nullptr) {
  std::vector<Eigen::MatrixXd> maps(d.subjects.size());
  parallel_for(d.subjects.size(), default_workers(), [&](std::size_t s) {
    maps[s] = pipeline::run_cell(fixtures::cell_from(d, 0, s), opt);
  });
  std::vector<pipeline::ResultRow> rows;
  for (std::size_t s = 0; s < maps.size(); ++s) {
    if (per_subject)
      per_subject->push_back(maps[s].mean());
    for (Eigen::Index f = 0; f < maps[s].cols(); ++f)
      rows.push_back({"synth", "none", 10, 0, d.subjects[s].id, static_cast<std::size_t>(f),
                      maps[s].col(f).mean()});
  }
  return report::aggregate(rows).summary.at(0).mean_accuracy;
}

std::vector<double> ranks(const std::vector<double> &x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]])
      ++j;
    for (std::size_t k = i; k <= j; ++k)
      r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double> &a, const std::vector<double> &b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// ---- criteria ---------------------------------------------------------------

Outcome structural_constants() {
  const auto grid = ridge::LambdaGrid::stock();
  bool ok = grid.size() == 19;
  for (std::size_t i = 0; ok && i < grid.size(); ++i)
    ok = grid.exponents[i] == static_cast<int>(i) - 9 &&
         grid.value(i) == std::pow(10.0, static_cast<int>(i) - 9);
  const std::vector<std::size_t> stock_S(textprep::kStockSeqLengths.begin(),
                                         textprep::kStockSeqLengths.end());
  ok = ok && stock_S == std::vector<std::size_t>{4, 5, 10, 15, 20, 25, 30, 35, 40};

  const align::RunLayout layout{{338, 338, 338, 337}, align::kDefaultTrimStart,
                                align::kDefaultTrimEnd};
  ok = ok && layout.total() == align::kStockTotalTRs &&
       align::kStockTotalTRs - align::kStockRuns * (20 + 15) == 1211 &&
       layout.trimmed_total() == align::kStockTrimmedTRs && align::kStockTrimmedTRs == 1211;
  std::size_t folds = 0;
  for (std::size_t f = 0; f < layout.n_runs(); ++f)
    folds += !pipeline::split_rows(layout, f).test.empty();
  ok = ok && folds == 4;
  const searchlight::EvalConfig eval;
  ok = ok && eval.chunk_len == 20 && eval.n_trials == 1000;
  return {ok, "19 lambdas 1e-9..1e9, S={4..40}, 1351->1211, 4 folds, 20 TRs x 1000 trials"};
}

Outcome ridge_oracle() {
  std::mt19937_64 rng(2024);
  const auto grid = ridge::LambdaGrid::stock();
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const int n = std::uniform_int_distribution<int>(2, 30)(rng);
    const int d = std::uniform_int_distribution<int>(1, 10)(rng);
    const int v = std::uniform_int_distribution<int>(1, 5)(rng);
    const auto x = gaussian(rng, n, d);
    const auto y = gaussian(rng, n, v);
    const auto path = ridge::ridge_path(x, y, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto ref = normal_equation_solve(x, y, grid.value(i));
      worst = std::max(worst, (path[i] - ref).norm() / ref.norm());
    }
  }
  return {worst <= 1e-8, "200 systems x 19 lambdas, max relative error " + fmt("%.2e", worst) +
                             " (<= 1e-08)"};
}

Outcome chance_calibration() {
  synth::SynthSpec spec; // 50 voxels, 4 x 100 TRs
  spec.signal_scale = 0.0;
  spec.n_subjects = 200;
  spec.seed = 0;
  const auto d = synth::generate(spec);
  pipeline::PipelineOptions opt; // 1000 trials
  std::vector<double> per_subject;
  const double gm = grand_mean(d, opt, &per_subject);
  double var = 0.0;
  for (double a : per_subject)
    var += (a - gm) * (a - gm);
  const double sd = std::sqrt(var / static_cast<double>(per_subject.size() - 1));
  return {std::abs(gm - 0.5) <= 0.02,
          "grand mean " + fmt("%.4f", gm) + " over " + std::to_string(per_subject.size()) +
              " subjects (per-subject sd " + fmt("%.3f", sd) + "), need 0.5 +/- 0.02"};
}

Outcome signal_recovery() {
  synth::SynthSpec spec;
  spec.snr = 10.0;
  spec.seed = 0;
  const pipeline::PipelineOptions opt;
  const double gm = grand_mean(synth::generate(spec), opt);

  std::vector<double> noise, acc;
  for (double snr : {10.0, 1.0, 0.1, 0.01})
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      synth::SynthSpec s;
      s.snr = snr;
      s.seed = seed;
      pipeline::PipelineOptions o;
      o.eval.master_seed = seed;
      noise.push_back(1.0 / snr);
      acc.push_back(grand_mean(synth::generate(s), o));
    }
  const double rho = spearman(noise, acc);
  return {gm >= 0.90 && rho < 0.0, "SNR 10 grand mean " + fmt("%.4f", gm) +
                                       " (>= 0.90); Spearman(noise, accuracy) over 4 levels x 10 "
                                       "seeds " +
                                       fmt("%.3f", rho) + " (< 0)"};
}

Outcome determinism() {
  const auto root = fixtures::scratch("acceptance_determinism");
  synth::SynthSpec spec;
  spec.n_layers = 3;
  spec.n_subjects = 2;
  spec.seq_lengths = {4, 10};
  spec.scenarios = {"none", "padding_all"};
  spec.snr = 1.0;
  spec.seed = 42;
  synth::write_dataset(synth::generate(spec), root + "/data");
  auto j = nlohmann::json::parse(read_file(root + "/data/exp.json"));

  std::map<std::string, std::map<std::string, std::string>> outputs;
  for (auto [name, workers] : std::vector<std::pair<std::string, std::size_t>>{
           {"a", 1}, {"b", 1}, {"c", 8}}) {
    j["output_dir"] = "../" + name;
    write_file(root + "/data/" + name + ".json", j.dump(2));
    pipeline::run_experiment(pipeline::load_config(root + "/data/" + name + ".json"), workers);
    report::write_report(root + "/" + name, root + "/" + name + "/report");
    auto &files = outputs[name];
    files["results.csv"] = read_file(root + "/" + name + "/results.csv");
    for (const auto &e : fs::directory_iterator(root + "/" + name + "/report"))
      if (e.path().extension() == ".svg")
        files[e.path().filename().string()] = read_file(e.path().string());
  }
  const bool same_run = outputs["a"] == outputs["b"];
  const bool same_workers = outputs["a"] == outputs["c"];
  return {same_run && same_workers && outputs["a"].size() == 3,
          "results.csv + " + std::to_string(outputs["a"].size() - 1) + " SVGs: repeat run " +
              (same_run ? "identical" : "DIFFERS") + ", 1 vs 8 workers " +
              (same_workers ? "identical" : "DIFFERS")};
}

Outcome leakage_audit() {
  synth::SynthSpec spec;
  spec.snr = 1.0;
  spec.seed = 9;
  const auto d = synth::generate(spec);
  const auto nan = std::numeric_limits<double>::quiet_NaN();
  std::size_t checked = 0;
  bool ok = true;
  for (bool per_fold : {false, true}) {
    pipeline::PipelineOptions opt;
    opt.pca_per_fold = per_fold;
    for (std::size_t fold = 0; fold < 4; ++fold) {
      const auto clean_in = fixtures::cell_from(d);
      auto dirty_in = clean_in;
      const auto tr_run = clean_in.layout.tr_runs();
      for (std::size_t t = 0; t < tr_run.size(); ++t)
        if (tr_run[t] == fold)
          dirty_in.brain.row(static_cast<Eigen::Index>(t)).setConstant(nan);
      if (per_fold)
        for (std::size_t w = 0; w < clean_in.timing.size(); ++w)
          if (tr_run[clean_in.timing.word_trs[w]] == fold)
            dirty_in.word_feats.row(static_cast<Eigen::Index>(w)).setConstant(nan);
      const auto clean = pipeline::run_fold(clean_in, fold, opt);
      const auto dirty = pipeline::run_fold(dirty_in, fold, opt);
      ok = ok && dirty.fit.weights == clean.fit.weights &&
           dirty.fit.chosen_exponent == clean.fit.chosen_exponent &&
           dirty.fit.x_mean == clean.fit.x_mean && dirty.fit.x_scale == clean.fit.x_scale &&
           dirty.fit.y_mean == clean.fit.y_mean && dirty.pca.components == clean.pca.components;
      ++checked;
    }
  }
  return {ok, std::to_string(checked) +
                  " folds (global and per-fold PCA): training completed, weights bit-identical"};
}

Outcome scenario_goldens() {
  const std::string dir = BRAINALIGN_TEST_DATA;
  const auto fixture = textprep::read_words(dir + "/fixture_sentences.txt");
  std::size_t matched = 0, substituted = 0;
  for (auto id : textprep::kAllScenarios) {
    if (id == textprep::ScenarioId::none)
      continue;
    const auto golden =
        textprep::read_words(dir + "/golden/" + std::string(textprep::to_string(id)) + ".txt");
    const auto out = textprep::apply_scenario(fixture, textprep::make_scenario(id));
    matched += out.words == golden.words;
    for (std::size_t i = 0; i < out.words.size(); ++i)
      substituted += out.words[i] != fixture.words[i];
  }
  return {matched == 4, std::to_string(matched) + "/4 scenarios match golden token lists (" +
                            std::to_string(fixture.words.size()) + " tokens, " +
                            std::to_string(substituted) + " substitutions)"};
}

Outcome pca_properties() {
  std::mt19937_64 rng(77);
  double worst_recon = 0.0;
  bool deterministic = true, orthonormal = true, signs = true;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = std::uniform_int_distribution<int>(2, 60)(rng);
    const int d = std::uniform_int_distribution<int>(1, 20)(rng);
    const int k = std::uniform_int_distribution<int>(1, std::min(n, d))(rng);
    const auto x = gaussian(rng, n, d);
    const auto a = reduce::pca_fit(x, k);
    const auto b = reduce::pca_fit(x, k);
    deterministic = deterministic &&
                    std::memcmp(a.components.data(), b.components.data(),
                                sizeof(double) * a.components.size()) == 0 &&
                    std::memcmp(a.mean.data(), b.mean.data(), sizeof(double) * a.mean.size()) == 0;
    try {
      reduce::check_model(a, 1e-10);
    } catch (const ContractViolation &) {
      orthonormal = false;
    }
    for (Eigen::Index i = 0; i < a.components.rows(); ++i) {
      Eigen::Index arg;
      a.components.row(i).cwiseAbs().maxCoeff(&arg);
      signs = signs && a.components(i, arg) > 0.0;
    }
    // independent oracle: eigenvalues of the scatter matrix
    const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.transpose() * c);
    const Eigen::VectorXd ev = es.eigenvalues().reverse().cwiseMax(0.0);
    const double discarded = ev.tail(d - k).sum();
    const double err = (c - reduce::pca_transform(a, x) * a.components).squaredNorm();
    worst_recon = std::max(worst_recon, std::abs(err - discarded));
  }
  return {deterministic && orthonormal && signs && worst_recon <= 1e-8,
          std::string("100 matrices: deterministic ") + (deterministic ? "yes" : "NO") +
              ", orthonormal(1e-10) " + (orthonormal ? "yes" : "NO") + ", sign rule " +
              (signs ? "yes" : "NO") + ", max |recon err - discarded spectrum| " +
              fmt("%.2e", worst_recon) + " (<= 1e-08)"};
}

} // namespace

int main() {
  criterion("structural-constants", 1.0, structural_constants);
  criterion("ridge-oracle", 10.0, ridge_oracle);
  criterion("chance-calibration", 60.0, chance_calibration);
  criterion("signal-recovery", 300.0, signal_recovery);
  criterion("determinism", 300.0, determinism);
  criterion("leakage-audit", 0.0, leakage_audit);
  criterion("scenario-tables", 1.0, scenario_goldens);
  criterion("pca", 0.0, pca_properties);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
