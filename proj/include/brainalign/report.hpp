#pragma once

// Aggregation of per-fold results into accuracy-vs-layer tables, and static
// SVG line plots with one curve per sequence length.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "brainalign/errors.hpp"
#include "brainalign/pipeline.hpp"
#include "brainalign/searchlight.hpp"
#include "brainalign/tensor_io.hpp"

namespace brainalign::report {

using pipeline::ResultRow;

struct CellKey {
  std::string model;
  std::string scenario;
  std::size_t seq_len = 0;
  std::size_t layer = 0;
  auto tie() const { return std::tie(model, scenario, seq_len, layer); }
  friend bool operator<(const CellKey &a, const CellKey &b) { return a.tie() < b.tie(); }
  friend bool operator==(const CellKey &a, const CellKey &b) { return a.tie() == b.tie(); }
};

struct SummaryRow {
  CellKey key;
  double mean_accuracy = 0.0;
  std::size_t n_subjects = 0;
  std::size_t n_rows = 0;
};

struct SubjectRow {
  CellKey key;
  std::string subject;
  double mean_accuracy = 0.0; // over folds
  std::size_t n_folds = 0;
};

struct Tables {
  std::vector<SummaryRow> summary;     // sorted by key
  std::vector<SubjectRow> per_subject; // sorted by key, subject
};

/// Mean over folds within each subject, then over subjects. Rows already carry
/// the voxel mean of their fold.
inline Tables aggregate(const std::vector<ResultRow> &rows) {
  require(!rows.empty(), "aggregate: no result rows");
  std::map<CellKey, std::map<std::string, std::pair<double, std::size_t>>> acc;
  for (const auto &r : rows) {
    auto &slot = acc[{r.model, r.scenario, r.seq_len, r.layer}][r.subject];
    slot.first += r.mean_voxel_accuracy;
    ++slot.second;
  }
  Tables t;
  for (const auto &[key, subjects] : acc) {
    double total = 0.0;
    std::size_t n_rows = 0;
    for (const auto &[sub, sum_n] : subjects) {
      const double m = sum_n.first / static_cast<double>(sum_n.second);
      t.per_subject.push_back({key, sub, m, sum_n.second});
      total += m;
      n_rows += sum_n.second;
    }
    t.summary.push_back({key, total / static_cast<double>(subjects.size()), subjects.size(), n_rows});
  }
  return t;
}

struct SubjectMap {
  CellKey key;
  std::string subject;
  Eigen::MatrixXd accuracy; // voxels x folds
};

/// Alternative order: every (subject, voxel, fold) accuracy weighted equally,
/// so subjects with more voxels count more. Needs the per-cell maps.
inline std::vector<SummaryRow> aggregate_pooled(const std::vector<SubjectMap> &maps) {
  require(!maps.empty(), "aggregate_pooled: no maps");
  std::map<CellKey, std::tuple<double, std::size_t, std::set<std::string>>> acc;
  for (const auto &m : maps) {
    auto &[sum, n, subjects] = acc[m.key];
    sum += m.accuracy.sum();
    n += static_cast<std::size_t>(m.accuracy.size());
    subjects.insert(m.subject);
  }
  std::vector<SummaryRow> out;
  for (const auto &[key, v] : acc) {
    const auto &[sum, n, subjects] = v;
    out.push_back({key, sum / static_cast<double>(n), subjects.size(), n});
  }
  return out;
}

inline std::string fmt(double v, const char *spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string summary_csv(const std::vector<SummaryRow> &rows, const char *count_name) {
  std::string out = std::string("model,scenario,S,layer,mean_accuracy,n_subjects,") + count_name +
                    "\r\n";
  for (const auto &r : rows)
    out += pipeline::csv_field(r.key.model) + "," + pipeline::csv_field(r.key.scenario) + "," +
           std::to_string(r.key.seq_len) + "," + std::to_string(r.key.layer) + "," +
           pipeline::format_double(r.mean_accuracy) + "," + std::to_string(r.n_subjects) + "," +
           std::to_string(r.n_rows) + "\r\n";
  return out;
}

inline std::string per_subject_csv(const std::vector<SubjectRow> &rows) {
  std::string out = "model,scenario,S,layer,subject,mean_accuracy,n_folds\r\n";
  for (const auto &r : rows)
    out += pipeline::csv_field(r.key.model) + "," + pipeline::csv_field(r.key.scenario) + "," +
           std::to_string(r.key.seq_len) + "," + std::to_string(r.key.layer) + "," +
           pipeline::csv_field(r.subject) + "," + pipeline::format_double(r.mean_accuracy) + "," +
           std::to_string(r.n_folds) + "\r\n";
  return out;
}

// ---- SVG --------------------------------------------------------------------

struct Plot {
  std::string filename;
  std::string svg;
};

inline std::string sanitize(const std::string &s) {
  std::string out;
  for (char ch : s)
    out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')
               ? ch
               : '_';
  return out;
}

inline std::string xml_escape(const std::string &s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
    case '&': out += "&amp;"; break;
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '"': out += "&quot;"; break;
    default: out += ch;
    }
  }
  return out;
}

/// One SVG per (model, scenario): x = layer, y = mean accuracy, one polyline
/// with point markers per sequence length. Output depends only on the table.
inline std::vector<Plot> emit_plots(const std::vector<SummaryRow> &summary) {
  require(!summary.empty(), "emit_plots: empty table");
  static const std::array<const char *, 10> palette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                   "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                                   "#bcbd22", "#17becf"};
  std::map<std::pair<std::string, std::string>,
           std::map<std::size_t, std::vector<std::pair<std::size_t, double>>>>
      groups;
  for (const auto &r : summary)
    groups[{r.key.model, r.key.scenario}][r.key.seq_len].emplace_back(r.key.layer, r.mean_accuracy);

  constexpr double W = 640, H = 420, left = 60, right = 120, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;

  std::vector<Plot> plots;
  for (auto &[mk, curves] : groups) {
    std::size_t lmin = SIZE_MAX, lmax = 0;
    double ymin = 1.0, ymax = 0.0;
    for (auto &[S, pts] : curves) {
      std::sort(pts.begin(), pts.end());
      for (auto [l, a] : pts) {
        lmin = std::min(lmin, l);
        lmax = std::max(lmax, l);
        ymin = std::min(ymin, a);
        ymax = std::max(ymax, a);
      }
    }
    ymin = std::floor(ymin * 20.0) / 20.0;
    ymax = std::ceil(ymax * 20.0) / 20.0;
    if (ymax <= ymin)
      ymax = ymin + 0.05;
    const double xspan = lmax > lmin ? static_cast<double>(lmax - lmin) : 1.0;
    auto px = [&](std::size_t l) {
      return lmax > lmin ? left + pw * static_cast<double>(l - lmin) / xspan : left + pw / 2;
    };
    auto py = [&](double a) { return top + ph * (1.0 - (a - ymin) / (ymax - ymin)); };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(W, "%.0f") + "\" height=\"" +
         fmt(H, "%.0f") + "\" viewBox=\"0 0 " + fmt(W, "%.0f") + " " + fmt(H, "%.0f") + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + fmt(left, "%.0f") + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" +
         xml_escape(mk.first + " / " + mk.second) + "</text>\n";
    // axes
    s += "<line x1=\"" + fmt(left, "%.2f") + "\" y1=\"" + fmt(top + ph, "%.2f") + "\" x2=\"" +
         fmt(left + pw, "%.2f") + "\" y2=\"" + fmt(top + ph, "%.2f") + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + fmt(left, "%.2f") + "\" y1=\"" + fmt(top, "%.2f") + "\" x2=\"" +
         fmt(left, "%.2f") + "\" y2=\"" + fmt(top + ph, "%.2f") + "\" stroke=\"black\"/>\n";
    for (std::size_t l = lmin; l <= lmax; ++l)
      s += "<text x=\"" + fmt(px(l), "%.2f") + "\" y=\"" + fmt(top + ph + 16, "%.2f") +
           "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" +
           std::to_string(l) + "</text>\n";
    for (int i = 0; i <= 4; ++i) {
      const double a = ymin + (ymax - ymin) * i / 4.0;
      s += "<text x=\"" + fmt(left - 6, "%.2f") + "\" y=\"" + fmt(py(a) + 3, "%.2f") +
           "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" + fmt(a, "%.3f") +
           "</text>\n";
    }
    s += "<text x=\"" + fmt(left + pw / 2, "%.2f") + "\" y=\"" + fmt(H - 12, "%.2f") +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">layer</text>\n";
    s += "<text x=\"14\" y=\"" + fmt(top + ph / 2, "%.2f") +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         fmt(top + ph / 2, "%.2f") + ")\">mean accuracy</text>\n";

    std::size_t ci = 0;
    for (const auto &[S, pts] : curves) {
      const char *color = palette[ci % palette.size()];
      std::string points;
      for (auto [l, a] : pts)
        points += (points.empty() ? "" : " ") + fmt(px(l), "%.2f") + "," + fmt(py(a), "%.2f");
      s += "<polyline class=\"curve\" data-seq-len=\"" + std::to_string(S) +
           "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"" + points +
           "\"/>\n";
      for (auto [l, a] : pts)
        s += "<circle class=\"marker\" cx=\"" + fmt(px(l), "%.2f") + "\" cy=\"" + fmt(py(a), "%.2f") +
             "\" r=\"3\" fill=\"" + color + "\"/>\n";
      const double ly = top + 14.0 * static_cast<double>(ci);
      s += "<text x=\"" + fmt(left + pw + 16, "%.2f") + "\" y=\"" + fmt(ly + 4, "%.2f") +
           "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" + color + "\">S=" +
           std::to_string(S) + "</text>\n";
      ++ci;
    }
    s += "</svg>\n";
    plots.push_back({sanitize(mk.first) + "__" + sanitize(mk.second) + ".svg", std::move(s)});
  }
  return plots;
}

/// Reads <in_dir>/results.csv (and maps/ when present) and writes
/// summary.csv, per_subject.csv, summary_pooled.csv and the SVG plots.
inline Tables write_report(const std::string &in_dir, const std::string &out_dir) {
  namespace fs = std::filesystem;
  const auto rows = pipeline::read_results_csv(in_dir + "/results.csv");
  const auto tables = aggregate(rows);
  fs::create_directories(out_dir);
  write_file(out_dir + "/summary.csv", summary_csv(tables.summary, "n_rows"));
  write_file(out_dir + "/per_subject.csv", per_subject_csv(tables.per_subject));

  const fs::path maps_dir = fs::path(in_dir) / "maps";
  if (fs::exists(maps_dir)) {
    std::vector<std::string> files;
    for (const auto &e : fs::directory_iterator(maps_dir))
      if (e.path().extension() == ".btmx")
        files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    std::vector<SubjectMap> maps;
    for (const auto &f : files) {
      auto m = searchlight::load_accuracy_map(f);
      maps.push_back({{m.keys.at("model"), m.keys.at("scenario"), std::stoul(m.keys.at("seq_len")),
                       std::stoul(m.keys.at("layer"))},
                      m.keys.at("subject"),
                      m.accuracy});
    }
    if (!maps.empty())
      write_file(out_dir + "/summary_pooled.csv",
                 summary_csv(aggregate_pooled(maps), "n_voxel_folds"));
  }

  for (const auto &p : emit_plots(tables.summary))
    write_file(out_dir + "/" + p.filename, p.svg);
  return tables;
}

} // namespace brainalign::report
