#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "brainalign/brainalign.hpp"

using namespace brainalign;

namespace {

int cmd_textprep(const std::string &words_path, const std::string &scenario,
                 const std::string &out_path, std::size_t seq_len,
                 const std::string &windows_out) {
  const auto stream = textprep::read_words(words_path);
  const auto modified = textprep::apply_scenario(stream, textprep::make_scenario(scenario));
  textprep::write_words(out_path, modified);
  if (seq_len > 0)
    textprep::write_windows(windows_out.empty() ? out_path + ".windows.jsonl" : windows_out,
                            textprep::make_windows(modified.words.size(), seq_len));
  std::size_t changed = 0;
  for (std::size_t i = 0; i < stream.words.size(); ++i)
    changed += stream.words[i] != modified.words[i];
  std::cerr << "textprep: " << stream.words.size() << " words, " << changed << " replaced ("
            << scenario << ")\n";
  return 0;
}

int cmd_windows(const std::string &words_path, std::size_t n_words, std::size_t seq_len,
                const std::string &out_path) {
  if (!words_path.empty())
    n_words = textprep::read_words(words_path).words.size();
  const auto spec = textprep::make_windows(n_words, seq_len);
  if (out_path.empty() || out_path == "-")
    textprep::write_windows(std::cout, spec);
  else
    textprep::write_windows(out_path, spec);
  return 0;
}

int cmd_synth(const std::string &spec_path, const std::string &out_dir, long long seed) {
  nlohmann::json j = nlohmann::json::object();
  if (!spec_path.empty()) {
    j = nlohmann::json::parse(read_file(spec_path), nullptr, false);
    if (j.is_discarded())
      throw ParseError("synth spec", spec_path + ": not valid JSON");
  }
  if (seed >= 0)
    j["seed"] = seed;
  const auto spec = synth::spec_from_json(j);
  const auto data = synth::generate(spec);
  synth::write_dataset(data, out_dir);
  std::cerr << "synth: " << spec.words() << " words, " << spec.total_trs() << " TRs, "
            << spec.n_voxels << " voxels, " << spec.n_subjects << " subject(s) -> " << out_dir
            << "\n";
  return 0;
}

int cmd_run(const std::string &config_path, std::size_t threads) {
  const auto cfg = pipeline::load_config(config_path);
  const std::size_t workers = threads ? threads : default_workers();
  const auto summary = pipeline::run_experiment(cfg, workers);
  std::cerr << "run: " << summary.cells_computed << " cell(s) computed, " << summary.cells_resumed
            << " resumed, " << summary.rows.size() << " result rows -> " << cfg.output_dir
            << "/results.csv\n";
  return 0;
}

int cmd_report(const std::string &in_dir, const std::string &out_dir) {
  const auto tables = report::write_report(in_dir, out_dir);
  for (const auto &r : tables.summary)
    std::cout << r.key.model << '\t' << r.key.scenario << "\tS=" << r.key.seq_len << "\tlayer="
              << r.key.layer << '\t' << report::fmt(r.mean_accuracy, "%.4f") << '\n';
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"brainalign: encoding-model alignment of language-model features with fMRI"};
  app.require_subcommand(1);

  std::string words, scenario = "none", out, windows_out;
  std::size_t seq_len = 0;
  auto *tp = app.add_subcommand("textprep", "apply a punctuation scenario to a word list");
  tp->add_option("--words", words, "input word list, one token per line")->required();
  tp->add_option("--scenario", scenario,
                 "none|removing_fixation|padding_fixation|padding_all|padding_everything")
      ->required();
  tp->add_option("--out", out, "output word list")->required();
  tp->add_option("--seq-len", seq_len, "also write sliding-window spec for this length");
  tp->add_option("--windows-out", windows_out, "window spec path (default <out>.windows.jsonl)");

  std::string win_words, win_out;
  std::size_t win_n = 0, win_S = 0;
  auto *win = app.add_subcommand("windows", "write a sliding-window spec as JSON lines");
  auto *win_src = win->add_option("--words", win_words, "word list to count");
  win->add_option("--n-words", win_n, "word count")->excludes(win_src);
  win->add_option("--seq-len", win_S, "sequence length S")->required();
  win->add_option("--out", win_out, "output path (default stdout)");

  std::string synth_spec, synth_out;
  long long synth_seed = -1;
  auto *sy = app.add_subcommand("synth", "generate a synthetic dataset with known ground truth");
  sy->add_option("--spec", synth_spec, "synth spec JSON (defaults if omitted)");
  sy->add_option("--out", synth_out, "output directory")->required();
  sy->add_option("--seed", synth_seed, "override the spec seed");

  std::string config;
  std::size_t threads = 0;
  auto *run = app.add_subcommand("run", "run the cross-validated experiment");
  run->add_option("--config", config, "experiment config JSON")->required();
  run->add_option("--threads", threads, "worker count (default: BRAINALIGN_THREADS or all cores)");

  std::string rep_in, rep_out;
  auto *rep = app.add_subcommand("report", "aggregate results and draw accuracy-vs-layer plots");
  rep->add_option("--in", rep_in, "results directory")->required();
  rep->add_option("--out", rep_out, "report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e) == 0 ? 0 : 64;
  }

  try {
    if (*tp)
      return cmd_textprep(words, scenario, out, seq_len, windows_out);
    if (*win) {
      if (win_words.empty() && win_n == 0)
        throw ContractViolation("windows: give --words or --n-words");
      return cmd_windows(win_words, win_n, win_S, win_out);
    }
    if (*sy)
      return cmd_synth(synth_spec, synth_out, synth_seed);
    if (*run)
      return cmd_run(config, threads);
    if (*rep)
      return cmd_report(rep_in, rep_out);
  } catch (const ParseError &e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 3;
  } catch (const IoError &e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 4;
  } catch (const ContractViolation &e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
