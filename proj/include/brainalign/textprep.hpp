#pragma once

// Punctuation scenarios applied to the presented word stream, and the
// sliding-window sequence specs handed to the feature extractor.

#include <array>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "brainalign/errors.hpp"
#include "brainalign/hash.hpp"

namespace brainalign::textprep {

inline constexpr std::string_view kUnk = "[UNK]";
inline constexpr std::string_view kPad = "[PAD]";

/// Sequence lengths used throughout the stock experiment.
inline constexpr std::array<std::size_t, 9> kStockSeqLengths{4, 5, 10, 15, 20,
                                                             25, 30, 35, 40};

enum class ScenarioId {
  none,
  removing_fixation,
  padding_fixation,
  padding_all,
  padding_everything,
};

inline constexpr std::array<ScenarioId, 5> kAllScenarios{
    ScenarioId::none, ScenarioId::removing_fixation, ScenarioId::padding_fixation,
    ScenarioId::padding_all, ScenarioId::padding_everything};

inline std::string_view to_string(ScenarioId id) {
  switch (id) {
  case ScenarioId::none: return "none";
  case ScenarioId::removing_fixation: return "removing_fixation";
  case ScenarioId::padding_fixation: return "padding_fixation";
  case ScenarioId::padding_all: return "padding_all";
  case ScenarioId::padding_everything: return "padding_everything";
  }
  return "?";
}

inline ScenarioId parse_scenario(std::string_view name) {
  for (auto id : kAllScenarios)
    if (to_string(id) == name)
      return id;
  throw ContractViolation("unknown scenario \"" + std::string(name) + "\"");
}

struct Scenario {
  ScenarioId id = ScenarioId::none;
  /// Full-token substitutions; anything absent passes through.
  std::map<std::string, std::string> table;
};

inline Scenario make_scenario(ScenarioId id) {
  // Dash-like tokens. "--" is kept as printed; U+2013 covers corpora that
  // typeset it as a single en-dash.
  static const std::array<std::string, 4> dashes{"--", "–", "…", "—"};

  Scenario s{id, {}};
  switch (id) {
  case ScenarioId::none:
    break;
  case ScenarioId::removing_fixation:
    s.table["+"] = kUnk;
    break;
  case ScenarioId::padding_fixation:
    s.table["+"] = kPad;
    break;
  case ScenarioId::padding_everything:
    s.table["."] = kPad;
    s.table["?"] = kPad;
    [[fallthrough]];
  case ScenarioId::padding_all:
    for (const auto &d : dashes)
      s.table[d] = kPad;
    break;
  }
  return s;
}

inline Scenario make_scenario(std::string_view name) {
  return make_scenario(parse_scenario(name));
}

/// Canonical serialization: one "token\treplacement\n" line per entry in
/// byte order of the token. Hashing this pins the exact character lists.
inline std::string serialize_table(const Scenario &s) {
  std::string out;
  for (const auto &[from, to] : s.table)
    out += from + "\t" + to + "\n";
  return out;
}

inline std::string table_hash(const Scenario &s) {
  return sha256_hex(serialize_table(s));
}

struct WordStream {
  std::vector<std::string> words;
  std::string source_id;

  void validate() const {
    require(!words.empty(), "word stream '" + source_id + "' is empty");
    for (std::size_t i = 0; i < words.size(); ++i)
      require(!words[i].empty(), "word stream '" + source_id + "' has an empty word at index " +
                                     std::to_string(i));
  }
};

inline WordStream apply_scenario(const WordStream &stream, const Scenario &scenario) {
  WordStream out{stream.words, stream.source_id};
  for (auto &w : out.words)
    if (auto it = scenario.table.find(w); it != scenario.table.end())
      w = it->second;
  return out;
}

/// Half-open word-index range [start, end).
struct Window {
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const Window &, const Window &) = default;
};

struct WindowSpec {
  std::size_t seq_len = 0;
  std::vector<Window> windows;
};

/// One window per word. The first full window is repeated seq_len times so
/// the sequence count equals the word count; afterwards the window slides by
/// one word and always ends just past the current word.
inline WindowSpec make_windows(std::size_t n_words, std::size_t seq_len) {
  require(seq_len >= 1, "sequence length must be >= 1");
  require(seq_len <= n_words, "sequence length " + std::to_string(seq_len) +
                                  " exceeds word count " + std::to_string(n_words));
  WindowSpec spec{seq_len, {}};
  spec.windows.reserve(n_words);
  for (std::size_t i = 0; i < n_words; ++i) {
    if (i < seq_len)
      spec.windows.push_back({0, seq_len});
    else
      spec.windows.push_back({i - seq_len + 1, i + 1});
  }
  return spec;
}

// ---- files ----------------------------------------------------------------

/// One token per line, UTF-8. A trailing '\r' is stripped; blank lines are
/// rejected since the stream may not contain empty words.
inline WordStream read_words(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError(path, "cannot open word list");
  WordStream s{{}, path};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty()) {
      if (in.peek() == std::char_traits<char>::eof())
        break;
      throw ParseError("words", path + ":" + std::to_string(lineno) + ": empty token");
    }
    s.words.push_back(line);
  }
  s.validate();
  return s;
}

inline void write_words(const std::string &path, const WordStream &s) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError(path, "cannot open for writing");
  for (const auto &w : s.words)
    out << w << '\n';
  if (!out)
    throw IoError(path, "write failed");
}

/// JSON lines, one `[start,end]` pair per window.
inline void write_windows(std::ostream &out, const WindowSpec &spec) {
  for (const auto &w : spec.windows)
    out << '[' << w.start << ',' << w.end << "]\n";
}

inline void write_windows(const std::string &path, const WindowSpec &spec) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError(path, "cannot open for writing");
  write_windows(out, spec);
}

inline WindowSpec read_windows(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError(path, "cannot open window spec");
  WindowSpec spec;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_array() || j.size() != 2)
      throw ParseError("windows", "expected [start,end] per line");
    spec.windows.push_back({j[0].get<std::size_t>(), j[1].get<std::size_t>()});
  }
  if (!spec.windows.empty())
    spec.seq_len = spec.windows.front().end - spec.windows.front().start;
  return spec;
}

} // namespace brainalign::textprep
