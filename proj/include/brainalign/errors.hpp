#pragma once

#include <stdexcept>
#include <string>

namespace brainalign {

/// Thrown when a caller breaks an operation's precondition (shape mismatch,
/// out-of-range parameter, inconsistent layout).
class ContractViolation : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Filesystem failure; the message always carries the offending path.
class IoError : public std::runtime_error {
public:
  IoError(const std::string &path, const std::string &what)
      : std::runtime_error(path + ": " + what), path_(path) {}
  const std::string &path() const noexcept { return path_; }

private:
  std::string path_;
};

/// Malformed file content. `field()` names the part of the format that was
/// rejected (e.g. "magic", "header_len", "payload").
class ParseError : public std::runtime_error {
public:
  ParseError(std::string field, const std::string &what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string &field() const noexcept { return field_; }

private:
  std::string field_;
};

inline void require(bool cond, const std::string &msg) {
  if (!cond)
    throw ContractViolation(msg);
}

} // namespace brainalign
