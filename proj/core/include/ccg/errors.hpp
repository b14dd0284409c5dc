#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ccg {

// Precondition violated by the caller (bad sizes, out-of-range values).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Inputs are individually valid but inconsistent with each other
// (e.g. a token prefix that does not follow the slot grammar).
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Text or token stream outside the supported grammar.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::string fragment)
      : std::runtime_error(what + ": '" + fragment + "'"),
        fragment_(std::move(fragment)) {}

  const std::string& fragment() const noexcept { return fragment_; }

 private:
  std::string fragment_;
};

// Decoding hit the maximum length without emitting EOS.
class TruncatedOutput : public std::runtime_error {
 public:
  TruncatedOutput(const std::string& what, std::vector<std::size_t> partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}

  const std::vector<std::size_t>& partial() const noexcept { return partial_; }

 private:
  std::vector<std::size_t> partial_;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Pearson correlation requested on a constant series.
class UndefinedCorrelation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Bad command-line usage or an unknown experiment name.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace ccg
