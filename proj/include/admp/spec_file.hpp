#pragma once

#include <stdexcept>
#include <string>

#include "admp/model.hpp"

namespace admp {

/// Parse failure anchored at a 1-based line and column.
class SpecError : public std::runtime_error {
 public:
  SpecError(std::string source, std::size_t line, std::size_t column, const std::string& message)
      : std::runtime_error(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + message),
        line_(line),
        column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Block format: a header line at column 1 (`model`, `variable`, `factor`,
/// `infer`, `inverse`, `oracle`, `data`) followed by indented `key value...`
/// lines. `#` starts a comment.
ModelSpec parse_model_spec(const std::string& text, const std::string& source = "<spec>");
ModelSpec load_model_spec(const std::string& path);
std::string serialize_model_spec(const ModelSpec& spec);
/// FNV-1a of the serialized form, hex.
std::string spec_hash(const ModelSpec& spec);

}  // namespace admp
