#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace cfqp {

enum class ErrorKind
{
  invalid_argument,
  missing_file,
  empty_file,
  unparsable_cell,
  constant_group,
  empty_group,
  dimension_mismatch,
  mode_mismatch,
  config,
  runtime
};

const char* to_string(ErrorKind kind);

//! Library error. Carries a kind and, for tabular input, the offending cell.
class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(what)
    , kind_(kind)
  {}

  Error(ErrorKind kind,
        const std::string& what,
        std::size_t row,
        std::string column)
    : std::runtime_error(what)
    , kind_(kind)
    , row_(row)
    , column_(std::move(column))
  {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

private:
  ErrorKind kind_;
  std::optional<std::size_t> row_;
  std::string column_;
};

} // namespace cfqp
