#pragma once

#include <stdexcept>
#include <string>

namespace gtlcirl {

class GtlError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Formula or template text that does not match the grammar.
class ParseError : public GtlError
{
public:
  ParseError(const std::string& what, int line, int column)
    : GtlError(std::to_string(line) + ":" + std::to_string(column) + ": " + what),
      line_(line), column_(column)
  {
  }

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

private:
  int line_;
  int column_;
};

/// Robustness queried outside the trajectory, or against unknown features/nodes.
class EvaluationError : public GtlError
{
public:
  using GtlError::GtlError;
};

class ConfigError : public GtlError
{
public:
  using GtlError::GtlError;
};

class EnvironmentError : public GtlError
{
public:
  using GtlError::GtlError;
};

/// The environment has no forcing map for the requested cause.
class UnforceableError : public EnvironmentError
{
public:
  using EnvironmentError::EnvironmentError;
};

} // namespace gtlcirl
