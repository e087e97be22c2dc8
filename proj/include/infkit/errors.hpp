#pragma once

#include <stdexcept>
#include <string>

namespace infkit {

//! Failure categories shared by every module. The CLI maps them onto exit
//! codes (2 for input problems, 3 for numerical problems).
enum class ErrorKind
{
  invalid_argument,
  insufficient_data,
  unsupported_representation,
  numeric_failure,
  rank_deficiency
};

class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(what)
    , kind_(kind)
  {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

struct InvalidArgument : Error
{
  explicit InvalidArgument(const std::string& what)
    : Error(ErrorKind::invalid_argument, what)
  {}
};

struct InsufficientData : Error
{
  explicit InsufficientData(const std::string& what)
    : Error(ErrorKind::insufficient_data, what)
  {}
};

struct UnsupportedRepresentation : Error
{
  explicit UnsupportedRepresentation(const std::string& what)
    : Error(ErrorKind::unsupported_representation, what)
  {}
};

struct NumericFailure : Error
{
  explicit NumericFailure(const std::string& what)
    : Error(ErrorKind::numeric_failure, what)
  {}
};

struct RankDeficiency : Error
{
  RankDeficiency(const std::string& what, double smallest_eigenvalue)
    : Error(ErrorKind::rank_deficiency, what)
    , smallest_eigenvalue(smallest_eigenvalue)
  {}

  double smallest_eigenvalue;
};

} // namespace infkit
