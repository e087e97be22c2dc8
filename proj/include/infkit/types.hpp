#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>

namespace infkit {

//! n x r matrix of observations, one row per observation. Row-major so a
//! row is a contiguous point.
using Sample =
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

//! Real-valued function of a point.
using Field = std::function<double(std::span<const double>)>;

inline std::span<const double>
row(const Sample& s, Eigen::Index i)
{
  return { s.data() + i * s.cols(), static_cast<std::size_t>(s.cols()) };
}

inline std::span<const double>
as_span(const Eigen::VectorXd& v)
{
  return { v.data(), static_cast<std::size_t>(v.size()) };
}

inline Eigen::Map<const Eigen::VectorXd>
as_vector(std::span<const double> z)
{
  return { z.data(), static_cast<Eigen::Index>(z.size()) };
}

} // namespace infkit
