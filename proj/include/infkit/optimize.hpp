#pragma once

#include "infkit/quadrature.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>

namespace infkit {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct MinimizeOptions
{
  int max_iterations = 5000;
  //! Stop when the simplex size falls below this (in parameter units).
  double size_tol = 1e-10;
  //! Initial simplex step as a fraction of the box width.
  double initial_step = 0.1;
  int starts = 5;
  std::uint64_t seed = 1;
};

struct MinimizeResult
{
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  //! Some coordinate ended within 1e-6 of the box width from a face.
  bool on_boundary = false;
};

//! Unconstrained Nelder-Mead simplex search (GSL nmsimplex2). Exceptions
//! thrown by f are rethrown after the minimizer is released.
MinimizeResult nelder_mead(const Objective& f,
                           const Eigen::VectorXd& x0,
                           const Eigen::VectorXd& step,
                           const MinimizeOptions& opts = {});

//! Multi-start Nelder-Mead inside a box. The first start is `x_start` (or the
//! box centre), the rest are seeded uniform draws; the best result is
//! polished by one restart. Points outside the box are evaluated at their
//! projection plus a quadratic penalty.
MinimizeResult minimize_in_box(const Objective& f,
                               const Box& box,
                               const MinimizeOptions& opts = {},
                               const std::optional<Eigen::VectorXd>& x_start = std::nullopt);

} // namespace infkit
