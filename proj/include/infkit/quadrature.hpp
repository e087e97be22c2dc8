#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace infkit {

//! Axis-aligned integration region.
struct Box
{
  std::vector<double> lower;
  std::vector<double> upper;

  int dim() const { return static_cast<int>(lower.size()); }
  static Box cube(int dim, double lo, double hi);
  bool contains(std::span<const double> z) const;
  //! Smallest box containing both.
  Box hull(const Box& other) const;
};

//! Per-coordinate points where an integrand may have a kink or jump.
using Breakpoints = std::vector<std::vector<double>>;

namespace quad {

struct Options
{
  double abs_tol = 1e-8;
  double rel_tol = 0.0;
  int max_depth = 30;
  std::size_t max_evaluations = 20'000'000;
  //! Gauss-Legendre points per panel.
  int points = 10;
};

struct Result
{
  double value = 0.0;
  double error = 0.0;
  std::size_t evaluations = 0;
  bool converged = true;
};

struct VectorResult
{
  Eigen::VectorXd value;
  double error = 0.0;
  std::size_t evaluations = 0;
  bool converged = true;
};

struct Rule
{
  std::vector<double> nodes;   // on [-1, 1]
  std::vector<double> weights;
};

//! Gauss-Legendre rule with n points (1 <= n <= 64), computed once.
const Rule& gauss_legendre(int n);

using Fn1 = std::function<double(double)>;
using FnN = std::function<double(std::span<const double>)>;
using VecFnN =
  std::function<void(std::span<const double>, Eigen::Ref<Eigen::VectorXd>)>;

//! Adaptive Gauss-Legendre panels on [a, b]. Breakpoints strictly inside
//! (a, b) split the interval before adaptation starts.
Result integrate(const Fn1& f,
                 double a,
                 double b,
                 const Options& opts = {},
                 std::span<const double> breaks = {});

//! Nested adaptive quadrature over a box.
Result integrate(const FnN& f,
                 const Box& box,
                 const Options& opts = {},
                 const Breakpoints& breaks = {});

//! Vector-valued integrand of length `size` over a box; error control uses
//! the max-norm.
VectorResult integrate_vector(const VecFnN& f,
                              int size,
                              const Box& box,
                              const Options& opts = {},
                              const Breakpoints& breaks = {});

//! Same as integrate() but throws NumericFailure when the tolerance was not
//! met. `what` names the integral in the diagnostic.
double integrate_checked(const Fn1& f,
                         double a,
                         double b,
                         const Options& opts,
                         std::span<const double> breaks,
                         const std::string& what);

double integrate_checked(const FnN& f,
                         const Box& box,
                         const Options& opts,
                         const Breakpoints& breaks,
                         const std::string& what);

Eigen::VectorXd integrate_vector_checked(const VecFnN& f,
                                         int size,
                                         const Box& box,
                                         const Options& opts,
                                         const Breakpoints& breaks,
                                         const std::string& what);

//! Merge two breakpoint sets coordinate-wise.
Breakpoints merge(const Breakpoints& a, const Breakpoints& b);

//! The points of `b` (sorted per coordinate) with (b_c - center_c) / scale in
//! (lo, hi), expressed in that local coordinate.
Breakpoints localize(const Breakpoints& b, std::span<const double> center, double scale, double lo, double hi);

} // namespace quad
} // namespace infkit
