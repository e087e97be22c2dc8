#pragma once

#include "infkit/functionals.hpp"

#include <string>
#include <vector>

namespace infkit {

enum class Extrapolation
{
  none,
  richardson
};

//! h-ladder for the limit in the influence-function definition. The h values
//! are multiplied by `scale[c]` on coordinate c (typically the data standard
//! deviation); an empty scale means 1.
struct DerivativeLadder
{
  std::vector<double> h{ 0.4, 0.2, 0.1, 0.05 };
  double t_step = 1e-3;
  Extrapolation extrapolation = Extrapolation::richardson;
  std::vector<double> scale;

  //! Throws InvalidArgument unless h is strictly decreasing and positive,
  //! has at least 3 levels, and 0 < t_step < 0.5.
  void validate() const;
};

struct PathDerivative
{
  double value = 0.0;
  //! Mixture weight used: 0.25 when beta is at most quadratic in t (the
  //! stencil is then exact), else t_step / max(1, sup g).
  double t = 0.0;
  //! True when the stencil was applied pointwise under one quadrature rule.
  bool pointwise = false;
};

//! d/dt beta((1 - t) F0 + t G) at t = 0 by [-3 b(0) + 4 b(t) - b(2t)] / (2t).
PathDerivative path_derivative_full(const Functional& beta,
                                    const DistributionRep& base,
                                    std::shared_ptr<const Deviation> dev,
                                    double t_step = 1e-3,
                                    const quad::Options& opts = { 1e-10 });

double path_derivative(const Functional& beta,
                       const DistributionRep& base,
                       std::shared_ptr<const Deviation> dev,
                       double t_step = 1e-3,
                       const quad::Options& opts = { 1e-10 });

enum class LimitStatus
{
  converged,
  no_limit,
  failed
};

const char* to_string(LimitStatus s);

struct InfluencePoint
{
  double psi = 0.0;
  //! mu_z^h per ladder level (ladder order).
  std::vector<double> mu;
  std::vector<double> h; // the scaled h used on the first coordinate
  //! |mu_K - mu_{K-1}|.
  double diagnostic = 0.0;
  LimitStatus status = LimitStatus::converged;
  std::string message;
};

//! psi(z) as the h -> 0 limit of path derivatives. A diverging ladder is
//! reported through `status`, not thrown.
InfluencePoint influence_at(const Functional& beta,
                            const DistributionRep& base,
                            std::span<const double> z,
                            const DerivativeLadder& ladder,
                            const std::vector<bool>& continuous = {},
                            const KernelSpec& kernel = KernelSpec::make(2));

struct InfluenceTable
{
  Eigen::VectorXd psi;
  //! Centered sample variance (1/n) sum (psi_i - mean)^2.
  double V_hat = 0.0;
  double mean = 0.0;
  //! (1/n) sum psi_i^2.
  double second_moment = 0.0;
  std::vector<InfluencePoint> points;
  std::size_t failures = 0;
  std::size_t no_limit = 0;
};

//! influence_at at every row of `sample`, run in parallel. Throws
//! NumericFailure when more than 5% of the points fail.
InfluenceTable influence_table(const Functional& beta,
                               const DistributionRep& base,
                               const Sample& sample,
                               const DerivativeLadder& ladder,
                               const std::vector<bool>& continuous = {},
                               const KernelSpec& kernel = KernelSpec::make(2));

} // namespace infkit
