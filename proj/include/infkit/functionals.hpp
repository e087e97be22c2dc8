#pragma once

#include "infkit/distribution.hpp"

#include <optional>
#include <string>
#include <vector>

namespace infkit {

//! beta(F) = int_region L(F, x) dx. Functionals that can be written this way
//! expose L so that derivatives along a path can be differenced pointwise
//! under one quadrature rule.
struct IntegrandForm
{
  Box region;
  Breakpoints breaks;
  Field L;
};

struct Functional
{
  std::string id;
  //! beta(F) = int psi dF for a fixed psi, so R2 vanishes identically.
  bool linear = false;
  //! Degree of t -> beta((1 - t) F + t G) when it is a polynomial (isd 2,
  //! linear 1), else 0.
  int t_degree = 0;
  std::function<double(const DistributionRep&)> eval;
  //! Empty, or returns nullopt, when no integrand form exists for F.
  std::function<std::optional<IntegrandForm>(const DistributionRep&)> integrand;
  //! Closed-form influence function under a declared truth (may be empty).
  Field known_psi;
  std::optional<double> beta0;
  //! Set for weighted averages of a conditional mean (surplus).
  std::optional<SurplusWeight> weight;

  double operator()(const DistributionRep& F) const { return eval(F); }
};

//! int f^2. Exact for kernel density estimates; quadrature otherwise.
Functional isd_functional(const quad::Options& opts = { 1e-10 });
//! (1/n) sum_i f_{-i}(z_i) on a kernel density estimate; on any other
//! representation it targets the same parameter int f^2.
Functional isd_loo_functional(const quad::Options& opts = { 1e-10 });
//! int W(x) E_F[q | x] dx over the band.
Functional surplus_functional(SurplusWeight W, const quad::Options& opts = { 1e-10 });
Functional constant_functional(double c);
//! int psi dF.
Functional linear_functional(Field psi, const quad::Options& opts = { 1e-10 });

struct FunctionalParams
{
  SurplusWeight weight;
  double constant = 0.0;
  Field psi;
};

//! Registry ids: isd, isd_loo, surplus, constant, linear.
const std::vector<std::string>& functional_ids();
//! Throws InvalidArgument for an unknown id (the message lists the ids).
Functional make_functional(const std::string& id, const FunctionalParams& params = {});

double isd_value(const DistributionRep& F, const quad::Options& opts = { 1e-10 });
double isd_loo_value(const Sample& sample, double h, const KernelSpec& kernel);
double surplus_value(const DistributionRep& F,
                     const SurplusWeight& W,
                     const quad::Options& opts = { 1e-10 });

//! beta((1 - t) F0 + t G). t = 0 returns beta(F0) itself.
double mixture_eval(const Functional& beta,
                    const DistributionRep& base,
                    std::shared_ptr<const Deviation> dev,
                    double t);

//! psi(z) = 2 [f0(z) - beta0].
Field isd_psi(Field f0, double beta0);
//! psi(z) = W(x) / f0(x) [q - d0(x)] on z = (q, x).
Field surplus_psi(SurplusWeight W, Field fx, std::function<double(std::span<const double>)> d0);

} // namespace infkit
