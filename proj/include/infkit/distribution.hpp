#pragma once

#include "infkit/kde.hpp"
#include "infkit/kernel.hpp"
#include "infkit/quadrature.hpp"
#include "infkit/series.hpp"
#include "infkit/types.hpp"

#include <memory>
#include <variant>
#include <vector>

namespace infkit {

//! Contamination G_z^h: a product kernel h_c^{-1} K((x_c - z_c)/h_c) on the
//! continuous coordinates times a point mass at z_c on the others.
struct Deviation
{
  std::vector<double> z;
  std::vector<double> h; // per coordinate; ignored where the coordinate is discrete
  KernelSpec kernel;     // 1-d base kernel
  std::vector<bool> continuous;

  int dim() const { return static_cast<int>(z.size()); }
  int continuous_dim() const;
  bool all_continuous() const { return continuous_dim() == dim(); }

  //! Product kernel over the continuous coordinates of a full point.
  double weight(std::span<const double> pt) const;
  //! sup of weight().
  double peak() const;
  //! Box covering the support; discrete coordinates are degenerate.
  Box support() const;
  //! z_c - h_c, z_c, z_c + h_c on continuous coordinates.
  Breakpoints breakpoints() const;
  //! int psi dG with discrete coordinates held at z.
  double expectation(const Field& psi, const quad::Options& opts = { 1e-11 }) const;
};

//! Throws InvalidArgument for h <= 0, a mask of the wrong length, or a kernel
//! that can go negative (G must be a probability distribution).
Deviation make_deviation(std::vector<double> z,
                         std::vector<double> h,
                         const KernelSpec& kernel,
                         std::vector<bool> continuous = {});
Deviation make_deviation(std::vector<double> z,
                         double h,
                         const KernelSpec& kernel,
                         std::vector<bool> continuous = {});

struct DistributionRep;

//! Closed-form density on a box (zero outside is not assumed; the box is
//! where integrals are taken).
struct TrueDensity
{
  Field f;
  Box support;
  Breakpoints breaks;
};

struct KdeDensity
{
  std::shared_ptr<const DensityEstimate> est;
};

//! Conditional mean of q given x, for data z = (q, x). `fx` is the marginal
//! density of x; it may be empty for a fitted regression, in which case the
//! representation cannot be mixed.
struct CondMean
{
  std::function<double(std::span<const double>)> d;
  Field fx;
  Box x_support;
  Breakpoints breaks;
  std::shared_ptr<const SeriesEstimate> series;
};

//! (1 - t) base + t G.
struct Mixture
{
  std::shared_ptr<const DistributionRep> base;
  std::shared_ptr<const Deviation> dev;
  double t = 0.0;
};

struct DistributionRep
{
  std::variant<TrueDensity, KdeDensity, CondMean, Mixture> v;

  template<class T>
  const T* get() const
  {
    return std::get_if<T>(&v);
  }
};

DistributionRep true_density(Field f, Box support, Breakpoints breaks = {});
DistributionRep kde_density(std::shared_ptr<const DensityEstimate> est);
DistributionRep cond_mean(CondMean cm);
//! Throws InvalidArgument unless 0 <= t <= 1.
DistributionRep mix(const DistributionRep& base, std::shared_ptr<const Deviation> dev, double t);

std::string describe(const DistributionRep& F);

//! Density queries. Throw UnsupportedRepresentation for conditional-mean
//! representations and for mixtures with point-mass deviations.
bool has_density(const DistributionRep& F);
double density(const DistributionRep& F, std::span<const double> z);
Box support(const DistributionRep& F);
Breakpoints breakpoints(const DistributionRep& F);

//! Conditional-mean queries; throw UnsupportedRepresentation for densities.
bool has_cond_mean(const DistributionRep& F);
//! f(x) and f(x) E[q | x]. `has_fx` is false when no marginal is known.
struct XMoments
{
  double f = 1.0;
  double m = 0.0;
  bool has_fx = true;
};
XMoments x_moments(const DistributionRep& F, std::span<const double> x);
double cond_mean_at(const DistributionRep& F, std::span<const double> x);
Box x_support(const DistributionRep& F);
Breakpoints x_breakpoints(const DistributionRep& F);
//! Marginal density of x at the innermost non-mixture base.
double base_x_density(const DistributionRep& F, std::span<const double> x);

//! int psi dF for density representations (and mixtures of them with any
//! deviation).
double expectation(const DistributionRep& F,
                   const Field& psi,
                   const quad::Options& opts = { 1e-10 });

} // namespace infkit
