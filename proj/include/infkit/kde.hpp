#pragma once

#include "infkit/kernel.hpp"
#include "infkit/quadrature.hpp"
#include "infkit/types.hpp"

#include <vector>

namespace infkit {

//! Fixed-bandwidth kernel density estimate
//!   f(z) = 1/(n h^r) sum_i K((z - z_i)/h).
//! Immutable after construction; all queries are const and thread-safe.
class DensityEstimate
{
public:
  DensityEstimate(Sample sample, double bandwidth, KernelSpec kernel);

  std::size_t size() const { return static_cast<std::size_t>(sample_.rows()); }
  int dim() const { return static_cast<int>(sample_.cols()); }
  double bandwidth() const { return h_; }
  const KernelSpec& kernel() const { return kernel_; }
  const Sample& sample() const { return sample_; }

  double operator()(std::span<const double> z) const;

  //! Leave-one-out density at the i-th observation (divisor n - 1).
  //! Throws InsufficientData when n < 2.
  double loo(std::size_t i) const;

  //! (1/n) sum_i loo(i), computed over pairs.
  double loo_mean() const;

  //! Row sums of the leave-one-out kernel matrix k_ij = h^-r K((z_i-z_j)/h):
  //! s_i = sum_{j != i} k_ij and q_i = sum_{j != i} k_ij^2.
  struct LooSums
  {
    Eigen::VectorXd s;
    Eigen::VectorXd q;
  };
  LooSums loo_sums() const;

  //! int f^2 in closed form through the kernel self-convolution.
  double integrated_square() const;

  //! Data range inflated by h per coordinate; f is zero outside.
  Box support() const;
  //! Kink locations z_i +- h (only when the grid stays small).
  Breakpoints breakpoints() const;

private:
  // Visits every j with |z_0 - z_j0| < reach (indices into sample_).
  template<class Fn>
  void for_each_near(double z0, double reach, Fn&& fn) const;

  Sample sample_;
  double h_;
  KernelSpec kernel_;
  std::vector<Eigen::Index> order_;  // sample indices sorted by coordinate 0
  std::vector<double> sorted0_;
};

//! psi(z, h) = int psi(z + h u) K(u) du over [-1, 1]^r. `psi_breaks` are
//! kink locations of psi in z coordinates, sorted per coordinate.
double smooth_influence(const Field& psi,
                        const KernelSpec& kernel,
                        double h,
                        std::span<const double> z,
                        const quad::Options& opts = { 1e-10 },
                        const Breakpoints& psi_breaks = {});

} // namespace infkit
