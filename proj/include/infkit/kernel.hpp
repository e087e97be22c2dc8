#pragma once

#include <span>
#include <vector>

namespace infkit {

//! Bounded-support polynomial kernel of even order s on [-1, 1]:
//! K(u) = (1 - u^2) q(u^2) with deg q = (s - 2) / 2 chosen so that
//! int K = 1 and int u^j K = 0 for 1 <= j < s. In r dimensions the kernel is
//! the product of r copies of the 1-d kernel.
class KernelSpec
{
public:
  //! Throws InvalidArgument for odd, nonpositive or unsupported orders.
  static KernelSpec make(int order, int dim = 1);

  int order() const { return order_; }
  int dim() const { return dim_; }

  //! Coefficients of the 1-d kernel in powers of u (odd entries are zero).
  const std::vector<double>& coeffs() const { return coeffs_; }

  //! 1-d kernel; zero outside [-1, 1].
  double operator()(double u) const;
  double derivative(double u) const;
  //! Product kernel at an r-vector.
  double eval(std::span<const double> u) const;

  //! sup of the r-dimensional kernel.
  double peak() const;
  bool nonnegative() const { return nonnegative_; }

  //! Exact moment int u^j K(u) du of the 1-d kernel.
  double moment(int j) const;
  //! int K(u)^2 du of the 1-d kernel.
  double roughness() const;
  //! int_{-1}^{u} K of the 1-d kernel.
  double cdf(double u) const;
  //! (K * K)(v) for the 1-d kernel; zero for |v| >= 2.
  double self_convolution(double v) const;

  KernelSpec with_dim(int dim) const;

private:
  KernelSpec() = default;

  int order_ = 2;
  int dim_ = 1;
  std::vector<double> coeffs_;
  double peak1d_ = 0.0;
  bool nonnegative_ = true;
};

} // namespace infkit
