#include "infkit/kernel.hpp"

#include "infkit/errors.hpp"
#include "infkit/quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace infkit {

namespace {

constexpr int kMaxOrder = 16;

double
horner(const std::vector<double>& c, double u)
{
  double s = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it)
    s = s * u + *it;
  return s;
}

} // namespace

KernelSpec
KernelSpec::make(int order, int dim)
{
  if (order < 2 || order % 2 != 0)
    throw InvalidArgument("make_kernel: order must be an even integer >= 2, got " +
                          std::to_string(order));
  if (order > kMaxOrder)
    throw InvalidArgument("make_kernel: order above " +
                          std::to_string(kMaxOrder) + " is not supported");
  if (dim < 1)
    throw InvalidArgument("make_kernel: dimension must be >= 1");

  // Unknowns c_0..c_m of q(w) = sum c_k w^k. Condition j (0..m):
  //   sum_k c_k int (1 - u^2) u^{2(k+j)} du = [j == 0].
  const int m = (order - 2) / 2;
  auto base_moment = [](int i) {
    return 2.0 / (2.0 * i + 1.0) - 2.0 / (2.0 * i + 3.0);
  };
  Eigen::MatrixXd A(m + 1, m + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
  rhs(0) = 1.0;
  for (int j = 0; j <= m; ++j)
    for (int k = 0; k <= m; ++k)
      A(j, k) = base_moment(k + j);
  Eigen::VectorXd c = A.fullPivLu().solve(rhs);

  KernelSpec K;
  K.order_ = order;
  K.dim_ = dim;
  K.coeffs_.assign(order + 1, 0.0);
  // (1 - u^2) * sum c_k u^{2k}
  for (int k = 0; k <= m; ++k) {
    K.coeffs_[2 * k] += c(k);
    K.coeffs_[2 * k + 2] -= c(k);
  }

  double peak = 0.0, lowest = 0.0;
  for (int i = 0; i <= 4000; ++i) {
    double v = K(-1.0 + i / 2000.0);
    peak = std::max(peak, v);
    lowest = std::min(lowest, v);
  }
  K.peak1d_ = peak;
  K.nonnegative_ = lowest >= -1e-14;

  for (int j = 0; j < order; ++j) {
    double target = (j == 0) ? 1.0 : 0.0;
    if (std::abs(K.moment(j) - target) > 1e-10)
      throw NumericFailure("make_kernel: moment system of order " +
                           std::to_string(order) + " is ill-conditioned");
  }
  return K;
}

double
KernelSpec::operator()(double u) const
{
  if (u < -1.0 || u > 1.0)
    return 0.0;
  return horner(coeffs_, u);
}

double
KernelSpec::derivative(double u) const
{
  if (u < -1.0 || u > 1.0)
    return 0.0;
  double s = 0.0;
  for (int k = static_cast<int>(coeffs_.size()) - 1; k >= 1; --k)
    s = s * u + k * coeffs_[k];
  return s;
}

double
KernelSpec::eval(std::span<const double> u) const
{
  double v = 1.0;
  for (double x : u) {
    if (x < -1.0 || x > 1.0)
      return 0.0;
    v *= horner(coeffs_, x);
  }
  return v;
}

double
KernelSpec::peak() const
{
  return std::pow(peak1d_, dim_);
}

double
KernelSpec::moment(int j) const
{
  // int_{-1}^{1} u^{j+k} du = 2/(j+k+1) for even j+k, else 0.
  double s = 0.0;
  for (std::size_t k = 0; k < coeffs_.size(); ++k) {
    int p = j + static_cast<int>(k);
    if (p % 2 == 0)
      s += coeffs_[k] * 2.0 / (p + 1.0);
  }
  return s;
}

double
KernelSpec::roughness() const
{
  double s = 0.0;
  for (std::size_t a = 0; a < coeffs_.size(); ++a)
    for (std::size_t b = 0; b < coeffs_.size(); ++b) {
      std::size_t p = a + b;
      if (p % 2 == 0)
        s += coeffs_[a] * coeffs_[b] * 2.0 / (p + 1.0);
    }
  return s;
}

double
KernelSpec::cdf(double u) const
{
  if (u <= -1.0)
    return 0.0;
  u = std::min(u, 1.0);
  double s = 0.0;
  for (std::size_t k = 0; k < coeffs_.size(); ++k) {
    double e = static_cast<double>(k + 1);
    s += coeffs_[k] * (std::pow(u, e) - std::pow(-1.0, e)) / e;
  }
  return s;
}

double
KernelSpec::self_convolution(double v) const
{
  v = std::abs(v);
  if (v >= 2.0)
    return 0.0;
  // Polynomial integrand of degree 2s in u: an (s + 1)-point rule is exact.
  const auto& rule = quad::gauss_legendre(order_ + 1);
  double lo = v - 1.0, hi = 1.0;
  double c = 0.5 * (lo + hi), r = 0.5 * (hi - lo), s = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    double u = c + r * rule.nodes[i];
    s += rule.weights[i] * horner(coeffs_, u) * horner(coeffs_, v - u);
  }
  return s * r;
}

KernelSpec
KernelSpec::with_dim(int dim) const
{
  if (dim < 1)
    throw InvalidArgument("KernelSpec::with_dim: dimension must be >= 1");
  KernelSpec K = *this;
  K.dim_ = dim;
  return K;
}

} // namespace infkit
