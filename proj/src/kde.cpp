#include "infkit/kde.hpp"

#include "infkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace infkit {

DensityEstimate::DensityEstimate(Sample sample, double bandwidth, KernelSpec kernel)
  : sample_(std::move(sample))
  , h_(bandwidth)
  , kernel_(std::move(kernel))
{
  if (sample_.rows() < 1)
    throw InsufficientData("kernel density estimate needs at least one observation");
  if (sample_.cols() < 1)
    throw InvalidArgument("kernel density estimate needs at least one column");
  if (!(h_ > 0.0) || !std::isfinite(h_))
    throw InvalidArgument("bandwidth must be positive and finite");
  if (!sample_.allFinite())
    throw InvalidArgument("sample contains non-finite values");
  if (kernel_.dim() != dim())
    kernel_ = kernel_.with_dim(dim());

  order_.resize(sample_.rows());
  std::iota(order_.begin(), order_.end(), Eigen::Index{ 0 });
  std::stable_sort(order_.begin(), order_.end(), [&](auto a, auto b) {
    return sample_(a, 0) < sample_(b, 0);
  });
  sorted0_.resize(order_.size());
  for (std::size_t k = 0; k < order_.size(); ++k)
    sorted0_[k] = sample_(order_[k], 0);
}

template<class Fn>
void
DensityEstimate::for_each_near(double z0, double reach, Fn&& fn) const
{
  auto lo = std::lower_bound(sorted0_.begin(), sorted0_.end(), z0 - reach);
  for (auto it = lo; it != sorted0_.end() && *it <= z0 + reach; ++it)
    fn(order_[static_cast<std::size_t>(it - sorted0_.begin())]);
}

double
DensityEstimate::operator()(std::span<const double> z) const
{
  if (static_cast<int>(z.size()) != dim())
    throw InvalidArgument("kde_eval: point dimension mismatch");
  const int r = dim();
  double sum = 0.0;
  std::vector<double> u(r);
  for_each_near(z[0], h_, [&](Eigen::Index j) {
    for (int c = 0; c < r; ++c)
      u[c] = (z[c] - sample_(j, c)) / h_;
    sum += kernel_.eval(u);
  });
  return sum / (static_cast<double>(size()) * std::pow(h_, r));
}

double
DensityEstimate::loo(std::size_t i) const
{
  if (size() < 2)
    throw InsufficientData("leave-one-out density needs n >= 2");
  if (i >= size())
    throw InvalidArgument("leave-one-out density: observation index out of range");
  const int r = dim();
  auto zi = row(sample_, static_cast<Eigen::Index>(i));
  double sum = 0.0;
  std::vector<double> u(r);
  for_each_near(zi[0], h_, [&](Eigen::Index j) {
    if (j == static_cast<Eigen::Index>(i))
      return;
    for (int c = 0; c < r; ++c)
      u[c] = (zi[c] - sample_(j, c)) / h_;
    sum += kernel_.eval(u);
  });
  return sum / ((static_cast<double>(size()) - 1.0) * std::pow(h_, r));
}

DensityEstimate::LooSums
DensityEstimate::loo_sums() const
{
  const Eigen::Index n = sample_.rows();
  const int r = dim();
  LooSums out{ Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n) };
  const double scale = 1.0 / std::pow(h_, r);
  std::vector<double> u(r);
  // Each unordered pair once, walking the sorted order.
  for (std::size_t a = 0; a < order_.size(); ++a) {
    Eigen::Index i = order_[a];
    for (std::size_t b = a + 1; b < order_.size(); ++b) {
      if (sorted0_[b] - sorted0_[a] > h_)
        break;
      Eigen::Index j = order_[b];
      for (int c = 0; c < r; ++c)
        u[c] = (sample_(i, c) - sample_(j, c)) / h_;
      double k = scale * kernel_.eval(u);
      out.s(i) += k;
      out.s(j) += k;
      out.q(i) += k * k;
      out.q(j) += k * k;
    }
  }
  return out;
}

double
DensityEstimate::loo_mean() const
{
  if (size() < 2)
    throw InsufficientData("leave-one-out estimate needs n >= 2");
  auto sums = loo_sums();
  double n = static_cast<double>(size());
  return sums.s.sum() / (n * (n - 1.0));
}

double
DensityEstimate::integrated_square() const
{
  const int r = dim();
  double diag = std::pow(kernel_.self_convolution(0.0), r) * static_cast<double>(size());
  double off = 0.0;
  for (std::size_t a = 0; a < order_.size(); ++a) {
    Eigen::Index i = order_[a];
    for (std::size_t b = a + 1; b < order_.size(); ++b) {
      if (sorted0_[b] - sorted0_[a] >= 2.0 * h_)
        break;
      Eigen::Index j = order_[b];
      double v = 1.0;
      for (int c = 0; c < r && v != 0.0; ++c)
        v *= kernel_.self_convolution((sample_(i, c) - sample_(j, c)) / h_);
      off += v;
    }
  }
  double n = static_cast<double>(size());
  return (diag + 2.0 * off) / (n * n * std::pow(h_, r));
}

Box
DensityEstimate::support() const
{
  Box box;
  for (int c = 0; c < dim(); ++c) {
    box.lower.push_back(sample_.col(c).minCoeff() - h_);
    box.upper.push_back(sample_.col(c).maxCoeff() + h_);
  }
  return box;
}

Breakpoints
DensityEstimate::breakpoints() const
{
  Breakpoints out(dim());
  if (dim() > 1 && size() > 64)
    return out;
  for (int c = 0; c < dim(); ++c) {
    auto& v = out[c];
    v.reserve(2 * size());
    for (Eigen::Index i = 0; i < sample_.rows(); ++i) {
      v.push_back(sample_(i, c) - h_);
      v.push_back(sample_(i, c) + h_);
    }
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return out;
}

double
smooth_influence(const Field& psi,
                 const KernelSpec& kernel,
                 double h,
                 std::span<const double> z,
                 const quad::Options& opts,
                 const Breakpoints& psi_breaks)
{
  if (!(h > 0.0))
    throw InvalidArgument("smooth_influence: bandwidth must be positive");
  const int r = static_cast<int>(z.size());
  const KernelSpec K = kernel.dim() == r ? kernel : kernel.with_dim(r);
  std::vector<double> shifted(r);
  auto integrand = [&](std::span<const double> u) {
    for (int c = 0; c < r; ++c)
      shifted[c] = z[c] + h * u[c];
    return psi(shifted) * K.eval(u);
  };
  return quad::integrate_checked(integrand, Box::cube(r, -1.0, 1.0), opts,
                                 quad::localize(psi_breaks, z, h, -1.0, 1.0), "smoothed influence function");
}

} // namespace infkit
