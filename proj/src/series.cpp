#include "infkit/series.hpp"

#include "infkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace infkit {

namespace {

void
check_support(const Box& support)
{
  if (support.dim() < 1 || support.upper.size() != support.lower.size())
    throw InvalidArgument("basis support must have at least one coordinate");
  for (int c = 0; c < support.dim(); ++c) {
    if (!(support.lower[c] < support.upper[c]) || !std::isfinite(support.lower[c]) ||
        !std::isfinite(support.upper[c]))
      throw InvalidArgument("basis support must be a nonempty finite interval per coordinate");
  }
}

// All exponent vectors of total degree d, lexicographically descending.
void
exponents_of_degree(int r, int d, std::vector<int>& cur, std::vector<std::vector<int>>& out)
{
  int c = static_cast<int>(cur.size());
  if (c == r - 1) {
    cur.push_back(d);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (int e = d; e >= 0; --e) {
    cur.push_back(e);
    exponents_of_degree(r, d - e, cur, out);
    cur.pop_back();
  }
}

} // namespace

BasisSpec
BasisSpec::power(int K, Box support, bool map_to_unit)
{
  if (K < 1)
    throw InvalidArgument("power basis needs K >= 1");
  check_support(support);
  BasisSpec b;
  b.kind_ = Kind::power;
  b.K_ = K;
  b.map_ = map_to_unit;
  b.support_ = std::move(support);
  const int r = b.dim();
  std::vector<int> cur;
  for (int d = 0; static_cast<int>(b.exponents_.size()) < K; ++d)
    exponents_of_degree(r, d, cur, b.exponents_);
  b.exponents_.resize(K);
  return b;
}

BasisSpec
BasisSpec::spline(int order,
                  std::vector<std::vector<double>> interior_knots,
                  Box support,
                  int K)
{
  if (order < 1)
    throw InvalidArgument("spline order must be at least 1");
  check_support(support);
  if (static_cast<int>(interior_knots.size()) != support.dim())
    throw InvalidArgument("spline basis needs one knot vector per coordinate");
  BasisSpec b;
  b.kind_ = Kind::spline;
  b.order_ = order;
  b.support_ = std::move(support);
  int total = 1;
  for (int c = 0; c < b.dim(); ++c) {
    const auto& kn = interior_knots[c];
    double lo = b.support_.lower[c], hi = b.support_.upper[c];
    for (std::size_t j = 0; j < kn.size(); ++j) {
      if (!(kn[j] > lo && kn[j] < hi))
        throw InvalidArgument("spline knots must lie strictly inside the support");
      if (j > 0 && !(kn[j] > kn[j - 1]))
        throw InvalidArgument("spline knots must be strictly increasing");
    }
    std::vector<double> full(order, lo);
    full.insert(full.end(), kn.begin(), kn.end());
    full.insert(full.end(), order, hi);
    b.full_knots_.push_back(std::move(full));
    int k = static_cast<int>(kn.size()) + order;
    b.per_coord_.push_back(k);
    total *= k;
  }
  if (K > 0 && K != total) {
    std::ostringstream msg;
    msg << "spline basis: K = " << K << " is inconsistent with the knots (order " << order
        << " gives " << total << " terms)";
    throw InvalidArgument(msg.str());
  }
  b.K_ = total;
  b.knots_ = std::move(interior_knots);
  return b;
}

BasisSpec
BasisSpec::uniform_spline(int order, std::vector<int> per_coord, Box support)
{
  check_support(support);
  if (static_cast<int>(per_coord.size()) != support.dim())
    throw InvalidArgument("uniform spline: one term count per coordinate");
  std::vector<std::vector<double>> knots;
  for (int c = 0; c < support.dim(); ++c) {
    int m = per_coord[c] - order;
    if (m < 0)
      throw InvalidArgument("uniform spline: fewer terms than the spline order");
    std::vector<double> kn;
    double lo = support.lower[c], hi = support.upper[c];
    for (int j = 1; j <= m; ++j)
      kn.push_back(lo + (hi - lo) * j / (m + 1));
    knots.push_back(std::move(kn));
  }
  return spline(order, std::move(knots), std::move(support));
}

BasisSpec
BasisSpec::uniform_spline_for(int order, int K, Box support)
{
  if (K < 1)
    throw InvalidArgument("spline basis needs K >= 1");
  int r = support.dim();
  int k = std::max(order, static_cast<int>(std::lround(std::pow(K, 1.0 / r))));
  return uniform_spline(order, std::vector<int>(r, k), std::move(support));
}

void
BasisSpec::spline_1d(int c, double x, double* out) const
{
  const auto& U = full_knots_[c];
  const int k = per_coord_[c];
  const int p = order_ - 1;
  std::fill(out, out + k, 0.0);
  double lo = support_.lower[c], hi = support_.upper[c];
  double slack = 1e-12 * (hi - lo);
  if (x < lo - slack || x > hi + slack)
    return;
  x = std::clamp(x, lo, hi);

  // span i with U[i] <= x < U[i + 1], last span closed on the right
  int i = static_cast<int>(std::upper_bound(U.begin() + p, U.begin() + k, x) - U.begin()) - 1;
  i = std::clamp(i, p, k - 1);

  std::vector<double> N(p + 1), left(p + 1), right(p + 1);
  N[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - U[i + 1 - j];
    right[j] = U[i + j] - x;
    double saved = 0.0;
    for (int q = 0; q < j; ++q) {
      double tmp = N[q] / (right[q + 1] + left[j - q]);
      N[q] = saved + right[q + 1] * tmp;
      saved = left[j - q] * tmp;
    }
    N[j] = saved;
  }
  for (int j = 0; j <= p; ++j)
    out[i - p + j] = N[j];
}

void
BasisSpec::eval(std::span<const double> x, Eigen::Ref<Eigen::VectorXd> out) const
{
  const int r = dim();
  if (static_cast<int>(x.size()) != r)
    throw InvalidArgument("basis evaluation: point dimension mismatch");
  if (kind_ == Kind::power) {
    int maxdeg = 0;
    for (const auto& e : exponents_)
      for (int v : e)
        maxdeg = std::max(maxdeg, v);
    // powers[c][d] = t_c^d
    std::vector<std::vector<double>> powers(r, std::vector<double>(maxdeg + 1, 1.0));
    for (int c = 0; c < r; ++c) {
      double t = x[c];
      if (map_) {
        double lo = support_.lower[c], hi = support_.upper[c];
        t = 2.0 * (t - lo) / (hi - lo) - 1.0;
      }
      for (int d = 1; d <= maxdeg; ++d)
        powers[c][d] = powers[c][d - 1] * t;
    }
    for (int k = 0; k < K_; ++k) {
      double v = 1.0;
      for (int c = 0; c < r; ++c)
        v *= powers[c][exponents_[k][c]];
      out(k) = v;
    }
    return;
  }

  std::vector<std::vector<double>> vals(r);
  for (int c = 0; c < r; ++c) {
    vals[c].resize(per_coord_[c]);
    spline_1d(c, x[c], vals[c].data());
  }
  // coordinate 0 varies slowest
  std::vector<int> idx(r, 0);
  for (int k = 0; k < K_; ++k) {
    double v = 1.0;
    for (int c = 0; c < r; ++c)
      v *= vals[c][idx[c]];
    out(k) = v;
    for (int c = r - 1; c >= 0; --c) {
      if (++idx[c] < per_coord_[c])
        break;
      idx[c] = 0;
    }
  }
}

Eigen::VectorXd
BasisSpec::operator()(std::span<const double> x) const
{
  Eigen::VectorXd out(K_);
  eval(x, out);
  return out;
}

Eigen::MatrixXd
BasisSpec::design(const Sample& X) const
{
  if (X.cols() != dim())
    throw InvalidArgument("design matrix: sample has the wrong number of columns");
  Eigen::MatrixXd P(X.rows(), K_);
  Eigen::VectorXd p(K_);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    eval(row(X, i), p);
    P.row(i) = p.transpose();
  }
  return P;
}

Breakpoints
BasisSpec::breakpoints() const
{
  if (kind_ == Kind::power)
    return Breakpoints(dim());
  return knots_;
}

SeriesEstimate::SeriesEstimate(const Sample& X, const Eigen::VectorXd& Q, BasisSpec basis)
  : basis_(std::move(basis))
{
  if (X.rows() != Q.size())
    throw InvalidArgument("series fit: X and Q have different lengths");
  if (X.rows() < 1)
    throw InsufficientData("series fit needs at least one observation");
  if (!X.allFinite() || !Q.allFinite())
    throw InvalidArgument("series fit: non-finite data");
  n_ = static_cast<std::size_t>(X.rows());
  const double n = static_cast<double>(n_);
  Eigen::MatrixXd P = basis_.design(X);
  sigma_ = P.transpose() * P / n;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma_, Eigen::EigenvaluesOnly);
  min_eig_ = eig.eigenvalues().minCoeff();
  if (!(min_eig_ > 1e-10)) {
    std::ostringstream msg;
    msg << "series fit: Sigma = P'P/n is singular (smallest eigenvalue " << min_eig_
        << ", K = " << basis_.size() << ", n = " << n_ << ")";
    throw RankDeficiency(msg.str(), min_eig_);
  }
  llt_.compute(sigma_);
  gamma_ = llt_.solve(P.transpose() * Q / n);
}

double
SeriesEstimate::operator()(std::span<const double> x) const
{
  return basis_(x).dot(gamma_);
}

Eigen::VectorXd
SeriesEstimate::solve(const Eigen::VectorXd& v) const
{
  return llt_.solve(v);
}

double
SurplusWeight::operator()(std::span<const double> x) const
{
  double p = x[0];
  if (p < p0 || p > p1)
    return 0.0;
  double v = std::exp(-b * (p - p0));
  if (w && x.size() > 1)
    v *= w(x[1]);
  return v;
}

Box
SurplusWeight::region(const Box& x_support) const
{
  Box out = x_support;
  out.lower[0] = std::max(out.lower[0], p0);
  out.upper[0] = std::min(out.upper[0], p1);
  if (!(out.lower[0] < out.upper[0]))
    throw InvalidArgument("surplus weight: price band does not meet the support");
  return out;
}

void
SurplusWeight::validate() const
{
  if (!(p0 < p1) || !std::isfinite(p0) || !std::isfinite(p1))
    throw InvalidArgument("surplus weight needs p0 < p1");
  if (!std::isfinite(b))
    throw InvalidArgument("surplus weight: income-effect bound must be finite");
}

Eigen::VectorXd
weight_moment(const SurplusWeight& W, const BasisSpec& basis, const quad::Options& opts)
{
  W.validate();
  Box region = W.region(basis.support());
  Eigen::VectorXd p(basis.size());
  auto f = [&](std::span<const double> x, Eigen::Ref<Eigen::VectorXd> out) {
    double w = W(x);
    if (w == 0.0) {
      out.setZero();
      return;
    }
    basis.eval(x, p);
    out = w * p;
  };
  return quad::integrate_vector_checked(f, basis.size(), region, opts, basis.breakpoints(),
                                        "weight moments int W p^K");
}

DeltaHat::DeltaHat(const SeriesEstimate& est, const Eigen::VectorXd& weight_moments)
  : basis_(est.basis())
{
  if (weight_moments.size() != basis_.size())
    throw InvalidArgument("delta_hat: weight moments have the wrong length");
  coef_ = est.solve(weight_moments);
}

DeltaHat::DeltaHat(const SeriesEstimate& est, const SurplusWeight& W)
  : DeltaHat(est, weight_moment(W, est.basis()))
{}

double
DeltaHat::operator()(std::span<const double> x) const
{
  return basis_(x).dot(coef_);
}

double
delta_hat_eval(const SeriesEstimate& est, const SurplusWeight& W, std::span<const double> x)
{
  return DeltaHat(est, W)(x);
}

} // namespace infkit
