#include "doctest.h"
#include "test_util.hpp"

#include "infkit/errors.hpp"
#include "infkit/series.hpp"

#include <cmath>
#include <random>

using namespace infkit;

namespace {

Box
unit(int r)
{
  return Box::cube(r, 0.0, 1.0);
}

// Textbook recursive Cox-de Boor on a clamped knot vector, right end closed.
double
bspline_naive(const std::vector<double>& U, int i, int order, double x)
{
  if (order == 1) {
    double hi = U.back();
    if (x == hi)
      return (U[i] < x && U[i + 1] == hi) ? 1.0 : 0.0;
    return (U[i] <= x && x < U[i + 1]) ? 1.0 : 0.0;
  }
  double a = 0.0, b = 0.0;
  double d1 = U[i + order - 1] - U[i];
  double d2 = U[i + order] - U[i + 1];
  if (d1 > 0)
    a = (x - U[i]) / d1 * bspline_naive(U, i, order - 1, x);
  if (d2 > 0)
    b = (U[i + order] - x) / d2 * bspline_naive(U, i + 1, order - 1, x);
  return a + b;
}

struct SurplusData
{
  Sample x;
  Eigen::VectorXd q;
};

SurplusData
surplus_data(int n, std::uint64_t seed, double noise = 1.0)
{
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u;
  std::normal_distribution<double> e;
  SurplusData d{ Sample(n, 2), Eigen::VectorXd(n) };
  for (int i = 0; i < n; ++i) {
    d.x(i, 0) = u(gen);
    d.x(i, 1) = u(gen);
    d.q(i) = 1.0 + d.x(i, 0) + d.x(i, 1) + noise * e(gen);
  }
  return d;
}

} // namespace

TEST_CASE("power basis ordering")
{
  auto b = BasisSpec::power(3, unit(1), false);
  std::vector<double> x{ 0.3 };
  auto p = b(x);
  CHECK(p(0) == 1.0);
  CHECK(p(1) == doctest::Approx(0.3));
  CHECK(p(2) == doctest::Approx(0.09));

  auto mapped = BasisSpec::power(3, Box::cube(1, -1.0, 1.0));
  CHECK(mapped(x)(2) == doctest::Approx(0.09));

  auto b2 = BasisSpec::power(6, unit(2), false);
  std::vector<std::vector<int>> expect{ { 0, 0 }, { 1, 0 }, { 0, 1 },
                                        { 2, 0 }, { 1, 1 }, { 0, 2 } };
  CHECK(b2.exponents() == expect);
  std::vector<double> x2{ 0.2, 0.7 };
  auto p2 = BasisSpec::power(3, unit(2), false)(x2);
  CHECK(p2(1) == doctest::Approx(0.2));
  CHECK(p2(2) == doctest::Approx(0.7));
  CHECK_THROWS_AS(BasisSpec::power(0, unit(1)), InvalidArgument);
}

TEST_CASE("spline basis: hat functions and partition of unity")
{
  auto b = BasisSpec::spline(2, { { 0.5 } }, unit(1));
  CHECK(b.size() == 3);
  std::vector<double> x{ 0.3 };
  auto p = b(x);
  CHECK(p(0) == doctest::Approx(0.4));
  CHECK(p(1) == doctest::Approx(0.6));
  CHECK(p(2) == 0.0);
  CHECK(p.sum() == doctest::Approx(1.0));

  CHECK_THROWS_AS(BasisSpec::spline(2, { { 0.5 } }, unit(1), 4), InvalidArgument);
  CHECK_THROWS_AS(BasisSpec::spline(2, { { 0.6, 0.4 } }, unit(1)), InvalidArgument);
  CHECK_THROWS_AS(BasisSpec::spline(2, { { 1.0 } }, unit(1)), InvalidArgument);
}

TEST_CASE("spline basis agrees with the recursive definition")
{
  for (int o : { 1, 2, 3, 4 }) {
    std::vector<double> kn{ 0.15, 0.4, 0.55, 0.9 };
    auto b = BasisSpec::spline(o, { kn }, unit(1));
    std::vector<double> U(o, 0.0);
    U.insert(U.end(), kn.begin(), kn.end());
    U.insert(U.end(), o, 1.0);
    for (double x : { 0.0, 0.1, 0.15, 0.33, 0.5, 0.77, 0.95, 1.0 }) {
      std::vector<double> pt{ x };
      auto p = b(pt);
      CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-13));
      for (int k = 0; k < b.size(); ++k)
        CHECK(p(k) == doctest::Approx(bspline_naive(U, k, o, x)).epsilon(1e-13));
    }
  }
}

TEST_CASE("tensor spline partition of unity and the K rule")
{
  auto b = BasisSpec::uniform_spline(3, { 4, 5 }, unit(2));
  CHECK(b.size() == 20);
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u;
  for (int k = 0; k < 50; ++k) {
    std::vector<double> x{ u(gen), u(gen) };
    CHECK(b(x).sum() == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(b(x).minCoeff() >= 0.0);
  }
  auto byK = BasisSpec::uniform_spline_for(2, 16, unit(2));
  CHECK(byK.size() == 16);
  CHECK(BasisSpec::uniform_spline_for(4, 4, unit(2)).size() == 16);
}

TEST_CASE("series_fit examples")
{
  Sample X(5, 1);
  X << 0.0, 0.1, 0.4, 0.8, 1.0;
  Eigen::VectorXd Q = 2.0 + 3.0 * X.col(0).array();
  SeriesEstimate lin(X, Q, BasisSpec::power(2, unit(1), false));
  CHECK(lin.gamma()(0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(lin.gamma()(1) == doctest::Approx(3.0).epsilon(1e-12));
  std::vector<double> half{ 0.5 };
  CHECK(lin(half) == doctest::Approx(3.5));

  Eigen::VectorXd c = Eigen::VectorXd::Constant(5, -1.25);
  SeriesEstimate flat(X, c, BasisSpec::uniform_spline(2, { 3 }, unit(1)));
  for (double x : { 0.0, 0.3, 0.5, 0.99 }) {
    std::vector<double> pt{ x };
    CHECK(flat(pt) == doctest::Approx(-1.25));
  }

  // x ~ U[0,1], Q = x^2 + N(0, 0.1^2)
  auto U = testutil::uniform_sample(200, 77);
  std::mt19937_64 gen(78);
  std::normal_distribution<double> e(0.0, 0.1);
  Eigen::VectorXd Y(200);
  for (int i = 0; i < 200; ++i)
    Y(i) = U(i, 0) * U(i, 0) + e(gen);
  auto basis = BasisSpec::power(3, unit(1), false);
  SeriesEstimate quad(U, Y, basis);
  // independent least squares through a QR of the raw design
  Eigen::MatrixXd P(200, 3);
  for (int i = 0; i < 200; ++i)
    P.row(i) << 1.0, U(i, 0), U(i, 0) * U(i, 0);
  Eigen::VectorXd ols = P.colPivHouseholderQr().solve(Y);
  CHECK((quad.gamma() - ols).norm() < 1e-8);
  Eigen::MatrixXd cov = 0.01 * (P.transpose() * P).inverse();
  CHECK(std::abs(quad.gamma()(2) - 1.0) < 3.0 * std::sqrt(cov(2, 2)));
  CHECK(std::abs(quad(half) - 0.25) < 0.05);
}

TEST_CASE("series_fit rejects a singular design")
{
  Sample X(3, 1);
  X << 0.5, 0.5, 0.5;
  Eigen::VectorXd Q(3);
  Q << 1, 2, 3;
  try {
    SeriesEstimate bad(X, Q, BasisSpec::power(2, unit(1)));
    FAIL("expected RankDeficiency");
  } catch (const RankDeficiency& e) {
    CHECK(e.smallest_eigenvalue < 1e-10);
    CHECK(std::string(e.what()).find("smallest eigenvalue") != std::string::npos);
  }
}

TEST_CASE("projection properties")
{
  auto d = surplus_data(300, 5);
  Eigen::VectorXd Q = d.q.array() + 0.3 * d.x.col(0).array().sin();
  auto basis = BasisSpec::power(6, unit(2));
  SeriesEstimate est(d.x, Q, basis);
  Eigen::MatrixXd P = basis.design(d.x);
  Eigen::VectorXd resid = Q - P * est.gamma();
  CHECK((P.transpose() * resid / 300.0).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::VectorXd fitted = P * est.gamma();
  SeriesEstimate again(d.x, fitted, basis);
  CHECK((again.gamma() - est.gamma()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("weight_moment examples")
{
  auto basis = BasisSpec::power(3, unit(2), false);
  SurplusWeight all{ 0.0, 1.0, 0.0, {} };
  auto m = weight_moment(all, basis);
  CHECK(m(0) == doctest::Approx(1.0));
  CHECK(m(1) == doctest::Approx(0.5));
  CHECK(m(2) == doctest::Approx(0.5));

  SurplusWeight band{ 0.2, 0.8, 0.0, {} };
  auto mb = weight_moment(band, basis);
  CHECK(mb(0) == doctest::Approx(0.6));
  CHECK(mb(1) == doctest::Approx(0.3));
  CHECK(mb(2) == doctest::Approx(0.3));

  SurplusWeight tilt{ 0.0, 1.0, 1.0, {} };
  auto mt = weight_moment(tilt, BasisSpec::power(1, unit(2)));
  CHECK(mt(0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));

  // income weight and spline basis against a brute-force midpoint sum
  SurplusWeight wy{ 0.1, 0.7, 0.5, [](double y) { return 1.0 + y * y; } };
  auto sb = BasisSpec::uniform_spline(2, { 3, 3 }, unit(2));
  auto ms = weight_moment(wy, sb);
  Eigen::VectorXd brute = Eigen::VectorXd::Zero(sb.size());
  const int g = 600;
  for (int a = 0; a < g; ++a)
    for (int c = 0; c < g; ++c) {
      std::vector<double> x{ (a + 0.5) / g, (c + 0.5) / g };
      brute += wy(x) * sb(x) / (g * g);
    }
  CHECK((ms - brute).cwiseAbs().maxCoeff() < 2e-5);
}

TEST_CASE("delta_hat examples")
{
  auto d = surplus_data(400, 9);
  SurplusWeight all{ 0.0, 1.0, 0.0, {} };
  SeriesEstimate c(d.x, d.q, BasisSpec::power(1, unit(2)));
  std::vector<double> x{ 0.4, 0.6 };
  CHECK(delta_hat_eval(c, all, x) == doctest::Approx(1.0));

  // large n: delta_hat -> W / f0 = W when W lies in the span
  auto big = surplus_data(40000, 10);
  SurplusWeight band{ 0.2, 0.8, 0.0, {} };
  auto steps = BasisSpec::spline(1, { { 0.2, 0.8 }, {} }, unit(2));
  SeriesEstimate est(big.x, big.q, steps);
  DeltaHat dh(est, band);
  for (double p : { 0.1, 0.3, 0.5, 0.79, 0.9 }) {
    std::vector<double> pt{ p, 0.5 };
    CHECK(std::abs(dh(pt) - band(pt)) < 0.03);
  }
}

TEST_CASE("delta_hat mean-square error shrinks with n")
{
  SurplusWeight band{ 0.2, 0.8, 0.0, {} };
  auto basis = BasisSpec::power(9, unit(2));
  Eigen::VectorXd gam = weight_moment(band, basis);
  double prev = 1e300;
  for (int n : { 250, 500, 1000 }) {
    double mse = 0.0;
    const int reps = 40;
    for (int k = 0; k < reps; ++k) {
      auto d = surplus_data(n, 1000 + 97 * k + n);
      SeriesEstimate est(d.x, d.q, basis);
      DeltaHat dh(est, gam);
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        double diff = dh(row(d.x, i)) - band(row(d.x, i));
        s += diff * diff;
      }
      mse += s / n / reps;
    }
    CHECK(mse < prev);
    prev = mse;
  }
}

TEST_CASE("delta_hat and beta_hat are invariant to a linear reparameterization")
{
  auto d = surplus_data(250, 12);
  SurplusWeight band{ 0.2, 0.8, 0.0, {} };
  auto basis = BasisSpec::power(6, unit(2));
  SeriesEstimate est(d.x, d.q, basis);
  DeltaHat dh(est, band);

  // random well-conditioned transform, everything recomputed by hand
  std::mt19937_64 gen(31);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(6, 6);
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b)
      A(a, b) += 0.3 * nd(gen);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  REQUIRE(svd.singularValues()(5) > 0.1);

  Eigen::MatrixXd Pt = basis.design(d.x) * A.transpose();
  Eigen::MatrixXd St = Pt.transpose() * Pt / 250.0;
  Eigen::VectorXd Gt = A * weight_moment(band, basis);
  Eigen::VectorXd coef = St.ldlt().solve(Gt);
  Eigen::VectorXd gt = St.ldlt().solve(Pt.transpose() * d.q / 250.0);
  double beta_t = Gt.dot(gt);
  double beta = weight_moment(band, basis).dot(est.gamma());
  CHECK(beta == doctest::Approx(beta_t).epsilon(1e-10));
  for (Eigen::Index i = 0; i < 250; i += 17)
    CHECK(dh(row(d.x, i)) == doctest::Approx(Pt.row(i).dot(coef)).epsilon(1e-9));

  // unmapped monomials span the same space
  SeriesEstimate raw(d.x, d.q, BasisSpec::power(6, unit(2), false));
  DeltaHat dr(raw, band);
  for (Eigen::Index i = 0; i < 250; i += 23)
    CHECK(dr(row(d.x, i)) == doctest::Approx(dh(row(d.x, i))).epsilon(1e-9));
}

TEST_CASE("sample and integral forms of the series plug-in agree")
{
  auto d = surplus_data(500, 14);
  SurplusWeight band{ 0.2, 0.8, 0.4, [](double y) { return 0.5 + y; } };
  for (auto basis : { BasisSpec::power(9, unit(2)), BasisSpec::uniform_spline(2, { 3, 3 }, unit(2)) }) {
    SeriesEstimate est(d.x, d.q, basis);
    DeltaHat dh(est, band);
    double lhs = 0.0;
    for (int i = 0; i < 500; ++i)
      lhs += dh(row(d.x, i)) * d.q(i) / 500.0;
    double rhs = quad::integrate([&](std::span<const double> x) { return band(x) * est(x); },
                                 band.region(unit(2)), { 1e-12 }, basis.breakpoints())
                   .value;
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
  }
}
