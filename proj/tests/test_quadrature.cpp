#include "doctest.h"

#include "infkit/errors.hpp"
#include "infkit/quadrature.hpp"

#include <cmath>
#include <numbers>

using namespace infkit;

TEST_CASE("gauss-legendre rules integrate polynomials exactly")
{
  for (int n : { 1, 2, 5, 10, 20 }) {
    const auto& rule = quad::gauss_legendre(n);
    // degree 2n - 1 is exact
    int deg = 2 * n - 1;
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      s += rule.weights[i] * std::pow(rule.nodes[i], deg - 1);
    double exact = 2.0 / deg;
    CHECK(s == doctest::Approx(exact).epsilon(1e-13));
  }
  CHECK_THROWS_AS(quad::gauss_legendre(0), InvalidArgument);
}

TEST_CASE("adaptive quadrature on smooth and kinked integrands")
{
  auto gauss = [](double x) { return std::exp(-0.5 * x * x); };
  auto r = quad::integrate(gauss, -12.0, 12.0, { 1e-13 });
  CHECK(r.converged);
  CHECK(r.value == doctest::Approx(std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-13));

  auto kink = [](double x) { return std::abs(x - 0.3); };
  double exact = 0.5 * (1.3 * 1.3 + 0.7 * 0.7);
  auto without = quad::integrate(kink, -1.0, 1.0, { 1e-12 });
  CHECK(without.value == doctest::Approx(exact).epsilon(1e-11));
  std::vector<double> bk{ 0.3 };
  auto with = quad::integrate(kink, -1.0, 1.0, { 1e-12 }, bk);
  CHECK(with.evaluations < without.evaluations);
  CHECK(std::abs(with.value - exact) < 1e-14);
}

TEST_CASE("nested box quadrature and vector integrands")
{
  auto f = [](std::span<const double> z) { return z[0] * z[0] * z[1]; };
  auto r = quad::integrate(f, Box{ { 0.0, 0.0 }, { 1.0, 2.0 } }, { 1e-12 });
  CHECK(r.value == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  auto v = quad::integrate_vector(
    [](std::span<const double> z, Eigen::Ref<Eigen::VectorXd> out) {
      out(0) = 1.0;
      out(1) = z[0];
      out(2) = z[1] * z[1];
    },
    3, Box{ { 0.0, 0.0 }, { 1.0, 1.0 } }, { 1e-12 });
  CHECK(v.value(0) == doctest::Approx(1.0));
  CHECK(v.value(1) == doctest::Approx(0.5));
  CHECK(v.value(2) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("non-convergence is reported")
{
  auto wild = [](double x) { return std::sin(1.0 / (x * x + 1e-12)); };
  quad::Options opts{ 1e-14 };
  opts.max_depth = 4;
  auto r = quad::integrate(wild, -1.0, 1.0, opts);
  CHECK_FALSE(r.converged);
  CHECK_THROWS_AS(quad::integrate_checked(wild, -1.0, 1.0, opts, {}, "wild"),
                  NumericFailure);
}
