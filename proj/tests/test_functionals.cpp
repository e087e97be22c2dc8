#include "doctest.h"
#include "test_util.hpp"

#include "infkit/errors.hpp"
#include "infkit/functionals.hpp"

#include <cmath>
#include <random>

using namespace infkit;
using testutil::column;

namespace {

DistributionRep
std_normal()
{
  return true_density([](std::span<const double> z) { return testutil::phi(z[0]); },
                      Box::cube(1, -12.0, 12.0));
}

DistributionRep
unit_uniform()
{
  return true_density([](std::span<const double> z) { return (z[0] >= 0 && z[0] <= 1) ? 1.0 : 0.0; },
                      Box::cube(1, 0.0, 1.0));
}

double
d0_linear(std::span<const double> x)
{
  return 1.0 + x[0] + x[1];
}

DistributionRep
surplus_truth()
{
  CondMean cm;
  cm.d = d0_linear;
  cm.fx = [](std::span<const double> x) {
    return (x[0] >= 0 && x[0] <= 1 && x[1] >= 0 && x[1] <= 1) ? 1.0 : 0.0;
  };
  cm.x_support = Box::cube(2, 0.0, 1.0);
  return cond_mean(cm);
}

const SurplusWeight kBand{ 0.2, 0.8, 0.0, {} };

} // namespace

TEST_CASE("make_deviation")
{
  auto K = KernelSpec::make(2);
  auto g = make_deviation({ 0.0 }, 1.0, K);
  for (double x : { -0.7, 0.0, 0.4 }) {
    std::vector<double> p{ x };
    CHECK(g.weight(p) == doctest::Approx(0.75 * (1 - x * x)));
  }
  auto half = make_deviation({ 0.0 }, 0.5, K);
  std::vector<double> o{ 0.0 }, edge{ 0.6 };
  CHECK(half.weight(o) == doctest::Approx(1.5));
  CHECK(half.weight(edge) == 0.0);
  CHECK(half.support().upper[0] == doctest::Approx(0.5));

  auto s = make_deviation({ 2.5, 0.5, 0.5 }, 0.1, K, { false, true, true });
  CHECK(s.continuous_dim() == 2);
  std::vector<double> at{ 123.0, 0.5, 0.5 };
  CHECK(s.weight(at) == doctest::Approx(0.75 * 0.75 / 0.01));
  CHECK(s.peak() == doctest::Approx(56.25));
  // point mass in q, kernel in x: int q dG = 2.5
  CHECK(s.expectation([](std::span<const double> z) { return z[0]; }) == doctest::Approx(2.5));

  CHECK_THROWS_AS(make_deviation({ 0.0 }, 0.0, K), InvalidArgument);
  CHECK_THROWS_AS(make_deviation({ 0.0 }, -1.0, K), InvalidArgument);
  CHECK_THROWS_AS(make_deviation({ 0.0 }, 1.0, KernelSpec::make(4)), InvalidArgument);
  CHECK_THROWS_AS(make_deviation({ 0.0, 1.0 }, 1.0, K, { true }), InvalidArgument);
}

TEST_CASE("deviation expectation is the smoothed influence")
{
  auto K = KernelSpec::make(2);
  Field psi = [](std::span<const double> z) { return std::cos(z[0]) * z[1] + z[1] * z[1]; };
  std::vector<double> z{ 0.3, -0.2 };
  auto g = make_deviation(z, 0.4, K);
  CHECK(g.expectation(psi) == doctest::Approx(smooth_influence(psi, K, 0.4, z)).epsilon(1e-10));
}

TEST_CASE("isd_value examples")
{
  CHECK(isd_value(unit_uniform()) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(isd_value(std_normal()) == doctest::Approx(testutil::kIsdNormal).epsilon(1e-10));
  auto est = std::make_shared<DensityEstimate>(column({ 0.0 }), 1.0, KernelSpec::make(2));
  CHECK(isd_value(kde_density(est)) == doctest::Approx(0.6).epsilon(1e-13));
  CHECK_THROWS_AS(isd_value(surplus_truth()), UnsupportedRepresentation);
}

TEST_CASE("isd_loo_value examples")
{
  auto K = KernelSpec::make(2);
  CHECK(isd_loo_value(column({ 0.0, 0.0 }), 1.0, K) == doctest::Approx(0.75));
  CHECK(isd_loo_value(column({ 0.0, 10.0 }), 1.0, K) == 0.0);
  auto s = testutil::normal_sample(2000, 99);
  double h = std::pow(2000.0, -0.2);
  CHECK(std::abs(isd_loo_value(s, h, K) - testutil::kIsdNormal) < 0.02);
  CHECK_THROWS_AS(isd_loo_value(column({ 1.0 }), 1.0, K), InsufficientData);

  auto b = isd_loo_functional();
  auto est = std::make_shared<DensityEstimate>(s, h, K);
  CHECK(b(kde_density(est)) == doctest::Approx(isd_loo_value(s, h, K)));
}

TEST_CASE("surplus_value examples")
{
  CondMean zero;
  zero.d = [](std::span<const double>) { return 0.0; };
  zero.x_support = Box::cube(2, 0.0, 1.0);
  CHECK(surplus_value(cond_mean(zero), kBand) == 0.0);
  CHECK(surplus_value(surplus_truth(), kBand) == doctest::Approx(1.2).epsilon(1e-12));

  // fitted regression, n = 1000, K = 9
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u;
  std::normal_distribution<double> e;
  Sample X(1000, 2);
  Eigen::VectorXd Q(1000);
  for (int i = 0; i < 1000; ++i) {
    X(i, 0) = u(gen);
    X(i, 1) = u(gen);
    Q(i) = 1 + X(i, 0) + X(i, 1) + e(gen);
  }
  auto est = std::make_shared<SeriesEstimate>(X, Q, BasisSpec::power(9, Box::cube(2, 0, 1)));
  CondMean fit;
  fit.d = [est](std::span<const double> x) { return (*est)(x); };
  fit.x_support = Box::cube(2, 0.0, 1.0);
  fit.series = est;
  double bh = surplus_value(cond_mean(fit), kBand);
  CHECK(std::abs(bh - 1.2) < 0.1);
  // integral form equals the sample form (1/n) sum delta_hat(x_i) q_i
  DeltaHat dh(*est, kBand);
  double sample_form = 0.0;
  for (int i = 0; i < 1000; ++i)
    sample_form += dh(row(X, i)) * Q(i) / 1000.0;
  CHECK(bh == doctest::Approx(sample_form).epsilon(1e-9));

  CHECK_THROWS_AS(surplus_value(std_normal(), kBand), UnsupportedRepresentation);
}

TEST_CASE("mixture_eval examples")
{
  auto isd = isd_functional();
  auto K = KernelSpec::make(2);
  auto g0 = std::make_shared<const Deviation>(make_deviation({ 0.0 }, 1.0, K));
  CHECK(mixture_eval(isd, std_normal(), g0, 0.0) == isd(std_normal()));
  CHECK(mixture_eval(isd, std_normal(), g0, 1.0) == doctest::Approx(0.6).epsilon(1e-10));
  CHECK_THROWS_AS(mixture_eval(isd, std_normal(), g0, 1.5), InvalidArgument);
  CHECK_THROWS_AS(mixture_eval(isd, std_normal(), g0, -0.1), InvalidArgument);

  // f0 = U[0,1], g inside: beta(t) = (1-t)^2 + 2t(1-t) + t^2 * 0.6/h
  for (double h : { 0.25, 0.1 }) {
    auto g = std::make_shared<const Deviation>(make_deviation({ 0.5 }, h, K));
    for (double t : { 0.1, 0.5, 0.9 }) {
      double poly = (1 - t) * (1 - t) + 2 * t * (1 - t) + t * t * 0.6 / h;
      CHECK(std::abs(mixture_eval(isd, unit_uniform(), g, t) - poly) < 1e-8);
    }
  }
}

TEST_CASE("isd on mixtures is quadratic in t")
{
  auto isd = isd_functional();
  auto K = KernelSpec::make(2);
  auto g = std::make_shared<const Deviation>(make_deviation({ 0.7 }, 0.3, K));
  double a = isd(std_normal());
  double c = quad::integrate([&](double z) { return testutil::phi(z) * g->weight({ &z, 1 }); },
                             0.4, 1.0, { 1e-13 }, std::vector<double>{ 0.7 })
               .value;
  double gg = 0.6 / 0.3;
  for (double t : { 0.01, 0.3, 0.77 }) {
    double poly = (1 - t) * (1 - t) * a + 2 * t * (1 - t) * c + t * t * gg;
    CHECK(std::abs(mixture_eval(isd, std_normal(), g, t) - poly) < 1e-8);
  }
}

TEST_CASE("surplus along the point-mass path")
{
  auto sur = surplus_functional(kBand);
  auto K = KernelSpec::make(2);
  auto g = std::make_shared<const Deviation>(
    make_deviation({ 2.5, 0.5, 0.4 }, 0.2, K, { false, true, true }));
  for (double t : { 0.05, 0.4 }) {
    // f0 = 1: E_t[q|x] = [(1-t) d0 + t g q] / [(1-t) + t g]
    auto direct = [&](std::span<const double> x) {
      double gx = K((x[0] - 0.5) / 0.2) * K((x[1] - 0.4) / 0.2) / 0.04;
      return ((1 - t) * d0_linear(x) + t * gx * 2.5) / ((1 - t) + t * gx);
    };
    double ref = quad::integrate(direct, Box{ { 0.2, 0.0 }, { 0.8, 1.0 } }, { 1e-12 },
                                 Breakpoints{ { 0.3, 0.5, 0.7 }, { 0.2, 0.4, 0.6 } })
                   .value;
    CHECK(mixture_eval(sur, surplus_truth(), g, t) == doctest::Approx(ref).epsilon(1e-9));
  }
  // a density deviation cannot mix into a conditional mean of the wrong shape
  auto bad = std::make_shared<const Deviation>(make_deviation({ 0.5, 0.5 }, 0.2, K));
  CHECK_THROWS_AS(mixture_eval(sur, surplus_truth(), bad, 0.1), InvalidArgument);
}

TEST_CASE("known influence functions have mean zero")
{
  Field psi = isd_psi([](std::span<const double> z) { return testutil::phi(z[0]); },
                      testutil::kIsdNormal);
  double m = quad::integrate([&](double z) { return psi({ &z, 1 }) * testutil::phi(z); }, -12, 12,
                             { 1e-12 })
               .value;
  CHECK(std::abs(m) < 1e-8);
  std::vector<double> zero{ 0.0 };
  CHECK(psi(zero) == doctest::Approx(0.23370).epsilon(1e-4));

  // q | x ~ N(d0(x), 1), x ~ U[0,1]^2
  Field sp = surplus_psi(kBand, [](std::span<const double>) { return 1.0; }, d0_linear);
  auto integrand = [&](std::span<const double> v) {
    std::vector<double> z{ d0_linear(v.subspan(1)) + v[0], v[1], v[2] };
    return sp(z) * testutil::phi(v[0]);
  };
  double ms = quad::integrate(integrand, Box{ { -10, 0, 0 }, { 10, 1, 1 } }, { 1e-11 },
                              Breakpoints{ {}, { 0.2, 0.8 }, {} })
                .value;
  CHECK(std::abs(ms) < 1e-8);
  std::vector<double> probe{ 2.5, 0.5, 0.5 };
  CHECK(sp(probe) == doctest::Approx(0.5));
}

TEST_CASE("functional registry")
{
  CHECK(make_functional("isd").id == "isd");
  CHECK(make_functional("constant", { {}, 3.0, {} })(std_normal()) == 3.0);
  CHECK(make_functional("linear", { {}, 0.0, [](std::span<const double> z) { return z[0] * z[0]; } })(
          std_normal()) == doctest::Approx(1.0));
  try {
    make_functional("nope");
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("isd_loo") != std::string::npos);
  }
}
