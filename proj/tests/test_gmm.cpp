#include "doctest.h"
#include "test_util.hpp"

#include "infkit/errors.hpp"
#include "infkit/gmm.hpp"
#include "infkit/kde.hpp"
#include "infkit/series.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace infkit;

namespace {

double
d0_surplus(std::span<const double> x)
{
  return 1.0 + x[0] + x[1];
}

const SurplusWeight kBand{ 0.2, 0.8, 0.0, {} };

double
unit_square(std::span<const double> x)
{
  return (x[0] >= 0 && x[0] <= 1 && x[1] >= 0 && x[1] <= 1) ? 1.0 : 0.0;
}

// (q, p, y) with x = (p, y) uniform and q = 1 + p + y + N(0, 0.5^2)
Sample
surplus_sample(int n, std::uint64_t seed)
{
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u;
  std::normal_distribution<double> e(0.0, 0.5);
  Sample z(n, 3);
  for (int i = 0; i < n; ++i) {
    z(i, 1) = u(gen);
    z(i, 2) = u(gen);
    z(i, 0) = 1.0 + z(i, 1) + z(i, 2) + e(gen);
  }
  return z;
}

DistributionRep
surplus_truth()
{
  CondMean cm;
  cm.d = d0_surplus;
  cm.fx = unit_square;
  cm.x_support = Box::cube(2, 0.0, 1.0);
  return cond_mean(cm);
}

DistributionRep
surplus_fit(const Sample& z, int knots)
{
  Sample X = z.rightCols(2);
  Eigen::VectorXd Q = z.col(0);
  auto est = std::make_shared<SeriesEstimate>(
    X, Q, BasisSpec::uniform_spline(2, { knots, 2 }, Box::cube(2, 0.0, 1.0)));
  CondMean cm;
  cm.d = [est](std::span<const double> x) { return (*est)(x); };
  cm.x_support = Box::cube(2, 0.0, 1.0);
  cm.series = est;
  return cond_mean(cm);
}

// int_0.2^0.8 int_0^1 (1 + p + y) dy dp
const double kSurplusBeta0 = 0.6 * 1.5 + (0.8 * 0.8 - 0.2 * 0.2) / 2.0;

// y = link(x1 + 0.5 x2) + N(0, noise^2), x ~ N(0, I2)
Sample
index_sample(int n, std::uint64_t seed, double noise, bool linear = false)
{
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Sample s(n, 3);
  for (int i = 0; i < n; ++i) {
    s(i, 1) = nd(gen);
    s(i, 2) = nd(gen);
    double v = linear ? s(i, 1) + 2.0 * s(i, 2) : std::sin(s(i, 1) + 0.5 * s(i, 2));
    s(i, 0) = v + noise * nd(gen);
  }
  return s;
}

SingleIndexTruth
sin_truth()
{
  SingleIndexTruth t;
  t.link = [](double v) { return std::sin(v); };
  t.link_derivative = [](double v) { return std::cos(v); };
  // Cov(x2, v) / Var(v) = 0.5 / 1.25
  t.cond_xtilde = [](double v) { return Eigen::VectorXd::Constant(1, 0.4 * v); };
  t.index_density = [](double v) {
    const double s = std::sqrt(1.25);
    return testutil::phi(v / s) / s;
  };
  return t;
}

DistributionRep
index_truth_rep()
{
  CondMean cm;
  cm.d = [](std::span<const double> x) { return std::sin(x[0] + 0.5 * x[1]); };
  cm.fx = [](std::span<const double> x) { return testutil::phi(x[0]) * testutil::phi(x[1]); };
  cm.x_support = Box::cube(2, -8.0, 8.0);
  return cond_mean(cm);
}

DistributionRep
index_kde(const Sample& s, double h)
{
  return kde_density(std::make_shared<DensityEstimate>(s, h, KernelSpec::make(2, 3)));
}

double
index_bandwidth(const Sample& s)
{
  // pilot direction is close to (1, 0.5); the rule of single_index_fit
  Eigen::VectorXd v = s.col(1) + 0.5 * s.col(2);
  double m = v.mean();
  double sd = std::sqrt((v.array() - m).square().sum() / (v.size() - 1));
  return sd * std::pow(static_cast<double>(s.rows()), -0.2);
}

double
sd_of(const std::vector<double>& x)
{
  double m = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  double s = 0;
  for (double v : x)
    s += (v - m) * (v - m);
  return std::sqrt(s / (x.size() - 1));
}

} // namespace

TEST_CASE("nelder_mead and minimize_in_box")
{
  Objective rosen = [](const Eigen::VectorXd& x) {
    return 100.0 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1.0 - x(0), 2);
  };
  auto r = nelder_mead(rosen, Eigen::Vector2d(-1.2, 1.0), Eigen::Vector2d(0.5, 0.5));
  CHECK(r.converged);
  CHECK(std::abs(r.x(0) - 1.0) < 1e-6);
  CHECK(std::abs(r.x(1) - 1.0) < 1e-6);

  // minimum (3, 0) outside [-1, 2]^2: projected onto the face x0 = 2
  Objective shifted = [](const Eigen::VectorXd& x) { return std::pow(x(0) - 3.0, 2) + x(1) * x(1); };
  auto b = minimize_in_box(shifted, Box::cube(2, -1.0, 2.0));
  CHECK(b.on_boundary);
  CHECK(b.x(0) == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(std::abs(b.x(1)) < 1e-6);

  auto in = minimize_in_box(rosen, Box::cube(2, -2.0, 2.0));
  CHECK_FALSE(in.on_boundary);
  CHECK(std::abs(in.x(0) - 1.0) < 1e-6);

  Objective bad = [](const Eigen::VectorXd&) -> double { throw NumericFailure("boom"); };
  CHECK_THROWS_AS(nelder_mead(bad, Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)), NumericFailure);
}

TEST_CASE("gmm: mean model is the sample mean, psi = z - beta0")
{
  Sample z = testutil::normal_sample(300, 7);
  z.array() += 0.7;
  auto model = mean_model();
  DistributionRep none = true_density([](std::span<const double>) { return 0.0; }, Box::cube(1, 0, 1));
  auto est = gmm_fit(model, z, none);
  CHECK(est.beta_hat(0) == doctest::Approx(z.col(0).mean()).epsilon(1e-9));
  CHECK(est.M_hat(0, 0) == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(std::abs(est.m_hat(0)) < 1e-9);
  CHECK(est.warnings.empty());

  GmmInfluenceOptions io;
  io.beta0 = Eigen::VectorXd::Constant(1, 0.7);
  auto psi = gmm_influence(est, model, testutil::column({ -1.0, 0.7, 2.5 }), none, io);
  CHECK(psi(0, 0) == doctest::Approx(-1.7).epsilon(1e-10));
  CHECK(std::abs(psi(1, 0)) < 1e-10);
  CHECK(psi(2, 0) == doctest::Approx(1.8).epsilon(1e-10));

  // V_hat is the centered sample variance
  double m = z.col(0).mean();
  double v = (z.col(0).array() - m).square().mean();
  CHECK(est.V_hat(0, 0) == doctest::Approx(v).epsilon(1e-8));

  // R3 is exactly zero for moments that ignore F
  auto r3 = r3_diagnostic(model, z, none, none, io.beta0.value());
  CHECK(r3.value(0) == 0.0);
  CHECK(r3.scaled(0) == 0.0);
}

TEST_CASE("gmm: just-identified invariance to W and scale equivariance")
{
  // m = (z1 - b1, z2 - b1 b2) on a bivariate sample
  auto make = [](double c) {
    MomentModel m;
    m.id = "pair";
    m.dim_beta = 2;
    m.dim_moments = 2;
    m.bounds = Box::cube(2, -5.0, 5.0);
    m.moments = [c](const Sample& s, const Eigen::VectorXd& b, const DistributionRep&, bool) {
      Eigen::MatrixXd out(s.rows(), 2);
      out.col(0) = c * (s.col(0).array() - b(0));
      out.col(1) = c * (s.col(1).array() - b(0) * b(1));
      return out;
    };
    return m;
  };
  Sample z = testutil::normal_sample(400, 11, 2);
  z.col(0).array() += 1.5;
  z.col(1).array() += 0.6;
  DistributionRep none = true_density([](std::span<const double>) { return 0.0; }, Box::cube(2, 0, 1));

  auto m1 = make(1.0);
  auto e_id = gmm_fit(m1, z, none);
  Eigen::Matrix2d W;
  W << 4.0, 1.2, 1.2, 0.7; // positive definite
  auto e_w = gmm_fit(m1, z, none, W);
  CHECK((e_id.beta_hat - e_w.beta_hat).norm() < 1e-8);
  CHECK(e_id.beta_hat(0) == doctest::Approx(z.col(0).mean()).epsilon(1e-9));
  CHECK(e_id.beta_hat(1) == doctest::Approx(z.col(1).mean() / z.col(0).mean()).epsilon(1e-8));

  GmmInfluenceOptions io;
  io.beta0 = e_id.beta_hat;
  auto psi_id = gmm_influence(e_id, m1, z, none, io);
  auto psi_w = gmm_influence(e_w, m1, z, none, io);
  CHECK((psi_id - psi_w).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((e_id.V_hat - e_w.V_hat).cwiseAbs().maxCoeff() < 1e-8);

  // the sandwich reduces to -M^{-1} [m + phi]
  Eigen::MatrixXd U = m1.moments(z, e_id.beta_hat, none, false);
  Eigen::MatrixXd direct = -(U * e_id.M_hat.inverse().transpose());
  CHECK((psi_id - direct).cwiseAbs().maxCoeff() < 1e-8);

  auto m3 = make(3.0);
  auto e3 = gmm_fit(m3, z, none);
  CHECK((e3.beta_hat - e_id.beta_hat).norm() < 1e-8);
  auto psi3 = gmm_influence(e3, m3, z, none, io);
  CHECK((psi3 - psi_id).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(e3.V_hat.isApprox(e_id.V_hat, 1e-8));

  // V_hat symmetric PSD
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e_w.V_hat);
  CHECK(es.eigenvalues().minCoeff() >= 0.0);
  CHECK(e_w.V_hat.isApprox(e_w.V_hat.transpose()));
}

TEST_CASE("gmm: errors")
{
  Sample z = testutil::normal_sample(50, 3);
  DistributionRep none = true_density([](std::span<const double>) { return 0.0; }, Box::cube(1, 0, 1));
  auto model = mean_overid_model();
  CHECK_THROWS_AS(gmm_fit(model, z, none, Eigen::MatrixXd::Identity(3, 3)), InvalidArgument);
  Eigen::Matrix2d neg;
  neg << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(gmm_fit(model, z, none, neg), InvalidArgument);
  Eigen::Matrix2d asym;
  asym << 1.0, 0.5, 0.0, 1.0;
  CHECK_THROWS_AS(gmm_fit(model, z, none, asym), InvalidArgument);

  MomentModel flat;
  flat.id = "flat";
  flat.bounds = Box::cube(1, -1.0, 1.0);
  flat.moments = [](const Sample& s, const Eigen::VectorXd&, const DistributionRep&, bool) {
    return Eigen::MatrixXd(s.col(0));
  };
  CHECK_THROWS_AS(gmm_fit(flat, z, none), RankDeficiency);

  // minimum outside the box: warning, not an error
  Sample far = z.array() + 20.0;
  auto est = gmm_fit(mean_model(10.0), far, none);
  CHECK(est.boundary);
  CHECK_FALSE(est.warnings.empty());
  CHECK(est.beta_hat(0) == doctest::Approx(10.0));

  CHECK_THROWS_AS(make_moment_model("probit"), InvalidArgument);
  CHECK(make_moment_model("mean").id == "mean");
  CHECK(make_moment_model("mean_overid").dim_moments == 2);
  CHECK(make_moment_model("single_index").dim_beta == 1);

  // R3 needs a test DGP when m depends on F
  auto sur = surplus_gmm_model(kBand);
  Sample zs = surplus_sample(100, 4);
  CHECK_THROWS_AS(r3_diagnostic(sur, zs, surplus_fit(zs, 3), surplus_fit(zs, 3), Eigen::VectorXd::Constant(1, 1.0)),
                  UnsupportedRepresentation);
}

TEST_CASE("gmm: overidentified normal mean, consistency and sandwich variance")
{
  // z ~ N(1, 1), m = (z - b, z^2 - b^2 - 1), W = I. M = (-1, -2)',
  // Omega = [[1, 2], [2, 6]], V = (1, 2) Omega (1, 2)' / 25 = 33 / 25.
  const double beta0 = 1.0, V = 33.0 / 25.0;
  auto model = mean_overid_model();
  DistributionRep none = true_density([](std::span<const double>) { return 0.0; }, Box::cube(1, 0, 1));

  const int reps = 2000, n = 400;
  std::vector<double> root_n_err, vhat;
  double psi_sum = 0, psi_sq = 0;
  long count = 0;
  GmmOptions go;
  go.minimize.starts = 1;
  for (int r = 0; r < reps; ++r) {
    Sample z = testutil::normal_sample(n, 1000 + r);
    z.array() += beta0;
    auto est = gmm_fit(model, z, none, {}, go);
    root_n_err.push_back(std::sqrt(double(n)) * (est.beta_hat(0) - beta0));
    vhat.push_back(est.V_hat(0, 0));
    GmmInfluenceOptions io;
    io.beta0 = Eigen::VectorXd::Constant(1, beta0);
    auto psi = gmm_influence(est, model, z, none, io);
    psi_sum += psi.sum();
    psi_sq += psi.squaredNorm();
    count += n;
  }
  double mc_var = std::pow(sd_of(root_n_err), 2);
  double mean_vhat = std::accumulate(vhat.begin(), vhat.end(), 0.0) / reps;
  MESSAGE("overid V " << V << " mean V_hat " << mean_vhat << " MC " << mc_var);
  CHECK(std::abs(mean_vhat - V) / V < 0.05);
  CHECK(std::abs(mean_vhat - mc_var) / mc_var < 0.15);

  double pm = psi_sum / count;
  double psd = std::sqrt(psi_sq / count - pm * pm);
  CHECK(std::abs(pm) < 3.0 * psd / std::sqrt(double(count)));

  // mean absolute error shrinks from n = 100 to n = 6400
  double small = 0, large = 0;
  for (int r = 0; r < 40; ++r) {
    Sample a = testutil::normal_sample(100, 5000 + r);
    Sample b = testutil::normal_sample(6400, 7000 + r);
    a.array() += beta0;
    b.array() += beta0;
    small += std::abs(gmm_fit(model, a, none, {}, go).beta_hat(0) - beta0);
    large += std::abs(gmm_fit(model, b, none, {}, go).beta_hat(0) - beta0);
  }
  CHECK(large < 0.25 * small);
}

TEST_CASE("gmm: surplus as GMM reproduces the closed-form influence")
{
  Sample z = surplus_sample(600, 21);
  auto Fhat = surplus_fit(z, 4);
  auto model = surplus_gmm_model(kBand, unit_square, d0_surplus);
  auto est = gmm_fit(model, z, Fhat);
  CHECK(est.beta_hat(0) == doctest::Approx(surplus_value(Fhat, kBand)).epsilon(1e-9));
  CHECK(est.M_hat(0, 0) == doctest::Approx(-1.0).epsilon(1e-8));

  GmmInfluenceOptions io;
  io.beta0 = Eigen::VectorXd::Constant(1, kSurplusBeta0);
  auto F0 = surplus_truth();
  auto psi = gmm_influence(est, model, z, F0, io);
  auto closed = surplus_psi(kBand, unit_square, d0_surplus);
  double worst = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    worst = std::max(worst, std::abs(psi(i, 0) - closed(row(z, i))));
  CHECK(worst < 1e-6);

  // R3 with F_hat = F0 vanishes; and R3 = beta(F_hat) - beta0 ... minus nothing
  auto r0 = r3_diagnostic(model, z, F0, F0, *io.beta0);
  CHECK(std::abs(r0.value(0)) < 1e-9);
  auto r = r3_diagnostic(model, z, Fhat, F0, *io.beta0);
  CHECK(std::abs(r.value(0)) < 1e-9); // m(z, b, F) is constant in z
}

TEST_CASE("gmm: surplus composition gap shrinks with n")
{
  // sqrt(n)(beta_hat - beta0) - sum psi / sqrt(n), spline knots growing with n
  auto model = surplus_gmm_model(kBand, unit_square, d0_surplus);
  auto closed = surplus_psi(kBand, unit_square, d0_surplus);
  const std::vector<int> ns{ 200, 800, 3200 }, knots{ 4, 8, 16 };
  std::vector<double> gap;
  GmmOptions go;
  go.minimize.starts = 1;
  for (std::size_t k = 0; k < ns.size(); ++k) {
    double s = 0;
    const int reps = 60;
    for (int r = 0; r < reps; ++r) {
      Sample z = surplus_sample(ns[k], 300 + 1000 * k + r);
      auto est = gmm_fit(model, z, surplus_fit(z, knots[k]), {}, go);
      double ps = 0;
      for (Eigen::Index i = 0; i < z.rows(); ++i)
        ps += closed(row(z, i));
      double rn = std::sqrt(double(ns[k]));
      s += std::abs(rn * (est.beta_hat(0) - kSurplusBeta0) - ps / rn);
    }
    gap.push_back(s / reps);
  }
  MESSAGE("surplus gap " << gap[0] << " " << gap[1] << " " << gap[2]);
  double sl = (std::log(gap[2]) - std::log(gap[0])) / (std::log(3200.0) - std::log(200.0));
  CHECK(sl < 0.0);
}

TEST_CASE("single_index_fit: exact linear index and FOC")
{
  Sample s = index_sample(300, 5, 0.0, true);
  auto fit = single_index_fit(s);
  CHECK(std::abs(fit.beta(0) - 2.0) < 0.02);
  CHECK(fit.theta(0) == 1.0);
  CHECK_FALSE(fit.flat);
  auto foc = single_index_foc_check(fit, s);
  CHECK(foc.within);

  // constant outcome: flat criterion
  Sample c = s;
  c.col(0).setConstant(2.0);
  auto flat = single_index_fit(c);
  CHECK(flat.flat);
  CHECK_FALSE(flat.warnings.empty());

  CHECK_THROWS_AS(single_index_fit(s.leftCols(2)), InvalidArgument);
  CHECK_THROWS_AS(single_index_fit(s.topRows(5)), InsufficientData);
}

TEST_CASE("single_index_fit: sine index at n = 500")
{
  std::vector<double> b;
  SingleIndexFit first;
  Sample s0;
  for (int r = 0; r < 30; ++r) {
    Sample s = index_sample(500, 100 + r, 0.1);
    auto fit = single_index_fit(s);
    b.push_back(fit.beta(0));
    if (r == 0) {
      first = fit;
      s0 = s;
    }
  }
  double sd = sd_of(b);
  double mean = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
  MESSAGE("beta mean " << mean << " sd " << sd);
  CHECK(std::abs(first.beta(0) - 0.5) < 3.0 * sd);
  CHECK(std::abs(mean - 0.5) < 3.0 * sd);

  // permutation invariance
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(s0.rows()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{ 0 });
  std::mt19937_64 gen(9);
  std::shuffle(perm.begin(), perm.end(), gen);
  Sample sp = s0(perm, Eigen::all);
  auto fp = single_index_fit(sp);
  CHECK(std::abs(fp.beta(0) - first.beta(0)) < 1e-6);

  auto at_hat = single_index_foc_check(first, s0);
  CHECK(at_hat.within);
  auto wrong = single_index_foc_check(first, s0, Eigen::VectorXd::Constant(1, 1.0));
  CHECK_FALSE(wrong.within);

  // GMM on the FOC moments, started at the least-squares fit
  // the FOC has other roots far from the truth, so the search is local
  // around the least-squares fit
  auto model = single_index_model(2, sin_truth());
  model.start = first.beta;
  model.bounds = Box::cube(1, first.beta(0) - 0.25, first.beta(0) + 0.25);
  auto est = gmm_fit(model, s0, index_kde(s0, first.bandwidth));
  CHECK(std::abs(est.beta_hat(0) - 0.5) < 3.0 * sd);
  CHECK(std::abs(est.m_hat(0)) < 1e-3 * at_hat.band(0));

  // E[m(z, beta0, F0)] = 0 at the truth
  auto m0 = model.moments(s0, Eigen::VectorXd::Constant(1, 0.5), index_truth_rep(), false);
  double mm = m0.col(0).mean();
  double ms = std::sqrt((m0.col(0).array() - mm).square().mean());
  CHECK(std::abs(mm) < 3.0 * ms / std::sqrt(500.0));
}

TEST_CASE("r3_diagnostic: single index, sqrt(n) R3 shrinks")
{
  auto model = single_index_model(2, sin_truth());
  auto F0 = index_truth_rep();
  const Eigen::VectorXd b0 = Eigen::VectorXd::Constant(1, 0.5);
  std::vector<double> avg;
  for (int n : { 250, 500, 1000 }) {
    double s = 0;
    const int reps = 100;
    for (int r = 0; r < reps; ++r) {
      Sample z = index_sample(n, 40 + 100 * n + r, 0.1);
      auto rep = r3_diagnostic(model, z, index_kde(z, index_bandwidth(z)), F0, b0);
      s += rep.scaled(0) * rep.scaled(0);
    }
    avg.push_back(std::sqrt(s / reps));
  }
  MESSAGE("sqrt(n) R3 " << avg[0] << " " << avg[1] << " " << avg[2]);
  CHECK(avg[2] < avg[0]);
}
