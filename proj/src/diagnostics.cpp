#include "infkit/diagnostics.hpp"

#include "infkit/errors.hpp"
#include "infkit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace infkit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double
sample_mean(const Sample& s, const Field& f)
{
  double acc = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    acc += f(row(s, i));
  return acc / static_cast<double>(s.rows());
}

KernelSpec
kernel_for(const KernelSpec& k, int r)
{
  return k.dim() == r ? k : k.with_dim(r);
}

double
resolve_beta0(const Functional& beta, const RemainderOptions& o, double beta_hat, RemainderReport& rep)
{
  if (o.beta0)
    return *o.beta0;
  if (beta.beta0)
    return *beta.beta0;
  if (o.truth)
    return beta(*o.truth);
  rep.estimated = true;
  rep.notes.push_back("beta0 unknown; beta(F_hat) used in its place");
  return beta_hat;
}

//! sqrt(int (f - g)^2) over the hull of both supports.
double
density_distance(const DistributionRep& a, const DistributionRep& b, const quad::Options& opts)
{
  Box region = support(a).hull(support(b));
  Breakpoints bk = quad::merge(breakpoints(a), breakpoints(b));
  double v = quad::integrate_checked(
    [&](std::span<const double> z) {
      double d = density(a, z) - density(b, z);
      return d * d;
    },
    region, opts, bk, "integrated squared distance");
  return std::sqrt(std::max(0.0, v));
}

void
finish(RemainderReport& rep, std::size_t n)
{
  rep.r1_sto = rep.r1 - rep.r1_bias;
  rep.root_n = std::sqrt(static_cast<double>(n));
  rep.sqrt_n_r1 = rep.root_n * rep.r1;
  rep.sqrt_n_r2 = rep.root_n * rep.r2;
  rep.r2_ratio = (std::isfinite(rep.norm_value) && rep.norm_value > 0.0)
                   ? rep.r2 / std::pow(rep.norm_value, rep.zeta)
                   : kNaN;
}

RemainderReport
kernel_branch(const Functional& beta,
              const DistributionRep& F_hat,
              const DensityEstimate& est,
              const Sample& sample,
              const Field& psi,
              const RemainderOptions& o)
{
  RemainderReport rep;
  rep.branch = "kernel";
  rep.conditioning = "unconditional";
  const double h = est.bandwidth();
  const Sample& zs = est.sample();
  const KernelSpec K = kernel_for(est.kernel(), est.dim());

  rep.beta_hat = beta(F_hat);
  rep.beta0 = resolve_beta0(beta, o, rep.beta_hat, rep);
  rep.psi_mean = sample_mean(sample, psi);
  // int psi dF_hat = (1/n) sum psi(z_i, h) by a change of variables
  const auto n = static_cast<std::size_t>(zs.rows());
  std::vector<double> part(n);
  parallel_for(n, [&](std::size_t i) {
    part[i] = smooth_influence(psi, K, h, row(zs, static_cast<Eigen::Index>(i)), o.opts, o.psi_breaks);
  });
  rep.psi_integral = std::accumulate(part.begin(), part.end(), 0.0) / static_cast<double>(n);
  rep.r1 = rep.psi_integral - rep.psi_mean;

  if (o.truth && has_density(*o.truth)) {
    rep.r1_bias = kernel_bias(psi, *o.truth, K, h);
    rep.norm_value = density_distance(F_hat, *o.truth, o.opts);
  } else {
    // under f_hat itself, E[psi(z, h)] - E[psi(z)] is
    //   (1/n) sum_i int [psi(z_i + h v) - psi(z_i)] [(K * K)(v) - K(v)] dv
    // which avoids nesting two kernel estimates
    const int r = est.dim();
    const KernelSpec K1 = K.with_dim(1);
    const Breakpoints kinks(static_cast<std::size_t>(r), std::vector<double>{ -1.0, 0.0, 1.0 });
    parallel_for(n, [&](std::size_t i) {
      auto zi = row(zs, static_cast<Eigen::Index>(i));
      std::vector<double> shifted(static_cast<std::size_t>(r));
      const double p0 = psi(zi);
      auto f = [&](std::span<const double> v) {
        double conv = 1.0;
        for (int c = 0; c < r; ++c) {
          conv *= K1.self_convolution(v[c]);
          shifted[c] = zi[c] + h * v[c];
        }
        double w = conv - K.eval(v);
        return w == 0.0 ? 0.0 : (psi(shifted) - p0) * w;
      };
      Breakpoints bk = quad::merge(kinks, quad::localize(o.psi_breaks, zi, h, -2.0, 2.0));
      part[i] = quad::integrate_checked(f, Box::cube(r, -2.0, 2.0), o.opts, bk, "kernel bias under the estimate");
    });
    rep.r1_bias = std::accumulate(part.begin(), part.end(), 0.0) / static_cast<double>(n);
    rep.norm_value = kNaN;
    rep.estimated = true;
    rep.notes.push_back("kernel bias evaluated under the estimate in place of f0");
  }
  rep.r2 = beta.linear ? 0.0 : rep.beta_hat - rep.beta0 - rep.psi_integral;
  finish(rep, static_cast<std::size_t>(sample.rows()));
  return rep;
}

RemainderReport
series_branch(const Functional& beta,
              const DistributionRep& F_hat,
              const CondMean& cm,
              const Sample& sample,
              const Field& psi,
              const RemainderOptions& o)
{
  RemainderReport rep;
  rep.branch = "series";
  rep.conditioning = "x-conditional";
  const SeriesEstimate& est = *cm.series;
  const int r = est.basis().dim();
  if (sample.cols() != r + 1)
    throw InvalidArgument("series remainder: sample must hold (q, x) with " + std::to_string(r) +
                          " regressors");
  const Eigen::Index n = sample.rows();
  Sample X = sample.rightCols(r);
  DeltaHat dh(est, *beta.weight);

  rep.beta_hat = beta(F_hat);
  rep.beta0 = resolve_beta0(beta, o, rep.beta_hat, rep);
  rep.psi_mean = sample_mean(sample, psi);

  const CondMean* truth = o.truth ? o.truth->get<CondMean>() : nullptr;
  double sq = 0.0, sd = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto x = row(X, i);
    double d = dh(x);
    sq += d * sample(i, 0);
    sd += d * (truth ? truth->d(x) : est(x));
  }
  // beta_hat = (1/n) sum delta_hat(x_i) q_i, and R2 = 0 for this linear map
  double b_sample = sq / static_cast<double>(n);
  rep.psi_integral = b_sample - rep.beta0;
  rep.r1 = b_sample - rep.beta0 - rep.psi_mean;
  rep.r1_bias = sd / static_cast<double>(n) - rep.beta0;
  rep.r2 = 0.0;
  if (!truth) {
    rep.estimated = true;
    rep.notes.push_back("d0 unknown; bias part uses the fitted regression");
  }

  if (truth && truth->fx) {
    Box region = truth->x_support;
    Breakpoints bk = quad::merge(truth->breaks, est.basis().breakpoints());
    double v = quad::integrate_checked(
      [&](std::span<const double> x) {
        double f = truth->fx(x);
        if (f == 0.0)
          return 0.0;
        double e = est(x) - truth->d(x);
        return e * e * f;
      },
      region, o.opts, bk, "series L2 error");
    rep.norm_value = std::sqrt(std::max(0.0, v));
  } else {
    rep.norm_value = kNaN;
  }
  finish(rep, static_cast<std::size_t>(n));
  return rep;
}

RemainderReport
generic_branch(const Functional& beta,
               const DistributionRep& F_hat,
               const Sample& sample,
               const Field& psi,
               const RemainderOptions& o)
{
  RemainderReport rep;
  rep.branch = "generic";
  rep.conditioning = "unconditional";
  rep.beta_hat = beta(F_hat);
  rep.beta0 = resolve_beta0(beta, o, rep.beta_hat, rep);
  rep.psi_mean = sample_mean(sample, psi);
  rep.psi_integral = expectation(F_hat, psi, o.opts);
  rep.r1 = rep.psi_integral - rep.psi_mean;
  if (o.truth && has_density(*o.truth)) {
    rep.r1_bias = rep.psi_integral - expectation(*o.truth, psi, o.opts);
    rep.norm_value = has_density(F_hat) ? density_distance(F_hat, *o.truth, o.opts) : kNaN;
  } else {
    rep.r1_bias = rep.r1;
    rep.norm_value = kNaN;
    rep.estimated = true;
    rep.notes.push_back("E psi under the truth unknown; the whole of R1 is attributed to bias");
  }
  rep.r2 = beta.linear ? 0.0 : rep.beta_hat - rep.beta0 - rep.psi_integral;
  finish(rep, static_cast<std::size_t>(sample.rows()));
  return rep;
}

} // namespace

RemainderReport
decompose_remainder(const Functional& beta,
                    const DistributionRep& F_hat,
                    const Sample& sample,
                    const Field& psi,
                    const RemainderOptions& options)
{
  if (!psi)
    throw InvalidArgument("decompose_remainder: influence function required");
  if (sample.rows() == 0)
    throw InsufficientData("decompose_remainder: empty sample");
  if (const auto* kd = F_hat.get<KdeDensity>())
    return kernel_branch(beta, F_hat, *kd->est, sample, psi, options);
  if (const auto* cm = F_hat.get<CondMean>()) {
    if (!cm->series || !beta.weight)
      throw UnsupportedRepresentation(
        "decompose_remainder: a conditional mean needs a fitted series and a weighted functional");
    return series_branch(beta, F_hat, *cm, sample, psi, options);
  }
  return generic_branch(beta, F_hat, sample, psi, options);
}

double
convolution(const Field& psi, const DistributionRep& f0, std::span<const double> t, const quad::Options& opts)
{
  std::vector<double> shifted(t.size());
  return expectation(
    f0,
    [&](std::span<const double> z) {
      for (std::size_t c = 0; c < t.size(); ++c)
        shifted[c] = z[c] + t[c];
      return psi(shifted);
    },
    opts);
}

double
kernel_bias(const Field& psi, const DistributionRep& f0, const KernelSpec& kernel, double h, const quad::Options& opts)
{
  if (!(h > 0.0))
    throw InvalidArgument("kernel_bias: bandwidth must be positive");
  const int r = support(f0).dim();
  const KernelSpec K = kernel_for(kernel, r);
  std::vector<double> shifted(r), hu(r);
  quad::Options inner = opts;
  inner.rel_tol = std::max(opts.rel_tol, 1e-11);
  auto rho_diff = [&](std::span<const double> u) {
    for (int c = 0; c < r; ++c)
      hu[c] = h * u[c];
    double v = expectation(
      f0,
      [&](std::span<const double> z) {
        for (int c = 0; c < r; ++c)
          shifted[c] = z[c] + hu[c];
        return psi(shifted) - psi(z);
      },
      inner);
    return v * K.eval(u);
  };
  Breakpoints zero(static_cast<std::size_t>(r), std::vector<double>{ 0.0 });
  quad::Options outer = opts;
  outer.rel_tol = std::max(opts.rel_tol, 1e-10);
  return quad::integrate_checked(rho_diff, Box::cube(r, -1.0, 1.0), outer, zero, "kernel bias");
}

double
smoothed_expectation(const Field& psi,
                     const DistributionRep& f0,
                     const KernelSpec& kernel,
                     double h,
                     const quad::Options& opts)
{
  const int r = support(f0).dim();
  const KernelSpec K = kernel_for(kernel, r);
  return expectation(
    f0, [&](std::span<const double> z) { return smooth_influence(psi, K, h, z, opts); }, opts);
}

EquicontinuityTerm
kernel_sto_equicontinuity(const Sample& sample,
                          const Field& psi,
                          const KernelSpec& kernel,
                          double h,
                          const DistributionRep* f0,
                          const quad::Options& opts)
{
  if (sample.rows() == 0)
    throw InsufficientData("kernel_sto_equicontinuity: empty sample");
  const int r = static_cast<int>(sample.cols());
  const KernelSpec K = kernel_for(kernel, r);
  EquicontinuityTerm out;

  std::optional<DistributionRep> own;
  if (!f0) {
    own = kde_density(std::make_shared<const DensityEstimate>(sample, h, K));
    f0 = &*own;
    out.estimated = true;
  }
  // E psi(z, h) - E psi(z)
  double bias = kernel_bias(psi, *f0, K, h, { opts.abs_tol * 0.01 });

  const Eigen::Index n = sample.rows();
  double acc = 0.0, sq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto z = row(sample, i);
    double d = smooth_influence(psi, K, h, z, opts) - psi(z);
    acc += d;
    sq += d * d;
  }
  out.value = acc / static_cast<double>(n) - bias;
  out.scaled = std::sqrt(static_cast<double>(n)) * out.value;
  if (out.estimated) {
    out.variance_bound = sq / static_cast<double>(n);
  } else {
    out.variance_bound = expectation(
      *f0,
      [&](std::span<const double> z) {
        double d = smooth_influence(psi, K, h, z, opts) - psi(z);
        return d * d;
      },
      opts);
  }
  return out;
}

SeriesBias
series_bias_decompose(const Field& delta,
                      const Field& d0,
                      const BasisSpec& basis,
                      const Field& fx,
                      const Sample& X,
                      const Breakpoints& breaks,
                      const quad::Options& opts)
{
  const int K = basis.size();
  const int r = basis.dim();
  if (X.cols() != r)
    throw InvalidArgument("series_bias_decompose: sample dimension does not match the basis");
  if (X.rows() < K)
    throw InsufficientData("series_bias_decompose: need at least K observations");
  const Box& region = basis.support();
  Breakpoints bk = quad::merge(basis.breakpoints(), breaks);

  // packed: Sigma (full), E[p d0], E[p delta]
  const int m = K * K + 2 * K;
  Eigen::VectorXd p(K);
  Eigen::VectorXd mom = quad::integrate_vector_checked(
    [&](std::span<const double> x, Eigen::Ref<Eigen::VectorXd> out) {
      double f = fx(x);
      if (f == 0.0) {
        out.setZero();
        return;
      }
      basis.eval(x, p);
      Eigen::Map<Eigen::MatrixXd>(out.data(), K, K).noalias() = f * p * p.transpose();
      out.segment(K * K, K) = f * d0(x) * p;
      out.segment(K * K + K, K) = f * delta(x) * p;
    },
    m, region, opts, bk, "population series moments");
  Eigen::MatrixXd Sigma = Eigen::Map<const Eigen::MatrixXd>(mom.data(), K, K);
  Sigma = 0.5 * (Sigma + Sigma.transpose());

  SeriesBias out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sigma, Eigen::EigenvaluesOnly);
  out.min_eigenvalue = es.eigenvalues()(0);
  if (!(out.min_eigenvalue > 1e-12 * std::max(1.0, es.eigenvalues()(K - 1))))
    throw RankDeficiency("population second-moment matrix of the basis is singular",
                         out.min_eigenvalue);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(Sigma);
  out.gamma = ldlt.solve(mom.segment(K * K, K));
  out.Gamma = mom.segment(K * K + K, K);
  out.gamma_delta = ldlt.solve(out.Gamma);

  out.deterministic = quad::integrate_checked(
    [&](std::span<const double> x) {
      double f = fx(x);
      if (f == 0.0)
        return 0.0;
      basis.eval(x, p);
      return f * delta(x) * (p.dot(out.gamma) - d0(x));
    },
    region, opts, bk, "deterministic series bias");
  out.deterministic_orthogonal = -quad::integrate_checked(
    [&](std::span<const double> x) {
      double f = fx(x);
      if (f == 0.0)
        return 0.0;
      basis.eval(x, p);
      return f * (delta(x) - p.dot(out.gamma_delta)) * (d0(x) - p.dot(out.gamma));
    },
    region, opts, bk, "orthogonalized series bias");

  // Gamma' Sigma_hat^{-1} (1/n) sum p(x_i) [d0(x_i) - p(x_i)' gamma]
  Eigen::MatrixXd P = basis.design(X);
  const double n = static_cast<double>(X.rows());
  Eigen::VectorXd resid(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    resid(i) = d0(row(X, i)) - P.row(i).dot(out.gamma);
  Eigen::MatrixXd Shat = P.transpose() * P / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eh(Shat, Eigen::EigenvaluesOnly);
  if (!(eh.eigenvalues()(0) > 1e-10))
    throw RankDeficiency("sample second-moment matrix of the basis is singular",
                         eh.eigenvalues()(0));
  Eigen::VectorXd v = P.transpose() * resid / n;
  out.stochastic = out.Gamma.dot(Shat.llt().solve(v));
  return out;
}

EquicontinuityTerm
series_sto_equicontinuity(const Sample& X,
                          const Eigen::VectorXd& Q,
                          const Field& delta_hat,
                          const Field& delta,
                          const Field& d0,
                          const Field& var_q)
{
  if (X.rows() != Q.size())
    throw InvalidArgument("series_sto_equicontinuity: X and Q lengths differ");
  if (X.rows() == 0)
    throw InsufficientData("series_sto_equicontinuity: empty sample");
  const double n = static_cast<double>(X.rows());
  double acc = 0.0, bound = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    auto x = row(X, i);
    double e = delta_hat(x) - delta(x);
    acc += e * (Q(i) - d0(x));
    bound += e * e * (var_q ? var_q(x) : 1.0);
  }
  EquicontinuityTerm out;
  out.value = acc / n;
  out.scaled = std::sqrt(n) * out.value;
  out.variance_bound = bound / (n * n);
  return out;
}

// ---------------------------------------------------------------- rates

Rational::Rational(long long n, long long d)
{
  if (d == 0)
    throw InvalidArgument("rational with zero denominator");
  if (d < 0) {
    n = -n;
    d = -d;
  }
  long long g = std::gcd(n < 0 ? -n : n, d);
  num = g ? n / g : 0;
  den = g ? d / g : 1;
}

Rational
Rational::parse(const std::string& s)
{
  auto bad = [&] { return InvalidArgument("cannot read '" + s + "' as a rational exponent"); };
  if (s.empty())
    throw bad();
  try {
    std::size_t slash = s.find('/');
    std::size_t used = 0;
    if (slash != std::string::npos) {
      long long a = std::stoll(s.substr(0, slash), &used);
      if (used != slash)
        throw bad();
      std::string rest = s.substr(slash + 1);
      long long b = std::stoll(rest, &used);
      if (used != rest.size() || b == 0)
        throw bad();
      return { a, b };
    }
    std::size_t dot = s.find('.');
    if (dot == std::string::npos) {
      long long a = std::stoll(s, &used);
      if (used != s.size())
        throw bad();
      return { a, 1 };
    }
    std::string digits = s.substr(0, dot) + s.substr(dot + 1);
    std::size_t frac = s.size() - dot - 1;
    if (frac > 12 || digits.empty())
      throw bad();
    long long a = std::stoll(digits, &used);
    if (used != digits.size())
      throw bad();
    long long d = 1;
    for (std::size_t k = 0; k < frac; ++k)
      d *= 10;
    return { a, d };
  } catch (const std::logic_error&) {
    throw bad();
  }
}

std::string
Rational::str() const
{
  return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
}

Rational
operator+(Rational a, Rational b)
{
  return { a.num * b.den + b.num * a.den, a.den * b.den };
}
Rational
operator-(Rational a, Rational b)
{
  return { a.num * b.den - b.num * a.den, a.den * b.den };
}
Rational
operator*(Rational a, Rational b)
{
  return { a.num * b.num, a.den * b.den };
}
Rational
operator/(Rational a, Rational b)
{
  if (b.num == 0)
    throw InvalidArgument("rational division by zero");
  return { a.num * b.den, a.den * b.num };
}
bool
operator==(Rational a, Rational b)
{
  return a.num == b.num && a.den == b.den;
}
std::strong_ordering
operator<=>(Rational a, Rational b)
{
  return a.num * b.den <=> b.num * a.den;
}

const char*
to_string(Limit l)
{
  switch (l) {
    case Limit::to_zero:
      return "to_zero";
    case Limit::bounded:
      return "bounded";
    case Limit::diverges:
      return "diverges";
  }
  return "unknown";
}

Limit
RateTerm::limit() const
{
  Rational zero;
  if (n_power < zero)
    return Limit::to_zero;
  if (n_power > zero)
    return Limit::diverges;
  if (log_power < zero)
    return Limit::to_zero;
  return log_power == zero ? Limit::bounded : Limit::diverges;
}

void
RateConfig::validate() const
{
  if (r < 1)
    throw InvalidArgument("rate_check: dimension r must be at least 1");
  if (!(c > 0.0) || !std::isfinite(c))
    throw InvalidArgument("rate_check: rule constant c must be positive");
  if (kind == RateKind::kernel) {
    if (s_f < 1 || s_psi < 1)
      throw InvalidArgument("rate_check: kernel case needs s_f >= 1 and s_psi >= 1");
    if (kernel_order < 0)
      throw InvalidArgument("rate_check: kernel order must be positive");
  } else {
    if (s_d < 1 || s_delta < 0)
      throw InvalidArgument("rate_check: series case needs s_d >= 1 and s_delta >= 0");
    if (kind == RateKind::spline && spline_order < 1)
      throw InvalidArgument("rate_check: spline order must be positive");
    if (exponent < Rational{})
      throw InvalidArgument("rate_check: K = c n^a needs a >= 0 (got a = " + exponent.str() + ")");
  }
}

namespace {

std::string
term_str(const RateTerm& t)
{
  std::ostringstream os;
  os << "n^(" << t.n_power.str() << ")";
  if (!(t.log_power == Rational{}))
    os << " (ln n)^(" << t.log_power.str() << ")";
  return os.str();
}

RateCondition
condition(std::string name, std::string expr, bool require_zero, std::vector<RateTerm> terms)
{
  RateCondition c;
  c.name = std::move(name);
  c.require_zero = require_zero;
  c.dominant = terms.front();
  for (const auto& t : terms) {
    auto cmp = t.n_power <=> c.dominant.n_power;
    if (cmp > 0 || (cmp == 0 && t.log_power > c.dominant.log_power))
      c.dominant = t;
  }
  c.limit = c.dominant.limit();
  c.pass = require_zero ? c.limit == Limit::to_zero : c.limit != Limit::diverges;
  c.expression = expr + " ~ " + term_str(c.dominant);
  return c;
}

} // namespace

RateReport
rate_check(const RateConfig& cfg)
{
  cfg.validate();
  RateReport rep;
  const Rational a = cfg.exponent;
  const Rational half{ 1, 2 };
  const Rational zero;

  if (cfg.kind == RateKind::kernel) {
    int order = cfg.s_f + cfg.s_psi;
    if (cfg.kernel_order > 0)
      order = std::min(order, cfg.kernel_order);
    rep.conditions.push_back(condition("bandwidth", "h", true, { { a, zero } }));
    rep.conditions.push_back(condition("kernel bias", "sqrt(n) h^" + std::to_string(order), true,
                                       { { half + a * Rational(order), zero } }));
    rep.plug_in = 2 * cfg.s_psi > cfg.r;
  } else {
    const bool spline = cfg.kind == RateKind::spline;
    const int md = spline ? std::min(cfg.s_d, cfg.spline_order) : cfg.s_d;
    const int mdelta = spline ? std::min(cfg.s_delta, cfg.spline_order) : cfg.s_delta;
    const Rational ec = Rational(-md, cfg.r);           // c_K = K^ec
    const Rational el = spline ? zero : Rational(1);    // l_K = K^el
    const Rational ex = spline ? half : Rational(1);    // xi_K = K^ex
    // ln K contributes a log factor only when K grows
    const Rational lnK = a > zero ? Rational(1) : zero;
    auto K = [&](Rational p) { return RateTerm{ a * p, zero }; };

    rep.conditions.push_back(condition("K/n", "K/n", true, { { a - Rational(1), zero } }));
    RateTerm base{ a * ex - half, lnK * half };
    RateTerm cross{ base.n_power + a * (half + el + ec), base.log_power };
    rep.conditions.push_back(
      condition("stochastic", "sqrt(xi_K^2 ln K / n) (1 + sqrt(K) l_K c_K)", true, { base, cross }));
    rep.conditions.push_back(condition("approximation", "l_K c_K", true, { K(el + ec) }));
    if (cfg.s_delta > 0) {
      const Rational ed = Rational(-mdelta, cfg.r);
      rep.conditions.push_back(condition("delta approximation", "c_K^delta", true, { K(ed) }));
      rep.conditions.push_back(condition("bias", "sqrt(n) c_K^delta c_K", true,
                                         { { half + a * (ec + ed), zero } }));
    } else {
      rep.conditions.push_back(
        condition("bias", "sqrt(n) c_K", false, { { half + a * ec, zero } }));
    }
  }
  rep.pass = std::all_of(rep.conditions.begin(), rep.conditions.end(),
                         [](const RateCondition& c) { return c.pass; });
  return rep;
}

} // namespace infkit
