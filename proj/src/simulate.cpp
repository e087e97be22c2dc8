#include "infkit/simulate.hpp"

#include "infkit/errors.hpp"
#include "infkit/gateaux.hpp"
#include "infkit/kde.hpp"
#include "infkit/parallel.hpp"

#include <gsl/gsl_cdf.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>

namespace infkit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double
std_normal_pdf(double x)
{
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

std::string
join(const std::vector<std::string>& v)
{
  std::string s;
  for (const auto& x : v)
    s += (s.empty() ? "" : ", ") + x;
  return s;
}

const TrueDensity&
density_truth(const DgpSpec& dgp, const std::string& what)
{
  const auto* td = dgp.truth.get<TrueDensity>();
  if (!td)
    throw UnsupportedRepresentation(what + " needs a DGP with a closed-form density; '" + dgp.id + "' is a regression");
  return *td;
}

std::vector<double>
finite(const std::vector<double>& v)
{
  std::vector<double> out;
  out.reserve(v.size());
  for (double x : v)
    if (std::isfinite(x))
      out.push_back(x);
  return out;
}

double
mean_of(const std::vector<double>& v)
{
  if (v.empty())
    return kNaN;
  double s = 0;
  for (double x : v)
    s += x;
  return s / static_cast<double>(v.size());
}

double
sd_of(const std::vector<double>& v)
{
  if (v.size() < 2)
    return kNaN;
  double m = mean_of(v), s = 0;
  for (double x : v)
    s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double
median_of(std::vector<double> v)
{
  if (v.empty())
    return kNaN;
  std::sort(v.begin(), v.end());
  std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double
centered_variance(const Eigen::VectorXd& v)
{
  return (v.array() - v.mean()).square().mean();
}

// Gamma = int W p^K for the series estimator, per basis shape
struct GammaCache
{
  std::mutex mu;
  std::map<std::tuple<std::string, int, int, double, double, double, std::vector<double>, std::vector<double>>,
           Eigen::VectorXd>
    map;
};

GammaCache&
gamma_cache()
{
  static GammaCache c;
  return c;
}

Eigen::VectorXd
cached_weight_moment(const SurplusWeight& W, const BasisSpec& basis, const std::string& kind, int K)
{
  auto key = std::make_tuple(kind, K, basis.spline_order(), W.p0, W.p1, W.b, basis.support().lower, basis.support().upper);
  auto& c = gamma_cache();
  {
    std::lock_guard lock(c.mu);
    auto it = c.map.find(key);
    if (it != c.map.end() && !W.w)
      return it->second;
  }
  Eigen::VectorXd g = weight_moment(W, basis);
  if (!W.w) {
    std::lock_guard lock(c.mu);
    c.map.emplace(key, g);
  }
  return g;
}

Functional
functional_for(const std::string& id, const FunctionalParams& params)
{
  return make_functional(id, params);
}

struct CellSpec
{
  std::size_t n = 0;
  double c = 0.0;
  double t = 0.0;
  double target = 0.0;
  std::shared_ptr<const Deviation> dev;
  bool gap = true;
};

McCell
run_cell(const std::string& functional,
         const DgpSpec& dgp,
         const EstimatorConfig& cfg,
         const Target& tgt,
         const CellSpec& spec,
         int reps,
         std::uint64_t cell_seed,
         double level,
         double max_failure_rate,
         const FunctionalParams& params)
{
  const std::size_t R = static_cast<std::size_t>(reps);
  McCell cell;
  cell.n = spec.n;
  cell.c = spec.c;
  cell.t = spec.t;
  cell.target = spec.target;
  if (cfg.family == EstimatorFamily::kernel)
    cell.bandwidth = cfg.bandwidth_at(spec.n);
  else
    cell.K = cfg.K_at(spec.n);
  cell.beta_hat.assign(R, kNaN);
  cell.stat.assign(R, kNaN);
  cell.standardized.assign(R, kNaN);
  cell.gap.assign(R, kNaN);
  cell.v_hat.assign(R, kNaN);
  cell.covered.assign(R, 0);
  cell.seeds.resize(R);
  std::vector<std::string> errors(R);

  const double zcrit = normal_quantile(0.5 * (1.0 + level));
  const double rn = std::sqrt(static_cast<double>(spec.n));
  parallel_for(R, [&](std::size_t k) {
    const std::uint64_t seed = stream_seed(cell_seed, k);
    cell.seeds[k] = seed;
    Rng rng(seed);
    Sample z = spec.dev && spec.t > 0.0 ? sample_mixture(dgp, *spec.dev, spec.t, spec.n, rng)
                                        : dgp.sampler(spec.n, rng);
    PointEstimate pe;
    try {
      pe = estimate_functional(functional, dgp, cfg, z, params);
    } catch (const Error& e) {
      errors[k] = e.what();
      return;
    }
    if (!std::isfinite(pe.beta_hat) || !std::isfinite(pe.v_hat)) {
      errors[k] = "non-finite estimate";
      return;
    }
    const double err = pe.beta_hat - spec.target;
    cell.beta_hat[k] = pe.beta_hat;
    cell.v_hat[k] = pe.v_hat;
    cell.stat[k] = rn * err;
    if (pe.v_hat > 0.0)
      cell.standardized[k] = cell.stat[k] / std::sqrt(pe.v_hat);
    else if (err == 0.0)
      cell.standardized[k] = 0.0;
    cell.covered[k] = std::abs(err) <= zcrit * std::sqrt(pe.v_hat / static_cast<double>(spec.n)) ? 1 : 0;
    if (spec.gap) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < z.rows(); ++i)
        s += tgt.psi(row(z, i));
      cell.gap[k] = cell.stat[k] - s / rn;
    }
  });

  for (std::size_t k = 0; k < R; ++k)
    if (!errors[k].empty())
      ++cell.failures;
  if (static_cast<double>(cell.failures) > max_failure_rate * static_cast<double>(R)) {
    std::string first;
    for (const auto& e : errors)
      if (!e.empty()) {
        first = e;
        break;
      }
    throw NumericFailure("experiment failed: " + std::to_string(cell.failures) + " of " + std::to_string(R) +
                         " replications at n=" + std::to_string(spec.n) + " failed (" + first + ")");
  }

  auto stat = finite(cell.stat), stdz = finite(cell.standardized), gap = finite(cell.gap);
  cell.mean_stat = mean_of(stat);
  cell.sd_stat = sd_of(stat);
  for (double& g : gap)
    g = std::abs(g);
  cell.median_abs_gap = median_of(gap);
  cell.mean_standardized = mean_of(stdz);
  cell.sd_standardized = sd_of(stdz);
  cell.ks = stdz.empty() ? kNaN : ks_statistic(stdz, normal_cdf);
  const double ok = static_cast<double>(R - cell.failures);
  double cov = 0;
  for (std::size_t k = 0; k < R; ++k)
    if (errors[k].empty())
      cov += cell.covered[k];
  cell.coverage = ok > 0 ? cov / ok : kNaN;
  cell.coverage_se = ok > 0 ? std::sqrt(cell.coverage * (1.0 - cell.coverage) / ok) : kNaN;
  if (cell.sd_standardized == 0.0 || std::isnan(cell.sd_standardized))
    cell.normal_band = cell.mean_standardized == 0.0;
  else
    cell.normal_band = std::abs(cell.mean_standardized) <= 3.0 * cell.sd_standardized / std::sqrt(ok);
  return cell;
}

void
check_mc(const McOptions& mc)
{
  if (mc.n_grid.empty())
    throw InvalidArgument("experiment: empty n grid");
  for (auto n : mc.n_grid)
    if (n < 2)
      throw InvalidArgument("experiment: every n must be at least 2");
  if (mc.reps < 2)
    throw InvalidArgument("experiment: need at least 2 replications");
  if (!(mc.level > 0.0 && mc.level < 1.0))
    throw InvalidArgument("experiment: level must lie in (0, 1)");
  if (!(mc.max_failure_rate >= 0.0 && mc.max_failure_rate < 1.0))
    throw InvalidArgument("experiment: max_failure_rate must lie in [0, 1)");
}

} // namespace

// ------------------------------------------------------------------ seeds

std::uint64_t
mix_seed(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t
stream_seed(std::uint64_t base, std::uint64_t k)
{
  return mix_seed(mix_seed(base) ^ mix_seed(k + 0x632be59bd9b4e019ULL));
}

// ------------------------------------------------------------------- DGPs

Sample
DgpSpec::sample(std::size_t n, std::uint64_t seed) const
{
  Rng rng(seed);
  return sampler(n, rng);
}

const std::vector<std::string>&
dgp_ids()
{
  static const std::vector<std::string> ids{ "normal", "uniform", "surplus_uniform", "single_index", "normal_mean" };
  return ids;
}

DgpSpec
make_dgp(const std::string& id, const DgpOptions& opts)
{
  DgpSpec d;
  d.id = id;
  const double isd_normal = 1.0 / (2.0 * std::sqrt(std::numbers::pi));
  if (id == "normal" || id == "normal_mean") {
    const double mu = id == "normal" ? 0.0 : 1.0;
    d.description = id == "normal" ? "z ~ N(0, 1)" : "z ~ N(1, 1)";
    d.columns = { "z" };
    d.truth = true_density([mu](std::span<const double> z) { return std_normal_pdf(z[0] - mu); },
                           Box::cube(1, mu - 12.0, mu + 12.0));
    d.beta0 = { { "isd", isd_normal }, { "isd_loo", isd_normal } };
    if (id == "normal_mean")
      d.beta0.insert({ { "mean", 1.0 }, { "mean_overid", 1.0 } });
    d.sampler = [mu](std::size_t n, Rng& rng) {
      std::normal_distribution<double> nd(mu, 1.0);
      Sample s(static_cast<Eigen::Index>(n), 1);
      for (Eigen::Index i = 0; i < s.rows(); ++i)
        s(i, 0) = nd(rng);
      return s;
    };
    d.marginal_cdf = [mu](double x) { return normal_cdf(x - mu); };
    return d;
  }
  if (id == "uniform") {
    d.description = "z ~ U[0, 1]";
    d.columns = { "z" };
    d.truth = true_density([](std::span<const double> z) { return (z[0] >= 0.0 && z[0] <= 1.0) ? 1.0 : 0.0; },
                           Box::cube(1, 0.0, 1.0));
    d.beta0 = { { "isd", 1.0 }, { "isd_loo", 1.0 } };
    d.sampler = [](std::size_t n, Rng& rng) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      Sample s(static_cast<Eigen::Index>(n), 1);
      for (Eigen::Index i = 0; i < s.rows(); ++i)
        s(i, 0) = u(rng);
      return s;
    };
    d.marginal_cdf = [](double x) { return std::clamp(x, 0.0, 1.0); };
    return d;
  }
  if (id == "surplus_uniform") {
    const double sigma = opts.noise >= 0.0 ? opts.noise : 0.5;
    d.description = "x = (p, y) ~ U[0,1]^2, q = 1 + p + y + N(0, " + std::to_string(sigma) +
                    "^2), band W = 1(0.2 <= p <= 0.8)";
    d.columns = { "q", "p", "y" };
    d.d0 = [](std::span<const double> x) { return 1.0 + x[0] + x[1]; };
    d.fx = [](std::span<const double> x) {
      return (x[0] >= 0.0 && x[0] <= 1.0 && x[1] >= 0.0 && x[1] <= 1.0) ? 1.0 : 0.0;
    };
    d.weight = SurplusWeight{ 0.2, 0.8, 0.0, {} };
    CondMean cm;
    cm.d = d.d0;
    cm.fx = d.fx;
    cm.x_support = Box::cube(2, 0.0, 1.0);
    d.truth = cond_mean(cm);
    // int_0.2^0.8 int_0^1 (1 + p + y) dy dp
    d.beta0 = { { "surplus", 1.2 }, { "surplus_gmm", 1.2 } };
    d.sampler = [sigma](std::size_t n, Rng& rng) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::normal_distribution<double> e(0.0, sigma);
      Sample s(static_cast<Eigen::Index>(n), 3);
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        s(i, 1) = u(rng);
        s(i, 2) = u(rng);
        s(i, 0) = 1.0 + s(i, 1) + s(i, 2) + e(rng);
      }
      return s;
    };
    d.marginal_cdf = [](double x) { return std::clamp(x, 0.0, 1.0); };
    d.marginal_column = 1;
    return d;
  }
  if (id == "single_index") {
    const double sigma = opts.noise >= 0.0 ? opts.noise : 0.1;
    d.description = "x ~ N(0, I_2), y = sin(x1 + 0.5 x2) + N(0, " + std::to_string(sigma) + "^2)";
    d.columns = { "y", "x1", "x2" };
    d.d0 = [](std::span<const double> x) { return std::sin(x[0] + 0.5 * x[1]); };
    d.fx = [](std::span<const double> x) { return std_normal_pdf(x[0]) * std_normal_pdf(x[1]); };
    CondMean cm;
    cm.d = d.d0;
    cm.fx = d.fx;
    cm.x_support = Box::cube(2, -8.0, 8.0);
    d.truth = cond_mean(cm);
    SingleIndexTruth t;
    t.link = [](double v) { return std::sin(v); };
    t.link_derivative = [](double v) { return std::cos(v); };
    // v = x1 + 0.5 x2 ~ N(0, 1.25), E[x2 | v] = 0.5 v / 1.25
    t.cond_xtilde = [](double v) { return Eigen::VectorXd::Constant(1, 0.4 * v); };
    t.index_density = [](double v) {
      const double s = std::sqrt(1.25);
      return std_normal_pdf(v / s) / s;
    };
    d.index_truth = t;
    d.beta0 = { { "single_index", 0.5 } };
    d.sampler = [sigma](std::size_t n, Rng& rng) {
      std::normal_distribution<double> nd;
      Sample s(static_cast<Eigen::Index>(n), 3);
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        s(i, 1) = nd(rng);
        s(i, 2) = nd(rng);
        s(i, 0) = std::sin(s(i, 1) + 0.5 * s(i, 2)) + sigma * nd(rng);
      }
      return s;
    };
    d.marginal_cdf = normal_cdf;
    d.marginal_column = 1;
    return d;
  }
  throw InvalidArgument("unknown DGP '" + id + "' (registered: " + join(dgp_ids()) + ")");
}

double
draw_kernel(const KernelSpec& kernel, Rng& rng)
{
  if (!kernel.nonnegative())
    throw InvalidArgument("draw_kernel: the kernel takes negative values");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double p = u(rng);
  double lo = -1.0, hi = 1.0;
  for (int i = 0; i < 60; ++i) {
    double mid = 0.5 * (lo + hi);
    (kernel.cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Sample
sample_mixture(const DgpSpec& dgp, const Deviation& dev, double t, std::size_t n, Rng& rng)
{
  if (!(t >= 0.0 && t <= 1.0))
    throw InvalidArgument("sample_mixture: t must lie in [0, 1]");
  if (dev.dim() != dgp.dim())
    throw InvalidArgument("sample_mixture: deviation dimension does not match the DGP");
  Sample s = dgp.sampler(n, rng);
  if (t == 0.0)
    return s;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    if (u(rng) >= t)
      continue;
    for (int c = 0; c < dev.dim(); ++c) {
      const auto cu = static_cast<std::size_t>(c);
      s(i, c) = dev.continuous[cu] ? dev.z[cu] + dev.h[cu] * draw_kernel(dev.kernel, rng) : dev.z[cu];
    }
  }
  return s;
}

double
normal_quantile(double p)
{
  if (!(p > 0.0 && p < 1.0))
    throw InvalidArgument("normal_quantile: p must lie in (0, 1)");
  return gsl_cdf_ugaussian_Pinv(p);
}

double
normal_cdf(double x)
{
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double
ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf)
{
  x = finite(x);
  if (x.empty())
    throw InsufficientData("ks_statistic: no finite values");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double F = cdf(x[i]);
    d = std::max({ d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n });
  }
  return d;
}

// ------------------------------------------------------------- estimators

double
EstimatorConfig::bandwidth_at(std::size_t n) const
{
  if (bandwidth)
    return *bandwidth;
  return bandwidth_c * std::pow(static_cast<double>(n), bandwidth_exponent.value());
}

int
EstimatorConfig::K_at(std::size_t n) const
{
  if (K)
    return *K;
  double k = K_c * std::pow(static_cast<double>(n), K_exponent.value());
  return std::max(1, static_cast<int>(std::ceil(k - 1e-9)));
}

void
EstimatorConfig::validate() const
{
  if (kernel_order < 2 || kernel_order % 2)
    throw InvalidArgument("kernel order must be an even integer >= 2, got " + std::to_string(kernel_order));
  if (!(bandwidth_c > 0.0) || !std::isfinite(bandwidth_c))
    throw InvalidArgument("bandwidth constant must be positive");
  if (bandwidth && !(*bandwidth > 0.0 && std::isfinite(*bandwidth)))
    throw InvalidArgument("bandwidth must be positive");
  if (basis != "spline" && basis != "power")
    throw InvalidArgument("basis must be 'spline' or 'power', got '" + basis + "'");
  if (spline_order < 1)
    throw InvalidArgument("spline order must be at least 1");
  if (!(K_c > 0.0) || !std::isfinite(K_c))
    throw InvalidArgument("K constant must be positive");
  if (K && *K < 1)
    throw InvalidArgument("K must be at least 1");
}

Target
target_for(const std::string& functional, const DgpSpec& dgp, const FunctionalParams& params)
{
  Target t;
  auto known = [&](const std::string& key) -> std::optional<double> {
    auto it = dgp.beta0.find(key);
    if (it == dgp.beta0.end())
      return std::nullopt;
    return it->second;
  };
  if (functional == "isd" || functional == "isd_loo") {
    const auto& td = density_truth(dgp, "the ISD functional");
    t.beta0 = known(functional).value_or(isd_value(dgp.truth));
    t.psi = isd_psi(td.f, t.beta0);
  } else if (functional == "surplus") {
    if (!dgp.weight || !dgp.d0 || !dgp.fx)
      throw UnsupportedRepresentation("the surplus functional needs a regression DGP with a weight; '" + dgp.id +
                                      "' has none");
    t.beta0 = known("surplus").value_or(surplus_value(dgp.truth, *dgp.weight));
    t.psi = surplus_psi(*dgp.weight, dgp.fx, dgp.d0);
  } else if (functional == "constant") {
    t.beta0 = params.constant;
    t.psi = [](std::span<const double>) { return 0.0; };
  } else if (functional == "linear") {
    if (!params.psi)
      throw InvalidArgument("the linear functional needs psi");
    density_truth(dgp, "the linear functional");
    t.beta0 = expectation(dgp.truth, params.psi);
    t.psi = [psi = params.psi, b = t.beta0](std::span<const double> z) { return psi(z) - b; };
  } else {
    throw InvalidArgument("functional '" + functional + "' has no Monte Carlo target (supported: isd, isd_loo, " +
                          "surplus, constant, linear)");
  }
  return t;
}

PointEstimate
estimate_functional(const std::string& functional,
                    const DgpSpec& dgp,
                    const EstimatorConfig& cfg,
                    const Sample& sample,
                    const FunctionalParams& params)
{
  const Eigen::Index n = sample.rows();
  if (n < 2)
    throw InsufficientData("estimate: need at least two observations");
  if (sample.cols() != dgp.dim())
    throw InvalidArgument("estimate: sample has " + std::to_string(sample.cols()) + " columns, DGP '" + dgp.id +
                          "' has " + std::to_string(dgp.dim()));
  PointEstimate pe;
  if (functional == "constant") {
    pe.beta_hat = params.constant;
    return pe;
  }
  if (cfg.family == EstimatorFamily::kernel) {
    const double h = cfg.bandwidth_at(static_cast<std::size_t>(n));
    const int r = static_cast<int>(sample.cols());
    if (functional == "isd" || functional == "isd_loo") {
      DensityEstimate est(sample, h, KernelSpec::make(cfg.kernel_order, r));
      auto sums = est.loo_sums();
      Eigen::VectorXd f;
      if (functional == "isd_loo") {
        f = sums.s / static_cast<double>(n - 1);
        pe.beta_hat = f.mean();
      } else {
        std::vector<double> zero(static_cast<std::size_t>(r), 0.0);
        const double k0 = est.kernel().eval(zero) / std::pow(h, r);
        f = (sums.s.array() + k0) / static_cast<double>(n);
        pe.beta_hat = est.integrated_square();
      }
      pe.v_hat = centered_variance(2.0 * (f.array() - pe.beta_hat).matrix());
      return pe;
    }
    if (functional == "linear") {
      if (!params.psi)
        throw InvalidArgument("the linear functional needs psi");
      const auto K = KernelSpec::make(cfg.kernel_order, r);
      Eigen::VectorXd g(n);
      for (Eigen::Index i = 0; i < n; ++i)
        g(i) = smooth_influence(params.psi, K, h, row(sample, i));
      pe.beta_hat = g.mean();
      pe.v_hat = centered_variance(g);
      return pe;
    }
    throw InvalidArgument("functional '" + functional + "' has no kernel estimator (use isd, isd_loo or linear)");
  }
  if (functional != "surplus")
    throw InvalidArgument("functional '" + functional + "' has no series estimator (use surplus)");
  if (!dgp.weight)
    throw UnsupportedRepresentation("the surplus estimator needs a DGP with a weight");
  const int K = cfg.K_at(static_cast<std::size_t>(n));
  Sample X = sample.rightCols(sample.cols() - 1);
  Eigen::VectorXd Q = sample.col(0);
  const Box box = x_support(dgp.truth);
  BasisSpec basis = cfg.basis == "power" ? BasisSpec::power(K, box) : BasisSpec::uniform_spline_for(cfg.spline_order, K, box);
  SeriesEstimate est(X, Q, basis);
  Eigen::VectorXd Gamma = cached_weight_moment(*dgp.weight, basis, cfg.basis, K);
  pe.beta_hat = Gamma.dot(est.gamma());
  Eigen::MatrixXd P = basis.design(X);
  Eigen::VectorXd delta = P * est.solve(Gamma);
  Eigen::VectorXd resid = Q - P * est.gamma();
  pe.v_hat = (delta.array() * resid.array()).square().mean();
  return pe;
}

// ------------------------------------------------------------ experiments

McReport
run_linearity(const std::string& functional, const DgpSpec& dgp, const EstimatorConfig& est, const McOptions& mc)
{
  check_mc(mc);
  est.validate();
  Target tgt = target_for(functional, dgp, mc.params);
  McReport rep;
  rep.experiment = "linearity";
  rep.functional = functional;
  rep.dgp = dgp.id;
  rep.n_grid = mc.n_grid;
  rep.reps = mc.reps;
  rep.seed = mc.seed;
  rep.level = mc.level;
  for (std::size_t g = 0; g < mc.n_grid.size(); ++g) {
    CellSpec spec;
    spec.n = mc.n_grid[g];
    spec.target = tgt.beta0;
    rep.cells.push_back(run_cell(functional, dgp, est, tgt, spec, mc.reps, stream_seed(mc.seed, g), mc.level,
                                 mc.max_failure_rate, mc.params));
  }
  rep.gap_decreasing = true;
  rep.gap_zero = true;
  for (std::size_t g = 0; g < rep.cells.size(); ++g) {
    if (g > 0 && !(rep.cells[g].median_abs_gap < rep.cells[g - 1].median_abs_gap))
      rep.gap_decreasing = false;
    for (double x : rep.cells[g].gap)
      if (x != 0.0)
        rep.gap_zero = false;
  }
  return rep;
}

McReport
run_local_regularity(const std::string& functional,
                     const DgpSpec& dgp,
                     const EstimatorConfig& est,
                     const LocalOptions& local,
                     const McOptions& mc)
{
  check_mc(mc);
  est.validate();
  const auto& td = density_truth(dgp, "local regularity");
  if (static_cast<int>(local.z.size()) != dgp.dim())
    throw InvalidArgument("local regularity: z must have " + std::to_string(dgp.dim()) + " coordinates");
  for (double c : local.c_list)
    if (!(c >= 0.0) || !std::isfinite(c))
      throw InvalidArgument("local regularity: path constants must be nonnegative");
  Target tgt = target_for(functional, dgp, mc.params);
  Functional fn = functional_for(functional, mc.params);
  auto dev =
    std::make_shared<const Deviation>(make_deviation(local.z, local.h, KernelSpec::make(local.deviation_order)));

  McReport rep;
  rep.experiment = "local_regularity";
  rep.functional = functional;
  rep.dgp = dgp.id;
  rep.n_grid = mc.n_grid;
  rep.reps = mc.reps;
  rep.seed = mc.seed;
  rep.level = mc.level;
  rep.z = local.z;
  rep.deviation_h = local.h;

  if (td.f(local.z) < 1e-3 * td.f(std::vector<double>(local.z.size(), 0.0)))
    rep.warnings.push_back("z lies in the tail of f0; convergence along the path may be slow");

  for (std::size_t g = 0; g < mc.n_grid.size(); ++g) {
    const std::size_t n = mc.n_grid[g];
    for (double c : local.c_list) {
      CellSpec spec;
      spec.n = n;
      spec.c = c;
      spec.t = c / std::sqrt(static_cast<double>(n));
      if (spec.t > 1.0)
        throw InvalidArgument("local regularity: c / sqrt(n) exceeds 1");
      spec.dev = dev;
      spec.gap = c == 0.0;
      spec.target = c == 0.0 ? tgt.beta0 : mixture_eval(fn, dgp.truth, dev, spec.t);
      rep.cells.push_back(run_cell(functional, dgp, est, tgt, spec, mc.reps, stream_seed(mc.seed, g), mc.level,
                                   mc.max_failure_rate, mc.params));
    }
  }

  // centering identity sqrt(n) t mu = sqrt(n) (beta(t) - beta0) + o(1);
  // differences of beta are formed pointwise when an integrand form exists
  rep.mu_zh = path_derivative(fn, dgp.truth, dev);
  const double b0 = fn.eval(dgp.truth);
  auto form0 = fn.integrand ? fn.integrand(dgp.truth) : std::nullopt;
  auto delta_beta = [&](double t) {
    auto F = mix(dgp.truth, dev, t);
    auto form = fn.integrand && form0 ? fn.integrand(F) : std::nullopt;
    if (form) {
      quad::Options o;
      o.abs_tol = 1e-15;
      o.rel_tol = 1e-12;
      Field L0 = form0->L, Lt = form->L;
      return quad::integrate_checked([&](std::span<const double> x) { return Lt(x) - L0(x); },
                                     form->region.hull(form0->region), o, quad::merge(form->breaks, form0->breaks),
                                     "beta(t) - beta0");
    }
    return fn.eval(F) - b0;
  };
  const double quad_coef = fn.t_degree == 2 ? delta_beta(1.0) - rep.mu_zh : kNaN;
  std::vector<double> ns = local.centering_n;
  for (auto n : mc.n_grid)
    ns.push_back(static_cast<double>(n));
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  for (double n : ns) {
    if (!(n >= 1.0))
      throw InvalidArgument("local regularity: centering n must be at least 1");
    for (double c : local.c_list) {
      if (c == 0.0)
        continue;
      CenteringPoint p;
      p.n = n;
      p.c = c;
      p.t = c / std::sqrt(n);
      if (p.t > 1.0)
        continue;
      p.lhs = std::sqrt(n) * p.t * rep.mu_zh;
      p.rhs = std::sqrt(n) * delta_beta(p.t);
      p.gap = std::abs(p.lhs - p.rhs);
      p.closed_form = std::sqrt(n) * p.t * p.t * quad_coef;
      rep.centering.push_back(p);
    }
  }
  return rep;
}

McReport
run_coverage(const std::string& functional,
             const DgpSpec& dgp,
             const EstimatorConfig& est,
             std::size_t n,
             int reps,
             std::uint64_t seed,
             const FunctionalParams& params)
{
  McOptions mc;
  mc.n_grid = { n };
  mc.reps = reps;
  mc.seed = seed;
  mc.params = params;
  McReport rep = run_linearity(functional, dgp, est, mc);
  rep.experiment = "coverage";
  rep.gap_decreasing = false;
  return rep;
}

double
log_log_slope(const std::vector<double>& x, const std::vector<double>& y)
{
  if (x.size() != y.size() || x.size() < 2)
    throw InvalidArgument("log_log_slope: need at least two matching points");
  double mx = 0, my = 0;
  const double m = static_cast<double>(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += std::log(x[k]);
    my += std::log(std::abs(y[k]));
  }
  mx /= m;
  my /= m;
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    double dx = std::log(x[k]) - mx;
    sxy += dx * (std::log(std::abs(y[k])) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

BiasRateReport
run_bias_rate(const std::string& functional, const DgpSpec& dgp, const BiasRateOptions& opts)
{
  if (functional != "isd" && functional != "isd_loo" && functional != "linear")
    throw InvalidArgument("bias rate: functional must be isd, isd_loo or linear");
  if (opts.h_grid.size() < 2 || opts.kernel_orders.empty())
    throw InvalidArgument("bias rate: need at least two bandwidths and one kernel order");
  for (double h : opts.h_grid)
    if (!(h > 0.0))
      throw InvalidArgument("bias rate: bandwidths must be positive");
  if (!opts.quadrature_only && (opts.reps < 2 || opts.n < 2))
    throw InvalidArgument("bias rate: need n >= 2 and at least 2 replications");
  const auto& td = density_truth(dgp, "bias rate");
  Target tgt = target_for(functional, dgp, opts.params);
  const int r = dgp.dim();

  BiasRateReport rep;
  rep.functional = functional;
  rep.dgp = dgp.id;
  rep.n = opts.n;
  rep.reps = opts.reps;
  rep.quadrature_only = opts.quadrature_only;
  if (functional == "isd")
    rep.warnings.push_back("isd bias measured on the leave-one-out estimator; the plug-in adds a 1/(n h) term that "
                           "is not smoothing bias");

  // psi whose kernel_bias is the bias: f0 for the leave-one-out ISD
  // (E f_{-i}(z_i) - int f^2), psi itself for a linear functional
  Field bias_psi = functional == "linear" ? opts.params.psi : td.f;
  const std::size_t H = opts.h_grid.size(), O = opts.kernel_orders.size();
  std::vector<KernelSpec> kernels;
  for (int o : opts.kernel_orders)
    kernels.push_back(KernelSpec::make(o, r));

  // per replication: bias + control variate for every (order, h)
  std::vector<std::vector<double>> draws;
  if (!opts.quadrature_only) {
    draws.assign(static_cast<std::size_t>(opts.reps), std::vector<double>(O * H, kNaN));
    parallel_for(static_cast<std::size_t>(opts.reps), [&](std::size_t k) {
      Rng rng(stream_seed(opts.seed, k));
      Sample z = dgp.sampler(opts.n, rng);
      double cv = 0.0;
      for (Eigen::Index i = 0; i < z.rows(); ++i)
        cv += tgt.psi(row(z, i));
      cv /= static_cast<double>(z.rows());
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t j = 0; j < H; ++j) {
          double b;
          if (functional == "linear") {
            double s = 0;
            for (Eigen::Index i = 0; i < z.rows(); ++i)
              s += smooth_influence(opts.params.psi, kernels[o], opts.h_grid[j], row(z, i));
            b = s / static_cast<double>(z.rows());
          } else {
            b = DensityEstimate(z, opts.h_grid[j], kernels[o]).loo_mean();
          }
          draws[k][o * H + j] = b - tgt.beta0 - cv;
        }
    });
  }

  for (std::size_t o = 0; o < O; ++o) {
    BiasRateSeries s;
    s.order = opts.kernel_orders[o];
    s.h = opts.h_grid;
    const int inf = std::numeric_limits<int>::max() / 4;
    const int sf = opts.s_f > 0 ? opts.s_f : inf, sp = opts.s_psi > 0 ? opts.s_psi : inf;
    s.expected_slope = std::min<double>(s.order, static_cast<double>(sf) + sp);
    s.naive_slope = std::min(s.order, sf);

    const double scale = std::max(1.0, std::abs(tgt.beta0));
    std::vector<double> qh, qb;
    for (double h : opts.h_grid) {
      double b = kernel_bias(bias_psi, dgp.truth, kernels[o], h);
      s.quadrature_bias.push_back(b);
      if (std::abs(b) > 1e-13 * scale) {
        qh.push_back(h);
        qb.push_back(b);
      }
    }
    s.quadrature_slope = qh.size() >= 2 ? log_log_slope(qh, qb) : kNaN;

    if (opts.quadrature_only) {
      s.slope = s.quadrature_slope;
      s.inconclusive = std::isnan(s.quadrature_slope);
    } else {
      std::vector<double> mh, mb;
      for (std::size_t j = 0; j < H; ++j) {
        std::vector<double> col;
        for (const auto& d : draws)
          col.push_back(d[o * H + j]);
        col = finite(col);
        double m = mean_of(col), se = sd_of(col) / std::sqrt(static_cast<double>(col.size()));
        s.bias.push_back(m);
        s.se.push_back(se);
        if (std::abs(m) > std::max(3.0 * se, 1e-12 * scale)) {
          mh.push_back(opts.h_grid[j]);
          mb.push_back(m);
        }
      }
      s.inconclusive = mh.size() < 3;
      s.slope = s.inconclusive ? kNaN : log_log_slope(mh, mb);
      if (mh.empty())
        rep.warnings.push_back("order " + std::to_string(s.order) +
                               ": bias below the Monte Carlo noise floor at every h");
    }
    rep.series.push_back(std::move(s));
  }
  return rep;
}

} // namespace infkit
