#pragma once

#include "infkit/diagnostics.hpp"
#include "infkit/functionals.hpp"
#include "infkit/gmm.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace infkit {

using Rng = std::mt19937_64;

//! splitmix64 finalizer.
std::uint64_t mix_seed(std::uint64_t x);
//! Seed of stream k derived from a base seed. Replication k of an experiment
//! cell always draws from stream_seed(stream_seed(base, cell), k), so the
//! order in which replications run does not matter.
std::uint64_t stream_seed(std::uint64_t base, std::uint64_t k);

struct DgpSpec
{
  std::string id;
  std::string description;
  //! CSV header of a sample row.
  std::vector<std::string> columns;
  //! Closed-form density of a row, or a conditional mean with its x-marginal.
  DistributionRep truth;
  //! E[first column | rest] where the DGP is a regression.
  std::function<double(std::span<const double>)> d0;
  Field fx;
  std::optional<SurplusWeight> weight;
  std::optional<SingleIndexTruth> index_truth;
  //! True parameter per functional or moment-model id.
  std::map<std::string, double> beta0;
  std::function<Sample(std::size_t n, Rng& rng)> sampler;
  //! CDF of the marginal of column `marginal_column`, for sanity checks.
  std::function<double(double)> marginal_cdf;
  int marginal_column = 0;

  int dim() const { return static_cast<int>(columns.size()); }
  Sample sample(std::size_t n, std::uint64_t seed) const;
};

struct DgpOptions
{
  //! Noise sd of the regression DGPs; negative means the registry default
  //! (0.5 for surplus_uniform, 0.1 for single_index).
  double noise = -1.0;
};

//! normal, uniform, surplus_uniform, single_index, normal_mean.
const std::vector<std::string>& dgp_ids();
//! Throws InvalidArgument for an unknown id (the message lists the ids).
DgpSpec make_dgp(const std::string& id, const DgpOptions& opts = {});

//! Draws a nonnegative 1-d kernel by inverting its CDF.
double draw_kernel(const KernelSpec& kernel, Rng& rng);

//! n draws from (1 - t) F0 + t G for a density DGP and a deviation on
//! continuous coordinates. With t = 0 the generator is used exactly as by
//! DgpSpec::sampler.
Sample sample_mixture(const DgpSpec& dgp, const Deviation& dev, double t, std::size_t n, Rng& rng);

double normal_cdf(double x);
//! Standard normal quantile; p in (0, 1).
double normal_quantile(double p);
//! sup_x |F_n(x) - F(x)|.
double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf);

enum class EstimatorFamily
{
  kernel,
  series
};

struct EstimatorConfig
{
  EstimatorFamily family = EstimatorFamily::kernel;
  int kernel_order = 4;
  //! h = bandwidth_c n^bandwidth_exponent unless `bandwidth` is set.
  double bandwidth_c = 1.0;
  Rational bandwidth_exponent{ -1, 6 };
  std::optional<double> bandwidth;
  //! "spline" or "power".
  std::string basis = "spline";
  int spline_order = 2;
  //! K = ceil(K_c n^K_exponent) unless `K` is set.
  double K_c = 1.0;
  Rational K_exponent{ 1, 2 };
  std::optional<int> K;

  double bandwidth_at(std::size_t n) const;
  int K_at(std::size_t n) const;
  void validate() const;
};

//! True value and closed-form influence function of a functional under a DGP.
struct Target
{
  double beta0 = 0.0;
  Field psi;
};

//! functional: isd, isd_loo, surplus, constant or linear (params.psi).
Target target_for(const std::string& functional, const DgpSpec& dgp, const FunctionalParams& params = {});

struct PointEstimate
{
  double beta_hat = 0.0;
  //! Variance of the estimated influence function over the sample.
  double v_hat = 0.0;
};

//! Kernel family: isd (plug-in int f_hat^2), isd_loo, linear (mean of the
//! smoothed psi), constant. Series family: surplus, constant.
PointEstimate estimate_functional(const std::string& functional,
                                  const DgpSpec& dgp,
                                  const EstimatorConfig& cfg,
                                  const Sample& sample,
                                  const FunctionalParams& params = {});

//! One n (and one path constant c) of an experiment.
struct McCell
{
  std::size_t n = 0;
  double c = 0.0;
  double t = 0.0;
  //! beta0, or beta(F_{t_n}) on a local path.
  double target = 0.0;
  double bandwidth = 0.0;
  int K = 0;

  // per replication (NaN where the estimator failed)
  std::vector<double> beta_hat;
  std::vector<double> stat;         // sqrt(n)(beta_hat - target)
  std::vector<double> standardized; // stat / sqrt(v_hat)
  std::vector<double> gap;          // stat - sum psi / sqrt(n) (c = 0 only)
  std::vector<double> v_hat;
  std::vector<int> covered;
  std::vector<std::uint64_t> seeds;

  std::size_t failures = 0;
  double mean_stat = 0.0;
  double sd_stat = 0.0;
  double median_abs_gap = 0.0;
  double mean_standardized = 0.0;
  double sd_standardized = 0.0;
  double ks = 0.0;
  double coverage = 0.0;
  double coverage_se = 0.0;
  //! |mean_standardized| <= 3 sd_standardized / sqrt(R).
  bool normal_band = false;
};

struct CenteringPoint
{
  double n = 0.0;
  double c = 0.0;
  double t = 0.0;
  double lhs = 0.0; // sqrt(n) t mu_z^h
  double rhs = 0.0; // sqrt(n) (beta(t) - beta0)
  double gap = 0.0;
  //! sqrt(n) t^2 [beta(1) - beta0 - mu] for a quadratic path, else NaN.
  double closed_form = 0.0;
};

struct McReport
{
  std::string experiment; // linearity, local_regularity, coverage
  std::string functional;
  std::string dgp;
  std::vector<std::size_t> n_grid;
  int reps = 0;
  std::uint64_t seed = 0;
  double level = 0.95;
  std::vector<McCell> cells;
  //! Median |gap| strictly decreasing across the n grid.
  bool gap_decreasing = false;
  //! Every gap is exactly zero.
  bool gap_zero = false;

  // local regularity
  std::vector<double> z;
  double deviation_h = 0.0;
  double mu_zh = 0.0;
  std::vector<CenteringPoint> centering;
  std::vector<std::string> warnings;
};

struct McOptions
{
  std::vector<std::size_t> n_grid{ 250, 500, 1000, 2000 };
  int reps = 500;
  std::uint64_t seed = 1;
  double level = 0.95;
  //! More failed replications than this fraction fails the experiment.
  double max_failure_rate = 0.01;
  FunctionalParams params;
};

//! sqrt(n)(beta_hat - beta0) against sum psi(z_i) / sqrt(n) over the n grid.
McReport run_linearity(const std::string& functional,
                       const DgpSpec& dgp,
                       const EstimatorConfig& est,
                       const McOptions& mc);

struct LocalOptions
{
  std::vector<double> z{ 0.0 };
  double h = 0.25;
  int deviation_order = 2;
  std::vector<double> c_list{ 0.0, 1.0, 2.0 };
  //! n values for the centering identity, which involves no sampling; the
  //! experiment's own n grid is always included.
  std::vector<double> centering_n{ 1e4, 1e6, 1e8, 1e10 };
};

//! Samples from f_{t_n} = (1 - t_n) f0 + t_n g_z^h with t_n = c / sqrt(n) and
//! standardizes sqrt(n)[beta_hat - beta(F_{t_n})]. One cell per (n, c).
McReport run_local_regularity(const std::string& functional,
                              const DgpSpec& dgp,
                              const EstimatorConfig& est,
                              const LocalOptions& local,
                              const McOptions& mc);

//! Coverage of beta0 by beta_hat +- z_{(1+level)/2} sqrt(v_hat / n) at one n.
McReport run_coverage(const std::string& functional,
                      const DgpSpec& dgp,
                      const EstimatorConfig& est,
                      std::size_t n,
                      int reps,
                      std::uint64_t seed,
                      const FunctionalParams& params = {});

struct BiasRateOptions
{
  std::vector<int> kernel_orders{ 2, 4 };
  std::vector<double> h_grid{ 0.8, 1.0, 1.2, 1.5 };
  std::size_t n = 1000;
  int reps = 400;
  std::uint64_t seed = 1;
  //! Only kernel_bias by quadrature, no sampling.
  bool quadrature_only = false;
  //! Smoothness orders of f0 and psi; 0 means infinitely smooth.
  int s_f = 0;
  int s_psi = 0;
  FunctionalParams params;
};

struct BiasRateSeries
{
  int order = 2;
  std::vector<double> h;
  //! Monte Carlo mean of beta_hat - beta0 - mean psi(z_i) (empty in
  //! quadrature-only mode) and its standard error.
  std::vector<double> bias;
  std::vector<double> se;
  std::vector<double> quadrature_bias;
  double slope = 0.0;            // Monte Carlo (NaN when inconclusive)
  double quadrature_slope = 0.0; // NaN when every value vanishes
  //! min(kernel order, s_psi + s_f).
  double expected_slope = 0.0;
  //! min(kernel order, s_f): the bias order of the density itself.
  double naive_slope = 0.0;
  bool inconclusive = false;
};

struct BiasRateReport
{
  std::string functional;
  std::string dgp;
  std::size_t n = 0;
  int reps = 0;
  bool quadrature_only = false;
  std::vector<BiasRateSeries> series;
  std::vector<std::string> warnings;
};

//! Slope of log |bias| on log h per kernel order. The Monte Carlo bias uses
//! the known psi as a control variate; points within 3 standard errors of
//! zero are dropped and fewer than three remaining points are inconclusive.
BiasRateReport run_bias_rate(const std::string& functional, const DgpSpec& dgp, const BiasRateOptions& opts);

//! Least-squares slope of log |y| on log x.
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

} // namespace infkit
