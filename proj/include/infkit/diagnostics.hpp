#pragma once

#include "infkit/distribution.hpp"
#include "infkit/functionals.hpp"
#include "infkit/kernel.hpp"
#include "infkit/series.hpp"

#include <compare>
#include <optional>
#include <string>
#include <vector>

namespace infkit {

//! Split of beta(F_hat) - beta0 - (1/n) sum psi(z_i) into
//!   R1 = int psi dF_hat - (1/n) sum psi(z_i)
//!   R2 = beta(F_hat) - beta0 - int psi dF_hat
//! with R1 further split into its expectation (bias) and the rest.
struct RemainderReport
{
  std::string branch; // kernel, series or generic
  //! "unconditional" or "x-conditional" (series case).
  std::string conditioning;
  double beta_hat = 0.0;
  double beta0 = 0.0;
  double psi_mean = 0.0;
  double psi_integral = 0.0;
  double r1 = 0.0;
  double r1_bias = 0.0;
  double r1_sto = 0.0;
  double r2 = 0.0;
  double zeta = 2.0;
  //! ||F_hat - F0|| in the functional's norm; NaN when no truth is known.
  double norm_value = 0.0;
  //! r2 / norm^zeta when the norm is positive, else NaN.
  double r2_ratio = 0.0;
  double root_n = 0.0;
  double sqrt_n_r1 = 0.0;
  double sqrt_n_r2 = 0.0;
  //! Expectation parts were computed without a known truth.
  bool estimated = false;
  std::vector<std::string> notes;
};

struct RemainderOptions
{
  //! Data-generating distribution: a density, or a conditional mean with its
  //! x-marginal for the series case.
  std::optional<DistributionRep> truth;
  std::optional<double> beta0;
  //! Kink locations of psi, sorted per coordinate.
  Breakpoints psi_breaks;
  quad::Options opts{ 1e-10 };
};

//! Kernel branch when F_hat is a kernel density estimate, series branch when
//! it is a fitted series regression and beta carries a weight, generic
//! quadrature otherwise. Throws UnsupportedRepresentation when int psi dF_hat
//! cannot be formed.
RemainderReport decompose_remainder(const Functional& beta,
                                    const DistributionRep& F_hat,
                                    const Sample& sample,
                                    const Field& psi,
                                    const RemainderOptions& options = {});

//! rho(t) = int psi(z + t) f0(z) dz.
double convolution(const Field& psi,
                   const DistributionRep& f0,
                   std::span<const double> t,
                   const quad::Options& opts = { 1e-12 });

//! int [rho(h u) - rho(0)] K(u) du. Equals E[psi(z, h)] - E[psi(z)] under f0;
//! the shift-difference is formed inside the inner integral so small biases
//! keep their relative accuracy.
double kernel_bias(const Field& psi,
                   const DistributionRep& f0,
                   const KernelSpec& kernel,
                   double h,
                   const quad::Options& opts = { 1e-13 });

//! E[psi(z, h)] with the kernel integral innermost (the other order).
double smoothed_expectation(const Field& psi,
                            const DistributionRep& f0,
                            const KernelSpec& kernel,
                            double h,
                            const quad::Options& opts = { 1e-12 });

struct EquicontinuityTerm
{
  double value = 0.0;
  double scaled = 0.0; // sqrt(n) value
  //! Kernel: E[{psi(z, h) - psi(z)}^2]. Series: n^-2 sum (dhat - d)^2 Var(q | x).
  double variance_bound = 0.0;
  bool estimated = false;
};

//! (1/n) sum {psi(z_i, h) - E psi(z, h) - [psi(z_i) - E psi(z)]}; the
//! centering of psi matters only when psi is not mean zero under f0. With no
//! f0 the expectations use the kernel estimate of the sample itself.
EquicontinuityTerm kernel_sto_equicontinuity(const Sample& sample,
                                             const Field& psi,
                                             const KernelSpec& kernel,
                                             double h,
                                             const DistributionRep* f0 = nullptr,
                                             const quad::Options& opts = { 1e-11 });

struct SeriesBias
{
  //! Gamma' Sigma_hat^{-1} sum p(x_i) [d0(x_i) - p(x_i)' gamma] / n
  double stochastic = 0.0;
  //! E[delta (p' gamma - d0)]
  double deterministic = 0.0;
  //! -E[(delta - gamma_delta' p)(d0 - p' gamma)], computed separately.
  double deterministic_orthogonal = 0.0;
  Eigen::VectorXd gamma;
  Eigen::VectorXd gamma_delta;
  Eigen::VectorXd Gamma; // E[p delta]
  double min_eigenvalue = 0.0;
};

//! Population moments under the marginal fx over the basis support. `breaks`
//! adds kink locations (band edges of delta) to the basis knots. Throws
//! RankDeficiency for a singular population or sample moment matrix.
SeriesBias series_bias_decompose(const Field& delta,
                                 const Field& d0,
                                 const BasisSpec& basis,
                                 const Field& fx,
                                 const Sample& X,
                                 const Breakpoints& breaks = {},
                                 const quad::Options& opts = { 1e-12 });

//! (1/n) sum [delta_hat(x_i) - delta(x_i)] [q_i - d0(x_i)], with the
//! conditional variance bound from var_q (empty means Var(q | x) = 1).
EquicontinuityTerm series_sto_equicontinuity(const Sample& X,
                                             const Eigen::VectorXd& Q,
                                             const Field& delta_hat,
                                             const Field& delta,
                                             const Field& d0,
                                             const Field& var_q = {});

//! Exact rational number for exponents of n.
struct Rational
{
  long long num = 0;
  long long den = 1;

  Rational() = default;
  Rational(long long n, long long d = 1);
  //! "a", "a/b" or a finite decimal such as "-0.2".
  static Rational parse(const std::string& s);
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const;
};

Rational operator+(Rational a, Rational b);
Rational operator-(Rational a, Rational b);
Rational operator*(Rational a, Rational b);
Rational operator/(Rational a, Rational b);
bool operator==(Rational a, Rational b);
std::strong_ordering operator<=>(Rational a, Rational b);

enum class RateKind
{
  kernel,
  power,
  spline
};

//! Smoothness orders and a tuning rule h = c n^a (kernel) or K = c n^a
//! (series). s_delta = 0 declares delta without an approximation rate (as for
//! a discontinuous weight), which relaxes sqrt(n) c_K^delta c_K -> 0 to
//! sqrt(n) c_K bounded.
struct RateConfig
{
  RateKind kind = RateKind::kernel;
  int r = 1;
  int s_f = 0;
  int s_psi = 0;
  int kernel_order = 0; // 0 means s_f + s_psi
  int s_d = 0;
  int s_delta = 0;
  int spline_order = 2;
  Rational exponent;
  double c = 1.0;

  void validate() const;
};

enum class Limit
{
  to_zero,
  bounded,
  diverges
};
const char* to_string(Limit l);

//! A sequence C n^a (ln n)^b.
struct RateTerm
{
  Rational n_power;
  Rational log_power;
  Limit limit() const;
};

struct RateCondition
{
  std::string name;
  std::string expression;
  bool require_zero = true; // else bounded suffices
  //! Dominant term of the sum.
  RateTerm dominant;
  Limit limit = Limit::to_zero;
  bool pass = false;
};

struct RateReport
{
  std::vector<RateCondition> conditions;
  bool pass = false;
  //! Kernel case: s_psi > r/2, so the bandwidth optimal for f0 also gives
  //! root-n consistency.
  std::optional<bool> plug_in;
};

//! Kernel: h -> 0, sqrt(n) h^{s_f+s_psi} -> 0, kernel order.
//! Power series: c_K = K^{-s_d/r}, l_K = xi_K = K. Splines: c_K =
//! K^{-min(s_d,o)/r}, l_K = 1, xi_K = sqrt(K).
RateReport rate_check(const RateConfig& config);

} // namespace infkit
