#pragma once

#include "infkit/distribution.hpp"
#include "infkit/functionals.hpp"
#include "infkit/gateaux.hpp"
#include "infkit/optimize.hpp"

#include <optional>
#include <string>
#include <vector>

namespace infkit {

//! Moment function m(z, beta, F) of length l for a parameter of length p.
struct MomentModel
{
  std::string id;
  int dim_beta = 1;
  int dim_moments = 1;
  //! n x l matrix with rows m(z_i, beta, F). `own` marks the rows as the
  //! sample F was estimated from, so leave-one-out versions apply.
  std::function<Eigen::MatrixXd(const Sample&, const Eigen::VectorXd&, const DistributionRep&, bool own)>
    moments;
  //! n x l matrix with rows phi(z_i), the influence of mu(F) = E[m(z, beta0, F)].
  //! Empty means phi = 0 (or computed numerically, see GmmInfluenceOptions).
  std::function<Eigen::MatrixXd(const Sample&)> correction_phi;
  bool depends_on_F = false;
  //! m is affine in z_0, so E[m | x] is m at z_0 = E[z_0 | x].
  bool affine_in_first = false;
  //! Closed form (or low-dimensional quadrature) of mu(F_hat) =
  //! E_{F0}[m(z, beta0, F_hat)]; r3_diagnostic prefers it to the generic
  //! integral over z.
  std::function<Eigen::VectorXd(const DistributionRep& F_hat,
                                const DistributionRep& F0,
                                const Eigen::VectorXd& beta0,
                                const quad::Options& opts)>
    population_mean;
  //! Compact parameter box.
  Box bounds;
  std::optional<Eigen::VectorXd> start;
};

struct GmmOptions
{
  MinimizeOptions minimize;
  //! Central-difference step is jacobian_step * max(1, |beta_j|).
  double jacobian_step = 1e-4;
};

struct GmmEstimate
{
  Eigen::VectorXd beta_hat;
  Eigen::MatrixXd W_hat;
  Eigen::MatrixXd M_hat;
  Eigen::VectorXd m_hat;
  //! Centered (1/n) sum (m_i + phi_i)(m_i + phi_i)'.
  Eigen::MatrixXd Omega_hat;
  //! (M'WM)^{-1} M'W Omega W M (M'WM)^{-1}.
  Eigen::MatrixXd V_hat;
  double objective = 0.0;
  std::size_t n = 0;
  bool boundary = false;
  std::vector<std::string> warnings;
};

//! (1/n) sum_i m(z_i, beta, F) over the estimation sample.
Eigen::VectorXd sample_moments(const MomentModel& model,
                               const Sample& sample,
                               const Eigen::VectorXd& beta,
                               const DistributionRep& F);

//! l x p central-difference Jacobian of sample_moments.
Eigen::MatrixXd moment_jacobian(const MomentModel& model,
                                const Sample& sample,
                                const Eigen::VectorXd& beta,
                                const DistributionRep& F,
                                double rel_step = 1e-4);

//! argmin m(beta)' W m(beta) over the model box. An empty W means the
//! identity. Throws InvalidArgument for a W of the wrong shape or one that is
//! not positive semidefinite, RankDeficiency when M'WM is singular.
GmmEstimate gmm_fit(const MomentModel& model,
                    const Sample& sample,
                    const DistributionRep& F_hat,
                    const Eigen::MatrixXd& W = {},
                    const GmmOptions& opts = {});

struct GmmInfluenceOptions
{
  //! Defaults to the estimate.
  std::optional<Eigen::VectorXd> beta0;
  //! Components of mu(F) = E[m(z, beta0, F)]; used through influence_at when
  //! the model has no closed-form phi.
  std::vector<Functional> mu;
  DerivativeLadder ladder;
  std::vector<bool> continuous;
};

//! Rows psi(z_i) = -(M'WM)^{-1} M'W [m(z_i, beta0, F0) + phi(z_i)].
Eigen::MatrixXd gmm_influence(const GmmEstimate& est,
                              const MomentModel& model,
                              const Sample& z,
                              const DistributionRep& F0,
                              const GmmInfluenceOptions& opts = {});

struct R3Report
{
  Eigen::VectorXd value;
  Eigen::VectorXd scaled;
  Eigen::VectorXd mu_hat;
};

//! (1/n) sum {m(z_i, beta0, F_hat) - m(z_i, beta0, F0)} - mu(F_hat), with
//! mu(F_hat) = E[m(z, beta0, F_hat)] under F0 by quadrature. F0 must be a
//! density, or a conditional mean with a marginal when m is affine in z_0;
//! otherwise UnsupportedRepresentation.
R3Report r3_diagnostic(const MomentModel& model,
                       const Sample& sample,
                       const DistributionRep& F_hat,
                       const DistributionRep& F0,
                       const Eigen::VectorXd& beta0,
                       const quad::Options& opts = { 1e-7 });

//! Closed-form pieces of a single-index model E[y | x] = phi(x' theta0),
//! used when moments are evaluated at the truth.
struct SingleIndexTruth
{
  std::function<double(double)> link;
  std::function<double(double)> link_derivative;
  //! E[x_tilde | x' theta0 = v] with x_tilde = (x_2, ..., x_r).
  std::function<Eigen::VectorXd(double)> cond_xtilde;
  //! Density of x' theta0; enables the one-dimensional mu(F_hat).
  std::function<double(double)> index_density;
};

struct MomentParams
{
  SurplusWeight weight;
  //! Surplus truth for phi: marginal of x and d0.
  Field fx;
  std::function<double(std::span<const double>)> d0;
  int regressors = 2;
  std::optional<SingleIndexTruth> index_truth;
  double trim = 0.01;
  //! Half-width of the default parameter box.
  double bound = 10.0;
};

//! Registry ids: mean, mean_overid, surplus_gmm, single_index.
const std::vector<std::string>& moment_model_ids();
MomentModel make_moment_model(const std::string& id, const MomentParams& params = {});

//! mean: m = z - beta. mean_overid: m = (z - beta, z^2 - beta^2 - 1).
MomentModel mean_model(double bound = 10.0);
MomentModel mean_overid_model(double bound = 10.0);
//! m = int W E_F[q | x] dx - beta, phi = delta(x)[q - d0(x)] when fx and d0
//! are given.
MomentModel surplus_gmm_model(SurplusWeight W, Field fx = {}, std::function<double(std::span<const double>)> d0 = {});
//! First-order condition of the single-index least-squares criterion,
//!   m = phi'(v) [x_tilde - E(x_tilde | v)] [y - E(y | v)],  v = x' (1, beta),
//! on z = (y, x). Under an estimate, F_hat must be a kernel density estimate
//! whose sample holds (y, x); its bandwidth is the index bandwidth. Own-sample
//! rows use leave-one-out regressions and the trimming set of the pilot fit.
MomentModel single_index_model(int regressors,
                               std::optional<SingleIndexTruth> truth = std::nullopt,
                               double trim = 0.01,
                               double bound = 5.0);

struct SingleIndexOptions
{
  //! h = c sd(v) n^{-1/5}.
  double bandwidth_c = 1.0;
  double trim = 0.01;
  double bound = 5.0;
  int grid = 201;
};

struct SingleIndexFit
{
  Eigen::VectorXd theta; // (1, beta)
  Eigen::VectorXd beta;
  double bandwidth = 0.0;
  double criterion = 0.0;
  std::vector<bool> keep; // trimming indicator
  bool flat = false;
  std::vector<std::string> warnings;
};

//! Semiparametric least squares on (y, x): minimizes
//! (1/n) sum tau_i [y_i - E_{-i}(y | x_i' theta)]^2 over beta with theta =
//! (1, beta). Trimming drops the observations whose leave-one-out index
//! density at the pilot (least-squares) direction is below the `trim`
//! quantile.
SingleIndexFit single_index_fit(const Sample& sample, const SingleIndexOptions& opts = {});

struct FocCheck
{
  Eigen::VectorXd residual;
  Eigen::VectorXd sd;
  Eigen::VectorXd band; // 3 sd / sqrt(n)
  bool within = true;
};

//! Sample first-order condition at the fitted theta.
FocCheck single_index_foc_check(const SingleIndexFit& fit, const Sample& sample);
//! Same at an arbitrary beta, with the fit's bandwidth and trimming.
FocCheck single_index_foc_check(const SingleIndexFit& fit, const Sample& sample, const Eigen::VectorXd& beta);

} // namespace infkit
