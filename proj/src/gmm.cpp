#include "infkit/gmm.hpp"

#include "infkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>

namespace infkit {

namespace {

Eigen::VectorXd
col_means(const Eigen::MatrixXd& m)
{
  return m.colwise().mean().transpose();
}

void
check_psd(const Eigen::MatrixXd& W, int l)
{
  if (W.rows() != l || W.cols() != l)
    throw InvalidArgument("gmm: weighting matrix must be " + std::to_string(l) + " x " + std::to_string(l));
  if (!W.isApprox(W.transpose(), 1e-12))
    throw InvalidArgument("gmm: weighting matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(W, Eigen::EigenvaluesOnly);
  if (es.eigenvalues()(0) < -1e-12 * std::max(1.0, std::abs(es.eigenvalues()(l - 1))))
    throw InvalidArgument("gmm: weighting matrix must be positive semidefinite");
}

// Nadaraya-Watson regression of y and x_tilde on a scalar index with the
// Epanechnikov kernel, including the derivative of E(y | v).
class IndexRegression
{
public:
  IndexRegression(Eigen::VectorXd v, const Eigen::VectorXd& y, const Eigen::MatrixXd& xt, double h)
    : v_(std::move(v))
    , y_(y)
    , xt_(xt)
    , h_(h)
    , order_(static_cast<std::size_t>(v_.size()))
  {
    std::iota(order_.begin(), order_.end(), Eigen::Index{ 0 });
    std::stable_sort(order_.begin(), order_.end(), [&](Eigen::Index a, Eigen::Index b) { return v_(a) < v_(b); });
    sorted_.reserve(order_.size());
    for (auto i : order_)
      sorted_.push_back(v_(i));
  }

  struct Value
  {
    double dens = 0.0;
    double m = 0.0;
    double dm = 0.0;
    Eigen::VectorXd ex;
    bool ok = false;
  };

  Value at(double v, Eigen::Index exclude = -1) const
  {
    Value out;
    out.ex = Eigen::VectorXd::Zero(xt_.cols());
    double B = 0, dB = 0, A = 0, dA = 0;
    auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), v - h_);
    auto hi = std::upper_bound(sorted_.begin(), sorted_.end(), v + h_);
    for (auto it = lo; it != hi; ++it) {
      Eigen::Index j = order_[static_cast<std::size_t>(it - sorted_.begin())];
      if (j == exclude)
        continue;
      double u = (v - v_(j)) / h_;
      if (std::abs(u) >= 1.0)
        continue;
      double k = 0.75 * (1.0 - u * u);
      double dk = -1.5 * u / h_;
      B += k;
      dB += dk;
      A += y_(j) * k;
      dA += y_(j) * dk;
      out.ex += k * xt_.row(j).transpose();
    }
    const double n = static_cast<double>(v_.size() - (exclude >= 0 ? 1 : 0));
    out.dens = B / (n * h_);
    if (B > 0.0) {
      out.ok = true;
      out.m = A / B;
      out.dm = (dA * B - A * dB) / (B * B);
      out.ex /= B;
    }
    return out;
  }

private:
  Eigen::VectorXd v_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd xt_;
  double h_;
  std::vector<Eigen::Index> order_;
  std::vector<double> sorted_;
};

struct IndexData
{
  Eigen::VectorXd y;
  Eigen::MatrixXd x;
};

IndexData
split_index_sample(const Sample& s, int regressors)
{
  if (s.cols() != regressors + 1)
    throw InvalidArgument("single index: sample must hold (y, x) with " + std::to_string(regressors) +
                          " regressors, got " + std::to_string(s.cols()) + " columns");
  return { s.col(0), s.rightCols(regressors) };
}

Eigen::VectorXd
theta_of(const Eigen::VectorXd& beta)
{
  Eigen::VectorXd t(beta.size() + 1);
  t(0) = 1.0;
  t.tail(beta.size()) = beta;
  return t;
}

double
stddev(const Eigen::VectorXd& v)
{
  double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(std::max<Eigen::Index>(1, v.size() - 1)));
}

//! Least-squares direction normalized on the first regressor.
Eigen::VectorXd
pilot_theta(const IndexData& d, std::vector<std::string>* warnings)
{
  const Eigen::Index n = d.x.rows(), r = d.x.cols();
  Eigen::MatrixXd A(n, r + 1);
  A.col(0).setOnes();
  A.rightCols(r) = d.x;
  Eigen::VectorXd b = A.colPivHouseholderQr().solve(d.y).tail(r);
  if (std::abs(b(0)) <= 1e-8 * b.norm() || !b.allFinite()) {
    if (warnings)
      warnings->push_back("pilot least-squares slope on the first regressor is zero; pilot direction e1 used");
    Eigen::VectorXd t = Eigen::VectorXd::Zero(r);
    t(0) = 1.0;
    return t;
  }
  return b / b(0);
}

std::vector<bool>
trimming_set(const IndexData& d, const Eigen::VectorXd& theta, double h, double q)
{
  const Eigen::Index n = d.x.rows();
  Eigen::VectorXd v = d.x * theta;
  IndexRegression reg(v, d.y, Eigen::MatrixXd::Zero(n, 0), h);
  std::vector<double> dens(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    dens[static_cast<std::size_t>(i)] = reg.at(v(i), i).dens;
  std::vector<double> tmp = dens;
  auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(n - 1)));
  std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(k), tmp.end());
  double cut = tmp[k];
  std::vector<bool> keep(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < keep.size(); ++i)
    keep[i] = dens[i] > 0.0 && (q <= 0.0 || dens[i] >= cut);
  return keep;
}

double
rule_bandwidth(const Eigen::VectorXd& v, double c)
{
  double s = stddev(v);
  if (!(s > 0.0))
    throw NumericFailure("single index: the index has zero spread");
  return c * s * std::pow(static_cast<double>(v.size()), -0.2);
}

//! n x p FOC summands with leave-one-out regressions; rows outside `keep`
//! (or without neighbours) are zero.
Eigen::MatrixXd
foc_terms(const IndexData& d, const Eigen::VectorXd& beta, double h, const std::vector<bool>& keep)
{
  const Eigen::Index n = d.x.rows(), p = beta.size();
  Eigen::VectorXd v = d.x * theta_of(beta);
  Eigen::MatrixXd xt = d.x.rightCols(p);
  IndexRegression reg(v, d.y, xt, h);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!keep[static_cast<std::size_t>(i)])
      continue;
    auto e = reg.at(v(i), i);
    if (!e.ok)
      continue;
    out.row(i) = (e.dm * (xt.row(i).transpose() - e.ex) * (d.y(i) - e.m)).transpose();
  }
  return out;
}

Sample
one_row(std::span<const double> z)
{
  Sample s(1, static_cast<Eigen::Index>(z.size()));
  for (std::size_t c = 0; c < z.size(); ++c)
    s(0, static_cast<Eigen::Index>(c)) = z[c];
  return s;
}

} // namespace

Eigen::VectorXd
sample_moments(const MomentModel& model, const Sample& sample, const Eigen::VectorXd& beta, const DistributionRep& F)
{
  Eigen::MatrixXd m = model.moments(sample, beta, F, true);
  if (m.rows() != sample.rows() || m.cols() != model.dim_moments)
    throw NumericFailure("moment model '" + model.id + "' returned a matrix of the wrong shape");
  return col_means(m);
}

Eigen::MatrixXd
moment_jacobian(const MomentModel& model,
                const Sample& sample,
                const Eigen::VectorXd& beta,
                const DistributionRep& F,
                double rel_step)
{
  Eigen::MatrixXd M(model.dim_moments, beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    double step = rel_step * std::max(1.0, std::abs(beta(j)));
    Eigen::VectorXd up = beta, dn = beta;
    up(j) += step;
    dn(j) -= step;
    M.col(j) = (sample_moments(model, sample, up, F) - sample_moments(model, sample, dn, F)) / (2.0 * step);
  }
  return M;
}

GmmEstimate
gmm_fit(const MomentModel& model,
        const Sample& sample,
        const DistributionRep& F_hat,
        const Eigen::MatrixXd& W,
        const GmmOptions& opts)
{
  const int l = model.dim_moments, p = model.dim_beta;
  if (p > l)
    throw InvalidArgument("gmm: more parameters than moments");
  if (sample.rows() < 2)
    throw InsufficientData("gmm: need at least two observations");
  if (model.bounds.dim() != p)
    throw InvalidArgument("gmm: parameter box has the wrong dimension");
  GmmEstimate est;
  est.n = static_cast<std::size_t>(sample.rows());
  est.W_hat = W.size() == 0 ? Eigen::MatrixXd::Identity(l, l) : W;
  check_psd(est.W_hat, l);

  Objective q = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd m = sample_moments(model, sample, b, F_hat);
    return m.dot(est.W_hat * m);
  };
  auto res = minimize_in_box(q, model.bounds, opts.minimize, model.start);
  est.beta_hat = res.x;
  est.objective = res.value;
  est.boundary = res.on_boundary;
  if (res.on_boundary)
    est.warnings.push_back("boundary solution: the minimum lies on the parameter box");
  if (!res.converged)
    est.warnings.push_back("simplex search stopped at the iteration limit");

  est.m_hat = sample_moments(model, sample, est.beta_hat, F_hat);
  est.M_hat = moment_jacobian(model, sample, est.beta_hat, F_hat, opts.jacobian_step);
  Eigen::MatrixXd H = est.M_hat.transpose() * est.W_hat * est.M_hat;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
  double lo = es.eigenvalues()(0), hi = es.eigenvalues()(p - 1);
  if (!(lo > 1e-12 * std::max(1.0, hi)))
    throw RankDeficiency("gmm: M'WM is singular at the estimate", lo);

  Eigen::MatrixXd U = model.moments(sample, est.beta_hat, F_hat, true);
  if (model.correction_phi)
    U += model.correction_phi(sample);
  Eigen::MatrixXd C = U.rowwise() - U.colwise().mean();
  est.Omega_hat = C.transpose() * C / static_cast<double>(sample.rows());
  Eigen::MatrixXd A = H.ldlt().solve(est.M_hat.transpose() * est.W_hat);
  est.V_hat = A * est.Omega_hat * A.transpose();
  est.V_hat = 0.5 * (est.V_hat + est.V_hat.transpose());
  return est;
}

Eigen::MatrixXd
gmm_influence(const GmmEstimate& est,
              const MomentModel& model,
              const Sample& z,
              const DistributionRep& F0,
              const GmmInfluenceOptions& opts)
{
  const Eigen::VectorXd beta0 = opts.beta0.value_or(est.beta_hat);
  Eigen::MatrixXd H = est.M_hat.transpose() * est.W_hat * est.M_hat;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues()(0) > 1e-12 * std::max(1.0, es.eigenvalues()(H.rows() - 1))))
    throw RankDeficiency("gmm_influence: M'WM is singular", es.eigenvalues()(0));
  Eigen::MatrixXd A = H.ldlt().solve(est.M_hat.transpose() * est.W_hat);

  Eigen::MatrixXd U = model.moments(z, beta0, F0, false);
  if (model.correction_phi) {
    U += model.correction_phi(z);
  } else if (!opts.mu.empty()) {
    if (static_cast<int>(opts.mu.size()) != model.dim_moments)
      throw InvalidArgument("gmm_influence: need one mu functional per moment");
    for (Eigen::Index i = 0; i < z.rows(); ++i)
      for (int k = 0; k < model.dim_moments; ++k)
        U(i, k) += influence_at(opts.mu[static_cast<std::size_t>(k)], F0, row(z, i), opts.ladder, opts.continuous)
                     .psi;
  }
  return -(U * A.transpose());
}

R3Report
r3_diagnostic(const MomentModel& model,
              const Sample& sample,
              const DistributionRep& F_hat,
              const DistributionRep& F0,
              const Eigen::VectorXd& beta0,
              const quad::Options& opts)
{
  const int l = model.dim_moments;
  R3Report rep;
  rep.value = Eigen::VectorXd::Zero(l);
  rep.scaled = Eigen::VectorXd::Zero(l);
  rep.mu_hat = Eigen::VectorXd::Zero(l);
  if (!model.depends_on_F)
    return rep;

  auto point = [&](std::span<const double> z, Eigen::Ref<Eigen::VectorXd> out) {
    out = model.moments(one_row(z), beta0, F_hat, false).row(0).transpose();
  };
  if (model.population_mean) {
    rep.mu_hat = model.population_mean(F_hat, F0, beta0, opts);
  } else if (has_density(F0)) {
    Eigen::VectorXd buf(l);
    rep.mu_hat = quad::integrate_vector_checked(
      [&](std::span<const double> z, Eigen::Ref<Eigen::VectorXd> out) {
        double f = density(F0, z);
        if (f == 0.0) {
          out.setZero();
          return;
        }
        point(z, buf);
        out = f * buf;
      },
      l, support(F0), opts, breakpoints(F0), "mu(F_hat)");
  } else if (const auto* cm = F0.get<CondMean>(); cm && cm->fx && model.affine_in_first) {
    const int r = cm->x_support.dim();
    std::vector<double> z(static_cast<std::size_t>(r + 1));
    Eigen::VectorXd buf(l);
    rep.mu_hat = quad::integrate_vector_checked(
      [&](std::span<const double> x, Eigen::Ref<Eigen::VectorXd> out) {
        double f = cm->fx(x);
        if (f == 0.0) {
          out.setZero();
          return;
        }
        z[0] = cm->d(x);
        std::copy(x.begin(), x.end(), z.begin() + 1);
        point(z, buf);
        out = f * buf;
      },
      l, cm->x_support, opts, cm->breaks, "mu(F_hat)");
  } else {
    throw UnsupportedRepresentation("r3_diagnostic needs a known data-generating distribution; got a " +
                                    describe(F0));
  }
  Eigen::VectorXd a = col_means(model.moments(sample, beta0, F_hat, true));
  Eigen::VectorXd b = col_means(model.moments(sample, beta0, F0, false));
  rep.value = a - b - rep.mu_hat;
  rep.scaled = std::sqrt(static_cast<double>(sample.rows())) * rep.value;
  return rep;
}

// ------------------------------------------------------------- registry

MomentModel
mean_model(double bound)
{
  MomentModel m;
  m.id = "mean";
  m.moments = [](const Sample& s, const Eigen::VectorXd& b, const DistributionRep&, bool) {
    return Eigen::MatrixXd(s.col(0).array() - b(0));
  };
  m.bounds = Box::cube(1, -bound, bound);
  return m;
}

MomentModel
mean_overid_model(double bound)
{
  MomentModel m;
  m.id = "mean_overid";
  m.dim_moments = 2;
  m.moments = [](const Sample& s, const Eigen::VectorXd& b, const DistributionRep&, bool) {
    Eigen::MatrixXd out(s.rows(), 2);
    out.col(0) = s.col(0).array() - b(0);
    out.col(1) = s.col(0).array().square() - b(0) * b(0) - 1.0;
    return out;
  };
  m.bounds = Box::cube(1, -bound, bound);
  return m;
}

MomentModel
surplus_gmm_model(SurplusWeight W, Field fx, std::function<double(std::span<const double>)> d0)
{
  W.validate();
  MomentModel m;
  m.id = "surplus_gmm";
  m.depends_on_F = true;
  m.affine_in_first = true;
  // the value does not depend on beta; keep it for the fitted series the
  // optimizer keeps asking about
  struct Cache
  {
    std::mutex mu;
    std::shared_ptr<const SeriesEstimate> series;
    double value = 0.0;
  };
  auto cache = std::make_shared<Cache>();
  m.moments = [W, cache](const Sample& s, const Eigen::VectorXd& b, const DistributionRep& F, bool) {
    const auto* cm = F.get<CondMean>();
    double v;
    if (cm && cm->series) {
      std::lock_guard lock(cache->mu);
      if (cache->series != cm->series) {
        cache->value = surplus_value(F, W);
        cache->series = cm->series;
      }
      v = cache->value;
    } else {
      v = surplus_value(F, W);
    }
    return Eigen::MatrixXd(Eigen::MatrixXd::Constant(s.rows(), 1, v - b(0)));
  };
  if (fx && d0) {
    Field psi = surplus_psi(W, fx, d0);
    m.correction_phi = [psi](const Sample& s) {
      Eigen::MatrixXd out(s.rows(), 1);
      for (Eigen::Index i = 0; i < s.rows(); ++i)
        out(i, 0) = psi(row(s, i));
      return out;
    };
  }
  m.bounds = Box::cube(1, -1e3, 1e3);
  return m;
}

MomentModel
single_index_model(int regressors, std::optional<SingleIndexTruth> truth, double trim, double bound)
{
  if (regressors < 2)
    throw InvalidArgument("single index: need at least two regressors");
  MomentModel m;
  m.id = "single_index";
  m.dim_beta = regressors - 1;
  m.dim_moments = regressors - 1;
  m.depends_on_F = true;
  m.affine_in_first = true;
  m.bounds = Box::cube(regressors - 1, -bound, bound);
  m.moments = [regressors, truth, trim](const Sample& s, const Eigen::VectorXd& b, const DistributionRep& F,
                                        bool own) -> Eigen::MatrixXd {
    const Eigen::Index p = b.size();
    IndexData d = split_index_sample(s, regressors);
    if (const auto* kd = F.get<KdeDensity>()) {
      IndexData ref = split_index_sample(kd->est->sample(), regressors);
      const double h = kd->est->bandwidth();
      if (own) {
        if (ref.x.rows() != d.x.rows())
          throw InvalidArgument("single index: own-sample moments need the estimation sample");
        auto keep = trimming_set(ref, pilot_theta(ref, nullptr), h, trim);
        return foc_terms(ref, b, h, keep);
      }
      Eigen::VectorXd vr = ref.x * theta_of(b);
      Eigen::MatrixXd xt = ref.x.rightCols(p);
      IndexRegression reg(vr, ref.y, xt, h);
      Eigen::VectorXd v = d.x * theta_of(b);
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(s.rows(), p);
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        auto e = reg.at(v(i));
        if (e.ok)
          out.row(i) = (e.dm * (d.x.row(i).tail(p).transpose() - e.ex) * (d.y(i) - e.m)).transpose();
      }
      return out;
    }
    if (F.get<CondMean>() && truth) {
      Eigen::VectorXd v = d.x * theta_of(b);
      Eigen::MatrixXd out(s.rows(), p);
      for (Eigen::Index i = 0; i < s.rows(); ++i)
        out.row(i) = (truth->link_derivative(v(i)) * (d.x.row(i).tail(p).transpose() - truth->cond_xtilde(v(i))) *
                      (d.y(i) - truth->link(v(i))))
                       .transpose();
      return out;
    }
    throw UnsupportedRepresentation("single index moments need a kernel estimate of (y, x) or the declared truth; "
                                    "got a " +
                                    describe(F));
  };
  if (truth && truth->index_density) {
    // at beta0 = the truth, z_0 = link(v) and E[x_tilde | v] is known, so
    // mu(F_hat) reduces to an integral over the index
    m.population_mean = [regressors, truth](const DistributionRep& F_hat, const DistributionRep& F0,
                                            const Eigen::VectorXd& b, const quad::Options& opts) {
      const auto* kd = F_hat.get<KdeDensity>();
      if (!kd || !F0.get<CondMean>())
        throw UnsupportedRepresentation("single index mu(F_hat) needs a kernel estimate and the declared truth");
      const Eigen::Index p = b.size();
      IndexData ref = split_index_sample(kd->est->sample(), regressors);
      const double h = kd->est->bandwidth();
      Eigen::VectorXd vr = ref.x * theta_of(b);
      IndexRegression reg(vr, ref.y, ref.x.rightCols(p), h);
      std::vector<double> br;
      br.reserve(static_cast<std::size_t>(2 * vr.size()));
      for (double v : vr) {
        br.push_back(v - h);
        br.push_back(v + h);
      }
      std::sort(br.begin(), br.end());
      br.erase(std::unique(br.begin(), br.end()), br.end());
      const double lo = br.front(), hi = br.back();
      return quad::integrate_vector_checked(
        [&](std::span<const double> t, Eigen::Ref<Eigen::VectorXd> out) {
          const double v = t[0];
          auto e = reg.at(v);
          if (!e.ok) {
            out.setZero();
            return;
          }
          out = truth->index_density(v) * e.dm * (truth->cond_xtilde(v) - e.ex) * (truth->link(v) - e.m);
        },
        static_cast<int>(p), Box::cube(1, lo, hi), opts, { br }, "single index mu(F_hat)");
    };
  }
  return m;
}

const std::vector<std::string>&
moment_model_ids()
{
  static const std::vector<std::string> ids{ "mean", "mean_overid", "surplus_gmm", "single_index" };
  return ids;
}

MomentModel
make_moment_model(const std::string& id, const MomentParams& p)
{
  if (id == "mean")
    return mean_model(p.bound);
  if (id == "mean_overid")
    return mean_overid_model(p.bound);
  if (id == "surplus_gmm")
    return surplus_gmm_model(p.weight, p.fx, p.d0);
  if (id == "single_index")
    return single_index_model(p.regressors, p.index_truth, p.trim, std::min(p.bound, 5.0));
  std::string known;
  for (const auto& k : moment_model_ids())
    known += (known.empty() ? "" : ", ") + k;
  throw InvalidArgument("unknown moment model '" + id + "' (registered: " + known + ")");
}

// ---------------------------------------------------------- single index

SingleIndexFit
single_index_fit(const Sample& sample, const SingleIndexOptions& opts)
{
  const int r = static_cast<int>(sample.cols()) - 1;
  if (r < 2)
    throw InvalidArgument("single_index_fit: need (y, x) with at least two regressors");
  if (sample.rows() < 10)
    throw InsufficientData("single_index_fit: need at least 10 observations");
  if (!(opts.bandwidth_c > 0.0) || !(opts.trim >= 0.0 && opts.trim < 0.5) || !(opts.bound > 0.0) || opts.grid < 3)
    throw InvalidArgument("single_index_fit: invalid options");
  const int p = r - 1;
  IndexData d = split_index_sample(sample, r);
  const Eigen::Index n = d.x.rows();

  SingleIndexFit fit;
  Eigen::VectorXd pilot = pilot_theta(d, &fit.warnings);
  fit.keep = trimming_set(d, pilot, rule_bandwidth(d.x * pilot, opts.bandwidth_c), opts.trim);
  const double ybar = d.y.mean();

  auto criterion = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd v = d.x * theta_of(b);
    IndexRegression reg(v, d.y, Eigen::MatrixXd::Zero(n, 0), rule_bandwidth(v, opts.bandwidth_c));
    double s = 0.0;
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!fit.keep[static_cast<std::size_t>(i)])
        continue;
      auto e = reg.at(v(i), i);
      double res = d.y(i) - (e.ok ? e.m : ybar);
      s += res * res;
      ++k;
    }
    return s / static_cast<double>(std::max<std::size_t>(1, k));
  };

  // grid: opts.grid points on one coordinate, fewer per coordinate beyond
  int g = opts.grid;
  if (p > 1)
    g = std::max(5, static_cast<int>(std::round(std::pow(20000.0, 1.0 / p))));
  g = std::min(g, opts.grid);
  Eigen::VectorXd best(p), cur(p);
  double fbest = std::numeric_limits<double>::infinity(), fworst = -fbest;
  std::vector<int> idx(static_cast<std::size_t>(p), 0);
  for (;;) {
    for (int j = 0; j < p; ++j)
      cur(j) = -opts.bound + 2.0 * opts.bound * idx[static_cast<std::size_t>(j)] / (g - 1);
    double f = criterion(cur);
    if (f < fbest) {
      fbest = f;
      best = cur;
    }
    fworst = std::max(fworst, f);
    int j = 0;
    while (j < p && ++idx[static_cast<std::size_t>(j)] == g)
      idx[static_cast<std::size_t>(j++)] = 0;
    if (j == p)
      break;
  }
  if (fworst - fbest <= 1e-10 * std::max(1.0, std::abs(fworst))) {
    fit.flat = true;
    fit.warnings.push_back("non-identification: the criterion is flat over the parameter box");
  }

  MinimizeOptions mo;
  mo.starts = 1;
  mo.initial_step = 1.0 / (g - 1);
  mo.size_tol = 1e-9;
  auto res = minimize_in_box(criterion, Box::cube(p, -opts.bound, opts.bound), mo, best);
  if (res.value > fbest) {
    res.x = best;
    res.value = fbest;
  }
  if (res.on_boundary)
    fit.warnings.push_back("boundary solution: beta lies on the search box");
  fit.beta = res.x;
  fit.theta = theta_of(res.x);
  fit.criterion = res.value;
  fit.bandwidth = rule_bandwidth(d.x * fit.theta, opts.bandwidth_c);
  return fit;
}

FocCheck
single_index_foc_check(const SingleIndexFit& fit, const Sample& sample, const Eigen::VectorXd& beta)
{
  const int r = static_cast<int>(sample.cols()) - 1;
  IndexData d = split_index_sample(sample, r);
  if (static_cast<Eigen::Index>(fit.keep.size()) != d.x.rows() || beta.size() != r - 1)
    throw InvalidArgument("single_index_foc_check: fit does not match the sample");
  Eigen::MatrixXd T = foc_terms(d, beta, fit.bandwidth, fit.keep);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < T.rows(); ++i)
    if (fit.keep[static_cast<std::size_t>(i)])
      rows.push_back(i);
  const double k = static_cast<double>(rows.size());
  Eigen::MatrixXd K = T(rows, Eigen::all);
  FocCheck out;
  out.residual = col_means(K);
  Eigen::MatrixXd C = K.rowwise() - out.residual.transpose();
  out.sd = (C.array().square().colwise().sum() / std::max(1.0, k - 1.0)).sqrt().transpose();
  out.band = 3.0 * out.sd / std::sqrt(k);
  out.within = (out.residual.array().abs() <= out.band.array()).all();
  return out;
}

FocCheck
single_index_foc_check(const SingleIndexFit& fit, const Sample& sample)
{
  return single_index_foc_check(fit, sample, fit.beta);
}

} // namespace infkit
