#include "infkit/gateaux.hpp"

#include "infkit/errors.hpp"
#include "infkit/parallel.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace infkit {

void
DerivativeLadder::validate() const
{
  if (h.size() < 3)
    throw InvalidArgument("derivative ladder needs at least 3 levels, got " +
                          std::to_string(h.size()));
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (!(h[k] > 0.0) || !std::isfinite(h[k]))
      throw InvalidArgument("derivative ladder: h values must be positive");
    if (k > 0 && !(h[k] < h[k - 1]))
      throw InvalidArgument("derivative ladder: h values must be strictly decreasing");
  }
  if (!(t_step > 0.0 && t_step < 0.5))
    throw InvalidArgument("derivative ladder: t_step must lie in (0, 0.5)");
  for (double s : scale)
    if (!(s > 0.0) || !std::isfinite(s))
      throw InvalidArgument("derivative ladder: scale factors must be positive");
}

PathDerivative
path_derivative_full(const Functional& beta,
                     const DistributionRep& base,
                     std::shared_ptr<const Deviation> dev,
                     double t_step,
                     const quad::Options& opts)
{
  if (!(t_step > 0.0 && t_step < 0.5))
    throw InvalidArgument("path_derivative: t_step must lie in (0, 0.5)");
  if (!dev)
    throw InvalidArgument("path_derivative: null deviation");
  // The stencil is exact when beta is at most quadratic along the path; a
  // large step then keeps rounding in the differences small. Otherwise keep
  // t g small next to the base so the path stays in its Taylor regime.
  const bool exact = beta.t_degree >= 1 && beta.t_degree <= 2;
  const double t = exact ? 0.25 : t_step / std::max(1.0, dev->peak());
  DistributionRep F1 = mix(base, dev, t);
  DistributionRep F2 = mix(base, dev, 2.0 * t);

  if (beta.integrand) {
    auto a = beta.integrand(base);
    auto b = a ? beta.integrand(F1) : std::nullopt;
    auto c = b ? beta.integrand(F2) : std::nullopt;
    if (a && b && c) {
      Box region = a->region.hull(b->region).hull(c->region);
      Breakpoints bk = quad::merge(quad::merge(a->breaks, b->breaks), c->breaks);
      auto stencil = [&](std::span<const double> x) {
        double l0 = a->L(x);
        return (4.0 * (b->L(x) - l0) - (c->L(x) - l0)) / (2.0 * t);
      };
      quad::Options o = opts;
      if (!exact) {
        // rounding in L is amplified by 1/t; a tolerance below that floor
        // only exhausts the evaluation budget
        const double b0 = std::abs(beta(base));
        o.abs_tol = std::max(o.abs_tol, 100.0 * std::numeric_limits<double>::epsilon() * b0 / t);
      }
      double v = quad::integrate_checked(stencil, region, o, bk, "path derivative");
      return { v, t, true };
    }
  }
  double b0 = beta(base), b1 = beta(F1), b2 = beta(F2);
  return { (4.0 * (b1 - b0) - (b2 - b0)) / (2.0 * t), t, false };
}

double
path_derivative(const Functional& beta,
                const DistributionRep& base,
                std::shared_ptr<const Deviation> dev,
                double t_step,
                const quad::Options& opts)
{
  return path_derivative_full(beta, base, std::move(dev), t_step, opts).value;
}

const char*
to_string(LimitStatus s)
{
  switch (s) {
    case LimitStatus::converged:
      return "converged";
    case LimitStatus::no_limit:
      return "no_limit";
    case LimitStatus::failed:
      return "failed";
  }
  return "unknown";
}

InfluencePoint
influence_at(const Functional& beta,
             const DistributionRep& base,
             std::span<const double> z,
             const DerivativeLadder& ladder,
             const std::vector<bool>& continuous,
             const KernelSpec& kernel)
{
  ladder.validate();
  const std::size_t r = z.size();
  if (!ladder.scale.empty() && ladder.scale.size() != r)
    throw InvalidArgument("derivative ladder: scale has the wrong length");

  InfluencePoint out;
  std::vector<double> loc(z.begin(), z.end());
  for (double hk : ladder.h) {
    std::vector<double> hv(r, hk);
    for (std::size_t c = 0; c < ladder.scale.size(); ++c)
      hv[c] *= ladder.scale[c];
    auto dev = std::make_shared<const Deviation>(make_deviation(loc, hv, kernel, continuous));
    out.mu.push_back(path_derivative(beta, base, dev, ladder.t_step));
    out.h.push_back(hv[0]);
  }

  const std::size_t K = out.mu.size();
  double last = out.mu[K - 1], prev = out.mu[K - 2];
  out.diagnostic = std::abs(last - prev);
  if (ladder.extrapolation == Extrapolation::richardson) {
    double rho = std::pow(ladder.h[K - 1] / ladder.h[K - 2], 2);
    out.psi = (last - rho * prev) / (1.0 - rho);
  } else {
    out.psi = last;
  }

  double before = std::abs(prev - out.mu[K - 3]);
  double floor = 1e-8 * std::max(1.0, std::abs(last));
  if (!std::isfinite(out.psi)) {
    out.status = LimitStatus::failed;
    out.message = "non-finite derivative on the ladder";
  } else if (out.diagnostic > before && out.diagnostic > floor) {
    out.status = LimitStatus::no_limit;
    std::ostringstream msg;
    msg << "ladder differences grow (" << before << " then " << out.diagnostic << ")";
    out.message = msg.str();
  }
  return out;
}

InfluenceTable
influence_table(const Functional& beta,
                const DistributionRep& base,
                const Sample& sample,
                const DerivativeLadder& ladder,
                const std::vector<bool>& continuous,
                const KernelSpec& kernel)
{
  ladder.validate();
  const std::size_t n = static_cast<std::size_t>(sample.rows());
  if (n == 0)
    throw InsufficientData("influence table needs at least one observation");
  InfluenceTable tab;
  tab.points.resize(n);
  parallel_for(n, [&](std::size_t i) {
    try {
      tab.points[i] =
        influence_at(beta, base, row(sample, static_cast<Eigen::Index>(i)), ladder, continuous, kernel);
    } catch (const Error& e) {
      tab.points[i].status = LimitStatus::failed;
      tab.points[i].psi = std::numeric_limits<double>::quiet_NaN();
      tab.points[i].message = e.what();
    }
  });

  tab.psi.resize(static_cast<Eigen::Index>(n));
  double s = 0.0, s2 = 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = tab.points[i];
    tab.psi(static_cast<Eigen::Index>(i)) = p.psi;
    if (p.status == LimitStatus::failed) {
      ++tab.failures;
      continue;
    }
    if (p.status == LimitStatus::no_limit)
      ++tab.no_limit;
    s += p.psi;
    s2 += p.psi * p.psi;
    ++ok;
  }
  if (static_cast<double>(tab.failures) > 0.05 * static_cast<double>(n)) {
    std::ostringstream msg;
    msg << "influence table: " << tab.failures << " of " << n << " points failed";
    for (const auto& p : tab.points)
      if (p.status == LimitStatus::failed) {
        msg << " (first: " << p.message << ")";
        break;
      }
    throw NumericFailure(msg.str());
  }
  if (ok > 0) {
    tab.mean = s / static_cast<double>(ok);
    tab.second_moment = s2 / static_cast<double>(ok);
    tab.V_hat = std::max(0.0, tab.second_moment - tab.mean * tab.mean);
  }
  return tab;
}

} // namespace infkit
