#include "infkit/distribution.hpp"

#include "infkit/errors.hpp"

#include <cmath>
#include <sstream>

namespace infkit {

int
Deviation::continuous_dim() const
{
  int k = 0;
  for (bool c : continuous)
    k += c ? 1 : 0;
  return k;
}

double
Deviation::weight(std::span<const double> pt) const
{
  double w = 1.0;
  for (int c = 0; c < dim() && w != 0.0; ++c) {
    if (continuous[c])
      w *= kernel((pt[c] - z[c]) / h[c]) / h[c];
  }
  return w;
}

double
Deviation::peak() const
{
  double p = 1.0;
  for (int c = 0; c < dim(); ++c) {
    if (continuous[c])
      p *= kernel(0.0) / h[c];
  }
  return p;
}

Box
Deviation::support() const
{
  Box b;
  for (int c = 0; c < dim(); ++c) {
    double w = continuous[c] ? h[c] : 0.0;
    b.lower.push_back(z[c] - w);
    b.upper.push_back(z[c] + w);
  }
  return b;
}

Breakpoints
Deviation::breakpoints() const
{
  Breakpoints out(dim());
  for (int c = 0; c < dim(); ++c) {
    if (continuous[c])
      out[c] = { z[c] - h[c], z[c], z[c] + h[c] };
  }
  return out;
}

double
Deviation::expectation(const Field& psi, const quad::Options& opts) const
{
  std::vector<int> cont;
  for (int c = 0; c < dim(); ++c)
    if (continuous[c])
      cont.push_back(c);
  if (cont.empty())
    return psi(z);
  std::vector<double> pt = z;
  auto f = [&](std::span<const double> u) {
    double w = 1.0;
    for (std::size_t k = 0; k < cont.size(); ++k) {
      int c = cont[k];
      pt[c] = z[c] + h[c] * u[k];
      w *= kernel(u[k]);
    }
    return w == 0.0 ? 0.0 : w * psi(pt);
  };
  Breakpoints bk(cont.size(), std::vector<double>{ 0.0 });
  return quad::integrate_checked(f, Box::cube(static_cast<int>(cont.size()), -1.0, 1.0), opts,
                                 bk, "expectation under the deviation");
}

Deviation
make_deviation(std::vector<double> z,
               std::vector<double> h,
               const KernelSpec& kernel,
               std::vector<bool> continuous)
{
  const std::size_t r = z.size();
  if (r == 0)
    throw InvalidArgument("deviation: empty location");
  if (continuous.empty())
    continuous.assign(r, true);
  if (continuous.size() != r)
    throw InvalidArgument("deviation: continuous mask has the wrong length");
  if (h.size() == 1 && r > 1)
    h.assign(r, h[0]);
  if (h.size() != r)
    throw InvalidArgument("deviation: bandwidth vector has the wrong length");
  for (std::size_t c = 0; c < r; ++c) {
    if (continuous[c] && !(h[c] > 0.0 && std::isfinite(h[c])))
      throw InvalidArgument("deviation: bandwidth must be positive");
    if (!std::isfinite(z[c]))
      throw InvalidArgument("deviation: location must be finite");
  }
  if (!kernel.nonnegative())
    throw InvalidArgument("deviation: kernel of order " + std::to_string(kernel.order()) +
                          " takes negative values; G must be a probability distribution");
  return Deviation{ std::move(z), std::move(h), kernel.with_dim(1), std::move(continuous) };
}

Deviation
make_deviation(std::vector<double> z,
               double h,
               const KernelSpec& kernel,
               std::vector<bool> continuous)
{
  std::vector<double> hv(z.size(), h);
  return make_deviation(std::move(z), std::move(hv), kernel, std::move(continuous));
}

DistributionRep
true_density(Field f, Box support, Breakpoints breaks)
{
  if (!f)
    throw InvalidArgument("true density: empty function");
  return { TrueDensity{ std::move(f), std::move(support), std::move(breaks) } };
}

DistributionRep
kde_density(std::shared_ptr<const DensityEstimate> est)
{
  if (!est)
    throw InvalidArgument("kde representation: null estimate");
  return { KdeDensity{ std::move(est) } };
}

DistributionRep
cond_mean(CondMean cm)
{
  if (!cm.d)
    throw InvalidArgument("conditional-mean representation: empty regression function");
  return { std::move(cm) };
}

DistributionRep
mix(const DistributionRep& base, std::shared_ptr<const Deviation> dev, double t)
{
  if (!(t >= 0.0 && t <= 1.0))
    throw InvalidArgument("mixture weight t must lie in [0, 1]");
  if (!dev)
    throw InvalidArgument("mixture: null deviation");
  return { Mixture{ std::make_shared<const DistributionRep>(base), std::move(dev), t } };
}

std::string
describe(const DistributionRep& F)
{
  if (F.get<TrueDensity>())
    return "true density";
  if (F.get<KdeDensity>())
    return "kernel density estimate";
  if (F.get<CondMean>())
    return "conditional mean";
  const auto& m = *F.get<Mixture>();
  std::ostringstream s;
  s << "mixture(t=" << m.t << ", " << describe(*m.base) << ")";
  return s.str();
}

bool
has_density(const DistributionRep& F)
{
  if (F.get<TrueDensity>() || F.get<KdeDensity>())
    return true;
  if (const auto* m = F.get<Mixture>())
    return m->dev->all_continuous() && has_density(*m->base);
  return false;
}

double
density(const DistributionRep& F, std::span<const double> z)
{
  if (const auto* td = F.get<TrueDensity>())
    return td->f(z);
  if (const auto* kd = F.get<KdeDensity>())
    return (*kd->est)(z);
  if (const auto* m = F.get<Mixture>()) {
    if (!m->dev->all_continuous())
      throw UnsupportedRepresentation("density: deviation has point-mass coordinates");
    if (m->dev->dim() != static_cast<int>(z.size()))
      throw InvalidArgument("density: deviation dimension does not match the point");
    return (1.0 - m->t) * density(*m->base, z) + m->t * m->dev->weight(z);
  }
  throw UnsupportedRepresentation("density requested from a " + describe(F));
}

Box
support(const DistributionRep& F)
{
  if (const auto* td = F.get<TrueDensity>())
    return td->support;
  if (const auto* kd = F.get<KdeDensity>())
    return kd->est->support();
  if (const auto* m = F.get<Mixture>())
    return support(*m->base).hull(m->dev->support());
  throw UnsupportedRepresentation("support requested from a " + describe(F));
}

Breakpoints
breakpoints(const DistributionRep& F)
{
  if (const auto* td = F.get<TrueDensity>())
    return td->breaks;
  if (const auto* kd = F.get<KdeDensity>())
    return kd->est->breakpoints();
  if (const auto* m = F.get<Mixture>())
    return quad::merge(breakpoints(*m->base), m->dev->breakpoints());
  throw UnsupportedRepresentation("breakpoints requested from a " + describe(F));
}

bool
has_cond_mean(const DistributionRep& F)
{
  if (F.get<CondMean>())
    return true;
  if (const auto* m = F.get<Mixture>())
    return has_cond_mean(*m->base);
  return false;
}

namespace {

// Marginal weight of the deviation over x = coordinates 1.. of z = (q, x).
double
x_weight(const Deviation& dev, std::span<const double> x)
{
  double w = 1.0;
  for (int c = 1; c < dev.dim() && w != 0.0; ++c) {
    if (!dev.continuous[c])
      throw UnsupportedRepresentation(
        "conditional-mean mixture: regressor coordinates of the deviation must be continuous");
    w *= dev.kernel((x[c - 1] - dev.z[c]) / dev.h[c]) / dev.h[c];
  }
  return w;
}

} // namespace

XMoments
x_moments(const DistributionRep& F, std::span<const double> x)
{
  if (const auto* cm = F.get<CondMean>()) {
    if (!cm->fx)
      return { 1.0, cm->d(x), false };
    double f = cm->fx(x);
    return { f, f == 0.0 ? 0.0 : f * cm->d(x), true };
  }
  if (const auto* m = F.get<Mixture>()) {
    auto b = x_moments(*m->base, x);
    if (!b.has_fx)
      throw UnsupportedRepresentation(
        "conditional-mean mixture needs the marginal density of x in the base");
    if (m->dev->dim() != static_cast<int>(x.size()) + 1)
      throw InvalidArgument("conditional-mean mixture: deviation must live on z = (q, x)");
    double g = x_weight(*m->dev, x);
    return { (1.0 - m->t) * b.f + m->t * g, (1.0 - m->t) * b.m + m->t * g * m->dev->z[0], true };
  }
  throw UnsupportedRepresentation("conditional mean requested from a " + describe(F));
}

double
cond_mean_at(const DistributionRep& F, std::span<const double> x)
{
  auto mo = x_moments(F, x);
  if (!mo.has_fx)
    return mo.m;
  if (!(mo.f > 0.0)) {
    std::ostringstream msg;
    msg << "conditional mean undefined: marginal density of x is " << mo.f << " at (";
    for (std::size_t c = 0; c < x.size(); ++c)
      msg << (c ? ", " : "") << x[c];
    msg << ")";
    throw InvalidArgument(msg.str());
  }
  return mo.m / mo.f;
}

Box
x_support(const DistributionRep& F)
{
  if (const auto* cm = F.get<CondMean>())
    return cm->x_support;
  if (const auto* m = F.get<Mixture>())
    return x_support(*m->base);
  throw UnsupportedRepresentation("regressor support requested from a " + describe(F));
}

Breakpoints
x_breakpoints(const DistributionRep& F)
{
  if (const auto* cm = F.get<CondMean>()) {
    Breakpoints b = cm->breaks;
    if (cm->series)
      b = quad::merge(b, cm->series->basis().breakpoints());
    return b;
  }
  if (const auto* m = F.get<Mixture>()) {
    auto db = m->dev->breakpoints();
    Breakpoints xb(db.begin() + 1, db.end());
    return quad::merge(x_breakpoints(*m->base), xb);
  }
  throw UnsupportedRepresentation("regressor breakpoints requested from a " + describe(F));
}

double
base_x_density(const DistributionRep& F, std::span<const double> x)
{
  if (const auto* m = F.get<Mixture>())
    return base_x_density(*m->base, x);
  auto mo = x_moments(F, x);
  if (!mo.has_fx)
    throw UnsupportedRepresentation("marginal density of x is not available");
  return mo.f;
}

double
expectation(const DistributionRep& F, const Field& psi, const quad::Options& opts)
{
  if (const auto* m = F.get<Mixture>()) {
    double base = m->t < 1.0 ? expectation(*m->base, psi, opts) : 0.0;
    double dev = m->t > 0.0 ? m->dev->expectation(psi, opts) : 0.0;
    return (1.0 - m->t) * base + m->t * dev;
  }
  if (!has_density(F))
    throw UnsupportedRepresentation("expectation requires a density; got a " + describe(F));
  auto f = [&](std::span<const double> z) {
    double d = density(F, z);
    return d == 0.0 ? 0.0 : psi(z) * d;
  };
  return quad::integrate_checked(f, support(F), opts, breakpoints(F), "int psi dF");
}

} // namespace infkit
