#include "infkit/functionals.hpp"

#include "infkit/errors.hpp"

namespace infkit {

namespace {

double
integrate_form(const IntegrandForm& form, const quad::Options& opts, const std::string& what)
{
  return quad::integrate_checked(form.L, form.region, opts, form.breaks, what);
}

std::optional<IntegrandForm>
isd_integrand(const DistributionRep& F)
{
  if (!has_density(F))
    return std::nullopt;
  return IntegrandForm{ support(F), breakpoints(F), [F](std::span<const double> z) {
                         double f = density(F, z);
                         return f * f;
                       } };
}

} // namespace

Functional
isd_functional(const quad::Options& opts)
{
  Functional b;
  b.id = "isd";
  b.t_degree = 2;
  b.integrand = isd_integrand;
  b.eval = [opts](const DistributionRep& F) { return isd_value(F, opts); };
  return b;
}

Functional
isd_loo_functional(const quad::Options& opts)
{
  Functional b;
  b.id = "isd_loo";
  b.t_degree = 2;
  // differentiation along a path always goes through int f^2
  b.integrand = isd_integrand;
  b.eval = [opts](const DistributionRep& F) {
    if (const auto* kd = F.get<KdeDensity>())
      return kd->est->loo_mean();
    return isd_value(F, opts);
  };
  return b;
}

Functional
surplus_functional(SurplusWeight W, const quad::Options& opts)
{
  W.validate();
  Functional b;
  b.id = "surplus";
  b.weight = W;
  b.integrand = [W](const DistributionRep& F) -> std::optional<IntegrandForm> {
    if (!has_cond_mean(F))
      return std::nullopt;
    return IntegrandForm{ W.region(x_support(F)), x_breakpoints(F),
                          [W, F](std::span<const double> x) {
                            double w = W(x);
                            return w == 0.0 ? 0.0 : w * cond_mean_at(F, x);
                          } };
  };
  b.eval = [W, opts](const DistributionRep& F) { return surplus_value(F, W, opts); };
  return b;
}

Functional
constant_functional(double c)
{
  Functional b;
  b.id = "constant";
  b.linear = true;
  b.t_degree = 1;
  b.eval = [c](const DistributionRep&) { return c; };
  b.known_psi = [](std::span<const double>) { return 0.0; };
  b.beta0 = c;
  return b;
}

Functional
linear_functional(Field psi, const quad::Options& opts)
{
  if (!psi)
    throw InvalidArgument("linear functional needs psi");
  Functional b;
  b.id = "linear";
  b.linear = true;
  b.t_degree = 1;
  b.integrand = [psi](const DistributionRep& F) -> std::optional<IntegrandForm> {
    if (!has_density(F))
      return std::nullopt;
    return IntegrandForm{ support(F), breakpoints(F), [psi, F](std::span<const double> z) {
                           double f = density(F, z);
                           return f == 0.0 ? 0.0 : psi(z) * f;
                         } };
  };
  b.eval = [psi, opts](const DistributionRep& F) { return expectation(F, psi, opts); };
  return b;
}

const std::vector<std::string>&
functional_ids()
{
  static const std::vector<std::string> ids{ "isd", "isd_loo", "surplus", "constant", "linear" };
  return ids;
}

Functional
make_functional(const std::string& id, const FunctionalParams& params)
{
  if (id == "isd")
    return isd_functional();
  if (id == "isd_loo")
    return isd_loo_functional();
  if (id == "surplus")
    return surplus_functional(params.weight);
  if (id == "constant")
    return constant_functional(params.constant);
  if (id == "linear")
    return linear_functional(params.psi);
  std::string known;
  for (const auto& k : functional_ids())
    known += (known.empty() ? "" : ", ") + k;
  throw InvalidArgument("unknown functional '" + id + "' (registered: " + known + ")");
}

double
isd_value(const DistributionRep& F, const quad::Options& opts)
{
  if (const auto* kd = F.get<KdeDensity>())
    return kd->est->integrated_square();
  auto form = isd_integrand(F);
  if (!form)
    throw UnsupportedRepresentation("integrated squared density needs a density; got a " +
                                    describe(F));
  return integrate_form(*form, opts, "int f^2");
}

double
isd_loo_value(const Sample& sample, double h, const KernelSpec& kernel)
{
  if (sample.rows() < 2)
    throw InsufficientData("leave-one-out integrated squared density needs n >= 2");
  return DensityEstimate(sample, h, kernel).loo_mean();
}

double
surplus_value(const DistributionRep& F, const SurplusWeight& W, const quad::Options& opts)
{
  if (!has_cond_mean(F))
    throw UnsupportedRepresentation("surplus bound needs a conditional-mean representation; got a " +
                                    describe(F));
  W.validate();
  auto f = [&](std::span<const double> x) {
    double w = W(x);
    return w == 0.0 ? 0.0 : w * cond_mean_at(F, x);
  };
  return quad::integrate_checked(f, W.region(x_support(F)), opts, x_breakpoints(F),
                                 "int W(x) E[q|x] dx");
}

double
mixture_eval(const Functional& beta,
             const DistributionRep& base,
             std::shared_ptr<const Deviation> dev,
             double t)
{
  if (!(t >= 0.0 && t <= 1.0))
    throw InvalidArgument("mixture_eval: t must lie in [0, 1]");
  if (t == 0.0)
    return beta(base);
  return beta(mix(base, std::move(dev), t));
}

Field
isd_psi(Field f0, double beta0)
{
  return [f0 = std::move(f0), beta0](std::span<const double> z) {
    return 2.0 * (f0(z) - beta0);
  };
}

Field
surplus_psi(SurplusWeight W, Field fx, std::function<double(std::span<const double>)> d0)
{
  return [W = std::move(W), fx = std::move(fx), d0 = std::move(d0)](std::span<const double> z) {
    auto x = z.subspan(1);
    double w = W(x);
    if (w == 0.0)
      return 0.0;
    return w / fx(x) * (z[0] - d0(x));
  };
}

} // namespace infkit
