#include "infkit/optimize.hpp"

#include "infkit/errors.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <cmath>
#include <exception>
#include <limits>
#include <memory>
#include <random>

namespace infkit {

namespace {

struct Call
{
  const Objective* f;
  Eigen::VectorXd x;
  std::exception_ptr error;
};

double
trampoline(const gsl_vector* v, void* params)
{
  auto* c = static_cast<Call*>(params);
  if (c->error)
    return std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index i = 0; i < c->x.size(); ++i)
    c->x(i) = gsl_vector_get(v, static_cast<std::size_t>(i));
  try {
    double y = (*c->f)(c->x);
    return std::isfinite(y) ? y : std::numeric_limits<double>::max();
  } catch (...) {
    c->error = std::current_exception();
    return std::numeric_limits<double>::quiet_NaN();
  }
}

struct VecFree
{
  void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};
struct MinFree
{
  void operator()(gsl_multimin_fminimizer* m) const { gsl_multimin_fminimizer_free(m); }
};

} // namespace

MinimizeResult
nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& step, const MinimizeOptions& opts)
{
  const auto n = static_cast<std::size_t>(x0.size());
  if (n == 0 || step.size() != x0.size())
    throw InvalidArgument("nelder_mead: start and step must be non-empty and of equal length");
  gsl_set_error_handler_off();

  Call call{ &f, Eigen::VectorXd(x0.size()), nullptr };
  gsl_multimin_function fn{ &trampoline, n, &call };
  std::unique_ptr<gsl_vector, VecFree> x(gsl_vector_alloc(n)), ss(gsl_vector_alloc(n));
  for (std::size_t i = 0; i < n; ++i) {
    gsl_vector_set(x.get(), i, x0(static_cast<Eigen::Index>(i)));
    gsl_vector_set(ss.get(), i, step(static_cast<Eigen::Index>(i)));
  }
  std::unique_ptr<gsl_multimin_fminimizer, MinFree> m(
    gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n));
  gsl_multimin_fminimizer_set(m.get(), &fn, x.get(), ss.get());
  if (call.error)
    std::rethrow_exception(call.error);

  MinimizeResult out;
  int status = GSL_CONTINUE;
  while (status == GSL_CONTINUE && out.iterations < opts.max_iterations) {
    ++out.iterations;
    if (gsl_multimin_fminimizer_iterate(m.get()) != GSL_SUCCESS)
      break;
    status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(m.get()), opts.size_tol);
  }
  if (call.error)
    std::rethrow_exception(call.error);
  out.converged = status == GSL_SUCCESS;
  out.x.resize(x0.size());
  for (std::size_t i = 0; i < n; ++i)
    out.x(static_cast<Eigen::Index>(i)) = gsl_vector_get(m->x, i);
  out.value = m->fval;
  return out;
}

MinimizeResult
minimize_in_box(const Objective& f,
                const Box& box,
                const MinimizeOptions& opts,
                const std::optional<Eigen::VectorXd>& x_start)
{
  const int p = box.dim();
  if (p == 0)
    throw InvalidArgument("minimize_in_box: empty parameter box");
  Eigen::VectorXd lo(p), hi(p);
  for (int j = 0; j < p; ++j) {
    lo(j) = box.lower[j];
    hi(j) = box.upper[j];
    if (!(hi(j) > lo(j)))
      throw InvalidArgument("minimize_in_box: box bounds must satisfy lower < upper");
  }
  const Eigen::VectorXd width = hi - lo;
  auto project = [&](const Eigen::VectorXd& x) { return x.cwiseMax(lo).cwiseMin(hi); };
  Objective g = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd c = project(x);
    double pen = ((x - c).array() / width.array()).square().sum();
    double v = f(c);
    return v + 1e3 * pen * (1.0 + std::abs(v));
  };
  const Eigen::VectorXd step = opts.initial_step * width;

  std::mt19937_64 gen(opts.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MinimizeResult best;
  best.value = std::numeric_limits<double>::infinity();
  int total = 0;
  for (int s = 0; s < std::max(1, opts.starts); ++s) {
    Eigen::VectorXd x0(p);
    if (s == 0)
      x0 = x_start ? project(*x_start) : Eigen::VectorXd(0.5 * (lo + hi));
    else
      for (int j = 0; j < p; ++j)
        x0(j) = lo(j) + u(gen) * width(j);
    auto r = nelder_mead(g, x0, step, opts);
    total += r.iterations;
    if (r.value < best.value)
      best = r;
  }
  // restart from the best vertex with a fresh simplex
  auto polish = nelder_mead(g, best.x, 0.1 * step, opts);
  total += polish.iterations;
  if (polish.value <= best.value)
    best = polish;

  best.x = project(best.x);
  best.value = f(best.x);
  best.iterations = total;
  for (int j = 0; j < p; ++j)
    if (best.x(j) - lo(j) <= 1e-6 * width(j) || hi(j) - best.x(j) <= 1e-6 * width(j))
      best.on_boundary = true;
  return best;
}

} // namespace infkit
