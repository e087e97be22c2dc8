#include "infkit/quadrature.hpp"

#include "infkit/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

namespace infkit {

Box
Box::cube(int dim, double lo, double hi)
{
  return Box{ std::vector<double>(dim, lo), std::vector<double>(dim, hi) };
}

bool
Box::contains(std::span<const double> z) const
{
  for (int j = 0; j < dim(); ++j) {
    if (z[j] < lower[j] || z[j] > upper[j])
      return false;
  }
  return true;
}

Box
Box::hull(const Box& other) const
{
  if (other.dim() != dim())
    throw InvalidArgument("Box::hull: dimension mismatch");
  Box out = *this;
  for (int j = 0; j < dim(); ++j) {
    out.lower[j] = std::min(lower[j], other.lower[j]);
    out.upper[j] = std::max(upper[j], other.upper[j]);
  }
  return out;
}

namespace quad {

namespace {

Rule
compute_rule(int n)
{
  Rule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  if (n == 1) {
    rule.nodes[0] = 0.0;
    rule.weights[0] = 2.0;
    return rule;
  }
  for (int i = 0; i < (n + 1) / 2; ++i) {
    // Newton iteration on P_n from the Chebyshev-like initial guess.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16)
        break;
    }
    // Recompute the derivative at the converged root.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

const std::vector<Rule>&
all_rules()
{
  static const std::vector<Rule> rules = [] {
    std::vector<Rule> r(65);
    for (int n = 1; n <= 64; ++n)
      r[n] = compute_rule(n);
    return r;
  }();
  return rules;
}

double
norm_of(double v)
{
  return std::abs(v);
}

double
norm_of(const Eigen::VectorXd& v)
{
  return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
}

// Adaptive bisection driver shared by the scalar and vector paths. `Value`
// is double or Eigen::VectorXd; `panel(a, b)` applies the fixed rule.
template<class Value, class PanelFn>
struct Adaptive
{
  PanelFn panel;
  const Options& opts;
  std::size_t evaluations = 0;
  double error = 0.0;
  bool converged = true;
  int points;

  Value run(double a, double b, const Value& whole, double tol, int depth)
  {
    double m = 0.5 * (a + b);
    Value left = panel(a, m);
    Value right = panel(m, b);
    evaluations += 2 * static_cast<std::size_t>(points);
    Value both = left + right;
    double err = norm_of(Value(both - whole));
    if (err <= tol || !std::isfinite(err)) {
      if (!std::isfinite(err))
        converged = false;
      error += err;
      return both;
    }
    if (depth >= opts.max_depth || evaluations >= opts.max_evaluations ||
        m <= a || m >= b) {
      converged = false;
      error += err;
      return both;
    }
    return Value(run(a, m, left, 0.5 * tol, depth + 1) +
                 run(m, b, right, 0.5 * tol, depth + 1));
  }
};

std::vector<double>
split_points(double a, double b, std::span<const double> breaks)
{
  std::vector<double> pts{ a };
  std::vector<double> inner;
  for (double x : breaks) {
    if (x > a && x < b)
      inner.push_back(x);
  }
  std::sort(inner.begin(), inner.end());
  for (double x : inner) {
    if (x - pts.back() > 1e-14 * (1.0 + std::abs(x)))
      pts.push_back(x);
  }
  if (b - pts.back() <= 1e-14 * (1.0 + std::abs(b)) && pts.size() > 1)
    pts.back() = b;
  else
    pts.push_back(b);
  return pts;
}

template<class Value, class PanelFn>
void
integrate_1d(PanelFn&& panel,
             double a,
             double b,
             const Options& opts,
             std::span<const double> breaks,
             Value& value,
             double& error,
             std::size_t& evaluations,
             bool& converged)
{
  if (!(b > a)) {
    return;
  }
  auto pts = split_points(a, b, breaks);
  Adaptive<Value, PanelFn&> driver{ panel, opts, 0, 0.0, true, opts.points };
  // First pass: coarse estimate to turn rel_tol into an absolute target.
  std::vector<Value> coarse;
  coarse.reserve(pts.size() - 1);
  double total_norm = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    coarse.push_back(panel(pts[k], pts[k + 1]));
    driver.evaluations += opts.points;
    total_norm += norm_of(coarse.back());
  }
  double tol = std::max(opts.abs_tol, opts.rel_tol * total_norm);
  double width = b - a;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    double share = tol * (pts[k + 1] - pts[k]) / width;
    Value v = driver.run(pts[k], pts[k + 1], coarse[k], share, 0);
    value = Value(value + v);
  }
  error += driver.error;
  evaluations += driver.evaluations;
  converged = converged && driver.converged;
}

} // namespace

const Rule&
gauss_legendre(int n)
{
  if (n < 1 || n > 64)
    throw InvalidArgument("gauss_legendre: points must lie in [1, 64]");
  return all_rules()[n];
}

Result
integrate(const Fn1& f,
          double a,
          double b,
          const Options& opts,
          std::span<const double> breaks)
{
  const Rule& rule = gauss_legendre(opts.points);
  auto panel = [&](double lo, double hi) {
    double c = 0.5 * (lo + hi), r = 0.5 * (hi - lo), s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
      s += rule.weights[i] * f(c + r * rule.nodes[i]);
    return s * r;
  };
  Result res;
  integrate_1d<double>(panel, a, b, opts, breaks, res.value, res.error,
                       res.evaluations, res.converged);
  return res;
}

namespace {

template<class Value>
struct NestedState
{
  std::vector<double> point;
  std::size_t evaluations = 0;
  double error = 0.0;
  bool converged = true;
};

// Integrates over coordinates [d, dim) with coordinates [0, d) fixed in
// state.point. Returns the partial integral.
template<class Value, class Leaf>
Value
nested(Leaf& leaf,
       const Box& box,
       const Options& opts,
       const Breakpoints& breaks,
       int d,
       NestedState<Value>& state,
       const Value& zero)
{
  const int dim = box.dim();
  const Rule& rule = gauss_legendre(opts.points);
  double width = box.upper[d] - box.lower[d];
  Options inner = opts;
  if (d + 1 < dim) {
    // Inner integrals feed the outer rule; keep their noise well below the
    // outer target.
    inner.abs_tol = 0.05 * opts.abs_tol / std::max(width, 1e-300);
    inner.rel_tol = 0.05 * opts.rel_tol;
  }
  auto value_at = [&](double x) -> Value {
    state.point[d] = x;
    if (d + 1 == dim) {
      ++state.evaluations;
      return leaf(std::span<const double>(state.point));
    }
    return nested<Value>(leaf, box, inner, breaks, d + 1, state, zero);
  };
  auto panel = [&](double lo, double hi) -> Value {
    double c = 0.5 * (lo + hi), r = 0.5 * (hi - lo);
    Value s = zero;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
      s = Value(s + rule.weights[i] * value_at(c + r * rule.nodes[i]));
    return Value(s * r);
  };
  std::span<const double> bk;
  if (d < static_cast<int>(breaks.size()))
    bk = breaks[d];
  Value out = zero;
  double err = 0.0;
  std::size_t evals = 0;
  bool conv = true;
  integrate_1d<Value>(panel, box.lower[d], box.upper[d], opts, bk, out, err,
                      evals, conv);
  if (d == 0)
    state.error += err;
  state.converged = state.converged && conv;
  return out;
}

} // namespace

Result
integrate(const FnN& f,
          const Box& box,
          const Options& opts,
          const Breakpoints& breaks)
{
  if (box.dim() == 0)
    throw InvalidArgument("integrate: empty box");
  NestedState<double> state;
  state.point.assign(box.dim(), 0.0);
  auto leaf = [&](std::span<const double> z) { return f(z); };
  Result res;
  res.value = nested<double>(leaf, box, opts, breaks, 0, state, 0.0);
  res.error = state.error;
  res.evaluations = state.evaluations;
  res.converged = state.converged;
  return res;
}

VectorResult
integrate_vector(const VecFnN& f,
                 int size,
                 const Box& box,
                 const Options& opts,
                 const Breakpoints& breaks)
{
  if (box.dim() == 0)
    throw InvalidArgument("integrate_vector: empty box");
  NestedState<Eigen::VectorXd> state;
  state.point.assign(box.dim(), 0.0);
  Eigen::VectorXd buf(size);
  auto leaf = [&](std::span<const double> z) -> Eigen::VectorXd {
    buf.setZero();
    f(z, buf);
    return buf;
  };
  VectorResult res;
  res.value = nested<Eigen::VectorXd>(leaf, box, opts, breaks, 0, state,
                                      Eigen::VectorXd::Zero(size));
  res.error = state.error;
  res.evaluations = state.evaluations;
  res.converged = state.converged;
  return res;
}

namespace {

[[noreturn]] void
fail(const std::string& what, double value, double error, std::size_t evals)
{
  std::ostringstream os;
  os << "quadrature did not converge for " << what << ": estimate " << value
     << ", error estimate " << error << " after " << evals
     << " integrand evaluations";
  throw NumericFailure(os.str());
}

bool
acceptable(bool converged, double error, double value, const Options& opts)
{
  if (!std::isfinite(value))
    return false;
  if (converged)
    return true;
  return error <= std::max(opts.abs_tol, opts.rel_tol * std::abs(value));
}

} // namespace

double
integrate_checked(const Fn1& f,
                  double a,
                  double b,
                  const Options& opts,
                  std::span<const double> breaks,
                  const std::string& what)
{
  auto res = integrate(f, a, b, opts, breaks);
  if (!acceptable(res.converged, res.error, res.value, opts))
    fail(what, res.value, res.error, res.evaluations);
  return res.value;
}

double
integrate_checked(const FnN& f,
                  const Box& box,
                  const Options& opts,
                  const Breakpoints& breaks,
                  const std::string& what)
{
  auto res = integrate(f, box, opts, breaks);
  if (!acceptable(res.converged, res.error, res.value, opts))
    fail(what, res.value, res.error, res.evaluations);
  return res.value;
}

Eigen::VectorXd
integrate_vector_checked(const VecFnN& f,
                         int size,
                         const Box& box,
                         const Options& opts,
                         const Breakpoints& breaks,
                         const std::string& what)
{
  auto res = integrate_vector(f, size, box, opts, breaks);
  double nrm = norm_of(res.value);
  if (!res.value.allFinite() || !acceptable(res.converged, res.error, nrm, opts))
    fail(what, nrm, res.error, res.evaluations);
  return res.value;
}

Breakpoints
merge(const Breakpoints& a, const Breakpoints& b)
{
  Breakpoints out(std::max(a.size(), b.size()));
  for (std::size_t j = 0; j < out.size(); ++j) {
    if (j < a.size())
      out[j].insert(out[j].end(), a[j].begin(), a[j].end());
    if (j < b.size())
      out[j].insert(out[j].end(), b[j].begin(), b[j].end());
    std::sort(out[j].begin(), out[j].end());
    out[j].erase(std::unique(out[j].begin(), out[j].end()), out[j].end());
  }
  return out;
}

Breakpoints
localize(const Breakpoints& b, std::span<const double> center, double scale, double lo, double hi)
{
  Breakpoints out(b.size());
  for (std::size_t c = 0; c < b.size() && c < center.size(); ++c) {
    auto first = std::upper_bound(b[c].begin(), b[c].end(), center[c] + lo * scale);
    auto last = std::lower_bound(first, b[c].end(), center[c] + hi * scale);
    for (auto it = first; it != last; ++it)
      out[c].push_back((*it - center[c]) / scale);
  }
  return out;
}

} // namespace quad
} // namespace infkit
