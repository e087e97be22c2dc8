#include "infkit/cli.hpp"

#include "infkit/errors.hpp"
#include "infkit/gateaux.hpp"
#include "infkit/gmm.hpp"
#include "infkit/kde.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

namespace infkit::cli {

using json = nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string
trim(std::string_view s)
{
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos)
    return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string>
split(const std::string& s, char sep)
{
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep))
    out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep)
    out.emplace_back();
  return out;
}

std::string
join(const std::vector<std::string>& v, const std::string& sep = ", ")
{
  std::string s;
  for (const auto& x : v)
    s += (s.empty() ? "" : sep) + x;
  return s;
}

// shortest representation that reads back to the same double
std::string
fmt(double x)
{
  if (std::isnan(x))
    return "nan";
  if (std::isinf(x))
    return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

bool
read_double(const std::string& s, double& v)
{
  if (s.empty())
    return false;
  const char* b = s.data();
  const char* e = b + s.size();
  if (*b == '+')
    ++b;
  auto res = std::from_chars(b, e, v);
  return res.ec == std::errc() && res.ptr == e && std::isfinite(v);
}

[[noreturn]] void
bad_value(const std::string& key, const std::string& want, const std::string& got)
{
  throw InvalidArgument("config key '" + key + "': expected " + want + ", got '" + got + "'");
}

double
to_double(const std::string& key, const std::string& s)
{
  double v;
  if (!read_double(s, v))
    bad_value(key, "a number", s);
  return v;
}

long long
to_integer(const std::string& key, const std::string& s)
{
  long long v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  if (b != e && *b == '+')
    ++b;
  auto res = std::from_chars(b, e, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != e) {
    // integral values written as 1e4
    double d;
    if (read_double(s, d) && d == std::floor(d) && std::abs(d) < 9e15)
      return static_cast<long long>(d);
    bad_value(key, "an integer", s);
  }
  return v;
}

bool
to_bool(const std::string& key, const std::string& s)
{
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "1" || l == "true" || l == "yes" || l == "on")
    return true;
  if (l == "0" || l == "false" || l == "no" || l == "off")
    return false;
  bad_value(key, "true or false", s);
}

std::vector<double>
to_doubles(const std::string& key, const std::string& s)
{
  std::vector<double> v;
  if (trim(s).empty())
    return v;
  for (const auto& x : split(s, ','))
    v.push_back(to_double(key, x));
  return v;
}

std::string
normalize_key(std::string k)
{
  std::replace(k.begin(), k.end(), '-', '_');
  return k;
}

void
require_member(const std::string& key, const std::string& v, const std::vector<std::string>& ids)
{
  if (std::find(ids.begin(), ids.end(), v) == ids.end())
    throw InvalidArgument("config key '" + key + "': unknown value '" + v + "' (registered: " + join(ids) + ")");
}

} // namespace

// ------------------------------------------------------------------ config

const std::vector<std::pair<std::string, std::string>>&
config_keys()
{
  static const std::vector<std::pair<std::string, std::string>> keys{
    { "input", "" },
    { "functional", "isd" },
    { "family", "auto" },
    { "kernel_order", "4" },
    { "bandwidth", "n^-1/6" },
    { "basis", "spline" },
    { "spline_order", "2" },
    { "K", "n^1/2" },
    { "ladder", "0.4,0.2,0.1,0.05" },
    { "t_step", "0.001" },
    { "extrapolation", "richardson" },
    { "dgp", "auto" },
    { "n", "250,500,1000,2000" },
    { "reps", "500" },
    { "seed", "1" },
    { "level", "0.95" },
    { "out", "" },
    { "csv", "" },
    { "true_density", "false" },
    { "noise", "-1" },
    { "p0", "0.2" },
    { "p1", "0.8" },
    { "b", "0" },
    { "constant", "0" },
    { "psi_coeffs", "0,1" },
    { "points", "" },
    { "experiment", "linearity" },
    { "z", "0" },
    { "dev_h", "0.25" },
    { "c_list", "0,1,2" },
    { "centering_n", "1e4,1e6,1e8,1e10" },
    { "kernel_orders", "2,4" },
    { "h_grid", "0.8,1,1.2,1.5" },
    { "s_f", "0" },
    { "s_psi", "0" },
    { "quadrature_only", "false" },
    { "rate_kind", "auto" },
    { "r", "auto" },
    { "s_d", "0" },
    { "s_delta", "0" },
    { "model", "mean" },
    { "trim", "0.01" },
    { "bound", "10" },
    { "index_bandwidth_c", "1" },
    { "local_width", "0.25" },
  };
  return keys;
}

namespace {

bool
known_key(const std::string& k)
{
  for (const auto& [name, def] : config_keys())
    if (name == k)
      return true;
  return false;
}

} // namespace

KeyValues
parse_config_text(const std::string& text, const std::string& origin)
{
  KeyValues kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty())
      continue;
    auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos)
      throw InvalidArgument(where + ": expected key=value, got '" + line + "'");
    std::string key = normalize_key(trim(line.substr(0, eq)));
    if (key.empty())
      throw InvalidArgument(where + ": empty key");
    if (!known_key(key))
      throw InvalidArgument(where + ": unknown key '" + key + "'");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues
read_config_file(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw InvalidArgument("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

Rule
Rule::parse(const std::string& text)
{
  std::string s;
  for (char ch : text)
    if (!std::isspace(static_cast<unsigned char>(ch)))
      s += ch;
  auto bad = [&] {
    return InvalidArgument("cannot read '" + text + "' as a value or a rule c*n^a");
  };
  Rule rule;
  auto npos = s.find('n');
  if (npos == std::string::npos) {
    double v;
    if (!read_double(s, v))
      throw bad();
    rule.fixed = v;
    return rule;
  }
  std::string pre = s.substr(0, npos);
  if (!pre.empty() && pre.back() == '*')
    pre.pop_back();
  if (!pre.empty() && !read_double(pre, rule.c))
    throw bad();
  std::string post = s.substr(npos + 1);
  if (post.empty()) {
    rule.exponent = Rational(1);
    return rule;
  }
  if (post.front() != '^')
    throw bad();
  post.erase(0, 1);
  if (post.size() >= 2 && post.front() == '(' && post.back() == ')')
    post = post.substr(1, post.size() - 2);
  rule.exponent = Rational::parse(post);
  return rule;
}

double
Rule::at(std::size_t n) const
{
  if (fixed)
    return *fixed;
  return c * std::pow(static_cast<double>(n), exponent.value());
}

std::string
Rule::str() const
{
  if (fixed)
    return fmt(*fixed);
  std::string e = "n^" + exponent.str();
  return c == 1.0 ? e : fmt(c) + "*" + e;
}

EstimatorConfig
RunConfig::estimator() const
{
  EstimatorConfig e;
  e.family = family == "series" ? EstimatorFamily::series : EstimatorFamily::kernel;
  e.kernel_order = kernel_order;
  if (bandwidth.fixed)
    e.bandwidth = *bandwidth.fixed;
  else {
    e.bandwidth_c = bandwidth.c;
    e.bandwidth_exponent = bandwidth.exponent;
  }
  e.basis = basis;
  e.spline_order = spline_order;
  if (K.fixed)
    e.K = static_cast<int>(*K.fixed);
  else {
    e.K_c = K.c;
    e.K_exponent = K.exponent;
  }
  return e;
}

FunctionalParams
RunConfig::functional_params() const
{
  FunctionalParams p;
  p.weight = SurplusWeight{ p0, p1, b, {} };
  p.constant = constant;
  auto coeffs = psi_coeffs;
  p.psi = [coeffs](std::span<const double> z) {
    // Horner in the first coordinate
    double v = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it)
      v = v * z[0] + *it;
    return v;
  };
  return p;
}

const std::vector<std::string>&
commands()
{
  static const std::vector<std::string> c{ "estimate", "influence", "diagnose", "simulate", "gmm" };
  return c;
}

RunConfig
resolve(const std::string& command, const KeyValues& file, const KeyValues& flags)
{
  require_member("command", command, commands());
  KeyValues kv;
  for (const auto& [k, v] : config_keys())
    kv[k] = v;
  for (const auto* layer : { &file, &flags })
    for (const auto& [k, v] : *layer) {
      if (!known_key(k))
        throw InvalidArgument("unknown config key '" + k + "'");
      kv[k] = v;
    }

  RunConfig c;
  c.command = command;
  c.input = kv["input"];
  c.out = kv["out"];
  c.csv = kv["csv"];

  c.functional = kv["functional"];
  require_member("functional", c.functional, functional_ids());
  c.model = kv["model"];
  require_member("model", c.model, moment_model_ids());

  c.family = kv["family"];
  if (c.family == "auto")
    c.family = c.functional == "surplus" ? "series" : "kernel";
  require_member("family", c.family, { "kernel", "series" });
  if (c.command != "gmm") {
    if (c.functional == "surplus" && c.family != "series")
      throw InvalidArgument("the surplus functional needs family=series");
    if ((c.functional == "isd" || c.functional == "isd_loo" || c.functional == "linear") && c.family != "kernel")
      throw InvalidArgument("functional '" + c.functional + "' needs family=kernel");
  }

  c.kernel_order = static_cast<int>(to_integer("kernel_order", kv["kernel_order"]));
  if (c.kernel_order < 2 || c.kernel_order % 2)
    bad_value("kernel_order", "an even integer >= 2", kv["kernel_order"]);
  try {
    c.bandwidth = Rule::parse(kv["bandwidth"]);
    c.K = Rule::parse(kv["K"]);
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  if (c.bandwidth.fixed ? !(*c.bandwidth.fixed > 0.0) : !(c.bandwidth.c > 0.0))
    bad_value("bandwidth", "a positive value or rule", kv["bandwidth"]);
  if (c.K.fixed ? !(*c.K.fixed >= 1.0 && *c.K.fixed == std::floor(*c.K.fixed)) : !(c.K.c > 0.0))
    bad_value("K", "a positive integer or rule", kv["K"]);
  c.basis = kv["basis"];
  require_member("basis", c.basis, { "spline", "power" });
  c.spline_order = static_cast<int>(to_integer("spline_order", kv["spline_order"]));
  if (c.spline_order < 1)
    bad_value("spline_order", "an integer >= 1", kv["spline_order"]);

  c.ladder = to_doubles("ladder", kv["ladder"]);
  c.t_step = to_double("t_step", kv["t_step"]);
  c.extrapolation = kv["extrapolation"];
  require_member("extrapolation", c.extrapolation, { "none", "richardson" });
  {
    DerivativeLadder lad;
    lad.h = c.ladder;
    lad.t_step = c.t_step;
    try {
      lad.validate();
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(std::string("config key 'ladder': ") + e.what());
    }
  }

  c.dgp = kv["dgp"];
  if (c.dgp == "auto") {
    const std::string& id = c.command == "gmm" ? c.model : c.functional;
    if (id == "surplus" || id == "surplus_gmm")
      c.dgp = "surplus_uniform";
    else if (id == "single_index")
      c.dgp = "single_index";
    else if (id == "mean" || id == "mean_overid")
      c.dgp = "normal_mean";
    else
      c.dgp = "normal";
  }
  require_member("dgp", c.dgp, dgp_ids());

  for (const auto& x : split(kv["n"], ',')) {
    long long v = to_integer("n", x);
    if (v < 2)
      bad_value("n", "integers >= 2", kv["n"]);
    c.n.push_back(static_cast<std::size_t>(v));
  }
  if (c.n.empty())
    bad_value("n", "at least one sample size", kv["n"]);
  long long reps = to_integer("reps", kv["reps"]);
  if (reps < 2 || reps > 100'000'000)
    bad_value("reps", "an integer >= 2", kv["reps"]);
  c.reps = static_cast<int>(reps);
  long long seed = to_integer("seed", kv["seed"]);
  if (seed < 0)
    bad_value("seed", "a nonnegative integer", kv["seed"]);
  c.seed = static_cast<std::uint64_t>(seed);
  c.level = to_double("level", kv["level"]);
  if (!(c.level > 0.0 && c.level < 1.0))
    bad_value("level", "a number in (0, 1)", kv["level"]);
  c.true_density = to_bool("true_density", kv["true_density"]);
  c.noise = to_double("noise", kv["noise"]);

  c.p0 = to_double("p0", kv["p0"]);
  c.p1 = to_double("p1", kv["p1"]);
  c.b = to_double("b", kv["b"]);
  if (!(c.p0 < c.p1))
    throw InvalidArgument("config keys 'p0' and 'p1': need p0 < p1");
  c.constant = to_double("constant", kv["constant"]);
  c.psi_coeffs = to_doubles("psi_coeffs", kv["psi_coeffs"]);
  if (c.psi_coeffs.empty())
    bad_value("psi_coeffs", "at least one coefficient", kv["psi_coeffs"]);

  if (!trim(kv["points"]).empty()) {
    std::size_t width = 0;
    for (const auto& p : split(kv["points"], ';')) {
      auto v = to_doubles("points", p);
      if (v.empty() || (width && v.size() != width))
        bad_value("points", "rows of equal length separated by ';'", kv["points"]);
      width = v.size();
      c.points.push_back(std::move(v));
    }
  }

  c.experiment = kv["experiment"];
  require_member("experiment", c.experiment, { "linearity", "local_regularity", "coverage", "bias_rate" });
  c.z = to_doubles("z", kv["z"]);
  c.dev_h = to_double("dev_h", kv["dev_h"]);
  if (!(c.dev_h > 0.0))
    bad_value("dev_h", "a positive number", kv["dev_h"]);
  c.c_list = to_doubles("c_list", kv["c_list"]);
  for (double x : c.c_list)
    if (x < 0.0)
      bad_value("c_list", "nonnegative constants", kv["c_list"]);
  c.centering_n = to_doubles("centering_n", kv["centering_n"]);
  for (double x : c.centering_n)
    if (!(x >= 1.0))
      bad_value("centering_n", "sample sizes >= 1", kv["centering_n"]);
  for (const auto& x : split(kv["kernel_orders"], ',')) {
    long long v = to_integer("kernel_orders", x);
    if (v < 2 || v % 2)
      bad_value("kernel_orders", "even integers >= 2", kv["kernel_orders"]);
    c.kernel_orders.push_back(static_cast<int>(v));
  }
  c.h_grid = to_doubles("h_grid", kv["h_grid"]);
  for (double h : c.h_grid)
    if (!(h > 0.0))
      bad_value("h_grid", "positive bandwidths", kv["h_grid"]);
  c.s_f = static_cast<int>(to_integer("s_f", kv["s_f"]));
  c.s_psi = static_cast<int>(to_integer("s_psi", kv["s_psi"]));
  c.s_d = static_cast<int>(to_integer("s_d", kv["s_d"]));
  c.s_delta = static_cast<int>(to_integer("s_delta", kv["s_delta"]));
  if (c.s_f < 0 || c.s_psi < 0 || c.s_d < 0 || c.s_delta < 0)
    throw InvalidArgument("config: smoothness orders must be nonnegative");
  c.quadrature_only = to_bool("quadrature_only", kv["quadrature_only"]);

  c.rate_kind = kv["rate_kind"];
  if (c.rate_kind == "auto")
    c.rate_kind = c.family == "kernel" ? "kernel" : c.basis;
  require_member("rate_kind", c.rate_kind, { "kernel", "power", "spline" });
  if (kv["r"] != "auto") {
    long long r = to_integer("r", kv["r"]);
    if (r < 1)
      bad_value("r", "an integer >= 1", kv["r"]);
    c.r = static_cast<int>(r);
  }

  c.trim = to_double("trim", kv["trim"]);
  if (!(c.trim >= 0.0 && c.trim < 0.5))
    bad_value("trim", "a fraction in [0, 0.5)", kv["trim"]);
  c.bound = to_double("bound", kv["bound"]);
  if (!(c.bound > 0.0))
    bad_value("bound", "a positive number", kv["bound"]);
  c.index_bandwidth_c = to_double("index_bandwidth_c", kv["index_bandwidth_c"]);
  if (!(c.index_bandwidth_c > 0.0))
    bad_value("index_bandwidth_c", "a positive number", kv["index_bandwidth_c"]);
  c.local_width = to_double("local_width", kv["local_width"]);
  if (!(c.local_width > 0.0))
    bad_value("local_width", "a positive number", kv["local_width"]);
  return c;
}

// --------------------------------------------------------------------- csv

Table
parse_csv(const std::string& raw, const std::string& origin)
{
  std::string text = raw;
  if (text.rfind("\xEF\xBB\xBF", 0) == 0)
    text.erase(0, 3);
  if (trim(text).empty())
    throw InsufficientData(origin + ": empty file");
  std::vector<std::string> lines;
  {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r')
        line.pop_back();
      lines.push_back(line);
    }
  }
  while (!lines.empty() && trim(lines.back()).empty())
    lines.pop_back();

  Table t;
  for (auto name : split(lines[0], ',')) {
    if (name.size() >= 2 && name.front() == '"' && name.back() == '"')
      name = name.substr(1, name.size() - 2);
    if (name.empty())
      throw InvalidArgument(origin + ": line 1: empty column name");
    if (std::find(t.header.begin(), t.header.end(), name) != t.header.end())
      throw InvalidArgument(origin + ": line 1: duplicate column '" + name + "'");
    t.header.push_back(name);
  }
  const std::size_t cols = t.header.size();
  const std::size_t rows = lines.size() - 1;
  if (rows == 0)
    throw InsufficientData(origin + ": no data rows");
  t.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    const std::string where = origin + ": line " + std::to_string(i + 2);
    auto fields = split(lines[i + 1], ',');
    if (fields.size() != cols)
      throw InvalidArgument(where + ": expected " + std::to_string(cols) + " fields, got " +
                            std::to_string(fields.size()));
    for (std::size_t j = 0; j < cols; ++j) {
      const std::string col = "column " + std::to_string(j + 1) + " ('" + t.header[j] + "')";
      if (fields[j].empty())
        throw InvalidArgument(where + ", " + col + ": missing value");
      double v;
      if (!read_double(fields[j], v))
        throw InvalidArgument(where + ", " + col + ": not a finite number: '" + fields[j] + "'");
      t.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return t;
}

Table
read_csv(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw InvalidArgument("cannot open input file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path);
}

// ---------------------------------------------------------------- commands

namespace {

json
to_json(const Rule& r)
{
  return r.str();
}

json
to_json(const RunConfig& c)
{
  json pts = json::array();
  for (const auto& p : c.points)
    pts.push_back(p);
  return json{
    { "command", c.command },
    { "input", c.input },
    { "functional", c.functional },
    { "family", c.family },
    { "kernel_order", c.kernel_order },
    { "bandwidth", to_json(c.bandwidth) },
    { "basis", c.basis },
    { "spline_order", c.spline_order },
    { "K", to_json(c.K) },
    { "ladder", c.ladder },
    { "t_step", c.t_step },
    { "extrapolation", c.extrapolation },
    { "dgp", c.dgp },
    { "n", c.n },
    { "reps", c.reps },
    { "seed", c.seed },
    { "level", c.level },
    { "out", c.out },
    { "csv", c.csv },
    { "true_density", c.true_density },
    { "noise", c.noise },
    { "p0", c.p0 },
    { "p1", c.p1 },
    { "b", c.b },
    { "constant", c.constant },
    { "psi_coeffs", c.psi_coeffs },
    { "points", pts },
    { "experiment", c.experiment },
    { "z", c.z },
    { "dev_h", c.dev_h },
    { "c_list", c.c_list },
    { "centering_n", c.centering_n },
    { "kernel_orders", c.kernel_orders },
    { "h_grid", c.h_grid },
    { "s_f", c.s_f },
    { "s_psi", c.s_psi },
    { "quadrature_only", c.quadrature_only },
    { "rate_kind", c.rate_kind },
    { "r", c.r == 0 ? json("auto") : json(c.r) },
    { "s_d", c.s_d },
    { "s_delta", c.s_delta },
    { "model", c.model },
    { "trim", c.trim },
    { "bound", c.bound },
    { "index_bandwidth_c", c.index_bandwidth_c },
    { "local_width", c.local_width },
  };
}

json
vec_json(const Eigen::VectorXd& v)
{
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    a.push_back(v(i));
  return a;
}

json
mat_json(const Eigen::MatrixXd& m)
{
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    a.push_back(vec_json(m.row(i).transpose()));
  return a;
}

struct Context
{
  const RunConfig& cfg;
  std::vector<std::string> warnings;
  std::string csv_text;
};

DgpSpec
dgp_of(const RunConfig& c)
{
  DgpOptions o;
  o.noise = c.noise;
  return make_dgp(c.dgp, o);
}

Table
load_input(const RunConfig& c)
{
  if (c.input.empty())
    throw InvalidArgument("'" + c.command + "' needs --input");
  return read_csv(c.input);
}

Sample
surplus_columns(const Table& t)
{
  auto find = [&](const std::string& name) -> int {
    auto it = std::find(t.header.begin(), t.header.end(), name);
    return it == t.header.end() ? -1 : static_cast<int>(it - t.header.begin());
  };
  const int q = find("q"), p = find("p"), y = find("y");
  const std::size_t expected = 2 + (y >= 0 ? 1 : 0);
  if (q < 0 || p < 0 || t.header.size() != expected)
    throw InvalidArgument("schema mismatch: the surplus functional reads columns q,p[,y], got " + join(t.header, ","));
  std::vector<int> idx{ q, p };
  if (y >= 0)
    idx.push_back(y);
  Sample s(t.data.rows(), static_cast<Eigen::Index>(idx.size()));
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (std::size_t j = 0; j < idx.size(); ++j)
      s(i, static_cast<Eigen::Index>(j)) = t.data(i, idx[j]);
  return s;
}

Sample
functional_columns(const RunConfig& c, const Table& t)
{
  if (c.functional == "surplus")
    return surplus_columns(t);
  return t.data;
}

Box
range_box(const Sample& X)
{
  Box b;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    double lo = X.col(j).minCoeff(), hi = X.col(j).maxCoeff();
    if (!(hi > lo))
      throw InvalidArgument("regressor column " + std::to_string(j + 1) + " is constant");
    b.lower.push_back(lo);
    b.upper.push_back(hi);
  }
  return b;
}

//! Registry DGP as truth when --true-density is set, else a stand-in that
//! only carries the data's schema, weight and support.
DgpSpec
spec_for_data(const RunConfig& c, const Sample& z)
{
  if (c.true_density) {
    DgpSpec d = dgp_of(c);
    if (d.dim() != z.cols())
      throw InvalidArgument("input has " + std::to_string(z.cols()) + " columns, DGP '" + d.id + "' has " +
                            std::to_string(d.dim()));
    return d;
  }
  DgpSpec d;
  d.id = "data";
  for (Eigen::Index j = 0; j < z.cols(); ++j)
    d.columns.push_back("c" + std::to_string(j));
  if (c.functional == "surplus") {
    d.weight = c.functional_params().weight;
    // only the support is read
    CondMean cm;
    cm.d = [](std::span<const double>) { return 0.0; };
    cm.x_support = range_box(z.rightCols(z.cols() - 1));
    d.truth = cond_mean(cm);
  }
  return d;
}

struct SeriesFit
{
  std::shared_ptr<const SeriesEstimate> est;
  DistributionRep rep;
  int K = 0;
};

SeriesFit
fit_series(const RunConfig& c, const Sample& z, const Box& box)
{
  const auto n = static_cast<std::size_t>(z.rows());
  const int K = c.estimator().K_at(n);
  BasisSpec basis =
    c.basis == "power" ? BasisSpec::power(K, box) : BasisSpec::uniform_spline_for(c.spline_order, K, box);
  Sample X = z.rightCols(z.cols() - 1);
  Eigen::VectorXd Q = z.col(0);
  auto est = std::make_shared<const SeriesEstimate>(X, Q, basis);
  CondMean cm;
  cm.d = [est](std::span<const double> x) { return (*est)(x); };
  cm.x_support = box;
  cm.breaks = basis.breakpoints();
  cm.series = est;
  return { est, cond_mean(cm), K };
}

Box
series_box(const RunConfig& c, const Sample& z)
{
  if (c.true_density)
    return x_support(dgp_of(c).truth);
  return range_box(z.rightCols(z.cols() - 1));
}

DistributionRep
kde_of(const RunConfig& c, const Sample& z, double h)
{
  return kde_density(
    std::make_shared<const DensityEstimate>(z, h, KernelSpec::make(c.kernel_order, static_cast<int>(z.cols()))));
}

json
estimate_cmd(Context& ctx)
{
  const RunConfig& c = ctx.cfg;
  Table t = load_input(c);
  Sample z = functional_columns(c, t);
  const auto n = static_cast<std::size_t>(z.rows());
  if (n < 2)
    throw InsufficientData("estimate: need at least two observations");
  DgpSpec spec = spec_for_data(c, z);
  EstimatorConfig est = c.estimator();
  FunctionalParams params = c.functional_params();
  PointEstimate pe = estimate_functional(c.functional, spec, est, z, params);

  json r{ { "functional", c.functional }, { "family", c.family }, { "n", n }, { "dim", z.cols() } };
  if (c.family == "kernel")
    r["bandwidth"] = est.bandwidth_at(n);
  else
    r["K"] = est.K_at(n);
  r["beta_hat"] = pe.beta_hat;
  if (c.functional == "isd" || c.functional == "isd_loo") {
    r["beta_plugin"] = c.functional == "isd" ? pe.beta_hat : estimate_functional("isd", spec, est, z, params).beta_hat;
    r["beta_tilde"] =
      c.functional == "isd_loo" ? pe.beta_hat : estimate_functional("isd_loo", spec, est, z, params).beta_hat;
  }
  r["v_hat"] = pe.v_hat;
  const double se = std::sqrt(pe.v_hat / static_cast<double>(n));
  const double zc = normal_quantile(0.5 * (1.0 + c.level));
  r["se"] = se;
  r["level"] = c.level;
  r["ci"] = { pe.beta_hat - zc * se, pe.beta_hat + zc * se };
  if (c.true_density) {
    auto it = spec.beta0.find(c.functional);
    if (it != spec.beta0.end())
      r["beta0"] = it->second;
  }
  return r;
}

json
point_json(const InfluencePoint& p, std::span<const double> z)
{
  return json{ { "z", std::vector<double>(z.begin(), z.end()) },
               { "psi", p.psi },
               { "status", to_string(p.status) },
               { "diagnostic", p.diagnostic },
               { "h", p.h },
               { "mu", p.mu },
               { "message", p.message } };
}

json
influence_cmd(Context& ctx)
{
  const RunConfig& c = ctx.cfg;
  Functional beta = make_functional(c.functional, c.functional_params());
  std::optional<Sample> data;
  if (!c.input.empty())
    data = functional_columns(c, load_input(c));
  if (!data && c.points.empty())
    throw InvalidArgument("influence: give --input or evaluation points (points=...)");

  std::optional<DgpSpec> dgp;
  DistributionRep base;
  std::string base_name;
  if (c.true_density) {
    dgp = dgp_of(c);
    base = dgp->truth;
    base_name = "true density of " + dgp->id;
  } else {
    if (!data)
      throw InvalidArgument("influence: without --true-density the base distribution is estimated from --input");
    if (c.family == "series")
      throw UnsupportedRepresentation(
        "influence: a fitted regression carries no x-density to mix with; use --true-density");
    const double h = c.estimator().bandwidth_at(static_cast<std::size_t>(data->rows()));
    base = kde_of(c, *data, h);
    base_name = "kernel estimate";
  }

  Sample pts;
  bool at_data = c.points.empty();
  if (at_data)
    pts = *data;
  else {
    pts.resize(static_cast<Eigen::Index>(c.points.size()), static_cast<Eigen::Index>(c.points[0].size()));
    for (std::size_t i = 0; i < c.points.size(); ++i)
      for (std::size_t j = 0; j < c.points[i].size(); ++j)
        pts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c.points[i][j];
  }
  const int dim = dgp ? dgp->dim() : static_cast<int>(data->cols());
  if (pts.cols() != dim)
    throw InvalidArgument("influence: points have " + std::to_string(pts.cols()) + " coordinates, the data " +
                          std::to_string(dim));

  DerivativeLadder ladder;
  ladder.h = c.ladder;
  ladder.t_step = c.t_step;
  ladder.extrapolation = c.extrapolation == "none" ? Extrapolation::none : Extrapolation::richardson;
  std::vector<bool> continuous(static_cast<std::size_t>(dim), true);
  if (c.functional == "surplus")
    continuous[0] = false;

  InfluenceTable tab = influence_table(beta, base, pts, ladder, continuous);

  Field closed;
  if (dgp) {
    try {
      closed = target_for(c.functional, *dgp, c.functional_params()).psi;
    } catch (const Error&) {
      ctx.warnings.push_back("no closed-form influence function for '" + c.functional + "' under " + dgp->id);
    }
  }
  json rows = json::array();
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    json p = point_json(tab.points[static_cast<std::size_t>(i)], row(pts, i));
    if (closed)
      p["psi_closed_form"] = closed(row(pts, i));
    rows.push_back(std::move(p));
  }
  json r{ { "functional", c.functional }, { "base", base_name }, { "ladder", c.ladder },
          { "at", at_data ? "data" : "points" }, { "points", rows } };
  if (at_data) {
    r["v_hat"] = tab.V_hat;
    r["psi_mean"] = tab.mean;
  }
  r["failures"] = tab.failures;
  r["no_limit"] = tab.no_limit;
  if (tab.no_limit > 0)
    ctx.warnings.push_back(std::to_string(tab.no_limit) + " point(s) show no limit along the ladder");
  return r;
}

json
remainder_json(const RemainderReport& rep)
{
  return json{ { "branch", rep.branch },
               { "conditioning", rep.conditioning },
               { "beta_hat", rep.beta_hat },
               { "beta0", rep.beta0 },
               { "psi_mean", rep.psi_mean },
               { "psi_integral", rep.psi_integral },
               { "r1", rep.r1 },
               { "r1_bias", rep.r1_bias },
               { "r1_sto", rep.r1_sto },
               { "r2", rep.r2 },
               { "zeta", rep.zeta },
               { "norm", rep.norm_value },
               { "r2_ratio", rep.r2_ratio },
               { "root_n", rep.root_n },
               { "sqrt_n_r1", rep.sqrt_n_r1 },
               { "sqrt_n_r2", rep.sqrt_n_r2 },
               { "estimated", rep.estimated },
               { "notes", rep.notes } };
}

json
rate_json(const RateConfig& rc, const RateReport& rep)
{
  json conds = json::array();
  for (const auto& k : rep.conditions)
    conds.push_back(json{ { "name", k.name },
                          { "expression", k.expression },
                          { "require_zero", k.require_zero },
                          { "n_exponent", k.dominant.n_power.str() },
                          { "log_exponent", k.dominant.log_power.str() },
                          { "limit", to_string(k.limit) },
                          { "pass", k.pass } });
  const char* kind = rc.kind == RateKind::kernel ? "kernel" : rc.kind == RateKind::power ? "power" : "spline";
  json r{ { "kind", kind },         { "r", rc.r },         { "s_f", rc.s_f },
          { "s_psi", rc.s_psi },    { "s_d", rc.s_d },     { "s_delta", rc.s_delta },
          { "exponent", rc.exponent.str() }, { "conditions", conds }, { "pass", rep.pass } };
  if (rep.plug_in)
    r["plug_in"] = *rep.plug_in;
  return r;
}

json
diagnose_cmd(Context& ctx)
{
  const RunConfig& c = ctx.cfg;
  json r{ { "functional", c.functional } };
  int data_dim = 0;
  bool any = false;
  if (!c.input.empty()) {
    any = true;
    Sample z = functional_columns(c, load_input(c));
    const auto n = static_cast<std::size_t>(z.rows());
    data_dim = static_cast<int>(c.family == "series" ? z.cols() - 1 : z.cols());
    Functional beta = make_functional(c.functional, c.functional_params());
    RemainderOptions ro;
    std::optional<DgpSpec> dgp;
    if (c.true_density) {
      dgp = spec_for_data(c, z);
      ro.truth = dgp->truth;
      auto it = dgp->beta0.find(c.functional);
      if (it != dgp->beta0.end())
        ro.beta0 = it->second;
    }

    DistributionRep F_hat;
    Field psi;
    if (c.family == "kernel") {
      const double h = c.estimator().bandwidth_at(n);
      F_hat = kde_of(c, z, h);
      r["bandwidth"] = h;
    } else {
      auto fit = fit_series(c, z, series_box(c, z));
      F_hat = fit.rep;
      r["K"] = fit.K;
    }
    if (dgp && !dgp->beta0.count(c.functional) && c.functional != "linear" && c.functional != "constant")
      throw InvalidArgument("DGP '" + dgp->id + "' declares no true value for '" + c.functional + "'");
    if (dgp)
      psi = target_for(c.functional, *dgp, c.functional_params()).psi;
    else if (c.functional == "linear" || c.functional == "constant")
      psi = c.functional == "linear" ? c.functional_params().psi : Field([](std::span<const double>) { return 0.0; });
    else if (c.family == "kernel") {
      // estimated influence 2 [f_hat(z) - beta(F_hat)]
      const double b = beta(F_hat);
      psi = [F_hat, b](std::span<const double> x) { return 2.0 * (density(F_hat, x) - b); };
      ro.psi_breaks = breakpoints(F_hat);
    } else {
      auto est = F_hat.get<CondMean>()->series;
      auto dh = std::make_shared<const DeltaHat>(*est, c.functional_params().weight);
      psi = [est, dh](std::span<const double> x) { return (*dh)(x.subspan(1)) * (x[0] - (*est)(x.subspan(1))); };
    }
    r["remainder"] = remainder_json(decompose_remainder(beta, F_hat, z, psi, ro));
    r["n"] = n;
  }

  const bool kernel = c.rate_kind == "kernel";
  if (kernel ? (c.s_f > 0 || c.s_psi > 0) : c.s_d > 0) {
    any = true;
    RateConfig rc;
    rc.kind = kernel ? RateKind::kernel : c.rate_kind == "power" ? RateKind::power : RateKind::spline;
    rc.r = c.r > 0 ? c.r : (data_dim > 0 ? data_dim : 1);
    rc.s_f = c.s_f;
    rc.s_psi = c.s_psi;
    rc.kernel_order = kernel ? c.kernel_order : 0;
    rc.s_d = c.s_d;
    rc.s_delta = c.s_delta;
    rc.spline_order = c.spline_order;
    const Rule& rule = kernel ? c.bandwidth : c.K;
    if (rule.fixed)
      throw InvalidArgument("rate check needs a rule c*n^a for " + std::string(kernel ? "bandwidth" : "K") +
                            ", got the fixed value " + rule.str());
    rc.exponent = rule.exponent;
    rc.c = rule.c;
    rc.validate();
    auto rep = rate_check(rc);
    r["rate_check"] = rate_json(rc, rep);
    if (!rep.pass)
      for (const auto& k : rep.conditions)
        if (!k.pass)
          ctx.warnings.push_back("rate condition '" + k.name + "' fails: " + k.expression + " " +
                                 to_string(k.limit));
  }
  if (!any)
    throw InvalidArgument("diagnose: give --input for the remainder split, or smoothness orders (s_f, s_psi or "
                          "s_d) for the rate check");
  return r;
}

json
cell_json(const McCell& k)
{
  return json{ { "n", k.n },
               { "c", k.c },
               { "t", k.t },
               { "target", k.target },
               { "bandwidth", k.bandwidth },
               { "K", k.K },
               { "failures", k.failures },
               { "mean_stat", k.mean_stat },
               { "sd_stat", k.sd_stat },
               { "median_abs_gap", k.median_abs_gap },
               { "mean_standardized", k.mean_standardized },
               { "sd_standardized", k.sd_standardized },
               { "ks", k.ks },
               { "coverage", k.coverage },
               { "coverage_se", k.coverage_se },
               { "normal_band", k.normal_band } };
}

json
mc_json(const McReport& rep)
{
  json cells = json::array();
  for (const auto& k : rep.cells)
    cells.push_back(cell_json(k));
  json r{ { "experiment", rep.experiment }, { "functional", rep.functional }, { "dgp", rep.dgp },
          { "n_grid", rep.n_grid },         { "reps", rep.reps },             { "seed", rep.seed },
          { "level", rep.level },           { "cells", cells } };
  if (rep.experiment == "linearity") {
    r["gap_decreasing"] = rep.gap_decreasing;
    r["gap_zero"] = rep.gap_zero;
  }
  if (rep.experiment == "local_regularity") {
    r["z"] = rep.z;
    r["deviation_h"] = rep.deviation_h;
    r["mu_zh"] = rep.mu_zh;
    json cen = json::array();
    for (const auto& p : rep.centering)
      cen.push_back(json{ { "n", p.n },
                          { "c", p.c },
                          { "t", p.t },
                          { "lhs", p.lhs },
                          { "rhs", p.rhs },
                          { "gap", p.gap },
                          { "closed_form", p.closed_form } });
    r["centering"] = cen;
  }
  return r;
}

std::string
mc_csv(const McReport& rep)
{
  std::string s = "experiment,n,c,t,rep,seed,beta_hat,stat,standardized,gap,v_hat,covered\n";
  for (const auto& k : rep.cells)
    for (std::size_t i = 0; i < k.beta_hat.size(); ++i)
      s += rep.experiment + "," + std::to_string(k.n) + "," + fmt(k.c) + "," + fmt(k.t) + "," +
           std::to_string(i) + "," + std::to_string(k.seeds[i]) + "," + fmt(k.beta_hat[i]) + "," +
           fmt(k.stat[i]) + "," + fmt(k.standardized[i]) + "," + fmt(k.gap[i]) + "," + fmt(k.v_hat[i]) + "," +
           std::to_string(k.covered[i]) + "\n";
  return s;
}

json
simulate_cmd(Context& ctx)
{
  const RunConfig& c = ctx.cfg;
  DgpSpec dgp = dgp_of(c);
  EstimatorConfig est = c.estimator();
  FunctionalParams params = c.functional_params();

  if (c.experiment == "bias_rate") {
    BiasRateOptions o;
    o.kernel_orders = c.kernel_orders;
    o.h_grid = c.h_grid;
    o.n = c.n.front();
    o.reps = c.reps;
    o.seed = c.seed;
    o.quadrature_only = c.quadrature_only;
    o.s_f = c.s_f;
    o.s_psi = c.s_psi;
    o.params = params;
    BiasRateReport rep = run_bias_rate(c.functional, dgp, o);
    json series = json::array();
    std::string csv = "order,h,bias,se,quadrature_bias\n";
    for (const auto& s : rep.series) {
      series.push_back(json{ { "order", s.order },
                             { "h", s.h },
                             { "bias", s.bias },
                             { "se", s.se },
                             { "quadrature_bias", s.quadrature_bias },
                             { "slope", s.slope },
                             { "quadrature_slope", s.quadrature_slope },
                             { "expected_slope", s.expected_slope },
                             { "naive_slope", s.naive_slope },
                             { "inconclusive", s.inconclusive } });
      for (std::size_t j = 0; j < s.h.size(); ++j)
        csv += std::to_string(s.order) + "," + fmt(s.h[j]) + "," + (j < s.bias.size() ? fmt(s.bias[j]) : "") + "," +
               (j < s.se.size() ? fmt(s.se[j]) : "") + "," + fmt(s.quadrature_bias[j]) + "\n";
    }
    ctx.warnings.insert(ctx.warnings.end(), rep.warnings.begin(), rep.warnings.end());
    ctx.csv_text = csv;
    return json{ { "experiment", "bias_rate" }, { "functional", rep.functional }, { "dgp", rep.dgp },
                 { "n", rep.n },                { "reps", rep.reps },             { "quadrature_only", rep.quadrature_only },
                 { "series", series } };
  }

  McOptions mc;
  mc.n_grid = c.n;
  mc.reps = c.reps;
  mc.seed = c.seed;
  mc.level = c.level;
  mc.params = params;
  McReport rep;
  if (c.experiment == "linearity")
    rep = run_linearity(c.functional, dgp, est, mc);
  else if (c.experiment == "local_regularity") {
    LocalOptions lo;
    if (!c.z.empty())
      lo.z = c.z;
    lo.h = c.dev_h;
    lo.c_list = c.c_list;
    lo.centering_n = c.centering_n;
    rep = run_local_regularity(c.functional, dgp, est, lo, mc);
  } else {
    for (std::size_t g = 0; g < c.n.size(); ++g) {
      McReport one = run_coverage(c.functional, dgp, est, c.n[g], c.reps, stream_seed(c.seed, g), params);
      if (g == 0)
        rep = one;
      else
        rep.cells.push_back(one.cells.front());
    }
    rep.n_grid = c.n;
    rep.seed = c.seed;
  }
  ctx.warnings.insert(ctx.warnings.end(), rep.warnings.begin(), rep.warnings.end());
  ctx.csv_text = mc_csv(rep);
  return mc_json(rep);
}

json
gmm_cmd(Context& ctx)
{
  const RunConfig& c = ctx.cfg;
  Table t = load_input(c);
  std::optional<DgpSpec> dgp;
  if (c.true_density)
    dgp = dgp_of(c);

  Sample z;
  MomentModel model;
  DistributionRep F_hat = true_density([](std::span<const double>) { return 0.0; }, Box::cube(1, 0.0, 1.0));
  json extra;
  if (c.model == "mean" || c.model == "mean_overid") {
    if (t.data.cols() != 1)
      throw InvalidArgument("schema mismatch: model '" + c.model + "' reads one column, got " + join(t.header, ","));
    z = t.data;
    model = c.model == "mean" ? mean_model(c.bound) : mean_overid_model(c.bound);
  } else if (c.model == "surplus_gmm") {
    z = surplus_columns(t);
    auto fit = fit_series(c, z, series_box(c, z));
    F_hat = fit.rep;
    const SurplusWeight W = c.functional_params().weight;
    if (dgp)
      model = surplus_gmm_model(W, dgp->fx, dgp->d0);
    else {
      model = surplus_gmm_model(W);
      auto est = fit.est;
      auto dh = std::make_shared<const DeltaHat>(*est, W);
      model.correction_phi = [est, dh](const Sample& s) {
        Eigen::MatrixXd phi(s.rows(), 1);
        for (Eigen::Index i = 0; i < s.rows(); ++i) {
          auto x = row(s, i).subspan(1);
          phi(i, 0) = (*dh)(x) * (s(i, 0) - (*est)(x));
        }
        return phi;
      };
    }
    extra["K"] = fit.K;
  } else {
    if (t.data.cols() < 3)
      throw InvalidArgument("schema mismatch: single_index reads y followed by at least two regressors, got " +
                            join(t.header, ","));
    z = t.data;
    SingleIndexOptions so;
    so.bandwidth_c = c.index_bandwidth_c;
    so.trim = c.trim;
    so.bound = c.bound;
    SingleIndexFit fit = single_index_fit(z, so);
    FocCheck foc = single_index_foc_check(fit, z);
    ctx.warnings.insert(ctx.warnings.end(), fit.warnings.begin(), fit.warnings.end());
    std::size_t kept = static_cast<std::size_t>(std::count(fit.keep.begin(), fit.keep.end(), true));
    extra["least_squares"] = json{ { "beta", vec_json(fit.beta) },
                                   { "bandwidth", fit.bandwidth },
                                   { "criterion", fit.criterion },
                                   { "kept", kept },
                                   { "flat", fit.flat },
                                   { "foc_residual", vec_json(foc.residual) },
                                   { "foc_band", vec_json(foc.band) },
                                   { "foc_within", foc.within } };
    std::optional<SingleIndexTruth> truth;
    if (dgp)
      truth = dgp->index_truth;
    model = single_index_model(static_cast<int>(z.cols()) - 1, truth, c.trim, c.bound);
    // the first-order condition has spurious roots away from the fit
    model.start = fit.beta;
    model.bounds.lower.clear();
    model.bounds.upper.clear();
    for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
      model.bounds.lower.push_back(fit.beta(j) - c.local_width);
      model.bounds.upper.push_back(fit.beta(j) + c.local_width);
    }
    F_hat = kde_density(
      std::make_shared<const DensityEstimate>(z, fit.bandwidth, KernelSpec::make(2, static_cast<int>(z.cols()))));
  }

  GmmEstimate est = gmm_fit(model, z, F_hat);
  ctx.warnings.insert(ctx.warnings.end(), est.warnings.begin(), est.warnings.end());
  const double n = static_cast<double>(est.n);
  const double zc = normal_quantile(0.5 * (1.0 + c.level));
  Eigen::VectorXd se = (est.V_hat.diagonal() / n).cwiseMax(0.0).cwiseSqrt();
  json ci = json::array();
  for (Eigen::Index j = 0; j < se.size(); ++j)
    ci.push_back({ est.beta_hat(j) - zc * se(j), est.beta_hat(j) + zc * se(j) });
  json r{ { "model", c.model },
          { "n", est.n },
          { "beta_hat", vec_json(est.beta_hat) },
          { "se", vec_json(se) },
          { "level", c.level },
          { "ci", ci },
          { "V_hat", mat_json(est.V_hat) },
          { "W_hat", mat_json(est.W_hat) },
          { "M_hat", mat_json(est.M_hat) },
          { "m_hat", vec_json(est.m_hat) },
          { "Omega_hat", mat_json(est.Omega_hat) },
          { "objective", est.objective },
          { "boundary", est.boundary } };
  for (auto& [k, v] : extra.items())
    r[k] = v;

  if (dgp) {
    auto it = dgp->beta0.find(c.model);
    if (it == dgp->beta0.end() || est.beta_hat.size() != 1)
      ctx.warnings.push_back("DGP '" + dgp->id + "' declares no true value for '" + c.model + "'; R3 skipped");
    else {
      Eigen::VectorXd b0 = Eigen::VectorXd::Constant(1, it->second);
      r["beta0"] = it->second;
      try {
        R3Report r3 = r3_diagnostic(model, z, F_hat, dgp->truth, b0);
        r["r3"] = json{ { "value", vec_json(r3.value) }, { "scaled", vec_json(r3.scaled) },
                        { "mu_hat", vec_json(r3.mu_hat) } };
      } catch (const UnsupportedRepresentation& e) {
        ctx.warnings.push_back(std::string("R3 skipped: ") + e.what());
      }
    }
  }
  return r;
}

int
exit_code(const Error& e)
{
  switch (e.kind()) {
    case ErrorKind::numeric_failure:
    case ErrorKind::rank_deficiency:
      return exit_numeric;
    default:
      return exit_invalid;
  }
}

std::string
csv_path(const RunConfig& c)
{
  if (!c.csv.empty())
    return c.csv;
  if (c.out.empty())
    return {};
  auto dot = c.out.find_last_of('.');
  auto slash = c.out.find_last_of('/');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash))
    return c.out.substr(0, dot) + ".csv";
  return c.out + ".csv";
}

void
write_file(const std::string& path, const std::string& text)
{
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f)
    throw InvalidArgument("cannot write '" + path + "'");
  f << text;
  if (!f)
    throw InvalidArgument("failed writing '" + path + "'");
}

const std::vector<std::pair<std::string, std::string>>&
value_flags()
{
  static const std::vector<std::pair<std::string, std::string>> f{
    { "--input", "input" },       { "--functional", "functional" }, { "--kernel-order", "kernel_order" },
    { "--bandwidth", "bandwidth" }, { "--basis", "basis" },         { "--K", "K" },
    { "--ladder", "ladder" },     { "--dgp", "dgp" },               { "--n", "n" },
    { "--reps", "reps" },         { "--seed", "seed" },             { "--out", "out" },
    { "--experiment", "experiment" }, { "--model", "model" },
  };
  return f;
}

} // namespace

int
run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
  CLI::App app{ "Plug-in estimators of semiparametric functionals and their influence functions.", "influencekit" };
  std::string command, config_path;
  std::map<std::string, std::string> values;
  std::vector<std::string> sets;
  bool true_density = false;
  app.add_option("command", command, "estimate | influence | diagnose | simulate | gmm")->required();
  app.add_option("--config", config_path, "key=value configuration file");
  for (const auto& [flag, key] : value_flags())
    app.add_option(flag, values[key], "config key " + key);
  app.add_flag("--true-density", true_density, "evaluate at the registry DGP's closed-form distribution");
  app.add_option("--set", sets, "any config key, as key=value (repeatable)");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "influencekit: " << e.what() << "\n";
    return exit_invalid;
  }

  try {
    KeyValues flags;
    for (const auto& s : sets) {
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw InvalidArgument("--set expects key=value, got '" + s + "'");
      flags[normalize_key(trim(s.substr(0, eq)))] = trim(s.substr(eq + 1));
    }
    for (const auto& [flag, key] : value_flags())
      if (app.count(flag))
        flags[key] = values[key];
    if (app.count("--true-density"))
      flags["true_density"] = true_density ? "true" : "false";
    KeyValues file = config_path.empty() ? KeyValues{} : read_config_file(config_path);
    RunConfig cfg = resolve(command, file, flags);

    Context ctx{ cfg, {}, {} };
    json results;
    if (command == "estimate")
      results = estimate_cmd(ctx);
    else if (command == "influence")
      results = influence_cmd(ctx);
    else if (command == "diagnose")
      results = diagnose_cmd(ctx);
    else if (command == "simulate")
      results = simulate_cmd(ctx);
    else
      results = gmm_cmd(ctx);

    json report{ { "schema_version", "1" },
                 { "config", to_json(cfg) },
                 { "results", results },
                 { "warnings", ctx.warnings } };
    const std::string text = report.dump(2) + "\n";
    if (cfg.out.empty())
      out << text;
    else
      write_file(cfg.out, text);
    if (!ctx.csv_text.empty()) {
      std::string path = csv_path(cfg);
      if (!path.empty())
        write_file(path, ctx.csv_text);
    }
    for (const auto& w : ctx.warnings)
      err << "influencekit: warning: " << w << "\n";
    return exit_ok;
  } catch (const Error& e) {
    err << "influencekit: error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const json::exception& e) {
    err << "influencekit: error: " << e.what() << "\n";
    return exit_numeric;
  } catch (const std::exception& e) {
    err << "influencekit: error: " << e.what() << "\n";
    return exit_numeric;
  }
}

} // namespace infkit::cli
