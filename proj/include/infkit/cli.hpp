#pragma once

#include "infkit/diagnostics.hpp"
#include "infkit/simulate.hpp"
#include "infkit/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace infkit::cli {

//! Flat key=value settings. Keys use underscores; the matching flags use
//! dashes (kernel_order, --kernel-order).
using KeyValues = std::map<std::string, std::string>;

//! One key=value per line; '#' starts a comment, blank lines are skipped.
//! Throws InvalidArgument naming `origin` and the line on malformed input or
//! an unknown key.
KeyValues parse_config_text(const std::string& text, const std::string& origin = "config");
KeyValues read_config_file(const std::string& path);

//! Every key the configuration understands, with its default.
const std::vector<std::pair<std::string, std::string>>& config_keys();

//! A tuning constant: either a fixed value or c n^a.
struct Rule
{
  std::optional<double> fixed;
  double c = 1.0;
  Rational exponent;

  //! "0.3", "n^-1/5", "1.06*n^-1/5" or "2 n^(1/2)".
  static Rule parse(const std::string& s);
  double at(std::size_t n) const;
  std::string str() const;
};

//! Fully resolved, validated configuration of one run.
struct RunConfig
{
  std::string command;
  std::string input;
  std::string functional = "isd";
  std::string family;   // kernel or series
  int kernel_order = 4; // estimator kernel
  Rule bandwidth;       // h
  std::string basis = "spline";
  int spline_order = 2;
  Rule K;
  std::vector<double> ladder;
  double t_step = 1e-3;
  std::string extrapolation = "richardson";
  std::string dgp;
  std::vector<std::size_t> n;
  int reps = 500;
  std::uint64_t seed = 1;
  double level = 0.95;
  std::string out;
  std::string csv;
  bool true_density = false;
  double noise = -1.0;

  // functional parameters
  double p0 = 0.2, p1 = 0.8, b = 0.0;
  double constant = 0.0;
  std::vector<double> psi_coeffs;

  // influence
  std::vector<std::vector<double>> points;

  // simulate
  std::string experiment = "linearity";
  std::vector<double> z;
  double dev_h = 0.25;
  std::vector<double> c_list;
  std::vector<double> centering_n;
  std::vector<int> kernel_orders;
  std::vector<double> h_grid;
  int s_f = 0;
  int s_psi = 0;
  bool quadrature_only = false;

  // diagnose
  std::string rate_kind; // kernel, power, spline
  int r = 0;             // 0: from the data
  int s_d = 0;
  int s_delta = 0;

  // gmm
  std::string model = "mean";
  double trim = 0.01;
  double bound = 10.0;
  double index_bandwidth_c = 1.0;
  double local_width = 0.25;

  EstimatorConfig estimator() const;
  FunctionalParams functional_params() const;
};

const std::vector<std::string>& commands();

//! defaults < file < flags. Throws InvalidArgument for anything out of range.
RunConfig resolve(const std::string& command, const KeyValues& file, const KeyValues& flags);

//! Headered numeric CSV.
struct Table
{
  std::vector<std::string> header;
  Sample data;
};

//! Throws InvalidArgument with the line and column of a malformed field and
//! InsufficientData for a file without data rows.
Table parse_csv(const std::string& text, const std::string& origin = "input");
Table read_csv(const std::string& path);

//! Exit codes.
inline constexpr int exit_ok = 0;
inline constexpr int exit_invalid = 2;
inline constexpr int exit_numeric = 3;

//! Runs one command line (args excludes the program name). The JSON report
//! goes to --out, else to `out`; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace infkit::cli
