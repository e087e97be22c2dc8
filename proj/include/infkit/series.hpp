#pragma once

#include "infkit/quadrature.hpp"
#include "infkit/types.hpp"

#include <functional>
#include <vector>

namespace infkit {

//! Vector of approximating functions p^K(x) on a declared box.
//!
//! Power kind: monomials in graded lexicographic order (total degree first,
//! then lexicographic on the exponent vector, so x1^2, x1 x2, x2^2). By
//! default each coordinate is mapped affinely from its support onto [-1, 1]
//! before the monomials are formed; this only changes conditioning, never
//! the spanned space.
//!
//! Spline kind: tensor products of clamped B-splines of order o (degree
//! o - 1) per coordinate; k_c = m_c + o functions on coordinate c with m_c
//! interior knots.
class BasisSpec
{
public:
  enum class Kind
  {
    power,
    spline
  };

  static BasisSpec power(int K, Box support, bool map_to_unit = true);

  //! Explicit interior knots per coordinate. `K`, when positive, must equal
  //! prod_c (m_c + o).
  static BasisSpec spline(int order,
                          std::vector<std::vector<double>> interior_knots,
                          Box support,
                          int K = -1);

  //! Uniform interior knots with `per_coord[c]` functions on coordinate c.
  static BasisSpec uniform_spline(int order, std::vector<int> per_coord, Box support);

  //! Uniform spline with roughly K terms in total: each coordinate gets
  //! max(o, round(K^{1/r})) functions.
  static BasisSpec uniform_spline_for(int order, int K, Box support);

  Kind kind() const { return kind_; }
  int size() const { return K_; }
  int dim() const { return support_.dim(); }
  int spline_order() const { return order_; }
  const Box& support() const { return support_; }
  const std::vector<std::vector<double>>& interior_knots() const { return knots_; }
  //! Exponent vectors of the power basis, in basis order.
  const std::vector<std::vector<int>>& exponents() const { return exponents_; }

  void eval(std::span<const double> x, Eigen::Ref<Eigen::VectorXd> out) const;
  Eigen::VectorXd operator()(std::span<const double> x) const;
  //! n x K matrix P with rows p^K(x_i)^T.
  Eigen::MatrixXd design(const Sample& X) const;

  //! Spline knots per coordinate (empty for the power kind).
  Breakpoints breakpoints() const;

private:
  BasisSpec() = default;
  void spline_1d(int c, double x, double* out) const;

  Kind kind_ = Kind::power;
  int K_ = 0;
  int order_ = 0;
  bool map_ = true;
  Box support_;
  std::vector<std::vector<int>> exponents_;
  std::vector<std::vector<double>> knots_;      // interior
  std::vector<std::vector<double>> full_knots_; // clamped knot vectors
  std::vector<int> per_coord_;
};

//! Least-squares series regression d(x) = p^K(x)^T gamma with
//! gamma = Sigma^{-1} P^T Q / n and Sigma = P^T P / n.
class SeriesEstimate
{
public:
  //! Throws RankDeficiency when the smallest eigenvalue of Sigma is at most
  //! 1e-10, InvalidArgument on shape mismatch.
  SeriesEstimate(const Sample& X, const Eigen::VectorXd& Q, BasisSpec basis);

  const BasisSpec& basis() const { return basis_; }
  const Eigen::VectorXd& gamma() const { return gamma_; }
  const Eigen::MatrixXd& sigma() const { return sigma_; }
  std::size_t n() const { return n_; }
  double min_eigenvalue() const { return min_eig_; }

  double operator()(std::span<const double> x) const;
  //! Sigma^{-1} v.
  Eigen::VectorXd solve(const Eigen::VectorXd& v) const;

private:
  BasisSpec basis_;
  Eigen::VectorXd gamma_;
  Eigen::MatrixXd sigma_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::size_t n_ = 0;
  double min_eig_ = 0.0;
};

//! W(x) = w(y) 1(p0 <= p <= p1) exp(-b (p - p0)) with x = (p, y): price is
//! coordinate 0, the income variable (when present) coordinate 1.
struct SurplusWeight
{
  double p0 = 0.0;
  double p1 = 1.0;
  double b = 0.0;
  std::function<double(double)> w; // empty means w = 1

  double operator()(std::span<const double> x) const;
  //! `x_support` with the price coordinate clipped to the band.
  Box region(const Box& x_support) const;
  void validate() const;
};

//! int W(x) p^K(x) dx over the band times the basis support of y.
Eigen::VectorXd weight_moment(const SurplusWeight& W,
                              const BasisSpec& basis,
                              const quad::Options& opts = { 1e-11 });

//! Estimated Riesz representer
//!   delta(x) = [int W p^K]^T Sigma^{-1} p^K(x).
class DeltaHat
{
public:
  DeltaHat(const SeriesEstimate& est, const Eigen::VectorXd& weight_moments);
  DeltaHat(const SeriesEstimate& est, const SurplusWeight& W);

  double operator()(std::span<const double> x) const;
  const Eigen::VectorXd& coefficients() const { return coef_; }

private:
  BasisSpec basis_;
  Eigen::VectorXd coef_;
};

double delta_hat_eval(const SeriesEstimate& est,
                      const SurplusWeight& W,
                      std::span<const double> x);

} // namespace infkit
