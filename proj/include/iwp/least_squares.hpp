/**
 * @file least_squares.hpp
 * @brief Small dense Gauss-Newton solver used by the calibration and
 *        characterization fitters.
 *
 * Residuals are supplied by a callable `Eigen::VectorXd f(const Eigen::VectorXd&)`.
 * The Jacobian is taken by central differences unless an analytic one is given.
 * Each step solves the normal equations (J^T J) dx = -J^T r and is halved until
 * the cost decreases, so the cost sequence is monotone.
 */

#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace iwp {

struct GaussNewtonOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-10;
  double relative_step = 1e-7;  ///< central-difference step, relative to max(1, |x|)
};

struct GaussNewtonResult {
  Eigen::VectorXd params;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  double cost = 0.0;  ///< 0.5 * ||r||^2
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;

  double rms() const {
    return residuals.size() ? std::sqrt(residuals.squaredNorm() / residuals.size()) : 0.0;
  }

  /// sigma^2 (J^T J)^-1 with sigma^2 = ||r||^2 / (n - p); zero matrix when n <= p.
  Eigen::MatrixXd covariance() const {
    const auto n = residuals.size();
    const auto p = params.size();
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
    if (n <= p) return cov;
    const Eigen::MatrixXd jtj = jacobian.transpose() * jacobian;
    const double s2 = residuals.squaredNorm() / static_cast<double>(n - p);
    return s2 * jtj.completeOrthogonalDecomposition().pseudoInverse();
  }
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

inline Eigen::MatrixXd numeric_jacobian(const ResidualFn& f, const Eigen::VectorXd& x, double rel_step) {
  const Eigen::VectorXd r0 = f(x);
  Eigen::MatrixXd j(r0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = rel_step * std::max(1.0, std::abs(x(k)));
    Eigen::VectorXd xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    j.col(k) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

inline GaussNewtonResult gauss_newton(const ResidualFn& f, Eigen::VectorXd x,
                                      const GaussNewtonOptions& opt = {},
                                      const JacobianFn& jac = nullptr) {
  auto jacobian = [&](const Eigen::VectorXd& p) {
    return jac ? jac(p) : numeric_jacobian(f, p, opt.relative_step);
  };

  GaussNewtonResult res;
  Eigen::VectorXd r = f(x);
  double cost = 0.5 * r.squaredNorm();
  Eigen::MatrixXd j = jacobian(x);
  Eigen::VectorXd g = j.transpose() * r;

  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (g.norm() < opt.gradient_tolerance) break;
    const Eigen::MatrixXd jtj = j.transpose() * j;
    Eigen::VectorXd dx = jtj.completeOrthogonalDecomposition().solve(-g);
    if (!dx.allFinite()) break;

    bool improved = false;
    for (int halving = 0; halving < 40; ++halving) {
      const Eigen::VectorXd xn = x + dx;
      const Eigen::VectorXd rn = f(xn);
      const double cn = 0.5 * rn.squaredNorm();
      if (std::isfinite(cn) && cn < cost) {
        x = xn;
        r = rn;
        cost = cn;
        improved = true;
        break;
      }
      dx *= 0.5;
    }
    j = jacobian(x);
    g = j.transpose() * r;
    if (!improved) break;  // stagnated at machine precision
  }

  res.params = x;
  res.residuals = r;
  res.jacobian = j;
  res.cost = cost;
  res.gradient_norm = g.norm();
  res.iterations = it;
  // A stalled line search at a point whose gradient is at round-off level is a minimum too.
  const double noise_floor = 1e-7 * std::max(1.0, std::sqrt(2.0 * cost)) * std::max(1.0, j.norm());
  res.converged = res.gradient_norm < opt.gradient_tolerance || res.gradient_norm < noise_floor;
  return res;
}

}  // namespace iwp
