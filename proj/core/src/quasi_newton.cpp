#include "ouf/quasi_newton.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ouf {

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 60;

Eigen::VectorXd clamp_to_box(Eigen::VectorXd x, const QuasiNewtonOptions& opts) {
  if (opts.lower.size() > 0) x = x.cwiseMax(opts.lower);
  if (opts.upper.size() > 0) x = x.cwiseMin(opts.upper);
  return x;
}

}  // namespace

QuasiNewtonResult minimize(const Objective& f, const Gradient& grad,
                           Eigen::VectorXd x0, const QuasiNewtonOptions& opts) {
  const Eigen::Index d = x0.size();
  QuasiNewtonResult res;
  res.x = clamp_to_box(std::move(x0), opts);
  res.value = f(res.x);
  if (!std::isfinite(res.value))
    throw std::invalid_argument("minimize: objective not finite at the start");

  Eigen::VectorXd g = grad(res.x);
  if (!g.allFinite()) return res;
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(d, d);
  bool first_update = true;

  for (res.iters = 0; res.iters < opts.max_iters; ++res.iters) {
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      res.converged = true;
      return res;
    }

    Eigen::VectorXd dir = -(h_inv * g);
    if (dir.dot(g) >= 0.0) {  // not a descent direction; reset curvature
      h_inv.setIdentity();
      dir = -g;
      first_update = true;
    }
    const double dir_norm = dir.lpNorm<Eigen::Infinity>();
    if (dir_norm > opts.max_step) dir *= opts.max_step / dir_norm;

    // Backtracking Armijo search; infeasible points report +inf and simply
    // halve the step.
    double t = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    const double slope = g.dot(dir);
    bool accepted = false;
    for (int back = 0; back < kMaxBacktracks; ++back) {
      x_new = clamp_to_box(res.x + t * dir, opts);
      f_new = f(x_new);
      if (std::isfinite(f_new) && f_new <= res.value + kArmijo * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) return res;  // stuck; report the best point found

    const Eigen::VectorXd step = x_new - res.x;
    const Eigen::VectorXd g_new = grad(x_new);
    if (!g_new.allFinite()) {  // accept the point but stop here
      res.x = x_new;
      res.value = f_new;
      return res;
    }
    const Eigen::VectorXd yk = g_new - g;
    const double sy = step.dot(yk);
    if (sy > 1e-12 * step.norm() * yk.norm()) {
      if (first_update) {  // scale the seed matrix to the local curvature
        h_inv *= sy / yk.squaredNorm();
        first_update = false;
      }
      const Eigen::VectorXd hy = h_inv * yk;
      const double yhy = yk.dot(hy);
      h_inv += ((sy + yhy) / (sy * sy)) * (step * step.transpose());
      const Eigen::MatrixXd cross = hy * step.transpose();
      h_inv -= (cross + cross.transpose()) / sy;
    }

    res.x = x_new;
    res.value = f_new;
    g = g_new;
    if (step.lpNorm<Eigen::Infinity>() < opts.step_tol) {
      res.converged = true;
      ++res.iters;
      return res;
    }
  }
  return res;
}

Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x, double scale,
                            const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  double f0 = std::numeric_limits<double>::quiet_NaN();  // only if one-sided
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = scale * (1.0 + std::abs(x[j]));
    double hi = x[j] + h, lo = x[j] - h;
    if (upper.size() > 0) hi = std::min(hi, upper[j]);
    if (lower.size() > 0) lo = std::max(lo, lower[j]);
    xp[j] = hi;
    const double fp = f(xp);
    xp[j] = lo;
    const double fm = f(xp);
    xp[j] = x[j];
    if (std::isfinite(fp) && std::isfinite(fm) && hi > lo) {
      g[j] = (fp - fm) / (hi - lo);
    } else {
      if (std::isnan(f0)) f0 = f(x);
      if (std::isfinite(fp) && hi > x[j])
        g[j] = (fp - f0) / (hi - x[j]);
      else if (std::isfinite(fm) && x[j] > lo)
        g[j] = (f0 - fm) / (x[j] - lo);
      else
        g[j] = 0.0;  // pinned coordinate
    }
  }
  return g;
}

Eigen::MatrixXd fd_hessian(const Objective& f, const Eigen::VectorXd& x, double scale) {
  const Eigen::Index d = x.size();
  Eigen::MatrixXd h(d, d);
  Eigen::VectorXd steps(d);
  for (Eigen::Index j = 0; j < d; ++j) steps[j] = scale * (1.0 + std::abs(x[j]));

  const double f0 = f(x);
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < d; ++j) {
    xp[j] = x[j] + steps[j];
    const double fp = f(xp);
    xp[j] = x[j] - steps[j];
    const double fm = f(xp);
    xp[j] = x[j];
    h(j, j) = (fp - 2.0 * f0 + fm) / (steps[j] * steps[j]);
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index l = j + 1; l < d; ++l) {
      xp[j] = x[j] + steps[j];
      xp[l] = x[l] + steps[l];
      const double fpp = f(xp);
      xp[l] = x[l] - steps[l];
      const double fpm = f(xp);
      xp[j] = x[j] - steps[j];
      const double fmm = f(xp);
      xp[l] = x[l] + steps[l];
      const double fmp = f(xp);
      xp[j] = x[j];
      xp[l] = x[l];
      h(j, l) = h(l, j) = (fpp - fpm - fmp + fmm) / (4.0 * steps[j] * steps[l]);
    }
  }
  return h;
}

}  // namespace ouf
