#pragma once

#include <functional>

#include <Eigen/Dense>

namespace ouf {

// Line-searched BFGS minimizer.  Objectives signal an infeasible point by
// returning +inf (or throwing is the caller wrapper's job); the backtracking
// line search then halves the step, which is how hard constraints such as the
// drift eigenvalue condition are enforced.
struct QuasiNewtonOptions {
  int max_iters = 200;
  double grad_tol = 1e-8;   // inf-norm of the gradient
  double step_tol = 1e-8;   // inf-norm of the accepted step
  double max_step = 10.0;   // inf-norm cap on the proposed step
  Eigen::VectorXd lower;    // optional box bounds; empty means unbounded
  Eigen::VectorXd upper;
};

struct QuasiNewtonResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iters = 0;
  bool converged = false;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;
using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

QuasiNewtonResult minimize(const Objective& f, const Gradient& grad,
                           Eigen::VectorXd x0, const QuasiNewtonOptions& opts);

// Central-difference gradient with per-coordinate steps h_j = scale (1 + |x_j|).
// Probes are clamped to the box when bounds are given, and an infeasible
// (+inf) side degrades gracefully to a one-sided difference.
Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x,
                            double scale = 1e-4,
                            const Eigen::VectorXd& lower = Eigen::VectorXd(),
                            const Eigen::VectorXd& upper = Eigen::VectorXd());

// Central-difference Hessian with the same stepping rule; symmetrized.
Eigen::MatrixXd fd_hessian(const Objective& f, const Eigen::VectorXd& x,
                           double scale = 1e-4);

}  // namespace ouf
