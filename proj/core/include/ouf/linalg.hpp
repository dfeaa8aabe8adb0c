#pragma once

#include <Eigen/Dense>

namespace ouf {

// Kronecker product A (m x n) with B (q x r) -> (mq x nr).
Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Kronecker sum of square matrices: A (+) B = A ox I_b + I_a ox B.
Eigen::MatrixXd kron_sum(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Matrix exponential by scaling-and-squaring with a diagonal Pade
// approximant (orders 3/5/7/9/13 picked from the 1-norm).  Throws
// NumericalError on non-finite input or overflowing scale.
Eigen::MatrixXd mat_exp(const Eigen::MatrixXd& a);

// Column-major stacking and its inverse.
Eigen::VectorXd vec(const Eigen::MatrixXd& a);
Eigen::MatrixXd unvec(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols);

}  // namespace ouf
