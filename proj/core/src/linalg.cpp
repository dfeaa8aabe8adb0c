#include "ouf/linalg.hpp"

#include <cmath>
#include <stdexcept>

#include "ouf/common.hpp"

namespace ouf {

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Eigen::MatrixXd kron_sum(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != a.cols() || b.rows() != b.cols())
    throw std::invalid_argument("kron_sum: both matrices must be square");
  const Eigen::Index m = a.rows(), q = b.rows();
  return kron(a, Eigen::MatrixXd::Identity(q, q)) +
         kron(Eigen::MatrixXd::Identity(m, m), b);
}

namespace {

// Diagonal Pade numerator/denominator split exp(A) ~ (v-u)^{-1}(v+u).
void pade_uv(const Eigen::MatrixXd& a, int order, Eigen::MatrixXd& u,
             Eigen::MatrixXd& v) {
  const Eigen::Index n = a.rows();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd a2 = a * a;
  switch (order) {
    case 3: {
      u = a * (a2 + 60.0 * id);
      v = 12.0 * a2 + 120.0 * id;
      break;
    }
    case 5: {
      const Eigen::MatrixXd a4 = a2 * a2;
      u = a * (a4 + 420.0 * a2 + 15120.0 * id);
      v = 30.0 * a4 + 3360.0 * a2 + 30240.0 * id;
      break;
    }
    case 7: {
      const Eigen::MatrixXd a4 = a2 * a2;
      const Eigen::MatrixXd a6 = a4 * a2;
      u = a * (a6 + 1512.0 * a4 + 277200.0 * a2 + 8648640.0 * id);
      v = 56.0 * a6 + 25200.0 * a4 + 1995840.0 * a2 + 17297280.0 * id;
      break;
    }
    case 9: {
      const Eigen::MatrixXd a4 = a2 * a2;
      const Eigen::MatrixXd a6 = a4 * a2;
      const Eigen::MatrixXd a8 = a6 * a2;
      u = a * (a8 + 3960.0 * a6 + 2162160.0 * a4 + 302702400.0 * a2 +
               8821612800.0 * id);
      v = 90.0 * a8 + 110880.0 * a6 + 30270240.0 * a4 + 2075673600.0 * a2 +
          17643225600.0 * id;
      break;
    }
    default: {  // 13
      const Eigen::MatrixXd a4 = a2 * a2;
      const Eigen::MatrixXd a6 = a4 * a2;
      u = a * (a6 * (a6 + 16380.0 * a4 + 40840800.0 * a2) +
               33522128640.0 * a6 + 10559470521600.0 * a4 +
               1187353796428800.0 * a2 + 32382376266240000.0 * id);
      v = a6 * (182.0 * a6 + 960960.0 * a4 + 1323241920.0 * a2) +
          670442572800.0 * a6 + 129060195264000.0 * a4 +
          7771770303897600.0 * a2 + 64764752532480000.0 * id;
      break;
    }
  }
}

// Closed form for 2 x 2 via the characteristic polynomial:
//   e^A = e^{m} [cosh(mu) I + sinh(mu)/mu (A - m I)],  m = tr(A)/2,
// with mu^2 = m^2 - det(A); negative mu^2 swaps cosh/sinh for cos/sin.
Eigen::MatrixXd exp_2x2(const Eigen::MatrixXd& a) {
  const double m = 0.5 * (a(0, 0) + a(1, 1));
  const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  const double mu2 = m * m - det;
  double c, s;  // cosh(mu), sinh(mu)/mu in the appropriate branch
  if (mu2 > 1e-8) {
    const double mu = std::sqrt(mu2);
    c = std::cosh(mu);
    s = std::sinh(mu) / mu;
  } else if (mu2 < -1e-8) {
    const double mu = std::sqrt(-mu2);
    c = std::cos(mu);
    s = std::sin(mu) / mu;
  } else {  // series in mu^2; error O(mu2^3) stays below 1e-24 here
    c = 1.0 + mu2 / 2.0 + mu2 * mu2 / 24.0;
    s = 1.0 + mu2 / 6.0 + mu2 * mu2 / 120.0;
  }
  const double scale = std::exp(m);
  Eigen::MatrixXd out(2, 2);
  out(0, 0) = scale * (c + s * (a(0, 0) - m));
  out(0, 1) = scale * s * a(0, 1);
  out(1, 0) = scale * s * a(1, 0);
  out(1, 1) = scale * (c + s * (a(1, 1) - m));
  return out;
}

Eigen::MatrixXd finite_or_throw(Eigen::MatrixXd m) {
  if (!m.allFinite()) throw NumericalError("mat_exp: result overflowed");
  return m;
}

}  // namespace

Eigen::MatrixXd mat_exp(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("mat_exp: matrix must be square");
  if (!a.allFinite()) throw NumericalError("mat_exp: non-finite input");
  const Eigen::Index n = a.rows();
  if (n == 0) return Eigen::MatrixXd(0, 0);
  if (n == 1) return finite_or_throw(Eigen::MatrixXd::Constant(1, 1, std::exp(a(0, 0))));
  if (n == 2) return finite_or_throw(exp_2x2(a));

  const double norm = a.cwiseAbs().colwise().sum().maxCoeff();  // 1-norm
  // Order thresholds from the scaled-Pade error analysis.
  constexpr double kTheta3 = 1.495585217958292e-2;
  constexpr double kTheta5 = 2.539398330063230e-1;
  constexpr double kTheta7 = 9.504178996162932e-1;
  constexpr double kTheta9 = 2.097847961257068e0;
  constexpr double kTheta13 = 5.371920351148152e0;

  int order;
  int squarings = 0;
  Eigen::MatrixXd scaled = a;
  if (norm <= kTheta3) {
    order = 3;
  } else if (norm <= kTheta5) {
    order = 5;
  } else if (norm <= kTheta7) {
    order = 7;
  } else if (norm <= kTheta9) {
    order = 9;
  } else {
    order = 13;
    const double excess = norm / kTheta13;
    if (excess > 1.0) {
      squarings = static_cast<int>(std::ceil(std::log2(excess)));
      if (squarings > 60) throw NumericalError("mat_exp: norm out of range");
      scaled = a / std::ldexp(1.0, squarings);
    }
  }

  Eigen::MatrixXd u, v;
  pade_uv(scaled, order, u, v);
  // exp(A) ~ (v - u)^{-1} (v + u).
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(v - u);
  Eigen::MatrixXd result = lu.solve(v + u);
  if (!result.allFinite()) throw NumericalError("mat_exp: approximant did not converge");
  for (int i = 0; i < squarings; ++i) result = result * result;
  return finite_or_throw(std::move(result));
}

Eigen::VectorXd vec(const Eigen::MatrixXd& a) {
  return Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
}

Eigen::MatrixXd unvec(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols)
    throw std::invalid_argument("unvec: size mismatch");
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

}  // namespace ouf
