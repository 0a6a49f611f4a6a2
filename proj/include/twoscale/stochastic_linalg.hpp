#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "errors.hpp"

namespace twoscale {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr double hurwitz_margin = 1e-9;
inline constexpr double eig_floor = 1e-14;

inline std::string shape_str(const Mat& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

inline Eigen::VectorXd sym_eigenvalues(const Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

// sqrt(lambda_max(M^T M)); the smaller Gram matrix is used for non-square M.
inline double spectral_norm(const Mat& M) {
  if (M.size() == 0) return 0.0;
  Mat G = M.rows() < M.cols() ? Mat(M * M.transpose()) : Mat(M.transpose() * M);
  double lmax = sym_eigenvalues(G).maxCoeff();
  return std::sqrt(std::max(lmax, 0.0));
}

// Symmetric P^{s} through the eigendecomposition, eigenvalues floored at eig_floor.
inline Mat sym_power(const Mat& P, double s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (P + P.transpose()));
  Vec lam = es.eigenvalues().unaryExpr([s](double x) { return std::pow(std::max(x, eig_floor), s); });
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

inline Mat sym_sqrt(const Mat& P) { return sym_power(P, 0.5); }
inline Mat sym_inv_sqrt(const Mat& P) { return sym_power(P, -0.5); }

// Smallest real part over the eigenvalues of A.
inline double min_real_eig(const Mat& A) {
  if (A.rows() == 0) return INFINITY;
  Eigen::EigenSolver<Mat> es(A, false);
  return es.eigenvalues().real().minCoeff();
}

inline bool is_neg_hurwitz(const Mat& A, double margin = hurwitz_margin) {
  return A.rows() == A.cols() && A.allFinite() && min_real_eig(A) >= margin;
}

inline double lyapunov_residual(const Mat& A, const Mat& Q) {
  return (A.transpose() * Q + Q * A - Mat::Identity(A.rows(), A.rows())).norm();
}

// Q with A^T Q + Q A = I, via the d^2 x d^2 Kronecker system. Cost is O(d^6),
// fine for d up to about 100.
inline Mat solve_lyapunov(const Mat& A) {
  if (A.rows() != A.cols()) throw DimensionMismatch("solve_lyapunov: A is " + shape_str(A));
  const Eigen::Index d = A.rows();
  if (!A.allFinite()) throw NotHurwitz("solve_lyapunov: non-finite entries");
  double mr = min_real_eig(A);
  if (!(mr >= hurwitz_margin)) {
    std::ostringstream os;
    os << "solve_lyapunov: min Re(eig A) = " << mr << " < margin " << hurwitz_margin;
    throw NotHurwitz(os.str());
  }
  const Eigen::Index n = d * d;
  Mat K = Mat::Zero(n, n);
  Mat At = A.transpose();
  // vec(A^T Q) = (I kron A^T) vec Q, vec(Q A) = (A^T kron I) vec Q, column-major vec.
  for (Eigen::Index j = 0; j < d; ++j) {
    K.block(j * d, j * d, d, d) += At;
    for (Eigen::Index i = 0; i < d; ++i) K.block(i * d, j * d, d, d).diagonal().array() += At(i, j);
  }
  Vec rhs = Eigen::Map<const Vec>(Mat::Identity(d, d).eval().data(), n);
  Vec q = K.partialPivLu().solve(rhs);
  Mat Q = Eigen::Map<Mat>(q.data(), d, d);
  Q = 0.5 * (Q + Q.transpose()).eval();
  double res = lyapunov_residual(A, Q);
  if (!(res <= 1e-10 * static_cast<double>(d))) {
    std::ostringstream os;
    os << "solve_lyapunov: residual " << res << " exceeds " << 1e-10 * d;
    throw IllConditioned(os.str());
  }
  if (!(sym_eigenvalues(Q).minCoeff() > 0.0)) throw IllConditioned("solve_lyapunov: Q not positive definite");
  return Q;
}

// ||M||_{P,Q} = max_{||x||_P = 1} ||M x||_Q = ||Q^{1/2} M P^{-1/2}||_2.
inline double weighted_opnorm(const Mat& M, const Mat& P, const Mat& Q) {
  if (P.rows() != P.cols() || Q.rows() != Q.cols() || M.cols() != P.rows() || M.rows() != Q.rows())
    throw DimensionMismatch("weighted_opnorm: M " + shape_str(M) + ", P " + shape_str(P) + ", Q " + shape_str(Q));
  return spectral_norm(sym_sqrt(Q) * M * sym_inv_sqrt(P));
}

struct LyapunovCertificate {
  Mat Q;
  double a = 0;         // 1 / (2 ||Q||^2)
  double step_cap = 0;  // (1/2) ||A||_Q^{-2} ||Q||^{-2}
  double p = 1;         // lambda_max(Q) / lambda_min(Q)
  double q_norm = 0;
  double a_qnorm = 0;   // ||A||_Q
  double lambda_min = 0;
  double lambda_max = 0;
};

inline LyapunovCertificate make_certificate(const Mat& A) {
  LyapunovCertificate c;
  c.Q = solve_lyapunov(A);
  Vec ev = sym_eigenvalues(c.Q);
  c.lambda_min = ev.minCoeff();
  c.lambda_max = ev.maxCoeff();
  c.q_norm = c.lambda_max;
  c.a = 1.0 / (2.0 * c.q_norm * c.q_norm);
  c.a_qnorm = weighted_opnorm(A, c.Q, c.Q);
  c.step_cap = 0.5 / (c.a_qnorm * c.a_qnorm * c.q_norm * c.q_norm);
  c.p = c.lambda_max / c.lambda_min;
  return c;
}

// ||I - gamma A||_Q evaluated directly.
inline double contraction_factor(const Mat& A, const LyapunovCertificate& c, double gamma) {
  Mat I = Mat::Identity(A.rows(), A.cols());
  return weighted_opnorm(I - gamma * A, c.Q, c.Q);
}

// Bound that follows from A^T Q + Q A = I alone:
// ||I - gamma A||_Q^2 <= 1 - gamma / lambda_max(Q) + gamma^2 ||A||_Q^2.
// The certificate's 1 - a*gamma only follows from this when ||Q|| >= 1.
inline double contraction_bound(const LyapunovCertificate& c, double gamma) {
  return std::sqrt(std::max(0.0, 1.0 - gamma / c.lambda_max + gamma * gamma * c.a_qnorm * c.a_qnorm));
}

// Head of a step schedule, as needed by C_seq.
struct ScheduleHead {
  double beta0 = 0;
  double gamma0 = 0;
  double a22 = 1;
  double a_delta = 1;
};

inline double varsigma(const ScheduleHead& h) {
  return 1.0 + std::max(h.gamma0 * h.a22 / 8.0, h.beta0 * h.a_delta / 16.0);
}

inline double c_seq(double a, double vs, double ratio) {
  if (!(a > 0)) throw NonPositiveRate("c_seq: rate must be positive");
  if (!(vs >= 1) || !(ratio > 0)) throw NonPositiveInput("c_seq: varsigma >= 1 and a22/(4 a_delta) > 0 required");
  return std::max(2.0 / a * vs * std::max(1.0, ratio), 4.0 / a * vs * vs * vs);
}

inline double c_seq(double a, const ScheduleHead& h) {
  if (!(h.beta0 >= 0) || !(h.gamma0 >= 0) || !(h.a22 > 0) || !(h.a_delta > 0))
    throw NonPositiveInput("c_seq: schedule head must be positive");
  return c_seq(a, varsigma(h), h.a22 / (4.0 * h.a_delta));
}

}  // namespace twoscale
