#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "problems.hpp"
#include "random.hpp"
#include "schedules.hpp"
#include "stochastic_linalg.hpp"

namespace twoscale {

struct TransformBounds {
  double L_inf = 0;
  double C_inf = 0;
};

inline TransformBounds transform_bounds(const LinearSystem& sys, const LyapunovCertificate& c22,
                                        const LyapunovCertificate& cd) {
  TransformBounds tb;
  double a12 = weighted_opnorm(sys.A12, c22.Q, cd.Q);
  double m = spectral_norm(sys.a22inv_a21());
  if (a12 > 0) {
    tb.L_inf = cd.a / (2.0 * a12);
  } else {
    // A12 = 0: L_k = 0 for all k when also A21 = 0, otherwise no finite bound
    tb.L_inf = m == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  tb.C_inf = std::sqrt(c22.lambda_max / cd.lambda_min) * tb.L_inf + m;
  return tb;
}

// Everything l_step needs from the system, computed once.
struct TransformContext {
  Mat A12, A22, Delta, M;  // M = A22^{-1} A21
  LyapunovCertificate c22, cd;
  TransformBounds bounds;

  TransformContext(const LinearSystem& sys, const LyapunovCertificate& c22_, const LyapunovCertificate& cd_)
      : A12(sys.A12), A22(sys.A22), Delta(sys.delta()), M(sys.a22inv_a21()), c22(c22_), cd(cd_),
        bounds(transform_bounds(sys, c22_, cd_)) {}

  explicit TransformContext(const LinearSystem& sys)
      : TransformContext(sys, make_certificate(sys.A22), make_certificate(sys.delta())) {}
};

// Optional per-step checks. Each costs an eigensolve.
struct ParanoidChecks {
  bool l_bound = true;      // ||L_{k+1}||_{Q_Delta,Q22} <= L_inf + 1e-9
  bool contraction = true;  // ||I - beta B11||_{Q_Delta} <= 1 - beta a_Delta/2, same for B22
  bool c_bound = true;      // ||C_k|| <= C_inf
  bool throw_on_violation = true;

  static ParanoidChecks off() { return {false, false, false, false}; }
  static ParanoidChecks record_only() { return {true, true, true, false}; }
};

struct TransformDiagnostics {
  double max_l_ratio = 0;     // max ||L_k||_{Q_Delta,Q22} / L_inf
  double max_b11_excess = -INFINITY;  // max of ||I - beta B11||_{Q_Delta} - (1 - beta a_Delta/2)
  double max_b22_excess = -INFINITY;
  double max_c_ratio = 0;     // max ||C_k|| / C_inf
  long l_violations = 0, b11_violations = 0, b22_violations = 0, c_violations = 0;
};

// After l_step from k: L holds L_{k+1}, k is k+1, and B11, B22, C are the index-k
// matrices B11^k = Delta - A12 L_k, B22^k, C_k that move (theta~, w~) from k to k+1.
struct TransformState {
  Mat L;
  long k = 0;
  Mat B11, B22, C;
  TransformDiagnostics diag;

  static TransformState initial(const TransformContext& ctx) {
    TransformState s;
    s.L = Mat::Zero(ctx.A22.rows(), ctx.Delta.rows());
    s.C = ctx.M;  // C_{-1}
    return s;
  }
};

inline void l_step(TransformState& st, double beta, double gamma, const TransformContext& ctx,
                   const ParanoidChecks& chk = {}) {
  const Eigen::Index p = ctx.Delta.rows();
  Mat B11 = ctx.Delta - ctx.A12 * st.L;
  Mat X = Mat::Identity(p, p) - beta * B11;
  Eigen::FullPivLU<Mat> lu(X);
  if (!lu.isInvertible()) {
    std::ostringstream os;
    os << "l_step: I - beta B11 singular at k=" << st.k;
    throw InverseFailed(os.str());
  }
  Mat N = st.L - gamma * ctx.A22 * st.L + beta * ctx.M * B11;
  // L_{k+1} = N X^{-1}
  Mat Lnext = X.transpose().fullPivLu().solve(N.transpose()).transpose();
  st.C = Lnext + ctx.M;
  st.B22 = (beta / gamma) * st.C * ctx.A12 + ctx.A22;
  st.B11 = std::move(B11);
  st.L = std::move(Lnext);

  auto fail = [&](const char* what, double lhs, double rhs) {
    if (!chk.throw_on_violation) return;
    std::ostringstream os;
    os << "l_step k=" << st.k << ": " << what << " " << lhs << " > " << rhs;
    if (std::string(what).rfind("contraction", 0) == 0) throw ContractionViolated(os.str());
    throw BoundViolated(os.str());
  };
  if (chk.l_bound && std::isfinite(ctx.bounds.L_inf)) {
    double ln = weighted_opnorm(st.L, ctx.cd.Q, ctx.c22.Q);
    st.diag.max_l_ratio = std::max(st.diag.max_l_ratio, ln / ctx.bounds.L_inf);
    if (ln > ctx.bounds.L_inf + 1e-9) {
      ++st.diag.l_violations;
      fail("||L||_{Q_Delta,Q22} exceeds L_inf:", ln, ctx.bounds.L_inf);
    }
  }
  if (chk.contraction) {
    double f11 = weighted_opnorm(Mat::Identity(p, p) - beta * st.B11, ctx.cd.Q, ctx.cd.Q);
    double r11 = 1.0 - beta * ctx.cd.a / 2.0;
    st.diag.max_b11_excess = std::max(st.diag.max_b11_excess, f11 - r11);
    if (f11 > r11 + 1e-9) {
      ++st.diag.b11_violations;
      fail("contraction of I - beta B11:", f11, r11);
    }
    const Eigen::Index q = ctx.A22.rows();
    double f22 = weighted_opnorm(Mat::Identity(q, q) - gamma * st.B22, ctx.c22.Q, ctx.c22.Q);
    double r22 = 1.0 - gamma * ctx.c22.a / 2.0;
    st.diag.max_b22_excess = std::max(st.diag.max_b22_excess, f22 - r22);
    if (f22 > r22 + 1e-9) {
      ++st.diag.b22_violations;
      fail("contraction of I - gamma B22:", f22, r22);
    }
  }
  if (chk.c_bound && std::isfinite(ctx.bounds.C_inf)) {
    double cn = spectral_norm(st.C);
    if (ctx.bounds.C_inf > 0) st.diag.max_c_ratio = std::max(st.diag.max_c_ratio, cn / ctx.bounds.C_inf);
    if (cn > ctx.bounds.C_inf + 1e-9) {
      ++st.diag.c_violations;
      fail("||C_k|| exceeds C_inf:", cn, ctx.bounds.C_inf);
    }
  }
  ++st.k;
}

// One step of the transformed recursion using the index-k matrices held in st.
// Noise enters with the sign it has in the raw recursion.
inline void transformed_step(Vec& th, Vec& wt, const TransformState& st, const Mat& A12, double beta, double gamma,
                             const Vec& V, const Vec& W) {
  Vec th_next = th - beta * (st.B11 * th) - beta * (A12 * wt) + beta * V;
  Vec w_next = wt - gamma * (st.B22 * wt) + beta * (st.C * V) + gamma * W;
  th = std::move(th_next);
  wt = std::move(w_next);
}

struct EquivalenceResult {
  double max_deviation = 0;
  double max_track_identity_gap = 0;  // |w - A22^{-1}(b2 - A21 theta) - (w~ - L_k theta~)|
  TransformDiagnostics diag;
};

// Runs the raw and transformed recursions on one shared noise sequence and returns
// max_k |theta_k - theta* - theta~_k| + |w_k - w* + C_{k-1} theta~_k - w~_k|.
inline EquivalenceResult equivalence_oracle(const LinearSystem& sys, const StepSchedule& sched,
                                            const std::vector<Vec>& Vs, const std::vector<Vec>& Ws, const Vec& theta0,
                                            const Vec& w0, long K, const ParanoidChecks& chk = {}) {
  if (static_cast<long>(Vs.size()) < K || static_cast<long>(Ws.size()) < K)
    throw ConfigError("equivalence_oracle: noise sequence shorter than K");
  TransformContext ctx(sys);
  FixedPoint fp = fixed_point(sys);
  TransformState st = TransformState::initial(ctx);
  Vec th = theta0, w = w0;
  Vec tth = theta0 - fp.theta_star;
  Vec tw = w0 - fp.w_star + ctx.M * tth;
  EquivalenceResult res;
  auto measure = [&] {
    // st.C is C_{k-1} for the current k
    double dev = (th - fp.theta_star - tth).norm() + (w - fp.w_star + st.C * tth - tw).norm();
    res.max_deviation = std::max(res.max_deviation, dev);
    Vec hat_w = w - fp.w_star + ctx.M * (th - fp.theta_star);
    res.max_track_identity_gap = std::max(res.max_track_identity_gap, (hat_w - (tw - st.L * tth)).norm());
  };
  measure();
  for (long k = 0; k < K; ++k) {
    const double b = sched.beta_at(k), g = sched.gamma_at(k);
    const Vec& V = Vs[static_cast<std::size_t>(k)];
    const Vec& W = Ws[static_cast<std::size_t>(k)];
    Vec th_next = th + b * (sys.b1 - sys.A11 * th - sys.A12 * w + V);
    Vec w_next = w + g * (sys.b2 - sys.A21 * th - sys.A22 * w + W);
    th = std::move(th_next);
    w = std::move(w_next);
    l_step(st, b, g, ctx, chk);
    transformed_step(tth, tw, st, ctx.A12, b, g, V, W);
    measure();
  }
  res.diag = st.diag;
  return res;
}

}  // namespace twoscale
