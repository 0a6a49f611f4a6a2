#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <vector>

#include "markov_models.hpp"
#include "random.hpp"
#include "stochastic_linalg.hpp"

namespace twoscale {

struct LinearSystem {
  Vec b1, b2;
  Mat A11, A12, A21, A22;

  Eigen::Index dtheta() const { return b1.size(); }
  Eigen::Index dw() const { return b2.size(); }

  void check_shapes() const {
    const auto p = dtheta(), q = dw();
    if (A11.rows() != p || A11.cols() != p || A12.rows() != p || A12.cols() != q || A21.rows() != q ||
        A21.cols() != p || A22.rows() != q || A22.cols() != q)
      throw DimensionMismatch("LinearSystem: A11 " + shape_str(A11) + ", A12 " + shape_str(A12) + ", A21 " +
                              shape_str(A21) + ", A22 " + shape_str(A22));
  }

  // A22^{-1} A21
  Mat a22inv_a21() const { return A22.partialPivLu().solve(A21); }
  Mat delta() const { return A11 - A12 * a22inv_a21(); }
};

struct FixedPoint {
  Vec theta_star, w_star;
};

// Assumption A1: -A22 and -Delta Hurwitz with the margin.
inline void check_a1(const LinearSystem& sys) {
  sys.check_shapes();
  double r22 = min_real_eig(sys.A22);
  if (!(r22 >= hurwitz_margin)) {
    std::ostringstream os;
    os << "A1: min Re(eig A22) = " << r22;
    throw HurwitzViolated(os.str());
  }
  double rd = min_real_eig(sys.delta());
  if (!(rd >= hurwitz_margin)) {
    std::ostringstream os;
    os << "A1: min Re(eig Delta) = " << rd;
    throw HurwitzViolated(os.str());
  }
}

inline bool satisfies_a1(const LinearSystem& sys) {
  try {
    check_a1(sys);
    return true;
  } catch (const AssumptionError&) {
    return false;
  }
}

inline FixedPoint fixed_point(const LinearSystem& sys) {
  sys.check_shapes();
  Eigen::FullPivLU<Mat> lu22(sys.A22);
  if (!lu22.isInvertible()) throw SingularA22("fixed_point: A22 is singular");
  Mat M = lu22.solve(sys.A21);
  Mat D = sys.A11 - sys.A12 * M;
  Eigen::FullPivLU<Mat> luD(D);
  if (!luD.isInvertible()) throw SingularDelta("fixed_point: Delta is singular");
  FixedPoint fp;
  fp.theta_star = luD.solve(sys.b1 - sys.A12 * lu22.solve(sys.b2));
  fp.w_star = lu22.solve(sys.b2 - sys.A21 * fp.theta_star);
  double bn = std::sqrt(sys.b1.squaredNorm() + sys.b2.squaredNorm());
  double r1 = (sys.b1 - sys.A11 * fp.theta_star - sys.A12 * fp.w_star).norm();
  double r2 = (sys.b2 - sys.A21 * fp.theta_star - sys.A22 * fp.w_star).norm();
  if (!(std::max(r1, r2) <= 1e-10 * (1.0 + bn))) {
    std::ostringstream os;
    os << "fixed_point: residual " << std::max(r1, r2);
    throw IllConditioned(os.str());
  }
  return fp;
}

// Affine Gaussian perturbation V = F_V + A_{V,theta} theta + A_{V,w} w, same for W,
// all entries iid N(0, scale^2).
struct MartingaleNoiseSpec {
  double scale_V = 0.1;
  double scale_W = 0.5;
  // Draw the full perturbation matrices instead of the equivalent per-component law.
  bool explicit_matrices = false;
  // Optional fixed covariances for Theorem 3 checks.
  std::optional<Mat> Sigma11, Sigma12, Sigma22;
};

// Noise covariances at the fixed point for the affine Gaussian model:
// E[V V^T | theta, w] = s_V^2 (1 + |theta|^2 + |w|^2) I, V and W independent.
inline void set_fixed_point_covariances(MartingaleNoiseSpec& spec, const FixedPoint& fp) {
  const double c = 1.0 + fp.theta_star.squaredNorm() + fp.w_star.squaredNorm();
  const auto p = fp.theta_star.size(), q = fp.w_star.size();
  spec.Sigma11 = Mat::Identity(p, p) * (spec.scale_V * spec.scale_V * c);
  spec.Sigma22 = Mat::Identity(q, q) * (spec.scale_W * spec.scale_W * c);
  spec.Sigma12 = Mat::Zero(p, q);
}

struct ToyInstance {
  LinearSystem sys;
  MartingaleNoiseSpec noise;
  FixedPoint fp;
  int resamples = 0;  // rejected draws (Lambda0 entries and whole instances)
};

inline constexpr int max_resamples = 1000;

// Random instance with d_theta = d_w = d. Lambda0 entries are redrawn one at a time
// until positive, which gives the same law as rejecting whole draws with A22 not
// Hurwitz; whole draws are rejected when Delta fails A1.
inline ToyInstance random_toy_instance(int d, std::uint64_t seed, double scale_V = 0.1, double scale_W = 0.5) {
  if (d < 1) throw ConfigError("random_toy_instance: d must be >= 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ToyInstance inst;
  for (;;) {
    if (inst.resamples > max_resamples) {
      std::ostringstream os;
      os << "random_toy_instance: A1 not satisfied after " << max_resamples << " resamples";
      throw ExhaustedResampling(os.str());
    }
    Mat T = uniform_matrix(rng, d, d);
    Mat Qm = T.householderQr().householderQ();
    Vec lam0(d);
    for (int i = 0; i < d; ++i) {
      double x = u(rng);
      while (!(x > hurwitz_margin)) {
        ++inst.resamples;
        if (inst.resamples > max_resamples) break;
        x = u(rng);
      }
      lam0(i) = x;
    }
    if (inst.resamples > max_resamples) continue;
    Mat R = uniform_matrix(rng, d, d);
    Vec lam1 = uniform_vector(rng, d);
    Vec ts = uniform_vector(rng, d);
    Vec ws = uniform_vector(rng, d);

    LinearSystem& s = inst.sys;
    s.A12 = Qm;
    s.A22 = Qm.transpose() * lam0.asDiagonal() * Qm;
    s.A22 = 0.5 * (s.A22 + s.A22.transpose()).eval();
    s.A11 = R * R.transpose() + Mat::Identity(d, d);
    s.A21 = Qm.transpose() * lam1.asDiagonal();
    s.b1 = s.A11 * ts + s.A12 * ws;
    s.b2 = s.A21 * ts + s.A22 * ws;
    if (!satisfies_a1(s)) {
      ++inst.resamples;
      continue;
    }
    inst.fp = fixed_point(s);
    inst.noise.scale_V = scale_V;
    inst.noise.scale_W = scale_W;
    return inst;
  }
}

struct GarnetSpec {
  int n_states = 30;
  int n_actions = 2;
  int branching = 2;
  int n_features = 8;
  double discount = 0.95;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_states < 1 || n_actions < 1 || branching < 1 || n_features < 1)
      throw ConfigError("GarnetSpec: counts must be positive");
    if (branching > n_states) throw ConfigError("GarnetSpec: branching > n_states");
    if (!(discount > 0.0 && discount < 1.0)) throw ConfigError("GarnetSpec: discount must lie in (0,1)");
  }
};

struct GtdProblem {
  std::vector<Mat> p;  // p[a](s, s')
  Mat rewards;         // r(s, a)
  Mat features;        // row s is phi(s)
  Mat policy;          // pi(a | s), rows sum to one
  Mat p_pi;            // induced chain
  double discount = 0.95;

  int n_states() const { return static_cast<int>(features.rows()); }
  int n_actions() const { return static_cast<int>(policy.cols()); }
  int n_features() const { return static_cast<int>(features.cols()); }

  void compute_p_pi() {
    const int n = n_states();
    p_pi = Mat::Zero(n, n);
    for (int a = 0; a < n_actions(); ++a) p_pi += policy.col(a).asDiagonal() * p[a];
  }
};

inline GtdProblem garnet_instance(const GarnetSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int n = spec.n_states, na = spec.n_actions;
  GtdProblem prob;
  prob.discount = spec.discount;
  prob.p.assign(na, Mat::Zero(n, n));
  std::vector<int> idx(n);
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < na; ++a) {
      std::iota(idx.begin(), idx.end(), 0);
      // partial Fisher-Yates: first `branching` slots are a uniform subset
      for (int i = 0; i < spec.branching; ++i) {
        std::uniform_int_distribution<int> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
      }
      double total = 0.0;
      for (int i = 0; i < spec.branching; ++i) {
        double wgt = u01(rng);
        prob.p[a](s, idx[i]) = wgt;
        total += wgt;
      }
      prob.p[a].row(s) /= total;
    }
  }
  prob.features = uniform_matrix(rng, n, spec.n_features, 0.0, 1.0);
  prob.rewards = uniform_matrix(rng, n, na, 0.0, 1.0);
  prob.policy = Mat::Constant(n, na, 1.0 / na);
  prob.compute_p_pi();
  return prob;
}

inline LinearSystem gtd_system_from_mu(const GtdProblem& prob, const Vec& mu) {
  const int n = prob.n_states(), na = prob.n_actions(), d = prob.n_features();
  const double rho = prob.discount;
  const Mat& phi = prob.features;
  // A = E[phi_k (phi_k - rho phi_{k+1})^T]
  Mat A = Mat::Zero(d, d);
  Vec b2 = Vec::Zero(d);
  for (int s = 0; s < n; ++s) {
    Vec next = Vec::Zero(d);
    double rbar = 0.0;
    for (int a = 0; a < na; ++a) {
      double pa = prob.policy(s, a);
      if (pa == 0.0) continue;
      next += pa * (prob.p[a].row(s) * phi).transpose();
      rbar += pa * prob.rewards(s, a);
    }
    Vec f = phi.row(s).transpose();
    A += mu(s) * f * (f - rho * next).transpose();
    b2 += mu(s) * rbar * f;
  }
  LinearSystem sys;
  sys.b1 = Vec::Zero(d);
  sys.A11 = Mat::Zero(d, d);
  sys.A12 = -A.transpose();
  sys.b2 = b2;
  sys.A21 = A;
  sys.A22 = Mat::Identity(d, d);
  return sys;
}

// Exact mean fields of GTD under the stationary law of p_pi.
inline LinearSystem gtd_system(const GtdProblem& prob) {
  check_ergodic(prob.p_pi);
  Vec mu = stationary_distribution(prob.p_pi);
  LinearSystem sys = gtd_system_from_mu(prob, mu);
  check_a1(sys);
  return sys;
}

// GTD as a Markov model on transitions x = (s, a, s'). The observation at
// X_{k+1} = (s_k, a_k, s_{k+1}) drives the update from k to k+1.
struct GtdTransitionModel {
  MarkovModel model;
  std::vector<int> from, action, to;  // decoding of transition states
};

inline GtdTransitionModel gtd_markov_model(const GtdProblem& prob) {
  const int n = prob.n_states(), na = prob.n_actions(), d = prob.n_features();
  const double rho = prob.discount;
  GtdTransitionModel out;
  std::vector<std::vector<int>> starting(n);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < na; ++a) {
      if (prob.policy(s, a) == 0.0) continue;
      for (int t = 0; t < n; ++t)
        if (prob.p[a](s, t) > 0.0) {
          starting[s].push_back(static_cast<int>(out.from.size()));
          out.from.push_back(s);
          out.action.push_back(a);
          out.to.push_back(t);
        }
    }
  const int m = static_cast<int>(out.from.size());
  MarkovModel& mm = out.model;
  mm.P = Mat::Zero(m, m);
  for (int x = 0; x < m; ++x) {
    int s = out.to[x];
    for (int y : starting[s]) mm.P(x, y) = prob.policy(s, out.action[y]) * prob.p[out.action[y]](s, out.to[y]);
  }
  mm.obs_b1.assign(m, Vec::Zero(d));
  mm.obs_A11.assign(m, Mat::Zero(d, d));
  mm.obs_A22.assign(m, Mat::Identity(d, d));
  mm.obs_b2.resize(m);
  mm.obs_A12.resize(m);
  mm.obs_A21.resize(m);
  for (int x = 0; x < m; ++x) {
    Vec f = prob.features.row(out.from[x]).transpose();
    Vec g = prob.features.row(out.to[x]).transpose();
    mm.obs_A12[x] = -(f - rho * g) * f.transpose();
    mm.obs_A21[x] = -f * (rho * g - f).transpose();
    mm.obs_b2[x] = f * prob.rewards(out.from[x], out.action[x]);
  }
  return out;
}

}  // namespace twoscale
