#pragma once

#include <algorithm>
#include <numeric>
#include <queue>
#include <sstream>
#include <vector>

#include "random.hpp"
#include "stochastic_linalg.hpp"

namespace twoscale {

struct MarkovModel {
  Mat P;
  std::vector<Vec> obs_b1, obs_b2;
  std::vector<Mat> obs_A11, obs_A12, obs_A21, obs_A22;

  int n_states() const { return static_cast<int>(P.rows()); }
};

inline void check_stochastic(const Mat& P) {
  if (P.rows() != P.cols() || P.rows() == 0) throw DimensionMismatch("kernel must be square, got " + shape_str(P));
  if ((P.array() < 0.0).any() || !P.allFinite()) throw ConfigError("kernel has negative or non-finite entries");
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    if (std::abs(P.row(i).sum() - 1.0) > 1e-12) {
      std::ostringstream os;
      os << "kernel row " << i << " sums to " << P.row(i).sum();
      throw ConfigError(os.str());
    }
}

namespace detail {

inline std::vector<int> bfs_levels(const Mat& P, bool transpose) {
  const int n = static_cast<int>(P.rows());
  std::vector<int> level(n, -1);
  std::queue<int> q;
  level[0] = 0;
  q.push(0);
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v = 0; v < n; ++v) {
      double e = transpose ? P(v, u) : P(u, v);
      if (e > 0.0 && level[v] < 0) {
        level[v] = level[u] + 1;
        q.push(v);
      }
    }
  }
  return level;
}

}  // namespace detail

// Strong connectivity of the support graph.
inline bool is_irreducible(const Mat& P) {
  auto fw = detail::bfs_levels(P, false);
  auto bw = detail::bfs_levels(P, true);
  for (std::size_t i = 0; i < fw.size(); ++i)
    if (fw[i] < 0 || bw[i] < 0) return false;
  return true;
}

// Period of an irreducible chain: gcd over edges u->v of level(u) + 1 - level(v).
inline int period(const Mat& P) {
  auto lv = detail::bfs_levels(P, false);
  const int n = static_cast<int>(P.rows());
  int g = 0;
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      if (P(u, v) > 0.0) g = std::gcd(g, std::abs(lv[u] + 1 - lv[v]));
  return g;
}

inline void check_ergodic(const Mat& P) {
  check_stochastic(P);
  if (!is_irreducible(P)) throw NotErgodic("chain is not irreducible");
  int per = period(P);
  if (per != 1) {
    std::ostringstream os;
    os << "chain has period " << per;
    throw NotErgodic(os.str());
  }
}

inline Vec stationary_distribution(const Mat& P) {
  check_stochastic(P);
  if (!is_irreducible(P)) throw Reducible("stationary_distribution: chain is reducible");
  const Eigen::Index n = P.rows();
  // mu^T (I - P + 1 1^T) = 1^T
  Mat Z = Mat::Identity(n, n) - P + Mat::Ones(n, n);
  Eigen::PartialPivLU<Mat> lu(Z.transpose());
  Vec ones = Vec::Ones(n);
  Vec mu = lu.solve(ones);
  mu += lu.solve(ones - Z.transpose() * mu);  // one refinement step
  mu = mu.cwiseMax(0.0);
  mu /= mu.sum();
  return mu;
}

template <class T>
struct PoissonSolution {
  std::vector<T> hat_f;
  T mean;
  double bound = 0;
};

// f_hat = (I - P + 1 mu^T)^{-1} (f - E_mu f), column-wise over the entries of f.
// Centered: E_mu f_hat = 0.
template <class T>
PoissonSolution<T> solve_poisson(const Mat& P, const Vec& mu, const std::vector<T>& f) {
  const Eigen::Index n = P.rows();
  if (static_cast<Eigen::Index>(f.size()) != n) throw DimensionMismatch("solve_poisson: one value per state needed");
  const Eigen::Index r = f[0].rows(), c = f[0].cols();
  Mat F(n, r * c);
  for (Eigen::Index x = 0; x < n; ++x) {
    if (f[x].rows() != r || f[x].cols() != c) throw DimensionMismatch("solve_poisson: ragged values");
    F.row(x) = Eigen::Map<const Eigen::RowVectorXd>(Mat(f[x]).data(), r * c);
  }
  Eigen::RowVectorXd fbar = mu.transpose() * F;
  Mat G = F.rowwise() - fbar;
  Mat Z = Mat::Identity(n, n) - P + Vec::Ones(n) * mu.transpose();
  Eigen::FullPivLU<Mat> lu(Z);
  if (!lu.isInvertible()) throw SingularFundamentalMatrix("solve_poisson: I - P + 1 mu^T is singular");
  Mat H = lu.solve(G);
  H += lu.solve(G - Z * H);
  PoissonSolution<T> out;
  out.hat_f.resize(n);
  out.mean = Eigen::Map<const Mat>(fbar.data(), r, c);
  for (Eigen::Index x = 0; x < n; ++x) {
    Eigen::RowVectorXd row = H.row(x);
    out.hat_f[x] = Eigen::Map<const Mat>(row.data(), r, c);
    out.bound = std::max(out.bound, spectral_norm(Eigen::Map<const Mat>(row.data(), r, c)));
  }
  return out;
}

template <class T>
PoissonSolution<T> solve_poisson(const MarkovModel& model, const std::vector<T>& f) {
  check_ergodic(model.P);
  return solve_poisson(model.P, stationary_distribution(model.P), f);
}

// max over states and entries of |f(x) - f_bar - f_hat(x) + (P f_hat)(x)|
template <class T>
double poisson_residual(const Mat& P, const std::vector<T>& f, const PoissonSolution<T>& sol) {
  const Eigen::Index n = P.rows();
  double worst = 0.0;
  for (Eigen::Index x = 0; x < n; ++x) {
    Mat Pf = Mat::Zero(sol.hat_f[0].rows(), sol.hat_f[0].cols());
    for (Eigen::Index y = 0; y < n; ++y)
      if (P(x, y) != 0.0) Pf += P(x, y) * Mat(sol.hat_f[y]);
    Mat res = Mat(f[x]) - Mat(sol.mean) - (Mat(sol.hat_f[x]) - Pf);
    worst = std::max(worst, res.cwiseAbs().maxCoeff());
  }
  return worst;
}

template <class T>
T weighted_mean(const Vec& mu, const std::vector<T>& v) {
  T acc = mu(0) * v[0];
  for (std::size_t x = 1; x < v.size(); ++x) acc += mu(static_cast<Eigen::Index>(x)) * v[x];
  return acc;
}

struct ChainSampler {
  Mat cdf;

  explicit ChainSampler(const Mat& P) : cdf(P.rows(), P.cols()) {
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < P.cols(); ++j) {
        acc += P(i, j);
        cdf(i, j) = acc;
      }
    }
  }

  // inverse CDF over the row; u in [0,1)
  int next(int x, double u) const {
    const Eigen::Index n = cdf.cols();
    double scaled = u * cdf(x, n - 1);
    for (Eigen::Index j = 0; j < n - 1; ++j)
      if (scaled < cdf(x, j)) return static_cast<int>(j);
    return static_cast<int>(n - 1);
  }
};

inline int sample_from(const Vec& prob, double u) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < prob.size() - 1; ++j) {
    acc += prob(j);
    if (u * prob.sum() < acc) return static_cast<int>(j);
  }
  return static_cast<int>(prob.size() - 1);
}

// K states X_0 = x0, X_1, ..., X_{K-1}.
inline std::vector<int> sample_chain(const MarkovModel& model, int x0, long K, Rng& rng) {
  if (x0 < 0 || x0 >= model.n_states()) throw ConfigError("sample_chain: invalid initial state");
  ChainSampler cs(model.P);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> xs;
  xs.reserve(static_cast<std::size_t>(std::max(K, 0L)));
  int x = x0;
  for (long k = 0; k < K; ++k) {
    xs.push_back(x);
    x = cs.next(x, u(rng));
  }
  return xs;
}

}  // namespace twoscale
