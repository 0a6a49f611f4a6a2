#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <set>
#include <sstream>
#include <thread>
#include <utility>
#include <vector>

#include "markov_models.hpp"
#include "problems.hpp"
#include "random.hpp"
#include "schedules.hpp"
#include "stochastic_linalg.hpp"

namespace twoscale {

inline void sa_step(Vec& th, Vec& w, const LinearSystem& sys, double beta, double gamma, const Vec& V,
                    const Vec& W) {
  Vec r1 = sys.b1 - sys.A11 * th - sys.A12 * w + V;
  Vec r2 = sys.b2 - sys.A21 * th - sys.A22 * w + W;
  th += beta * r1;
  w += gamma * r2;
  if (!th.allFinite() || !w.allFinite()) throw NonFinite("sa_step: non-finite iterate");
}

// Fresh F, A_theta, A_w each call (explicit mode), or the per-component law it induces:
// given (theta, w), V ~ N(0, s_V^2 (1 + |theta|^2 + |w|^2) I), independent of W.
template <class Normal>
void draw_martingale_noise_into(const MartingaleNoiseSpec& spec, const Vec& th, const Vec& w, Rng& rng,
                                Normal& normal, Vec& V, Vec& W) {
  if (spec.explicit_matrices) {
    auto draw = [&](double sd, Vec& out) {
      const Eigen::Index n = out.size();
      for (Eigen::Index i = 0; i < n; ++i) {
        double acc = sd * normal(rng);
        for (Eigen::Index j = 0; j < th.size(); ++j) acc += sd * normal(rng) * th(j);
        for (Eigen::Index j = 0; j < w.size(); ++j) acc += sd * normal(rng) * w(j);
        out(i) = acc;
      }
    };
    draw(spec.scale_V, V);
    draw(spec.scale_W, W);
    return;
  }
  const double r = std::sqrt(1.0 + th.squaredNorm() + w.squaredNorm());
  const double sv = spec.scale_V * r, sw = spec.scale_W * r;
  for (Eigen::Index i = 0; i < V.size(); ++i) V(i) = sv * normal(rng);
  for (Eigen::Index i = 0; i < W.size(); ++i) W(i) = sw * normal(rng);
}

inline std::pair<Vec, Vec> draw_martingale_noise(const MartingaleNoiseSpec& spec, const Vec& th, const Vec& w,
                                                 Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec V(th.size()), W(w.size());
  draw_martingale_noise_into(spec, th, w, rng, normal, V, W);
  return {V, W};
}

// Noise at X_{k+1} = x: observation minus mean field, evaluated at (theta_k, w_k).
inline std::pair<Vec, Vec> markov_noise(const MarkovModel& m, const LinearSystem& sys, int x, const Vec& th,
                                        const Vec& w) {
  const auto i = static_cast<std::size_t>(x);
  Vec V = m.obs_b1[i] - sys.b1 - (m.obs_A11[i] - sys.A11) * th - (m.obs_A12[i] - sys.A12) * w;
  Vec W = m.obs_b2[i] - sys.b2 - (m.obs_A21[i] - sys.A21) * th - (m.obs_A22[i] - sys.A22) * w;
  return {V, W};
}

inline LinearSystem mean_fields(const MarkovModel& m) {
  check_ergodic(m.P);
  Vec mu = stationary_distribution(m.P);
  LinearSystem sys;
  sys.b1 = weighted_mean(mu, m.obs_b1);
  sys.b2 = weighted_mean(mu, m.obs_b2);
  sys.A11 = weighted_mean(mu, m.obs_A11);
  sys.A12 = weighted_mean(mu, m.obs_A12);
  sys.A21 = weighted_mean(mu, m.obs_A21);
  sys.A22 = weighted_mean(mu, m.obs_A22);
  check_a1(sys);
  return sys;
}

// theta' = theta + beta (phi_k - rho phi_{k+1}) <phi_k, w>
// w'     = w + gamma (phi_k delta_k - w), delta_k = r_k + rho <theta, phi_{k+1}> - <theta, phi_k>
template <class VA, class VB>
void gtd_online_step(Vec& th, Vec& w, const VA& phi, const VB& phi_next, double r, double rho, double beta,
                     double gamma) {
  const double pw = phi.dot(w);
  const double delta = r + rho * th.dot(phi_next) - th.dot(phi);
  w += gamma * (delta * phi - w);
  th += (beta * pw) * (phi - rho * phi_next);
}

struct InitSpec {
  double lo = -1.0, hi = 1.0;  // iid uniform entries

  double var() const { return (hi - lo) * (hi - lo) / 12.0; }
  double mean() const { return 0.5 * (lo + hi); }
  // E|x - x*|^2 for x with iid entries
  double expected_sq_error(const Vec& target) const {
    return static_cast<double>(target.size()) * var() + (Vec::Constant(target.size(), mean()) - target).squaredNorm();
  }
};

struct MomentSeries {
  std::vector<long> checkpoints;
  std::vector<double> m_theta, m_w, m_track;
  std::vector<double> stderr_theta, stderr_w, stderr_track;
  int replicas = 0;
  double V0 = 0;
};

// 0 and round(10^{i/8}) up to K, plus K itself.
inline std::vector<long> geometric_checkpoints(long K, int per_decade = 8) {
  std::set<long> s{0};
  for (int i = 0;; ++i) {
    double v = std::pow(10.0, static_cast<double>(i) / per_decade);
    long k = std::lround(v);
    if (k > K) break;
    s.insert(k);
  }
  s.insert(K);
  return {s.begin(), s.end()};
}

// Per-replica squared errors at each checkpoint.
struct ReplicaTrace {
  std::vector<double> e_theta, e_w, e_track;
  void resize(std::size_t n) {
    e_theta.assign(n, 0.0);
    e_w.assign(n, 0.0);
    e_track.assign(n, 0.0);
  }
};

struct EnsembleOptions {
  long K = 1000;
  int replicas = 100;
  std::vector<long> checkpoints;  // empty means geometric_checkpoints(K)
  std::uint64_t master_seed = 0;
  int threads = 1;                // 0 uses all hardware threads
};

// Martingale noise on an explicit system.
struct MartingaleModel {
  LinearSystem sys;
  MartingaleNoiseSpec noise;
  InitSpec init;
  FixedPoint fp;

  MartingaleModel(LinearSystem s, MartingaleNoiseSpec n, InitSpec i = {})
      : sys(std::move(s)), noise(std::move(n)), init(i), fp(fixed_point(sys)) {}

  double V0() const { return init.expected_sq_error(fp.theta_star) + init.expected_sq_error(fp.w_star); }

  void run(Rng& rng, const StepSchedule& sched, const std::vector<long>& cps, ReplicaTrace& tr, int replica) const {
    const auto p = sys.dtheta(), q = sys.dw();
    Vec th = uniform_vector(rng, p, init.lo, init.hi);
    Vec w = uniform_vector(rng, q, init.lo, init.hi);
    Vec V(p), W(q), r1(p), r2(q), hat(q);
    const Mat M = sys.a22inv_a21();
    const Vec w_of_zero = sys.A22.partialPivLu().solve(sys.b2);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::size_t c = 0;
    const long K = cps.back();
    for (long k = 0;; ++k) {
      if (k == cps[c]) {
        tr.e_theta[c] = (th - fp.theta_star).squaredNorm();
        tr.e_w[c] = (w - fp.w_star).squaredNorm();
        hat = w - w_of_zero;
        hat.noalias() += M * th;
        tr.e_track[c] = hat.squaredNorm();
        ++c;
      }
      if (k == K) break;
      draw_martingale_noise_into(noise, th, w, rng, normal, V, W);
      const double b = sched.beta_at(k), g = sched.gamma_at(k);
      r1 = sys.b1 + V;
      r1.noalias() -= sys.A11 * th;
      r1.noalias() -= sys.A12 * w;
      r2 = sys.b2 + W;
      r2.noalias() -= sys.A21 * th;
      r2.noalias() -= sys.A22 * w;
      th += b * r1;
      w += g * r2;
      if (!std::isfinite(th.sum() + w.sum())) {
        std::ostringstream os;
        os << "replica " << replica << " diverged at iteration " << k + 1;
        throw NonFinite(os.str());
      }
    }
  }
};

// GTD driven by a Garnet chain, X_0 drawn from the stationary law.
struct GtdModel {
  GtdProblem prob;
  LinearSystem sys;
  FixedPoint fp;
  GtdTransitionModel trans;
  Vec mu_trans;
  InitSpec init;

  explicit GtdModel(GtdProblem pr, InitSpec i = {})
      : prob(std::move(pr)), sys(gtd_system(prob)), fp(fixed_point(sys)), trans(gtd_markov_model(prob)), init(i) {
    mu_trans = stationary_distribution(trans.model.P);
  }

  double V0() const { return init.expected_sq_error(fp.theta_star) + init.expected_sq_error(fp.w_star); }

  void run(Rng& rng, const StepSchedule& sched, const std::vector<long>& cps, ReplicaTrace& tr, int replica) const {
    const auto d = sys.dtheta();
    Vec th = uniform_vector(rng, d, init.lo, init.hi);
    Vec w = uniform_vector(rng, d, init.lo, init.hi);
    Vec hat(d);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    ChainSampler cs(trans.model.P);
    int x = sample_from(mu_trans, u01(rng));
    const double rho = prob.discount;
    std::size_t c = 0;
    const long K = cps.back();
    for (long k = 0;; ++k) {
      if (k == cps[c]) {
        tr.e_theta[c] = (th - fp.theta_star).squaredNorm();
        tr.e_w[c] = (w - fp.w_star).squaredNorm();
        hat = w - sys.b2;
        hat.noalias() += sys.A21 * th;
        tr.e_track[c] = hat.squaredNorm();
        ++c;
      }
      if (k == K) break;
      x = cs.next(x, u01(rng));
      const auto xi = static_cast<std::size_t>(x);
      gtd_online_step(th, w, prob.features.row(trans.from[xi]).transpose(),
                      prob.features.row(trans.to[xi]).transpose(), prob.rewards(trans.from[xi], trans.action[xi]),
                      rho, sched.beta_at(k), sched.gamma_at(k));
      if (!std::isfinite(th.sum() + w.sum())) {
        std::ostringstream os;
        os << "replica " << replica << " diverged at iteration " << k + 1;
        throw NonFinite(os.str());
      }
    }
  }
};

template <class Model>
MomentSeries run_ensemble(const Model& model, const StepSchedule& sched, EnsembleOptions opt) {
  if (opt.K < 0 || opt.replicas < 1) throw ConfigError("run_ensemble: need K >= 0 and replicas >= 1");
  if (opt.checkpoints.empty()) opt.checkpoints = geometric_checkpoints(opt.K);
  if (!std::is_sorted(opt.checkpoints.begin(), opt.checkpoints.end()) || opt.checkpoints.front() < 0 ||
      opt.checkpoints.back() > opt.K)
    throw ConfigError("run_ensemble: checkpoints must be sorted within [0, K]");
  const auto& cps = opt.checkpoints;
  const int R = opt.replicas;
  std::vector<ReplicaTrace> traces(static_cast<std::size_t>(R));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(R));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next.fetch_add(1); r < R; r = next.fetch_add(1)) {
      try {
        Rng rng = make_stream(opt.master_seed, static_cast<std::uint64_t>(r));
        auto& tr = traces[static_cast<std::size_t>(r)];
        tr.resize(cps.size());
        model.run(rng, sched, cps, tr, r);
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
      }
    }
  };
  int nt = opt.threads > 0 ? opt.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  nt = std::min(nt, R);
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  // fixed replica order, so results do not depend on the thread count
  MomentSeries ms;
  ms.checkpoints = cps;
  ms.replicas = R;
  ms.V0 = model.V0();
  const std::size_t n = cps.size();
  auto reduce = [&](auto field, std::vector<double>& mean, std::vector<double>& se) {
    mean.assign(n, 0.0);
    se.assign(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
      double s = 0.0;
      for (int r = 0; r < R; ++r) s += (traces[static_cast<std::size_t>(r)].*field)[c];
      const double m = s / R;
      double ss = 0.0;
      for (int r = 0; r < R; ++r) {
        double dlt = (traces[static_cast<std::size_t>(r)].*field)[c] - m;
        ss += dlt * dlt;
      }
      mean[c] = m;
      se[c] = R > 1 ? std::sqrt(ss / (R - 1)) / std::sqrt(static_cast<double>(R)) : 0.0;
    }
  };
  reduce(&ReplicaTrace::e_theta, ms.m_theta, ms.stderr_theta);
  reduce(&ReplicaTrace::e_w, ms.m_w, ms.stderr_w);
  reduce(&ReplicaTrace::e_track, ms.m_track, ms.stderr_track);
  return ms;
}

}  // namespace twoscale
