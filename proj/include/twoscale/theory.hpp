#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "problems.hpp"
#include "schedules.hpp"
#include "simulator.hpp"
#include "stochastic_linalg.hpp"
#include "transform.hpp"

namespace twoscale {

inline Mat sigma_effective(const Mat& S11, const Mat& S12, const Mat& S22, const Mat& A12, const Mat& A22) {
  if (S11.rows() != A12.rows() || S22.rows() != A22.rows() || S12.rows() != S11.rows() || S12.cols() != S22.cols() ||
      A12.cols() != A22.rows())
    throw DimensionMismatch("sigma_effective: shapes do not conform");
  // G = A12 A22^{-1}
  Mat G = A22.transpose().partialPivLu().solve(A12.transpose()).transpose();
  Mat S = S11 + G * S22 * G.transpose() + S12 * G.transpose() + G * S12.transpose();
  return 0.5 * (S + S.transpose());
}

// I_k = Tr(M_k), M_k = (I - beta_k Delta) M_{k-1} (I - beta_k Delta)^T + beta_k^2 Sigma, M_{-1} = 0.
inline std::vector<double> leading_term(const Mat& Sigma, const Mat& Delta, const StepSchedule& sched,
                                        const std::vector<long>& checkpoints) {
  if (checkpoints.empty()) return {};
  const double dn = spectral_norm(Delta);
  const Eigen::Index d = Delta.rows();
  Mat M = Mat::Zero(d, d), F(d, d), tmp(d, d);
  std::vector<double> out;
  out.reserve(checkpoints.size());
  std::size_t c = 0;
  for (long k = 0; c < checkpoints.size(); ++k) {
    const double b = sched.beta_at(k);
    if (!(b * dn < 1.0)) {
      std::ostringstream os;
      os << "leading_term: beta_k ||Delta|| = " << b * dn << " >= 1 at k=" << k;
      throw StepTooLarge(os.str());
    }
    F = Mat::Identity(d, d) - b * Delta;
    tmp.noalias() = F * M;
    M.noalias() = tmp * F.transpose();
    M += (b * b) * Sigma;
    while (c < checkpoints.size() && checkpoints[c] == k) {
      out.push_back(M.trace());
      ++c;
    }
  }
  return out;
}

struct ExpansionBounds {
  double E3 = 0, E4 = 0;
  std::optional<long> k0_exp;  // empty when not reached within the scan limit
};

inline ExpansionBounds expansion_bounds(const Mat& Delta, const LyapunovCertificate& cd, const StepSchedule& sched,
                                        double a22, long scan_limit = 100'000'000) {
  ExpansionBounds eb;
  const double dn = spectral_norm(Delta);
  eb.E3 = 1.0 / (8.0 * dn);
  ScheduleHead h{sched.beta_at(0), sched.gamma_at(0), a22, cd.a};
  eb.E4 = cd.p * c_seq(cd.a, h);
  const double target = std::log(2.0) / (2.0 * dn);
  double s = 0.0;
  for (long l = 0; l <= scan_limit; ++l) {
    if (s >= target) {
      eb.k0_exp = l;
      break;
    }
    s += sched.beta_at(l);
  }
  return eb;
}

// One line of the audit trail: constant, formula, inputs, value.
struct TraceEntry {
  std::string name;
  std::string formula;
  std::vector<std::pair<std::string, double>> inputs;
  double value = 0;
};

// Initial second moments of the transformed iterates for iid entries from init.
struct InitialMoments {
  double M_theta = 0, M_w = 0, M_theta_w = 0;
};

inline InitialMoments initial_moments(const LinearSystem& sys, const FixedPoint& fp, const InitSpec& init) {
  const Mat M = sys.a22inv_a21();
  const auto p = sys.dtheta(), q = sys.dw();
  const double v = init.var();
  Vec mt = Vec::Constant(p, init.mean()) - fp.theta_star;
  Vec mw = Vec::Constant(q, init.mean()) - fp.w_star;
  Mat St = v * Mat::Identity(p, p) + mt * mt.transpose();  // E[th~ th~^T]
  // w~_0 = e_w + M th~_0 with e_w independent of th~_0
  Mat Sw = v * Mat::Identity(q, q) + mw * mw.transpose() + M * St * M.transpose() + mw * mt.transpose() * M.transpose() +
           M * mt * mw.transpose();
  Mat Stw = mt * mw.transpose() + St * M.transpose();
  return {spectral_norm(St), spectral_norm(Sw), spectral_norm(Stw)};
}

struct MartingaleInputs {
  double m_V = 0, m_W = 0;
  InitialMoments M0;
  double V0 = 0;
  double beta0 = 0, gamma0 = 0, kappa = 0;
};

// Moments of the affine Gaussian noise: |E[V V^T]| <= m_V (1 + |E th th^T| + |E w w^T|)
// with m_V = s_V^2 max(1, d_theta, d_w), since E|th|^2 <= d_theta |E th th^T|.
inline std::pair<double, double> martingale_noise_moments(const MartingaleNoiseSpec& n, Eigen::Index dth,
                                                          Eigen::Index dw) {
  const double dm = static_cast<double>(std::max<Eigen::Index>({1, dth, dw}));
  return {n.scale_V * n.scale_V * dm, n.scale_W * n.scale_W * dm};
}

struct MartingaleConstants {
  double m_tilde_V = 0, m_tilde_W = 0, m_tilde_VW = 0, K_C = 0;
  double Cw0 = 0, Cw1 = 0, Cw2 = 0;
  double Ctw0 = 0, Ctw1 = 0, Ctw2 = 0;
  double Ct0 = 0, Ct1 = 0, Ct2 = 0;
  double C0w = 0;          // transient constant of the tracking bound
  double C1_theta_mtg = 0; // Ct1 C_seq(a_Delta/4) a_Delta/2
  double C1_what_mtg = 0;
  double C0_theta_mtg = 0; // Ct0 / V0
  double C0_what_mtg = 0;  // C0w / V0
  double gamma_mtg = 0, beta_mtg = 0;
  double Ct2_at_caps = 0;  // Ct2 evaluated at (beta_inf^(0), gamma_inf^(0)) for the cap
  double V0 = 0;
  double a_delta = 0, a22 = 0;
  Eigen::Index dtheta = 0, dw = 0;
  std::vector<TraceEntry> trace;
};

namespace detail {

struct ChainCore {
  double Cw0, Cw1, Cw2, Ctw0, Ctw1, Ctw2, Ct0, Ct1, Ct2;
};

}  // namespace detail

inline MartingaleConstants martingale_constants(const LinearSystem& sys, const FixedPoint& fp,
                                                const LyapunovCertificate& c22, const LyapunovCertificate& cd,
                                                const TransformBounds& tb, const StepCaps& caps,
                                                const MartingaleInputs& in) {
  for (double x : {in.m_V, in.m_W, in.M0.M_theta, in.M0.M_w, in.M0.M_theta_w, in.V0, in.beta0, in.gamma0, in.kappa})
    if (!(x >= 0) || !std::isfinite(x)) throw NonPositiveInput("martingale_constants: inputs must be finite and >= 0");
  if (!(in.beta0 > 0 && in.gamma0 > 0)) throw NonPositiveInput("martingale_constants: steps must be positive");

  MartingaleConstants mc;
  const double dth = static_cast<double>(sys.dtheta()), dw = static_cast<double>(sys.dw());
  mc.dtheta = sys.dtheta();
  mc.dw = sys.dw();
  const double a22 = c22.a, ad = cd.a;
  mc.a22 = a22;
  mc.a_delta = ad;
  const double p22 = c22.p, pD = cd.p, p22D = std::sqrt(p22 * pD);
  const double A12n = spectral_norm(sys.A12);
  const double Cinf = tb.C_inf, Linf = tb.L_inf;
  auto& tr = mc.trace;
  auto note = [&](std::string name, std::string formula, std::vector<std::pair<std::string, double>> ins, double v) {
    tr.push_back({std::move(name), std::move(formula), std::move(ins), v});
    return v;
  };

  const double ts = fp.theta_star.squaredNorm(), ws = fp.w_star.squaredNorm();
  const double factor = std::max({1.0 + 2.0 * ts + 3.0 * ws, 2.0 + 3.0 * Cinf * Cinf, 3.0});
  mc.m_tilde_V = note("m_tilde_V", "m_V * max(1 + 2|th*|^2 + 3|w*|^2, 2 + 3 C_inf^2, 3)",
                      {{"m_V", in.m_V}, {"|th*|^2", ts}, {"|w*|^2", ws}, {"C_inf", Cinf}}, in.m_V * factor);
  mc.m_tilde_W = note("m_tilde_W", "m_W * max(1 + 2|th*|^2 + 3|w*|^2, 2 + 3 C_inf^2, 3)", {{"m_W", in.m_W}},
                      in.m_W * factor);
  mc.m_tilde_VW = note("m_tilde_VW", "sqrt(d_th d_w)/2 (m_tilde_W + m_tilde_V)", {{"d_th", dth}, {"d_w", dw}},
                       std::sqrt(dth * dw) / 2.0 * (mc.m_tilde_W + mc.m_tilde_V));
  mc.K_C = note("K_C", "max(C_inf^2, 1) + sqrt(d_th d_w) C_inf", {{"C_inf", Cinf}},
                std::max(Cinf * Cinf, 1.0) + std::sqrt(dth * dw) * Cinf);

  // The chain from C^w~ to C^th~, for a given schedule head.
  auto chain = [&](double beta0, double gamma0, double kappa, bool record) {
    ScheduleHead h{beta0, gamma0, a22, ad};
    const double vs = varsigma(h);
    const double cs22 = c_seq(a22 / 2.0, h), csD2 = c_seq(ad / 2.0, h);
    const double mix = mc.m_tilde_V + kappa * kappa * mc.m_tilde_W;
    const double x = mc.m_tilde_VW + kappa * Cinf * mc.m_tilde_V;
    const double g = gamma0 / (1.0 - gamma0 * a22 / 2.0);
    detail::ChainCore k;
    auto rec = [&](const char* n, const char* f, std::vector<std::pair<std::string, double>> ins, double v) {
      return record ? note(n, f, std::move(ins), v) : v;
    };
    k.Cw0 = rec("Cw0", "p22 M0_w", {{"p22", p22}, {"M0_w", in.M0.M_w}}, p22 * in.M0.M_w);
    k.Cw1 = rec("Cw1", "p22 (m_tilde_V + kappa^2 m_tilde_W) K_C C_seq(a22/2)",
                {{"kappa", kappa}, {"C_seq(a22/2)", cs22}}, p22 * mix * mc.K_C * cs22);
    k.Cw2 = rec("Cw2", "p22 K_C (m_tilde_V + kappa^2 m_tilde_W)", {{"kappa", kappa}}, p22 * mc.K_C * mix);
    k.Ctw0 = rec("Ctw0",
                 "p22D (M0_tw + |A12| 2 Cw0/a_D + (m_tilde_VW + kappa C_inf m_tilde_V) 2 gamma0 Cw0/(a_D (1 - gamma0 "
                 "a22/2)))",
                 {{"p22D", p22D}, {"M0_tw", in.M0.M_theta_w}, {"|A12|", A12n}, {"gamma0", gamma0}},
                 p22D * (in.M0.M_theta_w + A12n * 2.0 * k.Cw0 / ad +
                         x * 2.0 * gamma0 * k.Cw0 / (ad * (1.0 - gamma0 * a22 / 2.0))));
    k.Ctw1 = rec("Ctw1",
                 "p22D C_seq(a22/2) (Cw1 (|A12| + gamma0/(1 - gamma0 a22/2) (m_tilde_VW + C_inf kappa m_tilde_V)) + "
                 "m_tilde_VW + C_inf kappa m_tilde_V)",
                 {{"C_seq(a22/2)", cs22}}, p22D * cs22 * (k.Cw1 * (A12n + g * x) + x));
    k.Ctw2 = rec("Ctw2",
                 "p22D ((2 Cw2/a_D)(|A12| + gamma0/(1 - gamma0 a22/2)(m_tilde_VW + C_inf kappa m_tilde_V)) + kappa "
                 "(m_tilde_VW + C_inf kappa m_tilde_V))",
                 {}, p22D * ((2.0 * k.Cw2 / ad) * (A12n + g * x) + kappa * x));
    k.Ct0 = rec("Ct0", "pD (M0_th + 4 |A12| Ctw0 / a_D)", {{"pD", pD}, {"M0_th", in.M0.M_theta}},
                pD * (in.M0.M_theta + 4.0 * A12n * k.Ctw0 / ad));
    k.Ct1 = rec("Ct1",
                "pD (m_tilde_V C_seq(a_D/2) + 2 |A12| Ctw1 C_seq(a22/2) + (|A12|^2 + m_tilde_V)(gamma0 Cw1 + Cw0/(1 - "
                "beta0 a_D/2)) C_seq(a22/2))",
                {{"C_seq(a_D/2)", csD2}, {"beta0", beta0}},
                pD * (mc.m_tilde_V * csD2 + 2.0 * A12n * k.Ctw1 * cs22 +
                      (A12n * A12n + mc.m_tilde_V) * (gamma0 * k.Cw1 + k.Cw0 / (1.0 - beta0 * ad / 2.0)) * cs22));
    k.Ct2 = rec("Ct2",
                "pD (16 varsigma |A12| Ctw2 / a22 + m_tilde_V + (|A12|^2 + m_tilde_V)(8 Cw2 varsigma / a22)/(1 - beta0 "
                "a_D/2))",
                {{"varsigma", vs}},
                pD * (16.0 * vs * A12n * k.Ctw2 / a22 + mc.m_tilde_V +
                      (A12n * A12n + mc.m_tilde_V) * (8.0 * k.Cw2 * vs / a22) / (1.0 - beta0 * ad / 2.0)));
    return k;
  };

  detail::ChainCore k = chain(in.beta0, in.gamma0, in.kappa, true);
  mc.Cw0 = k.Cw0;
  mc.Cw1 = k.Cw1;
  mc.Cw2 = k.Cw2;
  mc.Ctw0 = k.Ctw0;
  mc.Ctw1 = k.Ctw1;
  mc.Ctw2 = k.Ctw2;
  mc.Ct0 = k.Ct0;
  mc.Ct1 = k.Ct1;
  mc.Ct2 = k.Ct2;

  ScheduleHead h{in.beta0, in.gamma0, a22, ad};
  const double csD4 = c_seq(ad / 4.0, h), cs22 = c_seq(a22 / 2.0, h);
  const double lr = Linf * Linf * c22.lambda_max / cd.lambda_min;
  mc.V0 = in.V0;
  mc.C1_theta_mtg = note("C1_theta_mtg", "Ct1 C_seq(a_D/4) a_D/2", {{"C_seq(a_D/4)", csD4}}, mc.Ct1 * csD4 * ad / 2.0);
  mc.C0w = note("C0w", "2 (L_inf^2 lmax(Q22)/lmin(Q_D) Ct0 + C_seq(a22/2) Cw2 Ct0/(1 - beta0 a_D/4) + Cw0)",
                {{"L_inf", Linf}}, 2.0 * (lr * mc.Ct0 + cs22 * mc.Cw2 * mc.Ct0 / (1.0 - in.beta0 * ad / 4.0) + mc.Cw0));
  mc.C1_what_mtg =
      note("C1_what_mtg",
           "2 (kappa L_inf^2 lmax(Q22)/lmin(Q_D) C_seq(a_D/4) a_D/2 Ct1 + Cw1 + C_seq(a_D/4) a_D/2 Cw2 C_seq(a22/2) Ct1)",
           {}, 2.0 * (in.kappa * lr * csD4 * ad / 2.0 * mc.Ct1 + mc.Cw1 + csD4 * ad / 2.0 * mc.Cw2 * cs22 * mc.Ct1));
  // Theorem 1 writes the transient as C0^mtg V0.
  mc.C0_theta_mtg = in.V0 > 0 ? mc.Ct0 / in.V0 : 0.0;
  mc.C0_what_mtg = in.V0 > 0 ? mc.C0w / in.V0 : 0.0;

  // Refined cap. Ct2 presumes admissible steps; evaluate it at the base caps, where it is largest.
  detail::ChainCore kc = chain(caps.beta0, caps.gamma0, in.kappa, false);
  mc.Ct2_at_caps = note("Ct2_at_caps", "Ct2 with beta0 = beta_inf^(0), gamma0 = gamma_inf^(0)",
                        {{"beta_inf0", caps.beta0}, {"gamma_inf0", caps.gamma0}}, kc.Ct2);
  const double mix = mc.m_tilde_V + in.kappa * in.kappa * mc.m_tilde_W;
  mc.gamma_mtg = note("gamma_mtg",
                      "min(gamma_inf^(0), 1/(a22/2 + (2/a22) p22 (m_tilde_V + kappa^2 m_tilde_W)), a_D/(4 Ct2))",
                      {{"gamma_inf0", caps.gamma0}},
                      std::min({caps.gamma0, 1.0 / (a22 / 2.0 + (2.0 / a22) * p22 * mix), ad / (4.0 * kc.Ct2)}));
  mc.beta_mtg = note("beta_mtg", "beta_inf^(0)", {}, caps.beta0);
  return mc;
}

struct Envelope {
  std::vector<long> checkpoints;
  std::vector<double> theta, track;
};

// d_th (Ct0 prod_{l<k}(1 - beta_l a_D/4) + C1_theta beta_k) and the same shape for the
// tracking error with gamma_k. The product is clamped at 0 on underflow.
inline Envelope theorem1_envelope(const MartingaleConstants& mc, const StepSchedule& sched,
                                  const std::vector<long>& checkpoints) {
  Envelope env;
  env.checkpoints = checkpoints;
  double prod = 1.0;
  std::size_t c = 0;
  const double dth = static_cast<double>(mc.dtheta), dw = static_cast<double>(mc.dw);
  for (long k = 0; c < checkpoints.size(); ++k) {
    while (c < checkpoints.size() && checkpoints[c] == k) {
      env.theta.push_back(dth * (mc.Ct0 * prod + mc.C1_theta_mtg * sched.beta_at(k)));
      env.track.push_back(dw * (mc.C0w * prod + mc.C1_what_mtg * sched.gamma_at(k)));
      ++c;
    }
    prod *= 1.0 - sched.beta_at(k) * mc.a_delta / 4.0;
    if (!(prod > 1e-300)) prod = 0.0;
  }
  return env;
}

inline Envelope theorem1_envelope(const MartingaleConstants& mc, const StepSchedule& sched,
                                  const ScheduleCertificate& cert, const std::vector<long>& checkpoints) {
  if (!cert.admissible) throw ScheduleNotAdmissible("theorem1_envelope: schedule fails the step-size conditions");
  if (sched.beta_at(0) > mc.beta_mtg || sched.gamma_at(0) > mc.gamma_mtg)
    throw ScheduleNotAdmissible("theorem1_envelope: schedule exceeds the refined caps");
  return theorem1_envelope(mc, sched, checkpoints);
}

}  // namespace twoscale
