#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "problems.hpp"
#include "stochastic_linalg.hpp"

namespace twoscale {

enum class ScheduleKind { constant, piecewise_constant, polynomial };

struct StepSchedule {
  ScheduleKind kind = ScheduleKind::polynomial;
  // polynomial: beta_k = c_beta / (k + k0_beta), gamma_k = c_gamma / (k + k0_gamma)^sigma
  double c_beta = 1, c_gamma = 1, k0_beta = 1, k0_gamma = 1, sigma = 2.0 / 3.0;
  // constant
  double beta = 0, gamma = 0;
  // piecewise: levels[i] applies for breakpoints[i-1] <= k < breakpoints[i];
  // levels has one more entry than breakpoints.
  std::vector<long> breakpoints;
  std::vector<std::pair<double, double>> levels;

  static StepSchedule polynomial(double cb, double k0b, double cg, double k0g, double sig) {
    StepSchedule s;
    s.kind = ScheduleKind::polynomial;
    s.c_beta = cb;
    s.k0_beta = k0b;
    s.c_gamma = cg;
    s.k0_gamma = k0g;
    s.sigma = sig;
    return s;
  }
  static StepSchedule constant_steps(double b, double g) {
    StepSchedule s;
    s.kind = ScheduleKind::constant;
    s.beta = b;
    s.gamma = g;
    return s;
  }
  static StepSchedule piecewise(std::vector<long> bp, std::vector<std::pair<double, double>> lv) {
    if (lv.size() != bp.size() + 1) throw ConfigError("piecewise schedule needs one more level than breakpoints");
    if (!std::is_sorted(bp.begin(), bp.end())) throw ConfigError("piecewise breakpoints must be sorted");
    StepSchedule s;
    s.kind = ScheduleKind::piecewise_constant;
    s.breakpoints = std::move(bp);
    s.levels = std::move(lv);
    return s;
  }

  double beta_at(long k) const {
    switch (kind) {
      case ScheduleKind::constant:
        return beta;
      case ScheduleKind::polynomial:
        return c_beta / (static_cast<double>(k) + k0_beta);
      case ScheduleKind::piecewise_constant:
        return level_at(k).first;
    }
    return 0;
  }
  double gamma_at(long k) const {
    switch (kind) {
      case ScheduleKind::constant:
        return gamma;
      case ScheduleKind::polynomial:
        return c_gamma / std::pow(static_cast<double>(k) + k0_gamma, sigma);
      case ScheduleKind::piecewise_constant:
        return level_at(k).second;
    }
    return 0;
  }
  std::pair<double, double> eval(long k) const { return {beta_at(k), gamma_at(k)}; }

 private:
  std::pair<double, double> level_at(long k) const {
    auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), k);
    return levels[static_cast<std::size_t>(it - breakpoints.begin())];
  }
};

inline std::string kind_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::constant:
      return "constant";
    case ScheduleKind::piecewise_constant:
      return "piecewise_constant";
    case ScheduleKind::polynomial:
      return "polynomial";
  }
  return "?";
}

struct StepCaps {
  double gamma0 = 0;  // gamma_inf^(0)
  double beta0 = 0;   // beta_inf^(0)
  double kappa = 0;   // kappa_inf
  // filled in from the theory module when available
  std::optional<double> gamma_mtg, beta_mtg;
};

// Norms shared by the caps and the transform bounds.
struct CouplingNorms {
  double a12;        // ||A12||_{Q22, Q_Delta}
  double m;          // ||A22^{-1} A21||_{Q_Delta, Q22}
  double delta_q;    // ||Delta||_{Q_Delta}
  double a22_q;      // ||A22||_{Q22}
};

inline CouplingNorms coupling_norms(const LinearSystem& sys, const LyapunovCertificate& c22,
                                    const LyapunovCertificate& cd) {
  CouplingNorms n;
  n.a12 = weighted_opnorm(sys.A12, c22.Q, cd.Q);
  n.m = weighted_opnorm(sys.a22inv_a21(), cd.Q, c22.Q);
  n.delta_q = weighted_opnorm(sys.delta(), cd.Q, cd.Q);
  n.a22_q = weighted_opnorm(sys.A22, c22.Q, c22.Q);
  return n;
}

inline StepCaps stepsize_caps(const LinearSystem& sys, const LyapunovCertificate& c22, const LyapunovCertificate& cd) {
  CouplingNorms n = coupling_norms(sys, c22, cd);
  const double a22 = c22.a, ad = cd.a;
  StepCaps caps;
  caps.gamma0 = 1.0 / (2.0 * c22.q_norm * c22.q_norm * n.a22_q * n.a22_q);
  caps.beta0 = std::min(1.0 / (2.0 * cd.q_norm * cd.q_norm * n.delta_q * n.delta_q), 1.0 / (2.0 * n.delta_q + ad));
  double first = (a22 / 2.0) / (n.a12 * n.m + ad / 2.0) * std::min(1.0, (ad / 2.0) / (n.delta_q + ad / 2.0));
  caps.kappa = std::min(first, a22 / (4.0 * ad));
  return caps;
}

struct InequalityScan {
  bool ok = true;
  long violations = 0;
  long last_violation = -1;
  double worst_excess = 0;  // max of lhs - rhs
  bool tail_ok = true;      // analytic argument beyond the horizon

  void record(long k, double lhs, double rhs) {
    double ex = lhs - rhs;
    if (ex > 0) {
      ok = false;
      ++violations;
      last_violation = k;
    }
    worst_excess = std::max(worst_excess, ex);
  }
};

struct ScheduleCertificate {
  bool positive = true;
  bool nonincreasing = true;
  long first_monotonicity_violation = -1;
  double kappa = 0;       // sup_k beta_k / gamma_k (scan plus analytic tail)
  double kappa_scan = 0;  // over k < horizon
  std::optional<double> kappa_paper_bound;  // (c_beta/c_gamma)(k0_gamma/k0_beta)^sigma
  double varsigma = 1;
  std::optional<double> rho0;
  StepCaps caps;
  InequalityScan a2_gamma, a2_beta, a2_cross;
  // smallest k from which every A2-2 inequality holds up to the horizon; 0 means all
  long a2_k_pass = 0;
  bool a2_all = true;
  bool beta0_ok = false, gamma0_ok = false, kappa_ok = false;
  bool gamma_mtg_ok = true;
  long horizon = 0;
  bool admissible = false;
};

// Exact sup of beta_k / gamma_k over integer k >= 0 for the polynomial family.
// log ratio has derivative sigma/(k+k0_gamma) - 1/(k+k0_beta), whose sign is that of
// (sigma-1) k + sigma k0_beta - k0_gamma: the ratio rises then falls.
inline double polynomial_kappa_sup(const StepSchedule& s) {
  auto r = [&](double k) { return s.c_beta * std::pow(k + s.k0_gamma, s.sigma) / (s.c_gamma * (k + s.k0_beta)); };
  double best = r(0.0);
  if (s.sigma < 1.0) {
    double kstar = (s.sigma * s.k0_beta - s.k0_gamma) / (1.0 - s.sigma);
    if (kstar > 0) best = std::max({best, r(std::floor(kstar)), r(std::ceil(kstar))});
  } else if (s.k0_beta > s.k0_gamma) {
    best = std::max(best, s.c_beta / s.c_gamma);
  }
  return best;
}

inline ScheduleCertificate validate(const StepSchedule& s, const LyapunovCertificate& c22,
                                    const LyapunovCertificate& cd, const StepCaps& caps, long horizon) {
  if (horizon < 1) throw ConfigError("validate: horizon must be >= 1");
  ScheduleCertificate cert;
  cert.horizon = horizon;
  cert.caps = caps;
  const double a22 = c22.a, ad = cd.a;
  double bprev = s.beta_at(0), gprev = s.gamma_at(0);
  cert.kappa_scan = bprev / gprev;
  double rho = 0.0;
  if (!(bprev > 0 && gprev > 0)) cert.positive = false;
  for (long k = 1; k <= horizon; ++k) {
    double b = s.beta_at(k), g = s.gamma_at(k);
    if (!(b > 0 && g > 0)) cert.positive = false;
    if ((b > bprev || g > gprev) && cert.nonincreasing) {
      cert.nonincreasing = false;
      cert.first_monotonicity_violation = k;
    }
    // inequalities indexed by k-1 < horizon
    cert.a2_gamma.record(k - 1, gprev / g, 1.0 + a22 / 8.0 * g);
    cert.a2_beta.record(k - 1, bprev / b, 1.0 + ad / 16.0 * b);
    cert.a2_cross.record(k - 1, gprev / g, 1.0 + ad / 16.0 * b);
    if (k < horizon) cert.kappa_scan = std::max(cert.kappa_scan, b / g);
    rho = std::max(rho, gprev * gprev / b);
    bprev = b;
    gprev = g;
  }
  cert.rho0 = rho;
  cert.kappa = cert.kappa_scan;

  if (s.kind == ScheduleKind::polynomial) {
    cert.kappa = std::max(cert.kappa, polynomial_kappa_sup(s));
    cert.kappa_paper_bound = s.c_beta / s.c_gamma * std::pow(s.k0_gamma / s.k0_beta, s.sigma);
    // Sufficient conditions beyond the horizon; each left side is monotone in k.
    const double K = static_cast<double>(horizon);
    const double sg = s.sigma;
    cert.a2_gamma.tail_ok = sg < 1.0 ? sg * std::pow(K + 1 + s.k0_gamma, sg) / (K + s.k0_gamma) <= a22 / 8.0 * s.c_gamma
                                     : sg * (K + 1 + s.k0_gamma) / (K + s.k0_gamma) <= a22 / 8.0 * s.c_gamma;
    cert.a2_beta.tail_ok = (K + 1 + s.k0_beta) / (K + s.k0_beta) <= ad / 16.0 * s.c_beta;
    double cross_sup = std::max(sg * (K + 1 + s.k0_beta) / (K + s.k0_gamma), sg);
    cert.a2_cross.tail_ok = cross_sup <= ad / 16.0 * s.c_beta;
  }
  // constant and piecewise schedules are constant past the horizon when it covers the last breakpoint
  if (s.kind == ScheduleKind::piecewise_constant && !s.breakpoints.empty() && s.breakpoints.back() > horizon) {
    cert.a2_gamma.tail_ok = cert.a2_beta.tail_ok = cert.a2_cross.tail_ok = false;
  }

  long last = std::max({cert.a2_gamma.last_violation, cert.a2_beta.last_violation, cert.a2_cross.last_violation});
  cert.a2_k_pass = last + 1;
  cert.a2_all = cert.a2_gamma.ok && cert.a2_beta.ok && cert.a2_cross.ok && cert.a2_gamma.tail_ok &&
                cert.a2_beta.tail_ok && cert.a2_cross.tail_ok;

  ScheduleHead h{s.beta_at(0), s.gamma_at(0), a22, ad};
  cert.varsigma = varsigma(h);
  cert.beta0_ok = h.beta0 <= caps.beta0 && (!caps.beta_mtg || h.beta0 <= *caps.beta_mtg);
  cert.gamma0_ok = h.gamma0 <= caps.gamma0;
  if (caps.gamma_mtg) cert.gamma_mtg_ok = h.gamma0 <= *caps.gamma_mtg;
  cert.kappa_ok = cert.kappa <= caps.kappa;
  cert.admissible = cert.positive && cert.nonincreasing && cert.a2_all && cert.beta0_ok && cert.gamma0_ok &&
                    cert.gamma_mtg_ok && cert.kappa_ok;
  return cert;
}

}  // namespace twoscale
