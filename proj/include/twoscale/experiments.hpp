#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "problems.hpp"
#include "report.hpp"
#include "schedules.hpp"
#include "simulator.hpp"
#include "stochastic_linalg.hpp"
#include "theory.hpp"

namespace twoscale {

inline constexpr std::uint64_t toy_default_seed = 7;
inline constexpr std::uint64_t garnet_default_seed = 851;  // first seed with a well-conditioned Delta among 0..3000

// beta_k = 4/(k + 1e3); gamma_k = c/(k + 2e4)^sigma with c fixed by gamma_{1e5} = 0.01.
inline StepSchedule toy_rate_schedule(double sigma) {
  return StepSchedule::polynomial(4.0, 1e3, 0.01 * std::pow(1e5 + 2e4, sigma), 2e4, sigma);
}

// beta_k = 300/(k + 8e3); gamma_k = c/(k + 2e3)^sigma with gamma_0 = 10/2000^0.67 for every sigma.
inline StepSchedule garnet_rate_schedule(double sigma) {
  const double gamma0 = 10.0 / std::pow(2e3, 0.67);
  return StepSchedule::polynomial(300.0, 8e3, gamma0 * std::pow(2e3, sigma), 2e3, sigma);
}

// The toy schedule from the experiments section, with k0_gamma in the gamma offset.
inline StepSchedule paper_toy_schedule(double sigma) { return StepSchedule::polynomial(140.0, 1e4, 300.0, 1e7, sigma); }

struct BuiltProblem {
  LinearSystem sys;
  FixedPoint fp;
  MartingaleNoiseSpec noise;
  std::optional<GtdProblem> gtd;
  int resamples = 0;
  json describe;
};

inline BuiltProblem build_problem(const ExperimentConfig& c) {
  BuiltProblem b;
  switch (c.source) {
    case ProblemSource::toy: {
      ToyInstance t = random_toy_instance(c.toy_d, c.toy_seed, c.noise.scale_V, c.noise.scale_W);
      b.sys = t.sys;
      b.fp = t.fp;
      b.noise = t.noise;
      b.noise.explicit_matrices = c.noise.explicit_matrices;
      b.resamples = t.resamples;
      b.describe = {{"source", "toy"}, {"d", c.toy_d}, {"seed", c.toy_seed}, {"resamples", t.resamples}};
      break;
    }
    case ProblemSource::garnet: {
      b.gtd = garnet_instance(c.garnet);
      b.sys = gtd_system(*b.gtd);
      b.fp = fixed_point(b.sys);
      b.describe = {{"source", "garnet"},
                    {"n_states", c.garnet.n_states},
                    {"n_actions", c.garnet.n_actions},
                    {"branching", c.garnet.branching},
                    {"n_features", c.garnet.n_features},
                    {"discount", c.garnet.discount},
                    {"seed", c.garnet.seed}};
      break;
    }
    case ProblemSource::file: {
      std::ifstream in(c.system_path);
      if (!in) throw ConfigError("cannot open system file '" + c.system_path + "'");
      json j;
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw ConfigError("system file is not valid JSON: " + std::string(e.what()));
      }
      b.sys = system_from_json(j.contains("system") ? j["system"] : j);
      check_a1(b.sys);
      b.fp = fixed_point(b.sys);
      b.noise = c.noise;
      b.describe = {{"source", "file"}, {"path", c.system_path}};
      break;
    }
  }
  set_fixed_point_covariances(b.noise, b.fp);
  return b;
}

inline StepSchedule default_schedule(const ExperimentConfig& c, double sigma) {
  return c.source == ProblemSource::garnet ? garnet_rate_schedule(sigma) : toy_rate_schedule(sigma);
}

struct Certification {
  LyapunovCertificate c22, cd;
  TransformBounds bounds;
  StepCaps caps;
  ScheduleCertificate cert;
  std::optional<MartingaleConstants> mc;  // martingale noise only
};

// Lyapunov certificates, caps, and the schedule check. Under martingale noise the
// refined caps come from the constant chain evaluated at the schedule head.
inline Certification certify(const BuiltProblem& p, const StepSchedule& sched, long horizon, NoiseRegime regime,
                             const InitSpec& init = {}) {
  Certification out{make_certificate(p.sys.A22), make_certificate(p.sys.delta()), {}, {}, {}, {}};
  out.bounds = transform_bounds(p.sys, out.c22, out.cd);
  out.caps = stepsize_caps(p.sys, out.c22, out.cd);
  out.cert = validate(sched, out.c22, out.cd, out.caps, horizon);
  if (regime == NoiseRegime::martingale) {
    auto [mV, mW] = martingale_noise_moments(p.noise, p.sys.dtheta(), p.sys.dw());
    MartingaleInputs in;
    in.m_V = mV;
    in.m_W = mW;
    in.M0 = initial_moments(p.sys, p.fp, init);
    in.V0 = init.expected_sq_error(p.fp.theta_star) + init.expected_sq_error(p.fp.w_star);
    in.beta0 = sched.beta_at(0);
    in.gamma0 = sched.gamma_at(0);
    in.kappa = out.cert.kappa;
    out.mc = martingale_constants(p.sys, p.fp, out.c22, out.cd, out.bounds, out.caps, in);
    out.caps.gamma_mtg = out.mc->gamma_mtg;
    out.caps.beta_mtg = out.mc->beta_mtg;
    out.cert = validate(sched, out.c22, out.cd, out.caps, horizon);
  }
  return out;
}

inline json certification_json(const Certification& c, const StepSchedule& sched) {
  json j{{"schedule", to_json(sched)},
         {"lyapunov_A22", to_json(c.c22)},
         {"lyapunov_Delta", to_json(c.cd)},
         {"L_inf", c.bounds.L_inf},
         {"C_inf", c.bounds.C_inf},
         {"schedule_certificate", to_json(c.cert)}};
  return j;
}

}  // namespace twoscale
