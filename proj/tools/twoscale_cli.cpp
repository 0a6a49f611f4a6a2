// Command line front end: gen, certify, simulate, theory, rates, reproduce.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "twoscale/twoscale.hpp"

namespace fs = std::filesystem;
using namespace twoscale;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
  std::optional<std::string> sigma;
  std::string problem;
  std::string csv;
};

// Pipelines that fail validation after writing their report exit 3 through this.
struct SoftFailure {
  json summary;
};

double parse_sigma(const std::string& s) {
  if (s == "0.5") return 0.5;
  if (s == "0.67") return 0.67;
  if (s == "0.75") return 0.75;
  throw ConfigError("--sigma must be one of 0.5, 0.67, 0.75");
}

ExperimentConfig default_config(const std::string& problem) {
  ExperimentConfig c;
  if (problem == "garnet") {
    c.source = ProblemSource::garnet;
    c.garnet.seed = garnet_default_seed;
    c.regime = NoiseRegime::markov;
    c.K = 1'000'000;
    c.R = 100;
  } else if (problem == "toy" || problem.empty()) {
    c.toy_seed = toy_default_seed;
    c.K = 1'000'000;
    c.R = 200;
  } else {
    throw ConfigError("--problem must be toy or garnet");
  }
  return c;
}

struct Context {
  ExperimentConfig cfg;
  StepSchedule sched;
  std::string sigma_tag = "0.67";
};

Context load(const Options& o, bool honour_problem_flag) {
  Context ctx;
  if (!o.config.empty()) {
    ctx.cfg = load_config(o.config);
    if (honour_problem_flag && !o.problem.empty()) {
      const bool garnet = ctx.cfg.source == ProblemSource::garnet;
      if ((o.problem == "garnet") != garnet) throw ConfigError("--problem disagrees with the config's problem");
    }
  } else {
    ctx.cfg = default_config(honour_problem_flag ? o.problem : "");
  }
  if (const char* env = std::getenv("TWOSCALE_SEED")) {
    try {
      std::size_t pos = 0;
      ctx.cfg.master_seed = std::stoull(env, &pos);
      if (env[pos] != '\0') throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError(std::string("TWOSCALE_SEED is not an unsigned integer: ") + env);
    }
  }
  if (o.seed) ctx.cfg.master_seed = *o.seed;
  if (o.threads) ctx.cfg.threads = *o.threads;
  if (o.out) ctx.cfg.output_dir = *o.out;
  double sigma = 0.67;
  if (o.sigma) {
    sigma = parse_sigma(*o.sigma);
    ctx.sigma_tag = *o.sigma;
  }
  if (ctx.cfg.has_schedule) {
    ctx.sched = ctx.cfg.schedule;
    if (o.sigma) {
      if (ctx.sched.kind != ScheduleKind::polynomial) throw ConfigError("--sigma needs a polynomial schedule");
      ctx.sched.sigma = sigma;
    }
  } else {
    ctx.sched = default_schedule(ctx.cfg, sigma);
  }
  if (ctx.cfg.resolved_checkpoints().back() > ctx.cfg.K) throw ConfigError("K must be >= the largest checkpoint");
  return ctx;
}

void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + p.string());
  f << s;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::string csv_string(const CurveTable& t) {
  std::ostringstream os;
  write_csv(os, t);
  return os.str();
}

MomentSeries simulate_series(const Context& ctx, const BuiltProblem& p) {
  EnsembleOptions opt;
  opt.K = ctx.cfg.K;
  opt.replicas = ctx.cfg.R;
  opt.checkpoints = ctx.cfg.resolved_checkpoints();
  opt.master_seed = ctx.cfg.master_seed;
  opt.threads = ctx.cfg.threads;
  if (ctx.cfg.regime == NoiseRegime::markov) return run_ensemble(GtdModel(*p.gtd), ctx.sched, opt);
  return run_ensemble(MartingaleModel(p.sys, p.noise), ctx.sched, opt);
}

std::vector<double> leading_term_for(const BuiltProblem& p, const StepSchedule& sched, const std::vector<long>& cps) {
  const Mat S = sigma_effective(*p.noise.Sigma11, *p.noise.Sigma12, *p.noise.Sigma22, p.sys.A12, p.sys.A22);
  return leading_term(S, p.sys.delta(), sched, cps);
}

json fits_json(const CurveTable& t, std::pair<long, long> window) {
  return {{"m_theta", to_json(rate_fit(t.k, t.m_theta, window))},
          {"m_w", to_json(rate_fit(t.k, t.m_w, window))},
          {"m_track", to_json(rate_fit(t.k, t.m_track, window))}};
}

json cmd_gen(const Options& o) {
  Context ctx = load(o, false);
  BuiltProblem p = build_problem(ctx.cfg);
  json doc{{"problem", p.describe},
           {"system", to_json(p.sys)},
           {"theta_star", to_json(p.fp.theta_star)},
           {"w_star", to_json(p.fp.w_star)}};
  if (p.gtd) {
    json kernels = json::array();
    for (const auto& k : p.gtd->p) kernels.push_back(to_json(k));
    doc["garnet"] = {{"features", to_json(p.gtd->features)},
                     {"rewards", to_json(p.gtd->rewards)},
                     {"policy", to_json(p.gtd->policy)},
                     {"kernels", kernels}};
  }
  const fs::path path = fs::path(ctx.cfg.output_dir) / "system.json";
  write_json(path, doc);
  return {{"dtheta", p.sys.dtheta()}, {"dw", p.sys.dw()}, {"outputs", {path.string()}}};
}

json cmd_certify(const Options& o) {
  Context ctx = load(o, false);
  BuiltProblem p = build_problem(ctx.cfg);
  Certification c = certify(p, ctx.sched, ctx.cfg.K, ctx.cfg.regime);
  json doc = certification_json(c, ctx.sched);
  doc["problem"] = p.describe;
  if (c.mc) doc["provenance"] = to_json(c.mc->trace);
  const fs::path path = fs::path(ctx.cfg.output_dir) / "certificate.json";
  write_json(path, doc);
  json s{{"admissible", c.cert.admissible},
         {"kappa", c.cert.kappa},
         {"varsigma", c.cert.varsigma},
         {"outputs", {path.string()}}};
  if (!c.cert.admissible) throw SoftFailure{s};
  return s;
}

json cmd_simulate(const Options& o) {
  Context ctx = load(o, false);
  BuiltProblem p = build_problem(ctx.cfg);
  MomentSeries ms = simulate_series(ctx, p);
  CurveTable t = normalized_curves(ms, ctx.sched);
  const fs::path csv = fs::path(ctx.cfg.output_dir) / "moments.csv";
  const fs::path meta = fs::path(ctx.cfg.output_dir) / "simulate.json";
  write_text(csv, csv_string(t));
  write_json(meta, {{"problem", p.describe},
                    {"schedule", to_json(ctx.sched)},
                    {"K", ctx.cfg.K},
                    {"R", ctx.cfg.R},
                    {"master_seed", ctx.cfg.master_seed},
                    {"V0", ms.V0}});
  return {{"K", ctx.cfg.K},
          {"R", ctx.cfg.R},
          {"final_m_theta", ms.m_theta.back()},
          {"final_m_track", ms.m_track.back()},
          {"outputs", {csv.string(), meta.string()}}};
}

json cmd_theory(const Options& o) {
  Context ctx = load(o, false);
  BuiltProblem p = build_problem(ctx.cfg);
  const auto cps = ctx.cfg.resolved_checkpoints();
  Certification c = certify(p, ctx.sched, ctx.cfg.K, ctx.cfg.regime);
  json doc = certification_json(c, ctx.sched);
  doc["problem"] = p.describe;
  doc["checkpoints"] = cps;
  json summary;
  if (ctx.cfg.regime == NoiseRegime::markov) {
    doc["envelope"] = "not evaluated under Markovian noise; use `rates` on a simulated series";
  } else {
    const Mat S = sigma_effective(*p.noise.Sigma11, *p.noise.Sigma12, *p.noise.Sigma22, p.sys.A12, p.sys.A22);
    doc["Sigma"] = to_json(S);
    doc["trace_Sigma"] = S.trace();
    try {
      doc["I_k"] = leading_term(S, p.sys.delta(), ctx.sched, cps);
    } catch (const StepTooLarge& e) {
      doc["I_k"] = std::string("not computed: ") + e.what();
    }
    ExpansionBounds eb = expansion_bounds(p.sys.delta(), c.cd, ctx.sched, c.c22.a);
    doc["E3"] = eb.E3;
    doc["E4"] = eb.E4;
    doc["k0_exp"] = eb.k0_exp ? json(*eb.k0_exp) : json(nullptr);
    try {
      Envelope env = theorem1_envelope(*c.mc, ctx.sched, c.cert, cps);
      doc["envelope"] = {{"theta", env.theta}, {"track", env.track}};
    } catch (const ScheduleNotAdmissible& e) {
      doc["envelope"] = std::string("not evaluated: ") + e.what();
    }
    const fs::path prov = fs::path(ctx.cfg.output_dir) / "provenance.json";
    write_json(prov, to_json(c.mc->trace));
    summary["E3"] = eb.E3;
    summary["E4"] = eb.E4;
    summary["trace_Sigma"] = S.trace();
    summary["outputs"] = {prov.string()};
  }
  const fs::path path = fs::path(ctx.cfg.output_dir) / "theory.json";
  write_json(path, doc);
  summary["admissible"] = c.cert.admissible;
  summary["outputs"].push_back(path.string());
  return summary;
}

json cmd_rates(const Options& o) {
  Context ctx = load(o, false);
  const fs::path in = o.csv.empty() ? fs::path(ctx.cfg.output_dir) / "moments.csv" : fs::path(o.csv);
  std::ifstream f(in);
  if (!f) throw ConfigError("cannot open " + in.string());
  CurveTable t = read_csv(f);
  auto window = ctx.cfg.fit_window ? *ctx.cfg.fit_window : default_fit_window(t.k);
  json fits = fits_json(t, window);
  const fs::path path = fs::path(ctx.cfg.output_dir) / "rates.json";
  write_json(path, {{"input", in.string()}, {"fits", fits}});
  return {{"slope_m_theta", fits["m_theta"]["slope"]},
          {"slope_m_track", fits["m_track"]["slope"]},
          {"slope_m_w", fits["m_w"]["slope"]},
          {"outputs", {path.string()}}};
}

json cmd_reproduce(const Options& o) {
  Context ctx = load(o, true);
  BuiltProblem p = build_problem(ctx.cfg);
  const std::string name = std::string(ctx.cfg.source == ProblemSource::garnet ? "garnet" : "toy");
  Certification c = certify(p, ctx.sched, ctx.cfg.K, ctx.cfg.regime);
  MomentSeries ms = simulate_series(ctx, p);
  std::vector<double> I;
  if (ctx.cfg.regime == NoiseRegime::martingale) I = leading_term_for(p, ctx.sched, ms.checkpoints);
  CurveTable t = normalized_curves(ms, ctx.sched, I);
  auto window = ctx.cfg.fit_window ? *ctx.cfg.fit_window : default_fit_window(t.k);
  json fits = fits_json(t, window);
  const std::string stem = "reproduce_" + name + "_sigma" + ctx.sigma_tag;
  const fs::path csv = fs::path(ctx.cfg.output_dir) / (stem + ".csv");
  const fs::path meta = fs::path(ctx.cfg.output_dir) / (stem + ".json");
  write_text(csv, csv_string(t));
  json doc{{"problem", p.describe}, {"K", ctx.cfg.K}, {"R", ctx.cfg.R}, {"master_seed", ctx.cfg.master_seed},
           {"fits", fits},          {"certificate", certification_json(c, ctx.sched)}};
  write_json(meta, doc);
  return {{"problem", name},
          {"sigma", ctx.sigma_tag},
          {"slope_m_theta", fits["m_theta"]["slope"]},
          {"slope_m_track", fits["m_track"]["slope"]},
          {"admissible", c.cert.admissible},
          {"outputs", {csv.string(), meta.string()}}};
}

void emit(const std::string& cmd, const std::string& status, json body) {
  body["command"] = cmd;
  body["status"] = status;
  std::cout << body.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear two-timescale stochastic approximation experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out, sigma;
  app.add_option("--config", o.config, "JSON experiment config");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides config and TWOSCALE_SEED)");
  auto* threads_opt = app.add_option("--threads", threads, "worker threads, 0 for all cores")->check(CLI::NonNegativeNumber);
  auto* out_opt = app.add_option("--out", out, "output directory");
  auto* sigma_opt = app.add_option("--sigma", sigma, "gamma exponent: 0.5, 0.67 or 0.75");

  std::string cmd;
  app.add_subcommand("gen", "write the problem instance");
  app.add_subcommand("certify", "check assumptions, caps and the schedule");
  app.add_subcommand("simulate", "run the Monte Carlo ensemble");
  app.add_subcommand("theory", "leading term, expansion bounds, envelope and provenance");
  auto* rates = app.add_subcommand("rates", "fit log-log slopes to a moments CSV");
  auto* repro = app.add_subcommand("reproduce", "end-to-end toy or garnet pipeline");
  rates->add_option("--csv", o.csv, "moments CSV (default <out>/moments.csv)");
  repro->add_option("--problem", o.problem, "toy or garnet")->check(CLI::IsMember({"toy", "garnet"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit("", "error", {{"kind", "config"}, {"message", e.what()}});
    return 2;
  }
  if (*seed_opt) o.seed = seed;
  if (*threads_opt) o.threads = threads;
  if (*out_opt) o.out = out;
  if (*sigma_opt) o.sigma = sigma;

  for (auto* s : app.get_subcommands()) cmd = s->get_name();
  try {
    json body;
    if (cmd == "gen") body = cmd_gen(o);
    if (cmd == "certify") body = cmd_certify(o);
    if (cmd == "simulate") body = cmd_simulate(o);
    if (cmd == "theory") body = cmd_theory(o);
    if (cmd == "rates") body = cmd_rates(o);
    if (cmd == "reproduce") body = cmd_reproduce(o);
    emit(cmd, "ok", body);
    return 0;
  } catch (const SoftFailure& f) {
    emit(cmd, "assumption_failed", f.summary);
    return 3;
  } catch (const fs::filesystem_error& e) {
    emit(cmd, "error", {{"kind", "config"}, {"message", e.what()}});
    return 2;
  } catch (const ConfigError& e) {
    emit(cmd, "error", {{"kind", "config"}, {"message", e.what()}});
    return 2;
  } catch (const AssumptionError& e) {
    emit(cmd, "error", {{"kind", "assumption"}, {"message", e.what()}});
    return 3;
  } catch (const NumericalError& e) {
    emit(cmd, "error", {{"kind", "numerical"}, {"message", e.what()}});
    return 4;
  } catch (const std::exception& e) {
    emit(cmd, "error", {{"kind", "numerical"}, {"message", e.what()}});
    return 4;
  }
}
