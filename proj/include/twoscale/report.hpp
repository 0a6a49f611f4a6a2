#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "problems.hpp"
#include "schedules.hpp"
#include "simulator.hpp"
#include "stochastic_linalg.hpp"
#include "theory.hpp"

namespace twoscale {

using json = nlohmann::json;

// ---- rate fitting

struct RateFit {
  double slope = 0, intercept = 0, r_squared = 0;
  std::pair<long, long> window{0, 0};
  int points = 0;
};

// Last decade of the checkpoint range.
inline std::pair<long, long> default_fit_window(const std::vector<long>& checkpoints) {
  if (checkpoints.empty()) throw InsufficientPoints("default_fit_window: no checkpoints");
  const long hi = checkpoints.back();
  return {std::max(1L, hi / 10), hi};
}

// OLS of log y on log k over checkpoints with lo <= k <= hi. k = 0 is never used.
inline RateFit rate_fit(const std::vector<long>& ks, const std::vector<double>& ys, std::pair<long, long> window) {
  if (ks.size() != ys.size()) throw DimensionMismatch("rate_fit: checkpoints and values differ in length");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < std::max(1L, window.first) || ks[i] > window.second) continue;
    if (!(ys[i] > 0.0)) {
      std::ostringstream os;
      os << "rate_fit: value " << ys[i] << " at k=" << ks[i] << " is not positive";
      throw NonPositiveValue(os.str());
    }
    x.push_back(std::log(static_cast<double>(ks[i])));
    y.push_back(std::log(ys[i]));
  }
  if (x.size() < 5) {
    std::ostringstream os;
    os << "rate_fit: " << x.size() << " points in window [" << window.first << ", " << window.second << "], need 5";
    throw InsufficientPoints(os.str());
  }
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0)) throw InsufficientPoints("rate_fit: window holds a single distinct k");
  RateFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  f.window = window;
  f.points = static_cast<int>(x.size());
  return f;
}

// ---- curves and CSV

struct CurveTable {
  std::vector<long> k;
  std::vector<double> m_theta, m_theta_norm, m_w, m_w_norm, m_track, m_track_norm, I_k;
  std::vector<double> stderr_theta, stderr_w, stderr_track;
};

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{"k",       "m_theta",      "m_theta_norm", "m_w",
                                             "m_w_norm", "m_track",     "m_track_norm", "I_k",
                                             "stderr_theta", "stderr_w", "stderr_track"};
  return cols;
}

// m_theta / beta_k, m_w / gamma_k, m_track / gamma_k. I_k is NaN where not supplied.
inline CurveTable normalized_curves(const MomentSeries& s, const StepSchedule& sched,
                                    const std::vector<double>& I_k = {}) {
  const std::size_t n = s.checkpoints.size();
  if (s.m_theta.size() != n || s.m_w.size() != n || s.m_track.size() != n)
    throw DimensionMismatch("normalized_curves: series fields do not match the checkpoints");
  if (!I_k.empty() && I_k.size() != n) throw DimensionMismatch("normalized_curves: I_k does not match the checkpoints");
  CurveTable t;
  t.k = s.checkpoints;
  for (std::size_t i = 0; i < n; ++i) {
    const double b = sched.beta_at(s.checkpoints[i]), g = sched.gamma_at(s.checkpoints[i]);
    t.m_theta.push_back(s.m_theta[i]);
    t.m_theta_norm.push_back(s.m_theta[i] / b);
    t.m_w.push_back(s.m_w[i]);
    t.m_w_norm.push_back(s.m_w[i] / g);
    t.m_track.push_back(s.m_track[i]);
    t.m_track_norm.push_back(s.m_track[i] / g);
    t.I_k.push_back(I_k.empty() ? std::numeric_limits<double>::quiet_NaN() : I_k[i]);
  }
  t.stderr_theta = s.stderr_theta;
  t.stderr_w = s.stderr_w;
  t.stderr_track = s.stderr_track;
  if (t.stderr_theta.size() != n) t.stderr_theta.assign(n, std::numeric_limits<double>::quiet_NaN());
  if (t.stderr_w.size() != n) t.stderr_w.assign(n, std::numeric_limits<double>::quiet_NaN());
  if (t.stderr_track.size() != n) t.stderr_track.assign(n, std::numeric_limits<double>::quiet_NaN());
  return t;
}

namespace detail {

inline std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("csv: cannot parse '" + s + "'");
  }
  if (pos != s.size()) throw ConfigError("csv: trailing characters in '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace detail

inline void write_csv(std::ostream& os, const CurveTable& t) {
  const auto& cols = csv_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << cols[c];
  os << '\n';
  const std::vector<const std::vector<double>*> fields{&t.m_theta, &t.m_theta_norm, &t.m_w,  &t.m_w_norm,
                                                       &t.m_track, &t.m_track_norm, &t.I_k,  &t.stderr_theta,
                                                       &t.stderr_w, &t.stderr_track};
  for (std::size_t i = 0; i < t.k.size(); ++i) {
    os << t.k[i];
    for (const auto* f : fields) os << ',' << detail::fmt17((*f)[i]);
    os << '\n';
  }
}

inline CurveTable read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("csv: empty input");
  if (detail::split(line, ',') != csv_columns()) throw ConfigError("csv: unexpected header '" + line + "'");
  CurveTable t;
  std::vector<std::vector<double>*> fields{&t.m_theta, &t.m_theta_norm, &t.m_w,  &t.m_w_norm,
                                           &t.m_track, &t.m_track_norm, &t.I_k,  &t.stderr_theta,
                                           &t.stderr_w, &t.stderr_track};
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = detail::split(line, ',');
    if (cells.size() != csv_columns().size()) throw ConfigError("csv: row has the wrong number of cells");
    long k = 0;
    auto [p, ec] = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), k);
    if (ec != std::errc() || p != cells[0].data() + cells[0].size()) throw ConfigError("csv: bad k '" + cells[0] + "'");
    t.k.push_back(k);
    for (std::size_t c = 0; c < fields.size(); ++c) fields[c]->push_back(detail::parse_double(cells[c + 1]));
  }
  return t;
}

// ---- JSON conversions

inline json to_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(std::move(row));
  }
  return a;
}

inline json to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Mat mat_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) throw ConfigError(what + ": expected a nested array");
  const auto r = static_cast<Eigen::Index>(j.size()), c = static_cast<Eigen::Index>(j[0].size());
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c) throw ConfigError(what + ": ragged rows");
    for (Eigen::Index k = 0; k < c; ++k) {
      const auto& e = row[static_cast<std::size_t>(k)];
      if (!e.is_number()) throw ConfigError(what + ": non-numeric entry");
      m(i, k) = e.get<double>();
    }
  }
  return m;
}

inline Vec vec_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + ": expected an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(what + ": non-numeric entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline json to_json(const LinearSystem& s) {
  return {{"b1", to_json(s.b1)},   {"b2", to_json(s.b2)},   {"A11", to_json(s.A11)},
          {"A12", to_json(s.A12)}, {"A21", to_json(s.A21)}, {"A22", to_json(s.A22)}};
}

inline LinearSystem system_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("system: expected an object");
  for (const char* key : {"b1", "b2", "A11", "A12", "A21", "A22"})
    if (!j.contains(key)) throw ConfigError(std::string("system: missing ") + key);
  LinearSystem s;
  s.b1 = vec_from_json(j["b1"], "b1");
  s.b2 = vec_from_json(j["b2"], "b2");
  s.A11 = mat_from_json(j["A11"], "A11");
  s.A12 = mat_from_json(j["A12"], "A12");
  s.A21 = mat_from_json(j["A21"], "A21");
  s.A22 = mat_from_json(j["A22"], "A22");
  s.check_shapes();
  return s;
}

inline json to_json(const StepSchedule& s) {
  json j{{"kind", kind_name(s.kind)}};
  switch (s.kind) {
    case ScheduleKind::polynomial:
      j.update({{"c_beta", s.c_beta}, {"k0_beta", s.k0_beta}, {"c_gamma", s.c_gamma}, {"k0_gamma", s.k0_gamma},
                {"sigma", s.sigma}});
      break;
    case ScheduleKind::constant:
      j.update({{"beta", s.beta}, {"gamma", s.gamma}});
      break;
    case ScheduleKind::piecewise_constant: {
      json lv = json::array();
      for (auto [b, g] : s.levels) lv.push_back({b, g});
      j.update({{"breakpoints", s.breakpoints}, {"levels", lv}});
      break;
    }
  }
  return j;
}

namespace detail {

inline double num(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key)) throw ConfigError(ctx + ": missing '" + key + "'");
  if (!j[key].is_number()) throw ConfigError(ctx + ": '" + key + "' must be a number");
  return j[key].get<double>();
}

inline double num_or(const json& j, const char* key, double def, const std::string& ctx) {
  return j.contains(key) ? num(j, key, ctx) : def;
}

inline long integer(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key)) throw ConfigError(ctx + ": missing '" + key + "'");
  if (!j[key].is_number_integer()) throw ConfigError(ctx + ": '" + key + "' must be an integer");
  return j[key].get<long>();
}

inline std::uint64_t seed_of(const json& j, const char* key, const std::string& ctx) {
  if (!j[key].is_number_unsigned() && !(j[key].is_number_integer() && j[key].get<long>() >= 0))
    throw ConfigError(ctx + ": '" + key + "' must be a non-negative integer");
  return j[key].get<std::uint64_t>();
}

inline void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& ctx) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(ctx + ": unknown key '" + it.key() + "'");
  }
}

}  // namespace detail

inline StepSchedule schedule_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    throw ConfigError("schedule: expected an object with a 'kind'");
  const std::string kind = j["kind"];
  StepSchedule s;
  if (kind == "polynomial") {
    detail::only_keys(j, {"kind", "c_beta", "k0_beta", "c_gamma", "k0_gamma", "sigma"}, "schedule");
    s = StepSchedule::polynomial(detail::num(j, "c_beta", "schedule"), detail::num(j, "k0_beta", "schedule"),
                                 detail::num(j, "c_gamma", "schedule"), detail::num(j, "k0_gamma", "schedule"),
                                 detail::num_or(j, "sigma", 2.0 / 3.0, "schedule"));
    if (!(s.c_beta > 0 && s.c_gamma > 0 && s.k0_beta > 0 && s.k0_gamma > 0 && s.sigma > 0))
      throw NonPositiveRate("schedule: polynomial constants must be positive");
  } else if (kind == "constant") {
    detail::only_keys(j, {"kind", "beta", "gamma"}, "schedule");
    s = StepSchedule::constant_steps(detail::num(j, "beta", "schedule"), detail::num(j, "gamma", "schedule"));
    if (!(s.beta > 0 && s.gamma > 0)) throw NonPositiveRate("schedule: constant steps must be positive");
  } else if (kind == "piecewise_constant") {
    detail::only_keys(j, {"kind", "breakpoints", "levels"}, "schedule");
    if (!j.contains("breakpoints") || !j.contains("levels") || !j["breakpoints"].is_array() || !j["levels"].is_array())
      throw ConfigError("schedule: piecewise needs 'breakpoints' and 'levels' arrays");
    std::vector<long> bp;
    for (const auto& b : j["breakpoints"]) {
      if (!b.is_number_integer()) throw ConfigError("schedule: breakpoints must be integers");
      bp.push_back(b.get<long>());
    }
    std::vector<std::pair<double, double>> lv;
    for (const auto& l : j["levels"]) {
      if (!l.is_array() || l.size() != 2 || !l[0].is_number() || !l[1].is_number())
        throw ConfigError("schedule: each level is [beta, gamma]");
      lv.emplace_back(l[0].get<double>(), l[1].get<double>());
      if (!(lv.back().first > 0 && lv.back().second > 0)) throw NonPositiveRate("schedule: levels must be positive");
    }
    s = StepSchedule::piecewise(std::move(bp), std::move(lv));
  } else {
    throw ConfigError("schedule: unknown kind '" + kind + "'");
  }
  return s;
}

// ---- experiment config

enum class ProblemSource { toy, garnet, file };
enum class NoiseRegime { martingale, markov };

struct ExperimentConfig {
  ProblemSource source = ProblemSource::toy;
  int toy_d = 10;
  std::uint64_t toy_seed = 7;
  GarnetSpec garnet;
  std::string system_path;

  StepSchedule schedule;
  bool has_schedule = false;
  NoiseRegime regime = NoiseRegime::martingale;
  MartingaleNoiseSpec noise;

  long K = 100000;
  int R = 100;
  int per_decade = 8;
  std::vector<long> checkpoints;  // explicit list; empty means geometric
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";
  int threads = 1;
  std::optional<std::pair<long, long>> fit_window;

  std::vector<long> resolved_checkpoints() const {
    return checkpoints.empty() ? geometric_checkpoints(K, per_decade) : checkpoints;
  }
};

inline ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected an object");
  detail::only_keys(j,
                    {"problem", "schedule", "noise", "K", "R", "checkpoints", "master_seed", "output_dir", "threads",
                     "fit_window"},
                    "config");
  ExperimentConfig c;
  if (!j.contains("problem") || !j["problem"].is_object()) throw ConfigError("config: missing 'problem' object");
  const json& p = j["problem"];
  if (p.size() != 1) throw ConfigError("config: 'problem' needs exactly one of toy, garnet, file");
  if (p.contains("toy")) {
    const json& t = p["toy"];
    detail::only_keys(t, {"d", "seed"}, "problem.toy");
    c.source = ProblemSource::toy;
    if (t.contains("d")) c.toy_d = static_cast<int>(detail::integer(t, "d", "problem.toy"));
    if (t.contains("seed")) c.toy_seed = detail::seed_of(t, "seed", "problem.toy");
    if (c.toy_d < 1) throw ConfigError("problem.toy: d must be >= 1");
  } else if (p.contains("garnet")) {
    const json& g = p["garnet"];
    detail::only_keys(g, {"n_states", "n_actions", "branching", "n_features", "discount", "seed"}, "problem.garnet");
    c.source = ProblemSource::garnet;
    if (g.contains("n_states")) c.garnet.n_states = static_cast<int>(detail::integer(g, "n_states", "garnet"));
    if (g.contains("n_actions")) c.garnet.n_actions = static_cast<int>(detail::integer(g, "n_actions", "garnet"));
    if (g.contains("branching")) c.garnet.branching = static_cast<int>(detail::integer(g, "branching", "garnet"));
    if (g.contains("n_features")) c.garnet.n_features = static_cast<int>(detail::integer(g, "n_features", "garnet"));
    c.garnet.discount = detail::num_or(g, "discount", c.garnet.discount, "garnet");
    if (g.contains("seed")) c.garnet.seed = detail::seed_of(g, "seed", "garnet");
    c.garnet.validate();
    c.regime = NoiseRegime::markov;
  } else if (p.contains("file")) {
    if (!p["file"].is_string()) throw ConfigError("problem.file: expected a path");
    c.source = ProblemSource::file;
    c.system_path = p["file"];
  } else {
    throw ConfigError("config: 'problem' needs exactly one of toy, garnet, file");
  }

  if (j.contains("schedule")) {
    c.schedule = schedule_from_json(j["schedule"]);
    c.has_schedule = true;
  }
  if (j.contains("noise")) {
    const json& n = j["noise"];
    if (!n.is_object()) throw ConfigError("noise: expected an object");
    detail::only_keys(n, {"regime", "scale_V", "scale_W", "explicit_matrices"}, "noise");
    if (n.contains("regime")) {
      if (n["regime"] == "martingale")
        c.regime = NoiseRegime::martingale;
      else if (n["regime"] == "markov")
        c.regime = NoiseRegime::markov;
      else
        throw ConfigError("noise: regime must be 'martingale' or 'markov'");
    }
    c.noise.scale_V = detail::num_or(n, "scale_V", c.noise.scale_V, "noise");
    c.noise.scale_W = detail::num_or(n, "scale_W", c.noise.scale_W, "noise");
    if (!(c.noise.scale_V >= 0 && c.noise.scale_W >= 0)) throw NonPositiveInput("noise: scales must be >= 0");
    if (n.contains("explicit_matrices")) {
      if (!n["explicit_matrices"].is_boolean()) throw ConfigError("noise: explicit_matrices must be a boolean");
      c.noise.explicit_matrices = n["explicit_matrices"];
    }
  }
  if (c.regime == NoiseRegime::markov && c.source != ProblemSource::garnet)
    throw ConfigError("config: markov noise needs a garnet problem");
  if (c.regime == NoiseRegime::martingale && c.source == ProblemSource::garnet)
    throw ConfigError("config: garnet problems run with markov noise");

  if (j.contains("K")) c.K = detail::integer(j, "K", "config");
  if (j.contains("R")) c.R = static_cast<int>(detail::integer(j, "R", "config"));
  if (c.K < 1 || c.R < 1) throw ConfigError("config: K and R must be >= 1");
  if (j.contains("checkpoints")) {
    const json& cp = j["checkpoints"];
    if (cp.is_array()) {
      for (const auto& k : cp) {
        if (!k.is_number_integer() || k.get<long>() < 0) throw ConfigError("checkpoints: non-negative integers only");
        c.checkpoints.push_back(k.get<long>());
      }
      if (c.checkpoints.empty() || !std::is_sorted(c.checkpoints.begin(), c.checkpoints.end()))
        throw ConfigError("checkpoints: need a non-empty sorted list");
      if (c.checkpoints.back() > c.K) throw ConfigError("checkpoints: K must be >= the largest checkpoint");
    } else if (cp.is_object()) {
      detail::only_keys(cp, {"per_decade"}, "checkpoints");
      c.per_decade = static_cast<int>(detail::integer(cp, "per_decade", "checkpoints"));
      if (c.per_decade < 1) throw ConfigError("checkpoints: per_decade must be >= 1");
    } else {
      throw ConfigError("checkpoints: expected a list or {per_decade}");
    }
  }
  if (j.contains("master_seed")) c.master_seed = detail::seed_of(j, "master_seed", "config");
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) throw ConfigError("config: output_dir must be a string");
    c.output_dir = j["output_dir"];
  }
  if (j.contains("threads")) c.threads = static_cast<int>(detail::integer(j, "threads", "config"));
  if (c.threads < 0) throw ConfigError("config: threads must be >= 0");
  if (j.contains("fit_window")) {
    const json& w = j["fit_window"];
    if (!w.is_array() || w.size() != 2 || !w[0].is_number_integer() || !w[1].is_number_integer())
      throw ConfigError("fit_window: expected [k_lo, k_hi]");
    c.fit_window = std::make_pair(w[0].get<long>(), w[1].get<long>());
    if (c.fit_window->first > c.fit_window->second) throw ConfigError("fit_window: k_lo > k_hi");
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

// ---- certificates and provenance

inline json to_json(const LyapunovCertificate& c) {
  return {{"a", c.a},          {"step_cap", c.step_cap},     {"p", c.p},
          {"q_norm", c.q_norm}, {"lambda_min", c.lambda_min}, {"lambda_max", c.lambda_max},
          {"Q", to_json(c.Q)}};
}

inline json to_json(const StepCaps& c) {
  json j{{"gamma_inf0", c.gamma0}, {"beta_inf0", c.beta0}, {"kappa_inf", c.kappa}};
  if (c.gamma_mtg) j["gamma_inf_mtg"] = *c.gamma_mtg;
  if (c.beta_mtg) j["beta_inf_mtg"] = *c.beta_mtg;
  return j;
}

inline json to_json(const InequalityScan& s) {
  return {{"pass", s.ok && s.tail_ok},
          {"scan_pass", s.ok},
          {"tail_pass", s.tail_ok},
          {"violations", s.violations},
          {"last_violation", s.last_violation},
          {"worst_excess", s.worst_excess}};
}

inline json to_json(const ScheduleCertificate& c) {
  json j{{"admissible", c.admissible},
         {"positive", c.positive},
         {"nonincreasing", c.nonincreasing},
         {"first_monotonicity_violation", c.first_monotonicity_violation},
         {"kappa", c.kappa},
         {"kappa_scan", c.kappa_scan},
         {"varsigma", c.varsigma},
         {"caps", to_json(c.caps)},
         {"inequalities",
          {{"gamma_ratio", to_json(c.a2_gamma)}, {"beta_ratio", to_json(c.a2_beta)}, {"cross", to_json(c.a2_cross)}}},
         {"inequalities_hold_from_k", c.a2_k_pass},
         {"beta0_within_cap", c.beta0_ok},
         {"gamma0_within_cap", c.gamma0_ok},
         {"gamma0_within_mtg_cap", c.gamma_mtg_ok},
         {"kappa_within_cap", c.kappa_ok},
         {"horizon", c.horizon}};
  if (c.kappa_paper_bound) j["kappa_closed_form"] = *c.kappa_paper_bound;
  if (c.rho0) j["rho0"] = *c.rho0;
  return j;
}

inline json to_json(const std::vector<TraceEntry>& trace) {
  json a = json::array();
  for (const auto& t : trace) {
    json ins = json::object();
    for (const auto& [k, v] : t.inputs) ins[k] = v;
    a.push_back({{"name", t.name}, {"formula", t.formula}, {"inputs", ins}, {"value", t.value}});
  }
  return a;
}

inline json to_json(const RateFit& f) {
  return {{"slope", f.slope},
          {"intercept", f.intercept},
          {"r_squared", f.r_squared},
          {"window", {f.window.first, f.window.second}},
          {"points", f.points}};
}

}  // namespace twoscale
