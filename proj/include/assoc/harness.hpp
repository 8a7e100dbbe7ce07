#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "assoc/errors.hpp"
#include "assoc/mdp_sim.hpp"
#include "assoc/pg_learner.hpp"
#include "assoc/policy.hpp"
#include "assoc/static_solver.hpp"
#include "assoc/topology.hpp"
#include "assoc/traffic_model.hpp"

namespace assoc::harness {

inline constexpr const char* kVersion = "assoc 0.1.0";
inline constexpr const char* kOutputDirEnv = "ASSOC_OUTPUT_DIR";

// Config validation failures, collected rather than thrown one at a time.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors)
      : std::runtime_error(errors.empty() ? "invalid configuration" : errors.front()), errors_(std::move(errors)) {}
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

inline nlohmann::json default_config() {
  using nlohmann::json;
  json traffic = json::array();
  for (int m = 40; m <= 110; m += 10) traffic.push_back(m);
  return {
      {"seed", 1},
      {"output_dir", "out"},
      {"plot_script", false},
      {"topology",
       {{"rings", 2}, {"central_rate_mbps", 10.0}, {"edge_rate_mbps", 5.0}, {"mean_file_size_mb", 10.0}, {"file", ""}}},
      // 40..110 Mbps is a reconstruction of the traffic axis, not a published grid
      {"traffic_mbps", traffic},
      {"cost", {{"kind", "outage"}, {"outage_target_mbps", 1.0}}},
      {"policies", {"best-peak-rate", "best-data-rate", "smallest-workload", "shortest-queue"}},
      {"gamma", 10.0},
      {"theta_file", ""},
      {"simulate",
       {{"horizon_s", 20000.0},
        {"max_events", 0},
        {"warmup_fraction", 0.1},
        {"replications", 10},
        {"user_cap", 100000},
        {"trajectory", false},
        {"trajectory_interval_s", 1.0}}},
      {"learn",
       {{"traffic_mbps", 100.0},
        {"tying", "per-pair-scalar"},
        {"beta", 0.9},
        {"window_s", 100.0},
        {"step_size", 0.5},
        {"step_rule", "normalized"},
        {"step_delta", 1e-9},
        {"updates", 100},
        {"mode", "distributed"},
        {"user_cap", 10000},
        {"uniformization_rate", 0.0}}},
      {"gradcheck",
       {{"traffic_mbps", 100.0},
        {"tying", "per-pair-scalar"},
        {"step_counts", {10000, 30000, 100000, 300000, 1000000}},
        {"replications", 500},
        {"beta", 0.999},
        {"warmup_steps", 20000},
        {"cost", "total-users"},
        {"reference", "fd"},
        {"fd_eps", 0.05},
        {"fd_window_steps", 100000},
        {"fd_replications", 1}}},
  };
}

namespace detail {

inline void check_keys(const nlohmann::json& given, const nlohmann::json& schema, const std::string& path,
                       std::vector<std::string>& errors) {
  if (!given.is_object()) {
    errors.push_back(path + ": expected an object");
    return;
  }
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string p = path.empty() ? it.key() : path + "." + it.key();
    if (!schema.contains(it.key())) {
      errors.push_back(p + ": unknown key");
      continue;
    }
    const auto& want = schema.at(it.key());
    if (want.is_object()) {
      check_keys(it.value(), want, p, errors);
    } else if (want.is_number() && !it.value().is_number()) {
      errors.push_back(p + ": expected a number");
    } else if (want.is_string() && !it.value().is_string()) {
      errors.push_back(p + ": expected a string");
    } else if (want.is_boolean() && !it.value().is_boolean()) {
      errors.push_back(p + ": expected true or false");
    } else if (want.is_array() && !it.value().is_array()) {
      errors.push_back(p + ": expected a list");
    }
  }
}

}  // namespace detail

// Defaults overlaid with `user`, after structural checks.
inline nlohmann::json merge_config(const nlohmann::json& user) {
  auto cfg = default_config();
  std::vector<std::string> errors;
  detail::check_keys(user, cfg, "", errors);
  if (!errors.empty()) throw ConfigError(errors);
  cfg.merge_patch(user);
  return cfg;
}

// Applies `a.b.c=value`. The value is read as JSON when it parses, else as a string.
inline void apply_override(nlohmann::json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError({"override '" + assignment + "': expected key=value"});
  std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  auto value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  std::replace(key.begin(), key.end(), '.', '/');
  const nlohmann::json::json_pointer ptr("/" + key);
  if (!cfg.contains(ptr)) throw ConfigError({"override '" + assignment + "': unknown key"});
  cfg[ptr] = value;
}

// Semantic checks on a merged config; the list is exhaustive.
inline std::vector<std::string> validate_config(const nlohmann::json& cfg) {
  std::vector<std::string> errors;
  detail::check_keys(cfg, default_config(), "", errors);
  if (!errors.empty()) return errors;
  auto positive = [&](const nlohmann::json& v, const std::string& name) {
    if (!(v.get<double>() > 0.0)) errors.push_back(name + ": must be > 0");
  };
  auto nonneg_int = [&](const nlohmann::json& v, const std::string& name) {
    if (!v.is_number_integer() || v.get<long long>() < 0) errors.push_back(name + ": must be a non-negative integer");
  };
  if (!cfg["seed"].is_number_integer() || cfg["seed"].get<long long>() < 0) errors.push_back("seed: must be a non-negative integer");
  const auto& t = cfg["topology"];
  if (t["file"].get<std::string>().empty()) {
    if (!t["rings"].is_number_integer() || t["rings"].get<int>() < 1) errors.push_back("topology.rings: must be >= 1");
    positive(t["central_rate_mbps"], "topology.central_rate_mbps");
    positive(t["edge_rate_mbps"], "topology.edge_rate_mbps");
  } else if (!std::filesystem::exists(t["file"].get<std::string>())) {
    errors.push_back("topology.file: '" + t["file"].get<std::string>() + "' not found");
  }
  positive(t["mean_file_size_mb"], "topology.mean_file_size_mb");
  for (std::size_t i = 0; i < cfg["traffic_mbps"].size(); ++i) {
    const auto& v = cfg["traffic_mbps"][i];
    if (!v.is_number() || v.get<double>() < 0.0)
      errors.push_back("traffic_mbps[" + std::to_string(i) + "]: must be a number >= 0");
  }
  const auto kind = cfg["cost"]["kind"].get<std::string>();
  if (kind != "outage" && kind != "total-users") errors.push_back("cost.kind: expected 'outage' or 'total-users'");
  positive(cfg["cost"]["outage_target_mbps"], "cost.outage_target_mbps");
  for (std::size_t i = 0; i < cfg["policies"].size(); ++i) {
    const auto& p = cfg["policies"][i];
    const std::string name = p.is_string() ? p.get<std::string>() : "";
    bool ok = name == "static-optimal" || name == "learned";
    for (auto k : kAllBaselines) ok = ok || name == to_string(k);
    if (!ok) errors.push_back("policies[" + std::to_string(i) + "]: unknown policy '" + name + "'");
    if (name == "learned") {
      const auto f = cfg["theta_file"].get<std::string>();
      if (f.empty()) errors.push_back("policies[" + std::to_string(i) + "]: 'learned' needs theta_file");
      else if (!std::filesystem::exists(f)) errors.push_back("theta_file: '" + f + "' not found");
    }
  }
  positive(cfg["gamma"], "gamma");
  const auto& s = cfg["simulate"];
  if (!(s["horizon_s"].get<double>() >= 0.0)) errors.push_back("simulate.horizon_s: must be >= 0");
  nonneg_int(s["max_events"], "simulate.max_events");
  if (s["horizon_s"].get<double>() == 0.0 && s["max_events"].is_number_integer() && s["max_events"].get<long long>() == 0)
    errors.push_back("simulate: needs horizon_s > 0 or max_events > 0");
  const double wf = s["warmup_fraction"].get<double>();
  if (!(wf >= 0.0 && wf < 1.0)) errors.push_back("simulate.warmup_fraction: must lie in [0,1)");
  if (!s["replications"].is_number_integer() || s["replications"].get<long long>() < 1)
    errors.push_back("simulate.replications: must be >= 1");
  nonneg_int(s["user_cap"], "simulate.user_cap");
  positive(s["trajectory_interval_s"], "simulate.trajectory_interval_s");

  const auto& l = cfg["learn"];
  positive(l["traffic_mbps"], "learn.traffic_mbps");
  const auto tying_ok = [](const std::string& x) { return x == "full" || x == "per-pair-scalar"; };
  if (!tying_ok(l["tying"].get<std::string>())) errors.push_back("learn.tying: expected 'full' or 'per-pair-scalar'");
  const double beta = l["beta"].get<double>();
  if (!(beta >= 0.0 && beta < 1.0)) errors.push_back("learn.beta: must lie in [0,1)");
  positive(l["window_s"], "learn.window_s");
  positive(l["step_size"], "learn.step_size");
  const auto rule = l["step_rule"].get<std::string>();
  if (rule != "normalized" && rule != "fixed") errors.push_back("learn.step_rule: expected 'normalized' or 'fixed'");
  if (!(l["step_delta"].get<double>() >= 0.0)) errors.push_back("learn.step_delta: must be >= 0");
  nonneg_int(l["updates"], "learn.updates");
  const auto mode = l["mode"].get<std::string>();
  if (mode != "centralized" && mode != "distributed") errors.push_back("learn.mode: expected 'centralized' or 'distributed'");
  nonneg_int(l["user_cap"], "learn.user_cap");
  if (!(l["uniformization_rate"].get<double>() >= 0.0)) errors.push_back("learn.uniformization_rate: must be >= 0");

  const auto& g = cfg["gradcheck"];
  positive(g["traffic_mbps"], "gradcheck.traffic_mbps");
  if (!tying_ok(g["tying"].get<std::string>())) errors.push_back("gradcheck.tying: expected 'full' or 'per-pair-scalar'");
  if (g["step_counts"].empty()) errors.push_back("gradcheck.step_counts: must not be empty");
  for (std::size_t i = 0; i < g["step_counts"].size(); ++i) {
    const auto& v = g["step_counts"][i];
    if (!v.is_number_integer() || v.get<long long>() < 1)
      errors.push_back("gradcheck.step_counts[" + std::to_string(i) + "]: must be a positive integer");
  }
  if (!g["replications"].is_number_integer() || g["replications"].get<long long>() < 1)
    errors.push_back("gradcheck.replications: must be >= 1");
  const double gb = g["beta"].get<double>();
  if (!(gb >= 0.0 && gb < 1.0)) errors.push_back("gradcheck.beta: must lie in [0,1)");
  nonneg_int(g["warmup_steps"], "gradcheck.warmup_steps");
  const auto gc = g["cost"].get<std::string>();
  if (gc != "outage" && gc != "total-users") errors.push_back("gradcheck.cost: expected 'outage' or 'total-users'");
  const auto ref = g["reference"].get<std::string>();
  if (ref != "fd" && ref != "symmetric") errors.push_back("gradcheck.reference: expected 'fd' or 'symmetric'");
  positive(g["fd_eps"], "gradcheck.fd_eps");
  if (!g["fd_window_steps"].is_number_integer() || g["fd_window_steps"].get<long long>() < 1)
    errors.push_back("gradcheck.fd_window_steps: must be >= 1");
  if (!g["fd_replications"].is_number_integer() || g["fd_replications"].get<long long>() < 1)
    errors.push_back("gradcheck.fd_replications: must be >= 1");
  return errors;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const nlohmann::json& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(cfg.dump())));
  return buf;
}

// Shortest round-trip decimal; locale independent.
inline std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// Everything derived from the config that the commands share.
struct Context {
  nlohmann::json cfg;
  std::string hash;
  std::uint64_t seed = 1;
  Topology base;  // arrival rates as built; rescaled per traffic point
  TrafficSpec traffic;
  CostSpec cost;

  static Context from(const nlohmann::json& cfg) {
    auto errors = validate_config(cfg);
    if (!errors.empty()) throw ConfigError(errors);
    Context c;
    c.cfg = cfg;
    c.hash = config_hash(cfg);
    c.seed = cfg["seed"].get<std::uint64_t>();
    const auto& t = cfg["topology"];
    c.traffic.mean_file_size = t["mean_file_size_mb"].get<double>();
    const auto file = t["file"].get<std::string>();
    if (file.empty()) {
      c.base = build_hex_wraparound(t["rings"].get<int>(), t["central_rate_mbps"].get<double>(),
                                    t["edge_rate_mbps"].get<double>(), 100.0, c.traffic.mean_file_size);
    } else {
      std::ifstream in(file);
      c.base = nlohmann::json::parse(in).get<Topology>();
      auto v = validate(c.base);
      if (!v.empty()) {
        std::vector<std::string> msgs;
        for (const auto& x : v) msgs.push_back("topology.file: " + x.subject + ": " + x.message);
        throw ConfigError(msgs);
      }
    }
    c.cost = cfg["cost"]["kind"] == "outage" ? CostSpec::outage(cfg["cost"]["outage_target_mbps"].get<double>())
                                             : CostSpec::total_users();
    return c;
  }

  // Served traffic (Mbps) spread over the zones in proportion to the base rates.
  Topology at_traffic(double mbps) const {
    Topology t = base;
    t.set_total_arrival_rate(mbps / traffic.mean_file_size);
    return t;
  }

  void header(std::ostream& out, const std::string& what) const {
    out << "# " << kVersion << " " << what << " config_hash=" << hash << " seed=" << seed << '\n';
  }
};

inline void note_tying(std::ostream& out, const std::string& tying) {
  if (tying == "per-pair-scalar") out << "# tying per-pair-scalar is a reconstructed layout: one load weight per shared zone\n";
}

inline void note_sweep(std::ostream& out, const nlohmann::json& points) {
  if (points == default_config()["traffic_mbps"]) out << "# traffic sweep 40-110 Mbps is a reconstruction\n";
}

struct Summary {
  double mean = std::nan("");
  double half_width = std::nan("");  // 95% Student-t
};

inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  const double n = static_cast<double>(xs.size());
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() < 2) return s;
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  boost::math::students_t dist(n - 1.0);
  s.half_width = boost::math::quantile(boost::math::complement(dist, 0.025)) * sd / std::sqrt(n);
  return s;
}

// ---- simulate ----

struct SimulateOutputs {
  std::ostream& runs;
  std::ostream& summary;
  std::function<std::ostream*(const std::string& name)> trajectory;  // may be empty
};

inline void cmd_simulate(const Context& ctx, SimulateOutputs out) {
  const auto& s = ctx.cfg["simulate"];
  SimulationOptions opt;
  opt.horizon = s["horizon_s"].get<double>();
  opt.max_events = s["max_events"].get<std::uint64_t>();
  opt.warmup_fraction = s["warmup_fraction"].get<double>();
  opt.outage_target = ctx.cfg["cost"]["outage_target_mbps"].get<double>();
  opt.user_cap = s["user_cap"].get<long>();
  const auto reps = s["replications"].get<std::size_t>();
  const double gamma = ctx.cfg["gamma"].get<double>();
  std::optional<PolicyParams> learned;
  if (!ctx.cfg["theta_file"].get<std::string>().empty()) {
    std::ifstream in(ctx.cfg["theta_file"].get<std::string>());
    learned = params_from_json(ctx.base, nlohmann::json::parse(in));
  }

  ctx.header(out.runs, "simulate runs");
  ctx.header(out.summary, "simulate summary");
  note_sweep(out.runs, ctx.cfg["traffic_mbps"]);
  note_sweep(out.summary, ctx.cfg["traffic_mbps"]);
  out.runs << "traffic_mbps,policy,replication,mftt_s,network_outage,mean_cell_outage,user_outage,events,measured_s,"
              "aborted\n";
  out.summary << "traffic_mbps,policy,replications,mftt_s,mftt_ci95,network_outage,network_outage_ci95,"
                 "mean_cell_outage,mean_cell_outage_ci95,user_outage,user_outage_ci95,aborted_runs\n";

  const auto& points = ctx.cfg["traffic_mbps"];
  const auto& policies = ctx.cfg["policies"];
  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    const double mbps = points[pi].get<double>();
    for (std::size_t qi = 0; qi < policies.size(); ++qi) {
      const auto name = policies[qi].get<std::string>();
      std::vector<double> mftt, net, cell, user;
      std::size_t aborted = 0;
      for (std::size_t rep = 0; rep < reps; ++rep) {
        TimeAverages r;
        if (mbps == 0.0) {
          r.measured_time = 0.0;  // no users: MFTT undefined, outage 0
        } else {
          const auto topo = ctx.at_traffic(mbps);
          Rng rng(ctx.seed, {0x73696d, pi, qi, rep});
          std::ostream* traj = out.trajectory && s["trajectory"].get<bool>()
                                   ? out.trajectory(name + "_" + num(mbps) + "_" + std::to_string(rep))
                                   : nullptr;
          std::optional<TrajectoryLogger> logger;
          if (traj) logger.emplace(*traj, s["trajectory_interval_s"].get<double>());
          auto run = [&](auto policy) {
            return simulate_time_averages(topo, ctx.traffic, std::move(policy), opt, std::move(rng),
                                          logger ? &*logger : nullptr, ctx.cost);
          };
          if (name == "static-optimal") {
            const auto sol = solve_static(topo, ctx.traffic, StaticObjective::mean_transfer_time(topo.total_arrival_rate()));
            r = run(StaticSplitPolicy(sol.split));
          } else if (name == "learned") {
            r = run(SoftmaxPolicy(*learned));
          } else {
            r = run(SoftmaxPolicy(baseline_params(parse_baseline(name), gamma, topo, ctx.traffic)));
          }
        }
        const double lambda = mbps / ctx.traffic.mean_file_size;
        const double m = r.aborted || mbps == 0.0 ? std::nan("") : r.mean_users / lambda;
        if (r.aborted) ++aborted;
        out.runs << num(mbps) << ',' << name << ',' << rep << ',' << num(m) << ',' << num(r.network_outage) << ','
                 << num(r.mean_local_outage) << ',' << num(r.user_outage) << ',' << r.events << ','
                 << num(r.measured_time) << ',' << (r.aborted ? 1 : 0) << '\n';
        if (!r.aborted) {
          if (!std::isnan(m)) mftt.push_back(m);
          net.push_back(r.network_outage);
          cell.push_back(r.mean_local_outage);
          user.push_back(r.user_outage);
        }
      }
      const auto a = summarize(mftt), b = summarize(net), c = summarize(cell), d = summarize(user);
      out.summary << num(mbps) << ',' << name << ',' << reps << ',' << num(a.mean) << ',' << num(a.half_width) << ','
                  << num(b.mean) << ',' << num(b.half_width) << ',' << num(c.mean) << ',' << num(c.half_width) << ','
                  << num(d.mean) << ',' << num(d.half_width) << ',' << aborted << '\n';
    }
  }
}

// ---- static ----

// Returns the structured summary; Infeasible propagates with its certificate.
inline nlohmann::json cmd_static(const Context& ctx, std::ostream& split_csv, std::ostream& loads_csv) {
  ctx.header(split_csv, "static split");
  ctx.header(loads_csv, "static loads");
  split_csv << "traffic_mbps,zone,cell,share\n";
  loads_csv << "traffic_mbps,cell,load\n";
  nlohmann::json report = nlohmann::json::array();
  for (const auto& p : ctx.cfg["traffic_mbps"]) {
    const double mbps = p.get<double>();
    if (mbps == 0.0) continue;
    const auto topo = ctx.at_traffic(mbps);
    const auto sol = solve_static(topo, ctx.traffic, StaticObjective::mean_transfer_time(topo.total_arrival_rate()));
    const auto ids = topo.shared_zone_ids();
    nlohmann::json splits = nlohmann::json::array();
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const auto& cands = topo.zones[ids[k]].candidates;
      nlohmann::json row = nlohmann::json::object();
      for (std::size_t c = 0; c < cands.size(); ++c) {
        split_csv << num(mbps) << ',' << ids[k] << ',' << cands[c].cell << ',' << num(sol.split.shares[k][c]) << '\n';
        row[std::to_string(cands[c].cell)] = sol.split.shares[k][c];
      }
      splits.push_back({{"zone", ids[k]}, {"shares", row}});
    }
    for (std::size_t s = 0; s < sol.loads.size(); ++s) loads_csv << num(mbps) << ',' << s << ',' << num(sol.loads[s]) << '\n';
    report.push_back({{"traffic_mbps", mbps},
                      {"objective_mftt_s", sol.objective},
                      {"iterations", sol.iterations},
                      {"projected_gradient_norm", sol.projected_gradient_norm},
                      {"loads", sol.loads.rho},
                      {"splits", splits}});
  }
  return report;
}

// ---- learn ----

inline LearnerConfig learner_config(const Context& ctx) {
  const auto& l = ctx.cfg["learn"];
  LearnerConfig c;
  c.beta = l["beta"].get<double>();
  c.window_seconds = l["window_s"].get<double>();
  c.step_size = l["step_size"].get<double>();
  c.step_rule = l["step_rule"] == "fixed" ? StepRule::fixed : StepRule::normalized;
  c.step_delta = l["step_delta"].get<double>();
  c.updates = l["updates"].get<std::size_t>();
  c.mode = parse_mode(l["mode"].get<std::string>());
  c.cost = ctx.cost;
  c.seed = ctx.seed;
  c.user_cap = l["user_cap"].get<long>();
  c.uniformization_rate = l["uniformization_rate"].get<double>();
  return c;
}

// Writes one row per window; returns the final parameters.
inline PolicyParams cmd_learn(const Context& ctx, std::ostream& windows_csv, LearningTrajectory* trajectory = nullptr) {
  const auto topo = ctx.at_traffic(ctx.cfg["learn"]["traffic_mbps"].get<double>());
  auto theta = PolicyParams::zeros(topo, parse_tying(ctx.cfg["learn"]["tying"].get<std::string>()));
  const auto config = learner_config(ctx);
  auto traj = learn(topo, ctx.traffic, theta, config);

  ctx.header(windows_csv, "learn windows");
  note_tying(windows_csv, ctx.cfg["learn"]["tying"].get<std::string>());
  windows_csv << "window,aborted,reason,steps,cost,users,mean_cell_outage,network_outage,gradient_norm";
  for (std::size_t k = 0; k < theta.size(); ++k) windows_csv << ",theta_" << k;
  windows_csv << '\n';
  for (const auto& w : traj.windows) {
    windows_csv << w.index << ',' << (w.aborted ? 1 : 0) << ',' << w.abort_reason << ',' << w.stats.steps << ','
                << num(w.stats.mean_cost) << ',' << num(w.stats.mean_users) << ',' << num(w.stats.mean_local_outage)
                << ',' << num(w.stats.network_outage) << ',' << num(w.gradient_norm);
    // parameters in force after this window's update (unchanged when aborted)
    const auto& th = traj.thetas[std::min(w.index + 1, traj.thetas.size() - 1)];
    for (double v : th) windows_csv << ',' << num(v);
    windows_csv << '\n';
  }
  std::copy(traj.thetas.back().begin(), traj.thetas.back().end(), theta.values().begin());
  if (trajectory) *trajectory = std::move(traj);
  return theta;
}

// ---- gradcheck ----

inline std::vector<AccuracyRow> cmd_gradcheck(const Context& ctx, std::ostream& accuracy_csv,
                                              std::vector<double>* reference_out = nullptr) {
  const auto& g = ctx.cfg["gradcheck"];
  const auto topo = ctx.at_traffic(g["traffic_mbps"].get<double>());
  const auto params = PolicyParams::zeros(topo, parse_tying(g["tying"].get<std::string>()));
  const auto cost = g["cost"] == "outage" ? CostSpec::outage(ctx.cfg["cost"]["outage_target_mbps"].get<double>())
                                          : CostSpec::total_users();
  FiniteDifferenceOptions fd;
  fd.eps = g["fd_eps"].get<double>();
  fd.window_steps = g["fd_window_steps"].get<std::uint64_t>();
  fd.warmup_steps = g["warmup_steps"].get<std::uint64_t>();
  fd.replications = g["fd_replications"].get<std::size_t>();
  fd.cost = cost;
  fd.seed = ctx.seed;

  std::vector<double> reference;
  if (g["reference"] == "fd") {
    reference = finite_difference_gradient(topo, ctx.traffic, params, fd);
  } else {
    // Symmetric network at theta = 0: the gradient is a multiple of the
    // all-ones direction, whose sign one directional difference settles.
    auto along = [&](double h) {
      PolicyParams p = params;
      for (auto& v : p.values()) v += h;
      double sum = 0.0;
      for (std::size_t rep = 0; rep < fd.replications; ++rep)
        sum += average_cost_uniformized(topo, ctx.traffic, SoftmaxPolicy(p), cost, fd.window_steps, fd.warmup_steps,
                                        Rng(ctx.seed, {0x73796d, rep}));
      return sum;
    };
    const double slope = along(fd.eps) - along(-fd.eps);
    reference.assign(params.size(), slope >= 0.0 ? 1.0 : -1.0);
  }

  AccuracyOptions opt;
  for (const auto& v : g["step_counts"]) opt.step_counts.push_back(v.get<std::uint64_t>());
  opt.replications = g["replications"].get<std::size_t>();
  opt.beta = g["beta"].get<double>();
  opt.warmup_steps = g["warmup_steps"].get<std::uint64_t>();
  opt.cost = cost;
  opt.seed = ctx.seed;
  auto rows = ascent_accuracy_experiment(topo, ctx.traffic, params, reference, opt);

  ctx.header(accuracy_csv, "gradcheck accuracy");
  note_tying(accuracy_csv, g["tying"].get<std::string>());
  accuracy_csv << "steps,mode,replications,positive,accuracy,stderr\n";
  for (const auto& r : rows) {
    const double p = r.accuracy();
    const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(r.replications));
    accuracy_csv << r.steps << ',' << to_string(r.mode) << ',' << r.replications << ',' << r.positive << ','
                 << num(p) << ',' << num(se) << '\n';
  }
  if (reference_out) *reference_out = std::move(reference);
  return rows;
}

// ---- plot scripts ----

inline std::string plot_script(const std::string& command) {
  if (command == "simulate")
    return R"py(import sys, pandas as pd, matplotlib.pyplot as plt
d = pd.read_csv(sys.argv[1] if len(sys.argv) > 1 else "simulate_summary.csv", comment="#")
fig, ax = plt.subplots(1, 2, figsize=(10, 4))
for name, g in d.groupby("policy"):
    ax[0].errorbar(g.traffic_mbps, g.mftt_s, yerr=g.mftt_ci95, label=name, marker="o")
    ax[1].errorbar(g.traffic_mbps, g.network_outage, yerr=g.network_outage_ci95, label=name, marker="o")
ax[0].set_xlabel("served traffic (Mbps)"); ax[0].set_ylabel("mean file transfer time (s)")
ax[1].set_xlabel("served traffic (Mbps)"); ax[1].set_ylabel("outage probability")
ax[0].legend()
fig.tight_layout(); fig.savefig("simulate.png")
)py";
  if (command == "learn")
    return R"py(import sys, pandas as pd, matplotlib.pyplot as plt
d = pd.read_csv(sys.argv[1] if len(sys.argv) > 1 else "learn_windows.csv", comment="#")
fig, ax = plt.subplots(1, 2, figsize=(10, 4))
ax[0].plot(d.window, d.cost); ax[0].set_xlabel("window"); ax[0].set_ylabel("average cost")
th = [c for c in d.columns if c.startswith("theta_")]
ax[1].plot(d.window, d[th]); ax[1].set_xlabel("window"); ax[1].set_ylabel("parameters")
fig.tight_layout(); fig.savefig("learn.png")
)py";
  if (command == "gradcheck")
    return R"py(import sys, pandas as pd, matplotlib.pyplot as plt
d = pd.read_csv(sys.argv[1] if len(sys.argv) > 1 else "gradcheck.csv", comment="#")
for mode, g in d.groupby("mode"):
    plt.errorbar(g.steps, g.accuracy, yerr=2 * g.stderr, label=mode, marker="o")
plt.xscale("log"); plt.xlabel("time steps"); plt.ylabel("share of ascent directions"); plt.legend()
plt.savefig("gradcheck.png")
)py";
  return {};
}

}  // namespace assoc::harness
