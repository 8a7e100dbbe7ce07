// Command-line front end for the association simulator and learner.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "assoc/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace assoc;
using namespace assoc::harness;

namespace {

int fail(int code, const json& errors) {
  std::cerr << json{{"errors", errors}}.dump(2) << '\n';
  return code;
}

json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json user = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"config: cannot open '" + path + "'"});
    user = json::parse(in, nullptr, false);
    if (user.is_discarded()) throw ConfigError({"config: '" + path + "' is not valid JSON"});
  }
  auto cfg = merge_config(user);
  std::vector<std::string> errors;
  for (const auto& o : overrides) {
    try {
      apply_override(cfg, o);
    } catch (const ConfigError& e) {
      errors.insert(errors.end(), e.errors().begin(), e.errors().end());
    }
  }
  if (!errors.empty()) throw ConfigError(errors);
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) cfg["output_dir"] = env;
  return cfg;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  return out;
}

void maybe_plot(const Context& ctx, const fs::path& dir, const std::string& cmd) {
  if (!ctx.cfg["plot_script"].get<bool>()) return;
  auto out = open_out(dir / ("plot_" + cmd + ".py"));
  out << "# " << kVersion << " config_hash=" << ctx.hash << " seed=" << ctx.seed << '\n' << plot_script(cmd);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-level user association simulator, static optimizer and policy-gradient learner"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "JSON config file (defaults fill missing keys)");
  app.add_option("-s,--set", overrides, "override a config key, e.g. --set simulate.replications=3");

  auto* simulate = app.add_subcommand("simulate", "time-averaged MFTT and outage per traffic point and policy");
  auto* stat = app.add_subcommand("static", "optimal static split and loads per traffic point");
  auto* learn_cmd = app.add_subcommand("learn", "online policy-gradient learning from theta = 0");
  auto* gradcheck = app.add_subcommand("gradcheck", "ascent accuracy of gradient estimates vs step count");
  auto* topo_cmd = app.add_subcommand("topology", "dump or validate a topology");
  topo_cmd->require_subcommand(1);
  auto* dump = topo_cmd->add_subcommand("dump", "write the configured topology as JSON");
  auto* check = topo_cmd->add_subcommand("validate", "check a topology file");
  std::string topo_file;
  check->add_option("file", topo_file, "topology JSON")->required();
  dump->add_option("file", topo_file, "output path (default stdout)");
  auto* show = app.add_subcommand("config", "print the merged configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail(64, json::array({{{"type", "usage"}, {"message", e.what()}}}));
  }

  try {
    if (check->parsed()) {
      std::ifstream in(topo_file);
      if (!in) return fail(66, json::array({{{"type", "io"}, {"message", "cannot open '" + topo_file + "'"}}}));
      auto j = json::parse(in, nullptr, false);
      if (j.is_discarded()) return fail(65, json::array({{{"type", "parse"}, {"message", "not valid JSON"}}}));
      Topology t;
      try {
        t = j.get<Topology>();
      } catch (const std::exception& e) {
        return fail(65, json::array({{{"type", "schema"}, {"message", e.what()}}}));
      }
      const auto v = validate(t);
      if (!v.empty()) {
        json errs = json::array();
        for (const auto& x : v) errs.push_back({{"type", "topology"}, {"subject", x.subject}, {"message", x.message}});
        return fail(65, errs);
      }
      std::cout << json{{"valid", true}, {"cells", t.num_cells}, {"zones", t.zones.size()}}.dump() << '\n';
      return 0;
    }

    const auto cfg = load_config(config_path, overrides);
    const auto ctx = Context::from(cfg);
    if (show->parsed()) {
      std::cout << cfg.dump(2) << '\n';
      return 0;
    }
    if (dump->parsed()) {
      const json j = ctx.base;
      if (topo_file.empty()) {
        std::cout << j.dump(2) << '\n';
      } else {
        open_out(topo_file) << j.dump(2) << '\n';
      }
      return 0;
    }

    const fs::path dir = cfg["output_dir"].get<std::string>();
    fs::create_directories(dir);
    if (simulate->parsed()) {
      auto runs = open_out(dir / "simulate_runs.csv");
      auto summary = open_out(dir / "simulate_summary.csv");
      std::map<std::string, std::unique_ptr<std::ofstream>> traj;
      cmd_simulate(ctx, {runs, summary, [&](const std::string& name) -> std::ostream* {
                           auto f = std::make_unique<std::ofstream>(dir / ("trajectory_" + name + ".csv"));
                           *f << "# " << kVersion << " trajectory config_hash=" << ctx.hash << " seed=" << ctx.seed
                              << '\n';
                           auto* raw = f.get();
                           traj[name] = std::move(f);
                           return raw;
                         }});
      maybe_plot(ctx, dir, "simulate");
      std::cout << (dir / "simulate_summary.csv").string() << '\n';
    } else if (stat->parsed()) {
      auto split = open_out(dir / "static_split.csv");
      auto loads = open_out(dir / "static_loads.csv");
      const auto report = cmd_static(ctx, split, loads);
      open_out(dir / "static.json") << json{{"config_hash", ctx.hash}, {"seed", ctx.seed}, {"points", report}}.dump(2)
                                    << '\n';
      std::cout << report.dump(2) << '\n';
    } else if (learn_cmd->parsed()) {
      auto windows = open_out(dir / "learn_windows.csv");
      LearningTrajectory traj;
      const auto theta = cmd_learn(ctx, windows, &traj);
      open_out(dir / "learned_theta.json") << params_to_json(theta).dump(2) << '\n';
      maybe_plot(ctx, dir, "learn");
      if (traj.aborted) {
        const auto& w = traj.windows.back();
        return fail(3, json::array({{{"type", "aborted"}, {"window", w.index}, {"message", w.abort_reason}}}));
      }
      std::cout << (dir / "learn_windows.csv").string() << '\n';
    } else if (gradcheck->parsed()) {
      auto acc = open_out(dir / "gradcheck.csv");
      cmd_gradcheck(ctx, acc);
      maybe_plot(ctx, dir, "gradcheck");
      std::cout << (dir / "gradcheck.csv").string() << '\n';
    }
    return 0;
  } catch (const ConfigError& e) {
    json errs = json::array();
    for (const auto& m : e.errors()) errs.push_back({{"type", "config"}, {"message", m}});
    return fail(2, errs);
  } catch (const Infeasible& e) {
    return fail(4, json::array({{{"type", "infeasible"},
                                 {"message", e.what()},
                                 {"min_max_load_lower_bound", e.lower_bound()},
                                 {"min_max_load_found", e.best_found()}}}));
  } catch (const std::exception& e) {
    return fail(1, json::array({{{"type", "runtime"}, {"message", e.what()}}}));
  }
}
