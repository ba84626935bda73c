// Command-line front end: run, sweep and validate scenario configs.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "mixdta/scenario.hpp"

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

mixdta::ScenarioConfig load(const std::string& path, const Overrides& o) {
  auto cfg = mixdta::load_scenario(path);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.dta.seed = *o.seed;
  }
  if (o.out) cfg.output.dir = mixdta::fs::absolute(*o.out).lexically_normal();
  mixdta::validate(cfg);
  return cfg;
}

mixdta::IterationObserver progress(bool quiet) {
  if (quiet) return {};
  return [](const mixdta::IterationReport& r) {
    fmt::print(stderr, "iteration {} hybrid_gap_s={:.3f} ttt_h={:.3f} unfinished={}\n", r.iteration, r.hybrid_gap_s,
               r.total_travel_time_h, r.unfinished_count);
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-traffic dynamic traffic assignment"};
  app.require_subcommand(1);

  Overrides o;
  std::string config;
  bool quiet = false;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", config, "Scenario config (JSON)")->required();
    cmd->add_option("--seed", o.seed, "Override the config seed");
    cmd->add_option("--out", o.out, "Override the output directory");
  };

  auto* run = app.add_subcommand("run", "Run one scenario");
  add_common(run);
  run->add_flag("-q,--quiet", quiet, "No per-iteration progress");

  std::vector<double> prs{0, 20, 40, 60, 80, 100};
  unsigned jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Run the scenario over several CAV penetration rates");
  add_common(sweep);
  sweep->add_option("--pr", prs, "Comma-separated penetration rates in percent")->delimiter(',');
  sweep->add_option("--jobs", jobs, "Scenarios run concurrently")->check(CLI::PositiveNumber);
  sweep->add_flag("-q,--quiet", quiet, "No per-iteration progress");

  auto* check = app.add_subcommand("validate", "Validate a config and print the effective config");
  add_common(check);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = load(config, o);
    if (*check) {
      fmt::print("{}\n", mixdta::effective_config(cfg).dump(2));
    } else if (*run) {
      const auto s = mixdta::run_scenario(cfg, progress(quiet));
      fmt::print("{}\n", mixdta::summary_line(s));
    } else {
      for (const auto& row : mixdta::run_sweep(cfg, prs, jobs, !quiet)) {
        fmt::print("{} ttt_improvement_pct={:.6f}\n", mixdta::summary_line(row.summary), row.ttt_improvement_pct);
      }
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
