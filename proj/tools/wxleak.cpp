// Command-line front end.
//
//   wxleak run <config>          scenario at the configured leakage levels
//   wxleak sweep <config>        scenario over a generated level list
//   wxleak noise-table           noise temperature vs leakage, CSV
//   wxleak check                 invariant self-test
//
// Exit codes: 0 success, 1 validation/config error, 2 runtime error.

#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "wxleak/error.hpp"
#include "wxleak/experiment.hpp"

namespace {

using namespace wxleak;

struct Common {
  std::string out;
  std::string lead_out;
  bool verbose = false;
  std::optional<std::uint64_t> seed_override;
  unsigned jobs = 1;
};

experiment::ScenarioConfig prepare(const std::string& path, const Common& common) {
  auto cfg = experiment::load_config(path);
  if (common.seed_override) cfg = experiment::with_seed_override(cfg, *common.seed_override);
  return cfg;
}

void execute(const experiment::ScenarioConfig& cfg, const Common& common) {
  experiment::RunOptions opts;
  opts.jobs = common.jobs;
  if (common.verbose) opts.verbose = &std::cerr;
  const auto report = experiment::run_scenario(cfg, opts);
  experiment::emit_summary(report, std::cout);
  if (!common.out.empty()) experiment::emit_csv(report, std::filesystem::path(common.out));
  if (!common.lead_out.empty()) {
    std::ofstream lead(common.lead_out, std::ios::binary);
    if (!lead) throw RuntimeError("cannot write '" + common.lead_out + "'");
    experiment::emit_lead_csv(report, lead);
  }
}

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--out", common.out, "CSV output path");
  cmd->add_option("--lead-out", common.lead_out, "lead-time divergence CSV output path");
  cmd->add_flag("--verbose", common.verbose, "print minimizer iteration traces to stderr");
  cmd->add_option("--seed-override", common.seed_override, "replace all seeds (n, n+1, n+2)");
  cmd->add_option("--jobs", common.jobs, "ensemble members run concurrently")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"5G leakage -> radiance -> 3DVar -> forecast sensitivity simulator"};
  app.require_subcommand(1);

  Common common;
  std::string config_path;

  auto* run = app.add_subcommand("run", "run the scenario at the configured leakage levels");
  run->add_option("config", config_path, "scenario config (JSON)")->required();
  add_common(run, common);

  double from = -55.0, to = -15.0, step = 5.0;
  bool custom_range = false;
  auto* sweep = app.add_subcommand("sweep", "run the scenario over a leakage sweep");
  sweep->add_option("config", config_path, "scenario config (JSON)")->required();
  sweep->add_option("--from", from, "first level, dBW");
  sweep->add_option("--to", to, "last level, dBW");
  sweep->add_option("--step", step, "level increment, dB");
  add_common(sweep, common);

  double table_step = 1.0;
  std::string table_config;
  auto* table = app.add_subcommand("noise-table", "noise temperature vs leakage power as CSV");
  table->add_option("--config", table_config, "take link/antenna/channel settings from this config");
  table->add_option("--from", from, "first level, dBW");
  table->add_option("--to", to, "last level, dBW");
  table->add_option("--step", table_step, "level increment, dB");
  table->add_option("--out", common.out, "CSV output path");

  auto* check = app.add_subcommand("check", "run the invariant self-test suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      execute(prepare(config_path, common), common);
    } else if (*sweep) {
      custom_range = sweep->count("--from") || sweep->count("--to") || sweep->count("--step");
      auto cfg = prepare(config_path, common);
      if (custom_range) {
        if (!(step > 0.0) || from > to) throw ValidationError("sweep needs --from <= --to and --step > 0");
        std::vector<double> levels;
        for (double l = from; l <= to + 1e-9; l += step) levels.push_back(l);
        cfg = experiment::with_levels(cfg, std::move(levels));
      } else {
        cfg = experiment::with_levels(cfg, experiment::default_leakage_levels());
      }
      execute(cfg, common);
    } else if (*table) {
      const auto cfg = table_config.empty() ? experiment::parse_config(std::string("{}"))
                                            : experiment::load_config(table_config);
      const auto rows = experiment::noise_table(cfg, from, to, table_step);
      if (common.out.empty()) {
        experiment::emit_noise_table(rows, std::cout);
      } else {
        std::ofstream out(common.out, std::ios::binary);
        if (!out) throw RuntimeError("cannot write '" + common.out + "'");
        experiment::emit_noise_table(rows, out);
      }
    } else if (*check) {
      bool all = true;
      for (const auto& r : experiment::run_self_check()) {
        std::cout << (r.passed ? "PASS  " : "FAIL  ") << r.name << "  (" << r.detail << ")\n";
        all = all && r.passed;
      }
      return all ? 0 : 2;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
