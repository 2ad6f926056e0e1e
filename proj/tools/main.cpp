#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "lpa/error.hpp"

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const auto v = std::stoull(item, &used);
    if (used != item.size()) throw lpa::ConfigError("bad --seed-list entry '" + item + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active-learning surrogates for multilayer metasurface unit cells"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", "lpa 0.1.0");

  std::string config_path, seed_list, oracle_kind, cell;
  std::uint64_t seed = 0;
  bool quiet = false;
  lpa::cli::Common common;
  app.add_option("--config", config_path, "Run configuration JSON")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
  app.add_option("--seed-list", seed_list, "Comma-separated seeds, one run each");
  app.add_option("--jobs", common.jobs, "Concurrent oracle labels")->check(CLI::PositiveNumber);
  app.add_option("--out", common.out, "Output file or directory");
  app.add_option("--oracle", oracle_kind, "Oracle kind (overrides the config)");
  app.add_option("--cell", cell, "Unit-cell preset: normal | small | smallest");
  app.add_flag("-q,--quiet", quiet, "No progress output");

  lpa::cli::GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Label uniform random points");
  gen_cmd->add_option("--n", gen.n, "Number of points")->required();

  auto* al_cmd = app.add_subcommand("al-run", "Active-learning run");

  lpa::cli::BaselineArgs base;
  auto* base_cmd = app.add_subcommand("baseline-run", "Random-sampling baseline");
  base_cmd->add_option("--budgets", base.budgets,
                       "Training-set sizes (default: the AL schedule's budgets)")
      ->delimiter(',');

  lpa::cli::DesignArgs des;
  auto* des_cmd = app.add_subcommand("design", "Worst-case multiwavelength lens optimization");
  des_cmd->add_option("--ensemble", des.ensemble, "Ensemble checkpoint")->required();
  des_cmd->add_option("--init", des.init, "Initial design JSON (default: random)");

  lpa::cli::ValidateArgs val;
  auto* val_cmd = app.add_subcommand("validate", "Compare predicted and solved focal lines");
  val_cmd->add_option("--design", val.design, "Design JSON")->required();
  val_cmd->add_option("--ensemble", val.ensemble, "Ensemble checkpoint");
  val_cmd->add_option("--labels", val.labels, "Use exact labels from this CSV as the model");

  lpa::cli::BenchArgs ben;
  auto* ben_cmd = app.add_subcommand("bench", "Surrogate vs. oracle per-point timing");
  ben_cmd->add_option("--ensemble", ben.ensemble, "Ensemble checkpoint");
  ben_cmd->add_option("--n", ben.n, "Surrogate evaluations");
  ben_cmd->add_option("--oracle-n", ben.oracle_n, "Oracle labels");

  lpa::cli::ExportArgs exp;
  auto* exp_cmd = app.add_subcommand("export-plots", "Plot-ready learning-curve tables");
  exp_cmd->add_option("runs", exp.runs, "Run directories")->required();

  auto* cheb_cmd = app.add_subcommand("cheb-run", "Chebyshev tensor interpolation baseline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    common.quiet = quiet;
    common.config = config_path.empty() ? lpa::config_from_json(nlohmann::json::object())
                                        : lpa::load_config(config_path);
    if (!cell.empty() || !oracle_kind.empty()) {
      nlohmann::json j = lpa::to_json(common.config);
      if (!cell.empty()) j["unit_cell"] = cell;
      if (!oracle_kind.empty()) j["oracle"] = {{"kind", oracle_kind}, {"settings", nlohmann::json::object()}};
      common.config = lpa::config_from_json(j);
    }
    if (*seed_opt) common.config.set_seed(seed);
    if (!seed_list.empty()) common.seeds = parse_seed_list(seed_list);

    if (gen_cmd->parsed()) return lpa::cli::gen_data(common, gen);
    if (al_cmd->parsed()) return lpa::cli::al_run(common);
    if (base_cmd->parsed()) return lpa::cli::baseline_run(common, base);
    if (des_cmd->parsed()) return lpa::cli::design(common, des);
    if (val_cmd->parsed()) return lpa::cli::validate(common, val);
    if (ben_cmd->parsed()) return lpa::cli::bench(common, ben);
    if (exp_cmd->parsed()) return lpa::cli::export_plots(common, exp);
    if (cheb_cmd->parsed()) return lpa::cli::cheb_run(common);
  } catch (const lpa::ConfigError& e) {
    std::cerr << "lpa: error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "lpa: error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "lpa: error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
