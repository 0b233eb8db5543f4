#include <CLI11.hpp>

#include <iostream>

#include "cli/commands.hpp"
#include "lgcp/error.hpp"
#include "lgcp/log.hpp"

namespace {

const char* describe(const std::string& name) {
  if (name == "fit") return "Fit the configured model and write posterior summaries and intensities";
  if (name == "predict") return "Aggregate fitted intensities to the configured partitions";
  if (name == "cv") return "k-fold cross-validation with pooled and per-fold metrics";
  if (name == "simulate") return "Simulate a synthetic pixel table with known truth";
  if (name == "screen") return "Rank single-covariate models by pixel AUC";
  if (name == "compare") return "Compare trigger-only, LSE-only and trigger+LSE models";
  return "Render text tables from existing outputs";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Log-Gaussian Cox process intensity modelling"};
  app.set_version_flag("--version", std::string("lgcp-tool ") + lgcp::cli::kToolVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir, table;
  std::int64_t seed = -1;
  int threads = 0;
  bool verbose = false;

  for (const auto& name : lgcp::cli::command_names()) {
    CLI::App* sub = app.add_subcommand(name, describe(name));
    sub->add_option("config", config_path, "Configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "Override a setting: section.key=value (repeatable)");
    sub->add_option("--out", out_dir, "Output directory (output.dir)");
    sub->add_option("--table", table, "Pixel table CSV (data.table)");
    sub->add_option("--seed", seed, "Master seed (run.seed)")->check(CLI::NonNegativeNumber);
    sub->add_option("--threads", threads, "Worker cap (run.threads)")->check(CLI::Range(1, 256));
    sub->add_flag("-v,--verbose", verbose, "Debug logging");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    lgcp::cli::Config c = config_path.empty() ? lgcp::cli::Config{} : lgcp::cli::Config::load(config_path);
    if (!out_dir.empty()) c.set("output.dir", out_dir);
    if (!table.empty()) c.set("data.table", table);
    if (seed >= 0) c.set("run.seed", std::to_string(seed));
    if (threads > 0) c.set("run.threads", std::to_string(threads));
    if (verbose) c.set("run.verbose", "true");
    for (const auto& o : overrides) c.set_assignment(o);
    lgcp::cli::run_command(command, c);
  } catch (const std::exception& e) {
    lgcp::log::warning(std::string("error: ") + e.what());
    return lgcp::cli::exit_code(e);
  }
  return 0;
}
