#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "exdiff/exdiff.h"

namespace {

int exit_code(exdiff_status status) {
  switch (status) {
    case EXDIFF_OK: return 0;
    case EXDIFF_ERR_CONFIG:
    case EXDIFF_ERR_ARGUMENT: return 2;
    case EXDIFF_ERR_IO: return 3;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact diffusion experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(exdiff_version()));

  std::string config;
  std::string out_dir;
  std::optional<std::int64_t> seed;
  int jobs = 1;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config, "JSON experiment config")->check(CLI::ExistingFile);
    if (config_required) opt->required();
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--seed", seed, "Seed override");
    sub->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);
  };

  auto* run = app.add_subcommand("run", "Run the configured algorithms and write traces");
  auto* scan = app.add_subcommand("stability-scan", "Scan step sizes for the largest stable value");
  auto* analyze = app.add_subcommand("analyze", "Write the stability analysis report");
  auto* two_agent = app.add_subcommand("two-agent", "Two-agent eigenvalue report and traces");
  add_common(run, true);
  add_common(scan, true);
  add_common(analyze, true);
  add_common(two_agent, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  exdiff_command_options options{out_dir.empty() ? nullptr : out_dir.c_str(), seed ? &*seed : nullptr, jobs};
  const char* path = config.empty() ? nullptr : config.c_str();

  exdiff_status status = EXDIFF_OK;
  if (*run)
    status = exdiff_cmd_run(path, &options);
  else if (*scan)
    status = exdiff_cmd_stability_scan(path, &options);
  else if (*analyze)
    status = exdiff_cmd_analyze(path, &options);
  else
    status = exdiff_cmd_two_agent(path, &options);

  if (status != EXDIFF_OK) std::fprintf(stderr, "error (%s): %s\n", exdiff_status_name(status), exdiff_last_error());
  return exit_code(status);
}
