#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ivsel/cli.hpp"

int main(int argc, char** argv) {
  using namespace ivsel;
  CLI::App app{"Sensitivity analysis for IV estimates on treatment-preselected data"};
  app.set_version_flag("--version", std::string(ivsel::version));

  std::string command, config, input, out, format = "csv", weights = "inverse";
  std::uint64_t seed = 0;
  std::size_t boot = 0;
  unsigned jobs = 1;
  app.add_option("command", command, "calibrate | estimate | sweep | simulate | identified")
      ->required()
      ->check(CLI::IsMember({"calibrate", "estimate", "sweep", "simulate", "identified"}));
  app.add_option("--config", config, "Configuration file");
  app.add_option("--input", input, "Input CSV (arm sample or dataset)");
  app.add_option("--out", out, "Output path")->required();
  app.add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  auto* seed_opt = app.add_option("--seed", seed, "Master random seed");
  auto* boot_opt = app.add_option("--boot", boot, "Bootstrap replicates");
  app.add_option("--weights", weights, "Weights for the selection-adjusted 2SLS")
      ->check(CLI::IsMember({"inverse", "literal"}));
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorCode::validation);
  }

  cli::RunConfig rc;
  try {
    rc.command = cli::parse_command(command);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return static_cast<int>(e.code());
  }
  if (!config.empty()) rc.config_path = config;
  if (!input.empty()) rc.input = input;
  rc.out = out;
  rc.format = format == "json" ? cli::Format::json : cli::Format::csv;
  if (*seed_opt) rc.seed = seed;
  if (*boot_opt) rc.boot = boot;
  rc.weights = weights == "literal" ? WeightMode::literal : WeightMode::inverse;
  rc.jobs = jobs;

  try {
    const cli::RunOutcome outcome = cli::run(rc);
    if (outcome.exit_code != 0) std::cerr << outcome.error_record << '\n';
    return outcome.exit_code;
  } catch (const std::exception& e) {
    std::cerr << R"({"error":{"code":3,"kind":"internal","message":")" << e.what() << "\"}}\n";
    return static_cast<int>(ErrorCode::numerical);
  }
}
