#include "aniso/scenario.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Anisotropic minimal graphs with a free boundary on truncated half-spaces"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  auto* solve = app.add_subcommand("solve", "Solve a scenario and write the discrete solution");
  solve->add_option("--config", config, "Scenario JSON")->required();
  solve->add_option("--out", out, "Output directory")->required();

  auto* verify = app.add_subcommand("verify", "Solve a scenario and run its checks");
  verify->add_option("--config", config, "Scenario JSON")->required();
  verify->add_option("--out", out, "Output directory")->required();

  std::string axis;
  std::vector<double> values;
  auto* sweep = app.add_subcommand("sweep", "Run a scenario over values of one parameter");
  sweep->add_option("--config", config, "Scenario JSON")->required();
  sweep->add_option("--axis", axis, "theta, resolution or domain_size")->required();
  sweep->add_option("--values", values, "Comma separated values")->required()->delimiter(',');
  sweep->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : aniso::kConfigError;
  }

  if (*solve) return aniso::cli_solve(config, out, std::cerr);
  if (*verify) return aniso::cli_verify(config, out, std::cerr);
  return aniso::cli_sweep(config, axis, values, out, std::cerr);
}
