// SPDX-License-Identifier: Apache-2.0
//
// dofkit <command> --config <path> [--out <dir>] [--workers N]

#include "dofkit/job.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <utility>
#include <string>

int main(int argc, char **argv) {
  CLI::App app{"Concentration-operator spectra and degrees-of-freedom counts"};
  app.require_subcommand(1);

  std::string config;
  std::string out_dir;
  std::size_t workers = 1;
  const std::pair<const char *, const char *> commands[] = {
      {"spectrum", "eigenvalues, n-widths and N(eps) for one operator"},
      {"sweep", "spectra along a scaling sweep"},
      {"dof", "closed-form and empirical degrees of freedom"},
      {"verify", "numerical self-checks; exit 1 if any fails"},
  };
  for (const auto &[name, help] : commands) {
    auto *sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "JSON job configuration")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--workers", workers, "concurrent sweep points")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dofkit::exit_code::config;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  dofkit::JobConfig cfg;
  try {
    cfg = dofkit::load_job(config);
  } catch (const dofkit::ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return dofkit::exit_code::config;
  }
  const std::optional<std::string> out = out_dir.empty() ? std::nullopt : std::optional<std::string>(out_dir);
  return dofkit::run_job(cfg, command, out, workers, std::cout, std::cerr);
}
