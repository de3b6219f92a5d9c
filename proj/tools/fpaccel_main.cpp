#include <CLI11.hpp>
#include <exception>
#include <iostream>

#include "fpaccel/cpd.hpp"
#include "fpaccel/lab.hpp"

int main(int argc, char** argv) {
  CLI::App app{"fpaccel: fixed-point acceleration experiments on canonical "
               "tensor decomposition"};
  app.require_subcommand(1);

  std::string config_path;
  std::string map = "als";
  std::string method = "none";
  std::string xstar_path;
  std::string out_path;
  std::string table_kind;

  CLI::App* run = app.add_subcommand("run", "run the configured method sweep");
  run->add_option("config", config_path, "experiment config (JSON)")->required();

  CLI::App* spectrum =
      app.add_subcommand("spectrum", "eigenvalue and bound report at the fixed point");
  spectrum->add_option("config", config_path)->required();
  spectrum->add_option("--map", map, "als or sd");
  spectrum->add_option("--method", method, "saa1, sngmresr1 or none");
  spectrum->add_option("--xstar", xstar_path, "factor checkpoint to analyze");
  spectrum->add_option("--out", out_path, "output JSON path");

  CLI::App* table = app.add_subcommand("table", "emit a summary table CSV");
  table
      ->add_option("kind", table_kind,
                   "sd_factors, als_bounds, bruteforce or gmres_bounds")
      ->required();
  table->add_option("config", config_path)->required();
  table->add_option("--out", out_path, "output CSV path");

  CLI::App* compare = app.add_subcommand(
      "gmres-compare", "window-free accelerators vs GMRES on the linearization");
  compare->add_option("config", config_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return fpaccel::lab::cmd_run(config_path);
    if (spectrum->parsed()) {
      return fpaccel::lab::cmd_spectrum(config_path, map, method, xstar_path,
                                        out_path);
    }
    if (table->parsed()) {
      return fpaccel::lab::cmd_table(table_kind, config_path, out_path);
    }
    if (compare->parsed()) return fpaccel::lab::cmd_gmres_compare(config_path);
  } catch (const fpaccel::lab::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fpaccel::NonConvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
