#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hdlab/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"hdlab: hindsight differentiable policy optimization for inventory control"};
  app.require_subcommand(1);
  hdlab::CommandOptions opts;
  std::uint64_t seed = 0;
  const char* blurbs[] = {"generate train/dev/test traces", "train a policy with HDPO",
                          "evaluate a checkpoint", "compute an oracle cost",
                          "sweep a parameter grid", "run the asymptotic gap experiment",
                          "train the forecaster and run the newsvendor benchmark"};
  int i = 0;
  for (const std::string& name : hdlab::command_names()) {
    CLI::App* sub = app.add_subcommand(name, blurbs[i++]);
    sub->add_option("--config", opts.config_path, "INI config file")->required();
    sub->add_option("--seed", seed, "override every seed in the config");
    sub->add_flag("--force", opts.force, "overwrite an existing run directory");
    sub->add_option("--parallelism", opts.parallelism, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", opts.out_root, "output root (default $HDLAB_OUT or runs)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : hdlab::kExitError;
  }
  for (CLI::App* sub : app.get_subcommands()) {
    if (sub->count("--seed")) opts.seed = seed;
    return hdlab::run_command(sub->get_name(), opts, std::cout, std::cerr);
  }
  return hdlab::kExitError;
}
