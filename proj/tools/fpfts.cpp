// Few-photon FTS simulator front end.
#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "fpfts/fpfts.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  bool analytic_only = false;
  unsigned threads = 0;
};

using Command = std::function<fpfts::ResultMap(const fpfts::RunConfig&, const fpfts::CommandOptions&)>;

int run(const Flags& flags, const Command& command) {
  fpfts::RunConfig cfg = fpfts::load_config(flags.config);
  if (flags.seed) cfg.seed = *flags.seed;
  fpfts::CommandOptions opts;
  opts.out_dir = fpfts::resolve_output_dir(flags.out, cfg);
  opts.analytic_only = flags.analytic_only;
  opts.threads = flags.threads;
  const auto result = command(cfg, opts);
  for (const auto& [k, v] : result) fmt::print("{} = {}\n", k, v);
  fmt::print("wrote {}\n", opts.out_dir.string());
  return 0;
}

void add_common(CLI::App* sub, Flags& flags) {
  sub->add_option("--config", flags.config, "run configuration file")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", flags.out, "output directory (overrides FPFTS_OUTPUT_DIR and run.output_dir)");
  sub->add_option("--seed", flags.seed, "master seed (overrides run.seed)");
  sub->add_flag("--analytic-only", flags.analytic_only, "skip Monte Carlo counting");
  sub->add_option("--threads", flags.threads, "worker threads (0: run.threads, then all cores)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-photon Fourier-transform spectroscopy simulator"};
  app.require_subcommand(1);
  Flags flags;
  struct Entry {
    const char* name;
    const char* help;
    Command command;
  };
  const Entry entries[] = {
      {"interferogram", "counted and analytic two-photon interferograms", fpfts::cmd_interferogram},
      {"fts", "few-photon FTS pipeline with classical ESA comparison", fpfts::cmd_fts},
      {"effectiveness", "visibility and classical R^2 versus mean photon number", fpfts::cmd_effectiveness},
      {"visibility-curves", "visibility versus intensity ratio and polarization angle", fpfts::cmd_visibility_curves},
  };
  Command chosen;
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(e.name, e.help);
    add_common(sub, flags);
    sub->callback([&chosen, &e] { chosen = e.command; });
  }
  CLI11_PARSE(app, argc, argv);

  try {
    return run(flags, chosen);
  } catch (const fpfts::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
