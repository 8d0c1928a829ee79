// xprobe: dataset-wide explanation analysis of black-box image classifiers.
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "xprobe/cli.hpp"
#include "xprobe/error.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::optional<std::string> baseline;
  std::optional<std::size_t> beam_width;
  std::optional<double> p_h;
  std::optional<std::string> grid;
  std::optional<int> steps;
};

void add_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run config")->required();
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "seed for every pseudo-random choice");
  cmd->add_option("--jobs", o.jobs, "worker threads (default: logical CPUs)");
  cmd->add_option("--baseline", o.baseline, "grey | blur | blur:<sigma>");
  cmd->add_option("--beam-width", o.beam_width, "beam width");
  cmd->add_option("--p-h", o.p_h, "sufficiency threshold as a fraction of f_c(I)");
  cmd->add_option("--grid", o.grid, "patch grid, RxC");
  cmd->add_option("--steps", o.steps, "perturbation steps T");
}

xprobe::cli::RunConfig resolve(const Overrides& o) {
  using xprobe::ConfigError;
  auto c = xprobe::cli::load_config(o.config);
  if (o.out) c.out_dir = *o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.jobs) c.jobs = *o.jobs;
  if (o.baseline) {
    try {
      c.baseline = xprobe::BaselineStyle::parse(*o.baseline);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("--baseline: ") + e.what());
    }
  }
  if (o.beam_width) c.beam.beam_width = *o.beam_width;
  if (o.p_h) c.beam.p_h = *o.p_h;
  if (o.grid) std::tie(c.grid_rows, c.grid_cols) = xprobe::cli::parse_grid(*o.grid);
  if (o.steps) {
    if (*o.steps < 1) throw ConfigError("--steps must be positive");
    c.saliency.steps = *o.steps;
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minimal sufficient explanations, sub-explanation counts, insertion/deletion "
               "metrics and cross-testing for image classifiers"};
  app.require_subcommand(1);
  Overrides o;
  using Command = int (*)(const xprobe::cli::RunConfig&);
  const std::pair<const char*, std::pair<const char*, Command>> commands[] = {
      {"mse", {"beam search for minimal sufficient explanations", xprobe::cli::cmd_mse}},
      {"subexp", {"count sub-explanations of stored MSEs", xprobe::cli::cmd_subexp}},
      {"saliency", {"insertion/deletion scores of attribution maps", xprobe::cli::cmd_saliency}},
      {"crosstest", {"cross-test matrices and kernel PCA embedding", xprobe::cli::cmd_crosstest}},
      {"report", {"tables, histograms and SAG trees", xprobe::cli::cmd_report}},
  };
  std::vector<std::pair<CLI::App*, Command>> subs;
  for (const auto& [name, info] : commands) {
    CLI::App* sub = app.add_subcommand(name, info.first);
    add_flags(sub, o);
    subs.emplace_back(sub, info.second);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  xprobe::cli::RunConfig config;
  try {
    config = resolve(o);
  } catch (const xprobe::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  for (const auto& [sub, command] : subs) {
    if (sub->parsed()) return xprobe::cli::run_guarded(command, config);
  }
  return 2;
}
