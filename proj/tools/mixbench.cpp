// mixbench command-line front end.
//   mixbench run <config>
//   mixbench compare <csv...> --x <col> --y <col> -o <svg>
//   mixbench inspect <checkpoint-manifest>
// Exit codes: 0 ok, 1 usage or unexpected error, 2 config error,
// 3 data error, 4 numeric failure.

#include <CLI11.hpp>

#include <cmath>
#include <iostream>

#include "mixbench/checkpoint.hpp"
#include "mixbench/errors.hpp"
#include "mixbench/experiment.hpp"
#include "mixbench/runtime.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

int run(const std::string& config_path, bool quiet) {
  const auto cfg = mixbench::ExperimentConfig::load(config_path);
  const auto result = mixbench::run_experiment(cfg, quiet ? nullptr : &std::cout);
  if (!std::isnan(result.metric)) std::cout << "final metric: " << result.metric << '\n';
  std::cout << "artifacts: " << result.output.string() << '\n';
  for (const auto& a : result.artifacts) std::cout << "  " << a.string() << '\n';
  return kOk;
}

int inspect(const std::string& manifest) {
  const auto summary = mixbench::inspect_checkpoint(manifest);
  for (const auto& [k, v] : summary.model) std::cout << "model." << k << " = " << v << '\n';
  std::cout << "params: " << summary.trainable_params << " trainable / " << summary.total_params << " total\n";
  for (const auto& g : summary.groups) {
    std::cout << (g.trainable ? "  train  " : "  frozen ") << g.kind << ' ' << g.name << " checksum " << g.checksum;
    if (!g.trainable) std::cout << (g.frozen_intact() ? " (matches init)" : " (CHANGED since init)");
    std::cout << '\n';
  }
  for (const auto& t : summary.tensors)
    if (!t.checksum_ok) std::cout << "  corrupt tensor file: " << t.file << '\n';
  std::cout << (summary.ok() ? "checkpoint ok\n" : "checkpoint FAILED verification\n");
  return summary.ok() ? kOk : kData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial vs channel mixing experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  bool quiet = false;
  auto* run_cmd = app.add_subcommand("run", "Run the experiment described by a key=value config");
  run_cmd->add_option("config", config_path, "Config file")->required();
  run_cmd->add_flag("-q,--quiet", quiet, "Suppress per-epoch progress");

  std::vector<std::string> reports;
  std::string x_col, y_col, svg_path;
  auto* compare_cmd = app.add_subcommand("compare", "Merge report CSVs and plot one column against another");
  compare_cmd->add_option("reports", reports, "Report CSVs sharing a header")->required();
  compare_cmd->add_option("--x", x_col, "X-axis column")->required();
  compare_cmd->add_option("--y", y_col, "Y-axis column")->required();
  compare_cmd->add_option("-o,--output", svg_path, "Output SVG (merged CSV is written next to it)")->required();

  std::string manifest;
  auto* inspect_cmd = app.add_subcommand("inspect", "Verify and summarize a checkpoint");
  inspect_cmd->add_option("manifest", manifest, "Checkpoint manifest.txt")->required();

  CLI11_PARSE(app, argc, argv);
  mixbench::configure_allocator();

  try {
    if (*run_cmd) return run(config_path, quiet);
    if (*compare_cmd) {
      const auto csv = mixbench::compare_reports({reports.begin(), reports.end()}, x_col, y_col, svg_path);
      std::cout << "wrote " << svg_path << " and " << csv.string() << '\n';
      return kOk;
    }
    if (*inspect_cmd) return inspect(manifest);
  } catch (const mixbench::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const mixbench::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const mixbench::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
