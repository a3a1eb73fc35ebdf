#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "scn/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"scn - deep sparse coding network trainer"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<std::string> out_dir, data_dir, dataset_name;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run config file");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t v) { seed = v; }, "override RNG seed");
    cmd->add_option_function<int>(
        "--epochs", [&](int v) { epochs = v; }, "override epoch count");
    cmd->add_option_function<std::string>(
        "--out", [&](const std::string& v) { out_dir = v; }, "output directory");
    cmd->add_option_function<std::string>(
        "--data", [&](const std::string& v) { data_dir = v; }, "dataset directory");
  };

  CLI::App* train = app.add_subcommand("train", "train a network");
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint_path;
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--config", config_path, "run config for manifest validation");
  eval->add_option_function<std::string>(
      "--data", [&](const std::string& v) { data_dir = v; }, "dataset directory");
  eval->add_option_function<std::string>(
      "--dataset", [&](const std::string& v) { dataset_name = v; },
      "mnist | cifar10 | cifar100 | synth");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit");
  add_common(gradcheck);
  std::optional<double> tolerance;
  gradcheck->add_option_function<double>(
      "--tolerance", [&](double v) { tolerance = v; },
      "override every group tolerance");
  bool inject_fault = false;
  gradcheck
      ->add_flag("--inject-lambda-fault", inject_fault,
                 "flip the lambda1 gradient sign (harness self-test)")
      ->group("");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      if (config_path.empty()) throw scn::ConfigError("train requires --config");
      scn::cli::RunConfig cfg = scn::cli::RunConfig::from_file(config_path);
      scn::cli::apply_overrides(cfg, {seed, epochs, out_dir, data_dir});
      scn::cli::run_train(cfg);
      return 0;
    }
    if (eval->parsed()) {
      scn::cli::run_eval(checkpoint_path,
                         config_path.empty()
                             ? std::nullopt
                             : std::optional<std::string>(config_path),
                         dataset_name, data_dir);
      return 0;
    }
    if (gradcheck->parsed()) {
      if (config_path.empty()) throw scn::ConfigError("gradcheck requires --config");
      scn::cli::RunConfig cfg = scn::cli::RunConfig::from_file(config_path);
      scn::cli::apply_overrides(cfg, {seed, epochs, out_dir, data_dir});
      const bool ok = scn::cli::run_gradcheck(
          cfg,
          tolerance ? std::optional<scn::Real>(static_cast<scn::Real>(*tolerance))
                    : std::nullopt,
          inject_fault);
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
