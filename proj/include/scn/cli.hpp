#ifndef SCN_CLI_HPP
#define SCN_CLI_HPP

#include <optional>
#include <string>

#include "scn/common.hpp"
#include "scn/data.hpp"
#include "scn/network.hpp"
#include "scn/training.hpp"

namespace scn::cli {

struct DataConfig {
  std::string dataset = "synth"; // mnist | cifar10 | cifar100 | synth
  std::string dir;               // directory with the native files
  int train_subset = 0;          // keep only the first N train images (0 = all)
  int synth_train = 10000;
  int synth_test = 2000;
  std::uint64_t synth_seed = 1234;
};

struct GradCheckConfig {
  int samples_per_group = 200;
  int batch_size = 2;
  Real epsilon = Real(1e-5);
};

/// Full run description: network + training schedule + dataset selection +
/// output directory, parsed from one `key = value` config file. Unknown
/// keys and sections are rejected.
struct RunConfig {
  network::NetworkConfig network;
  training::TrainConfig train;
  DataConfig data;
  GradCheckConfig gradcheck;
  std::string out_dir = "out";

  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text);
  std::string to_text() const; // resolved snapshot, reparseable
};

data::DatasetPair load_dataset(const DataConfig& cfg);

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<std::string> out_dir;
  std::optional<std::string> data_dir;
};

void apply_overrides(RunConfig& cfg, const CliOverrides& o);

/// Runs training; writes metrics.txt, checkpoints, config_resolved.cfg and a
/// DONE marker under out_dir. Throws on any error (no DONE marker then).
void run_train(const RunConfig& cfg);

/// Loads a checkpoint (validating its manifest against `config_path`'s
/// [network] block when given), evaluates the test split, prints
/// `test_error <value>`.
void run_eval(const std::string& checkpoint_path,
              const std::optional<std::string>& config_path,
              const std::optional<std::string>& dataset_name,
              const std::optional<std::string>& data_dir);

/// Finite-difference audit of every gradient group on the configured
/// network; prints one line per group. Returns true iff all groups pass.
/// `tolerance_override` replaces every per-group tolerance;
/// `inject_lambda_fault` flips the analytic lambda1 gradient sign (harness
/// self-test).
bool run_gradcheck(const RunConfig& cfg, std::optional<Real> tolerance_override,
                   bool inject_lambda_fault);

} // namespace scn::cli

#endif
