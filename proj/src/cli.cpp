#include "scn/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "scn/config_text.hpp"

namespace scn::cli {

namespace fs = std::filesystem;
using configtext::format_real;

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void parse_train_section(const configtext::Section& sec, training::TrainConfig& t) {
  for (const auto& e : sec.entries) {
    const std::string ctx = "[train] " + e.key;
    if (e.key == "batch_size")
      t.batch_size = static_cast<int>(configtext::parse_int(e.value, ctx));
    else if (e.key == "epochs")
      t.epochs = static_cast<int>(configtext::parse_int(e.value, ctx));
    else if (e.key == "base_lr")
      t.base_lr = configtext::parse_real(e.value, ctx);
    else if (e.key == "lr_drops") {
      t.lr_drop_epochs.clear();
      std::istringstream is(e.value);
      int v;
      while (is >> v) t.lr_drop_epochs.push_back(v);
    } else if (e.key == "lr_drop_factor")
      t.lr_drop_factor = configtext::parse_real(e.value, ctx);
    else if (e.key == "weight_decay")
      t.weight_decay = configtext::parse_real(e.value, ctx);
    else if (e.key == "momentum")
      t.momentum = configtext::parse_real(e.value, ctx);
    else if (e.key == "horizontal_flip")
      t.augmentation.horizontal_flip = configtext::parse_bool(e.value, ctx);
    else if (e.key == "max_translate")
      t.augmentation.max_translate_px =
          static_cast<int>(configtext::parse_int(e.value, ctx));
    else if (e.key == "seed")
      t.seed = static_cast<std::uint64_t>(configtext::parse_int(e.value, ctx));
    else if (e.key == "invariant_checks")
      t.invariant_checks = configtext::parse_bool(e.value, ctx);
    else if (e.key == "kkt_audit_patches")
      t.kkt_audit_patches = static_cast<int>(configtext::parse_int(e.value, ctx));
    else
      throw ConfigError("[train]: unknown key '" + e.key + "'");
  }
}

void parse_data_section(const configtext::Section& sec, DataConfig& d) {
  for (const auto& e : sec.entries) {
    const std::string ctx = "[data] " + e.key;
    if (e.key == "dataset") {
      if (e.value != "mnist" && e.value != "cifar10" && e.value != "cifar100" &&
          e.value != "synth")
        throw ConfigError(ctx + ": unknown dataset '" + e.value + "'");
      d.dataset = e.value;
    } else if (e.key == "dir")
      d.dir = e.value;
    else if (e.key == "train_subset")
      d.train_subset = static_cast<int>(configtext::parse_int(e.value, ctx));
    else if (e.key == "synth_train")
      d.synth_train = static_cast<int>(configtext::parse_int(e.value, ctx));
    else if (e.key == "synth_test")
      d.synth_test = static_cast<int>(configtext::parse_int(e.value, ctx));
    else if (e.key == "synth_seed")
      d.synth_seed = static_cast<std::uint64_t>(configtext::parse_int(e.value, ctx));
    else
      throw ConfigError("[data]: unknown key '" + e.key + "'");
  }
}

void parse_run_section(const configtext::Section& sec, RunConfig& cfg) {
  for (const auto& e : sec.entries) {
    if (e.key == "out_dir")
      cfg.out_dir = e.value;
    else
      throw ConfigError("[run]: unknown key '" + e.key + "'");
  }
}

void parse_gradcheck_section(const configtext::Section& sec, GradCheckConfig& g) {
  for (const auto& e : sec.entries) {
    const std::string ctx = "[gradcheck] " + e.key;
    if (e.key == "samples_per_group")
      g.samples_per_group = static_cast<int>(configtext::parse_int(e.value, ctx));
    else if (e.key == "batch_size")
      g.batch_size = static_cast<int>(configtext::parse_int(e.value, ctx));
    else if (e.key == "epsilon")
      g.epsilon = configtext::parse_real(e.value, ctx);
    else
      throw ConfigError("[gradcheck]: unknown key '" + e.key + "'");
  }
}

} // namespace

RunConfig RunConfig::from_text(const std::string& text) {
  const configtext::Document doc = configtext::parse(text);
  RunConfig cfg;
  bool saw_network = false;
  for (const auto& sec : doc.sections) {
    if (sec.name == "network") {
      cfg.network = network::network_config_from_section(sec);
      saw_network = true;
    } else if (sec.name == "train") {
      parse_train_section(sec, cfg.train);
    } else if (sec.name == "data") {
      parse_data_section(sec, cfg.data);
    } else if (sec.name == "run") {
      parse_run_section(sec, cfg);
    } else if (sec.name == "gradcheck") {
      parse_gradcheck_section(sec, cfg.gradcheck);
    } else {
      throw ConfigError("unknown config section [" + sec.name + "]");
    }
  }
  if (!saw_network) throw ConfigError("config is missing the [network] section");
  cfg.train.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  try {
    return from_text(read_text_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + " (in " + path + ")");
  }
}

std::string RunConfig::to_text() const {
  std::string out = network::to_config_text(network);
  configtext::Document doc;

  auto& t = doc.get_or_add("train");
  t.entries.push_back({"batch_size", std::to_string(train.batch_size)});
  t.entries.push_back({"epochs", std::to_string(train.epochs)});
  t.entries.push_back({"base_lr", format_real(train.base_lr)});
  {
    std::string drops;
    for (std::size_t i = 0; i < train.lr_drop_epochs.size(); ++i)
      drops += (i ? " " : "") + std::to_string(train.lr_drop_epochs[i]);
    if (!drops.empty()) t.entries.push_back({"lr_drops", drops});
  }
  t.entries.push_back({"lr_drop_factor", format_real(train.lr_drop_factor)});
  t.entries.push_back({"weight_decay", format_real(train.weight_decay)});
  t.entries.push_back({"momentum", format_real(train.momentum)});
  t.entries.push_back(
      {"horizontal_flip", train.augmentation.horizontal_flip ? "true" : "false"});
  t.entries.push_back(
      {"max_translate", std::to_string(train.augmentation.max_translate_px)});
  t.entries.push_back({"seed", std::to_string(train.seed)});
  t.entries.push_back({"invariant_checks", train.invariant_checks ? "true" : "false"});
  t.entries.push_back({"kkt_audit_patches", std::to_string(train.kkt_audit_patches)});

  auto& d = doc.get_or_add("data");
  d.entries.push_back({"dataset", data.dataset});
  if (!data.dir.empty()) d.entries.push_back({"dir", data.dir});
  d.entries.push_back({"train_subset", std::to_string(data.train_subset)});
  if (data.dataset == "synth") {
    d.entries.push_back({"synth_train", std::to_string(data.synth_train)});
    d.entries.push_back({"synth_test", std::to_string(data.synth_test)});
    d.entries.push_back({"synth_seed", std::to_string(data.synth_seed)});
  }

  auto& g = doc.get_or_add("gradcheck");
  g.entries.push_back({"samples_per_group", std::to_string(gradcheck.samples_per_group)});
  g.entries.push_back({"batch_size", std::to_string(gradcheck.batch_size)});
  g.entries.push_back({"epsilon", format_real(gradcheck.epsilon)});

  auto& r = doc.get_or_add("run");
  r.entries.push_back({"out_dir", out_dir});

  out += "\n" + configtext::serialize(doc);
  return out;
}

data::DatasetPair load_dataset(const DataConfig& cfg) {
  data::DatasetPair pair;
  if (cfg.dataset == "mnist") {
    if (cfg.dir.empty()) throw ConfigError("dataset mnist requires [data] dir");
    pair = data::load_mnist(cfg.dir);
  } else if (cfg.dataset == "cifar10") {
    if (cfg.dir.empty()) throw ConfigError("dataset cifar10 requires [data] dir");
    pair = data::load_cifar(cfg.dir, 10);
  } else if (cfg.dataset == "cifar100") {
    if (cfg.dir.empty()) throw ConfigError("dataset cifar100 requires [data] dir");
    pair = data::load_cifar(cfg.dir, 100);
  } else if (cfg.dataset == "synth") {
    data::SynthDigitsOptions opts;
    opts.train_count = cfg.synth_train;
    opts.test_count = cfg.synth_test;
    opts.seed = cfg.synth_seed;
    pair = data::make_synth_digits(opts);
  } else {
    throw ConfigError("unknown dataset '" + cfg.dataset + "'");
  }
  if (cfg.train_subset > 0)
    data::truncate_train(pair, static_cast<std::size_t>(cfg.train_subset));
  return pair;
}

void apply_overrides(RunConfig& cfg, const CliOverrides& o) {
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.data_dir) cfg.data.dir = *o.data_dir;
}

void run_train(const RunConfig& cfg) {
  data::DatasetPair ds = load_dataset(cfg.data);

  network::Network net = network::build_scn(cfg.network, cfg.train.seed);
  training::TrainConfig tcfg = cfg.train;
  tcfg.augmentation.per_pixel_mean = ds.train.per_pixel_mean;

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream snapshot(fs::path(cfg.out_dir) / "config_resolved.cfg");
    snapshot << cfg.to_text();
  }

  std::ofstream metrics(fs::path(cfg.out_dir) / "metrics.txt");
  if (!metrics) throw Error("cannot open metrics file under '" + cfg.out_dir + "'");
  metrics << "epoch lr train_loss train_err test_err\n" << std::flush;

  training::TrainSinks sinks;
  sinks.on_epoch = [&metrics](const training::MetricsRow& row) {
    metrics << training::format_metrics_row(row);
    metrics.flush();
  };
  sinks.on_checkpoint = [&cfg](const network::Network& n, const std::string& tag) {
    network::save_checkpoint(
        n, (fs::path(cfg.out_dir) / ("checkpoint_" + tag + ".scn")).string());
  };

  const training::TrainReport report = training::train(net, ds, tcfg, &sinks);

  std::ofstream done(fs::path(cfg.out_dir) / "DONE");
  done << "ok\n";

  if (!report.rows.empty()) {
    const auto& last = report.rows.back();
    std::printf("final epoch %d: train_loss %.6g train_err %.6g test_err %.6g\n",
                last.epoch, static_cast<double>(last.train_loss),
                static_cast<double>(last.train_err),
                static_cast<double>(last.test_err));
  } else {
    std::printf("no epochs requested; wrote initial state only\n");
  }
}

void run_eval(const std::string& checkpoint_path,
              const std::optional<std::string>& config_path,
              const std::optional<std::string>& dataset_name,
              const std::optional<std::string>& data_dir) {
  std::optional<RunConfig> cfg;
  if (config_path) cfg = RunConfig::from_file(*config_path);

  network::Network net =
      network::load_checkpoint(checkpoint_path, cfg ? &cfg->network : nullptr);

  DataConfig dc;
  if (cfg) dc = cfg->data;
  if (dataset_name) dc.dataset = *dataset_name;
  if (data_dir) dc.dir = *data_dir;
  if (!cfg && !dataset_name) {
    // Infer from the checkpoint's input geometry.
    if (net.cfg.input_channels == 1)
      dc.dataset = dc.dir.empty() ? "synth" : "mnist";
    else
      dc.dataset = net.cfg.num_classes == 100 ? "cifar100" : "cifar10";
  }

  data::DatasetPair ds = load_dataset(dc);
  const Real err = training::evaluate(net, ds.test);
  std::printf("test_error %.12g\n", static_cast<double>(err));
}

bool run_gradcheck(const RunConfig& cfg, std::optional<Real> tolerance_override,
                   bool inject_lambda_fault) {
  network::Network net = network::build_scn(cfg.network, cfg.train.seed);

  training::GradCheckOptions opts;
  opts.samples_per_group = cfg.gradcheck.samples_per_group;
  opts.batch_size = cfg.gradcheck.batch_size;
  opts.epsilon = cfg.gradcheck.epsilon;
  opts.seed = cfg.train.seed + 17;
  opts.mutate_lambda_sign = inject_lambda_fault;
  if (tolerance_override) {
    opts.tol_classifier = *tolerance_override;
    opts.tol_bn = *tolerance_override;
    opts.tol_dict = *tolerance_override;
    opts.tol_lambda = *tolerance_override;
  }

  const training::GradCheckReport report = training::gradcheck_random(net, opts);
  for (const auto& g : report.groups)
    std::printf("group %-18s checked %3d skipped %2d max_rel_err %.3e tol %.0e %s\n",
                g.name.c_str(), g.checked, g.skipped_unstable,
                static_cast<double>(g.max_rel_err), static_cast<double>(g.tolerance),
                g.passed() ? "PASS" : "FAIL");
  return report.all_passed();
}

} // namespace scn::cli
