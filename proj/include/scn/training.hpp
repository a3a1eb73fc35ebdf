#ifndef SCN_TRAINING_HPP
#define SCN_TRAINING_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "scn/common.hpp"
#include "scn/data.hpp"
#include "scn/network.hpp"

namespace scn::training {

struct AugmentSpec {
  bool horizontal_flip = false;
  int max_translate_px = 0;
  layers::FeatureMap per_pixel_mean; // subtracted first; empty means zeros
};

struct TrainConfig {
  int batch_size = 128;
  int epochs = 0;
  Real base_lr = Real(0.1);
  std::vector<int> lr_drop_epochs; // strictly increasing
  Real lr_drop_factor = Real(10);  // divide by this at each drop
  Real weight_decay = Real(5e-4);
  Real momentum = Real(0.9);
  AugmentSpec augmentation;
  std::uint64_t seed = 0;
  bool invariant_checks = false; // track lambda floor / nonnegativity / finiteness
  int kkt_audit_patches = 0;     // per-epoch optimality spot audit (0 = off)

  void validate() const;
};

/// Pure function of the epoch index: base_lr divided by lr_drop_factor once
/// per drop epoch already reached.
Real lr_at_epoch(const TrainConfig& cfg, int epoch);

struct MetricsRow {
  int epoch = 0;
  Real lr = 0;
  Real train_loss = 0;
  Real train_err = 0;
  Real test_err = 0;
};

/// Header line plus one space-separated row per epoch; plain text so any
/// external tool can plot it.
std::string format_metrics(const std::vector<MetricsRow>& rows);
std::string format_metrics_row(const MetricsRow& row);

struct TrainReport {
  std::vector<MetricsRow> rows;
  // Populated when invariant_checks / kkt_audit_patches are on:
  Real min_lambda1 = std::numeric_limits<Real>::infinity();
  Real min_activation = std::numeric_limits<Real>::infinity();
  Real max_kkt_audit = 0;
  bool all_finite = true;
};

struct TrainSinks {
  std::function<void(const MetricsRow&)> on_epoch;
  std::function<void(const network::Network&, const std::string& tag)> on_checkpoint;
};

/// Minibatch SGD over the train split: seeded shuffle, batch-shared
/// augmentation, forward/backward through every layer, decayed + projected
/// parameter update. One metrics row per epoch (including test error);
/// checkpoint sink fires at every learning-rate drop and at the end.
/// An empty augmentation mean is filled from the train split so the
/// training inputs match what evaluate() feeds the network. Throws
/// NumericalError with a layer-wise norm dump if the loss goes non-finite.
TrainReport train(network::Network& net, const data::DatasetPair& ds,
                  const TrainConfig& cfg, const TrainSinks* sinks = nullptr);

/// Mean subtraction only; the evaluation-path input transform.
layers::FeatureMap prepare_eval(const layers::FeatureMap& img,
                                const layers::FeatureMap& mean);

layers::FeatureMap flip_image(const layers::FeatureMap& img);
/// Shift by (dy, dx), filling the exposed border with zeros.
layers::FeatureMap translate_image(const layers::FeatureMap& img, int dy, int dx);

/// One flip decision and one (dx, dy) translation drawn per batch and
/// applied to every image after mean subtraction; translation fills with
/// zeros.
std::vector<layers::FeatureMap> augment_batch(
    const std::vector<layers::FeatureMap>& images, const AugmentSpec& spec,
    std::mt19937_64& rng);

Real top1_error(const std::vector<int>& predictions, const std::vector<int>& labels);

/// Top-1 error over the split: eval-mode batch norm, no augmentation.
Real evaluate(network::Network& net, const data::Dataset& split, int batch_size = 64);

struct GradCheckGroup {
  std::string name;
  int checked = 0;
  int skipped_unstable = 0;
  Real max_rel_err = 0;
  Real tolerance = 0;
  // A group with no stable measurement cannot be certified.
  bool passed() const { return checked > 0 && max_rel_err <= tolerance; }
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  bool all_passed() const;
};

struct GradCheckOptions {
  int samples_per_group = 200;
  Real epsilon = Real(1e-5);
  int batch_size = 2;
  std::uint64_t seed = 42;
  Real tol_classifier = Real(1e-6);
  Real tol_bn = Real(1e-5);
  Real tol_dict = Real(1e-3);
  Real tol_lambda = Real(1e-3);
  // Fault injection for testing the harness itself: flips the sign of every
  // analytic lambda1 gradient before comparing.
  bool mutate_lambda_sign = false;
};

/// Central finite differences against the analytic gradients on a random
/// input batch, grouped as: one group per dictionary, one per lambda1, all
/// BN scales/shifts pooled, classifier pooled. The probe copies the network
/// and randomizes the classifier and BN affine parameters first (a zero
/// classifier would make the loss constant in everything upstream). A
/// measurement only counts when every layer's active sets are identical
/// across the +eps/-eps/base forwards (the gradient is undefined across
/// support changes); unstable draws are skipped and resampled. Solver runs
/// at the tight gradient-check tolerance.
GradCheckReport gradcheck(const network::Network& net,
                          const std::vector<layers::FeatureMap>& inputs,
                          const std::vector<int>& labels,
                          const GradCheckOptions& opts);

/// Convenience: random inputs in [-0.5, 0.5] and random labels shaped for
/// the network's configured input.
GradCheckReport gradcheck_random(const network::Network& net,
                                 const GradCheckOptions& opts);

} // namespace scn::training

#endif
