#ifndef SCN_NETWORK_HPP
#define SCN_NETWORK_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "scn/common.hpp"
#include "scn/config_text.hpp"
#include "scn/layers.hpp"
#include "scn/linalg.hpp"
#include "scn/sparse_solver.hpp"

namespace scn::network {

/// One bottleneck section: an expansion layer (wide dictionary) followed by
/// a reduction layer (slim dictionary), stacked `repeat` times.
struct BottleneckConfig {
  int reduction_width = 0;  // M
  int expansion_width = 0;  // M * K
  int repeat = 1;           // P
  bool stride_at_first = false;
};

struct NetworkConfig {
  std::vector<BottleneckConfig> sections;
  int width_multiplier = 1;     // K
  int first_layer_channels = 0; // overrides the first expansion width; 0 = section value
  int num_classes = 10;
  sparse::ElasticNetParams elastic_net_defaults; // lambda1 = per-layer init value
  int input_channels = 3;
  int input_height = 32;
  int input_width = 32;

  int sparse_layer_count() const;
  void validate() const; // throws ConfigError naming the offending field/section

  /// The (16,16K)x3-(32,32K)x2-(64,64K)x2 stack with subsampling at the
  /// last two section boundaries.
  static NetworkConfig cifar_scn(int k, int num_classes);
  /// Same stack at K=4 but with 8 filters at the first layer, 28x28 input.
  static NetworkConfig mnist_scn();
};

/// Canonical `[network]` text block; doubles as the checkpoint manifest.
std::string to_config_text(const NetworkConfig& cfg);
NetworkConfig network_config_from_text(const std::string& text);
NetworkConfig network_config_from_section(const configtext::Section& sec);

struct SparseCodingLayerState {
  layers::SCLayerConfig cfg; // cfg.params.lambda1 is the learnable scalar
  linalg::Matrix dict;
  Vector eig_warm; // dominant-eigenvector warm start, updated while training
};

struct Block {
  SparseCodingLayerState sc;
  layers::BatchNormState bn;
};

struct Classifier {
  linalg::Matrix weight; // num_classes x feature_dim
  Vector bias;
};

struct Network {
  NetworkConfig cfg;
  std::vector<Block> blocks;
  Classifier classifier;

  int sparse_layer_count() const { return static_cast<int>(blocks.size()); }
  /// Dictionaries + per-layer lambda1 + BN scale/shift + classifier.
  /// Running statistics are state, not learnable parameters.
  std::size_t learnable_parameter_count() const;
};

/// Builds the layer stack and initializes it: dictionaries i.i.d. Gaussian
/// with standard deviation 1/sqrt(fan-in), lambda1 from the config default,
/// BN at identity, zero classifier. Deterministic for a given seed.
Network build_scn(const NetworkConfig& cfg, std::uint64_t seed);

struct ForwardCaches {
  std::vector<std::vector<layers::SCLayerCache>> sc; // [block][sample]
  std::vector<layers::BatchNormCache> bn;            // [block]
  std::vector<Vector> features;                      // pooled, per sample
};

/// Solver effort knob: training uses the per-layer params as configured;
/// the finite-difference harness tightens them.
struct SolverTolerance {
  int max_iter = 0;
  Real rel_tol = 0;
};

/// Runs the layer graph over a minibatch and returns per-sample logits.
/// Train mode records caches and updates BN running statistics and the
/// per-layer eigenvector warm starts; eval mode leaves the network
/// untouched. `caches` may be null in eval mode only.
std::vector<Vector> forward(Network& net, const std::vector<layers::FeatureMap>& batch,
                            layers::Mode mode, ForwardCaches* caches,
                            const SolverTolerance* tighten = nullptr);

struct NetworkGrads {
  struct BlockGrads {
    linalg::Matrix dict;
    Real lambda1 = 0;
    Vector bn_scale, bn_shift;
  };
  std::vector<BlockGrads> blocks;
  linalg::Matrix cls_weight;
  Vector cls_bias;

  static NetworkGrads zeros_like(const Network& net);
};

struct BackwardResult {
  Real loss = 0;   // mean cross-entropy over the batch
  int correct = 0; // top-1 hits
  NetworkGrads grads;
};

/// Mean softmax cross-entropy over the batch and its gradients with respect
/// to every learnable parameter, chained through BN and the sparse-coding
/// fixed points.
BackwardResult backward_batch(const Network& net, const ForwardCaches& caches,
                              const std::vector<Vector>& logits,
                              const std::vector<int>& labels);

inline constexpr Real kLambdaFloor = Real(1e-6);

/// Plain gradient step with weight decay on dictionaries and lambda1 only,
/// plus the positivity projection lambda1 >= kLambdaFloor. BN and classifier
/// parameters update without decay.
void apply_weight_decay_and_project(Network& net, const NetworkGrads& grads,
                                    Real mu, Real rho);

/// Momentum variant used by the trainer; momentum = 0 reduces exactly to
/// apply_weight_decay_and_project.
void sgd_step(Network& net, const NetworkGrads& grads, NetworkGrads& velocity,
              Real rho, Real mu, Real momentum);

/// Named views over every stored array (learnable parameters plus BN
/// running statistics), in a fixed order shared by checkpoints and the
/// gradient-check harness.
struct ParamView {
  std::string name;
  std::vector<std::size_t> shape;
  Real* data = nullptr;
  std::size_t size = 0;
  bool learnable = true;
};
std::vector<ParamView> parameter_views(Network& net);
std::vector<ParamView> gradient_views(NetworkGrads& grads); // learnable only, same names

/// Versioned checkpoint: "SCN1" magic, the canonical network config text as
/// manifest, then named little-endian float32 arrays with explicit shapes.
void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path,
                        const NetworkConfig* expected = nullptr);

/// Worst first-order optimality violation over `draws` random (block,
/// sample, location) triples of a cached forward pass.
Real kkt_spot_audit(const Network& net, const ForwardCaches& caches, int draws,
                    std::mt19937_64& rng);

} // namespace scn::network

#endif
