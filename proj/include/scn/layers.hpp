#ifndef SCN_LAYERS_HPP
#define SCN_LAYERS_HPP

#include <map>
#include <utility>
#include <vector>

#include "scn/common.hpp"
#include "scn/linalg.hpp"
#include "scn/sparse_solver.hpp"

namespace scn::layers {

/// 3-D activation tensor (channels x height x width), the unit flowing
/// between layers. Channel-major storage, row-major within a channel.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  Vector data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, Real(0)) {}

  Real& at(int c, int i, int j) {
    return data[(static_cast<std::size_t>(c) * height + i) * width + j];
  }
  Real at(int c, int i, int j) const {
    return data[(static_cast<std::size_t>(c) * height + i) * width + j];
  }
  std::size_t size() const { return data.size(); }
  bool same_shape(const FeatureMap& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

enum class Mode { kTrain, kEval };

struct SCLayerConfig {
  int in_channels = 0;
  int out_channels = 0;
  int window = 3; // square neighborhood side
  int stride = 1; // 1 or 2
  int pad = 1;    // (window-1)/2 keeps spatial size at stride 1
  sparse::ElasticNetParams params;

  int patch_dim() const { return in_channels * window * window; }
};

inline int output_extent(int in_extent, int stride) {
  return (in_extent + stride - 1) / stride;
}

/// Per-forward record consumed exactly once by the backward pass.
struct SCLayerCache {
  linalg::Matrix patches;                // patch_dim x locations, one column each
  std::vector<sparse::SparseCode> codes; // one per location, row-major over grid
  int in_height = 0, in_width = 0;
  int out_height = 0, out_width = 0;
  // Triangular factors of (D_L^T D_L + lambda2 I) memoized per distinct
  // active set; filled lazily by sc_backward, one map per worker.
  mutable std::vector<std::map<std::vector<int>, linalg::Cholesky>> factor_memo;
};

/// Gathers the window x window neighborhood of every output location into a
/// column (channel-major, then row-major within the window); zero padding
/// outside the borders. Output grid is ceil(extent / stride) per axis.
linalg::Matrix extract_patches(const FeatureMap& input, const SCLayerConfig& cfg);

/// Exact adjoint of extract_patches: accumulates the columns of `cols` back
/// onto an input-shaped map (overlapping windows sum).
FeatureMap scatter_patches(const linalg::Matrix& cols, const SCLayerConfig& cfg,
                           int in_height, int in_width);

/// Sparse-coding layer forward: every output channel vector is the
/// nonnegative elastic-net code of the local patch against `dict`.
std::pair<FeatureMap, SCLayerCache> sc_forward(const FeatureMap& input,
                                               const linalg::Matrix& dict,
                                               const SCLayerConfig& cfg,
                                               const sparse::SolverPrecompute& pre);

struct SCGrads {
  linalg::Matrix dict;      // accumulated over locations
  Real lambda1 = 0;         // scalar: -sum_{j in L} gamma_j per location
  FeatureMap input;         // scattered through the patch-extraction adjoint
};

/// Fixed-point backward through the layer's codes: per location solves
/// (D_L^T D_L + lambda2 I) gamma_L = (dL/dalpha)_L with gamma zero off the
/// active set, then accumulates
///   dL/dD      += -D gamma alpha^T + (x - D alpha) gamma^T
///   dL/dlambda1 += -sum gamma_L
///   dL/dx       = D gamma  (scattered back to the input map).
SCGrads sc_backward(const SCLayerCache& cache, const linalg::Matrix& dict,
                    const SCLayerConfig& cfg, const FeatureMap& grad_out);

struct BatchNormState {
  Vector scale, shift;
  Vector running_mean, running_var;
  Real momentum = Real(0.9);
  Real epsilon = Real(1e-5);

  BatchNormState() = default;
  explicit BatchNormState(int channels)
      : scale(channels, Real(1)), shift(channels, Real(0)),
        running_mean(channels, Real(0)), running_var(channels, Real(1)) {}
  int channels() const { return static_cast<int>(scale.size()); }
};

struct BatchNormCache {
  Vector inv_std;                      // per channel, batch statistics
  std::vector<FeatureMap> normalized;  // x-hat per sample
};

/// Per-channel normalization with learnable scale/shift. Training mode uses
/// minibatch statistics over (batch x spatial) and folds them into the
/// running estimates; eval mode uses the running estimates unchanged.
std::vector<FeatureMap> batchnorm_forward(const std::vector<FeatureMap>& input,
                                          BatchNormState& state, Mode mode,
                                          BatchNormCache* cache);

struct BatchNormGrads {
  std::vector<FeatureMap> input;
  Vector scale, shift;
};

BatchNormGrads batchnorm_backward(const BatchNormCache& cache,
                                  const BatchNormState& state,
                                  const std::vector<FeatureMap>& grad_out);

/// Per-channel spatial mean.
Vector global_avg_pool_forward(const FeatureMap& input);

/// Broadcasts grad/(height*width) back over the map.
FeatureMap global_avg_pool_backward(const Vector& grad, int channels, int height,
                                    int width);

struct ClassifierGrads {
  Vector features;
  linalg::Matrix weights;
  Vector bias;
};

Vector linear_logits(const Vector& features, const linalg::Matrix& weights,
                     const Vector& bias);

/// Numerically stable softmax cross-entropy on top of a linear map. Returns
/// the loss; fills `grads` when non-null.
Real linear_softmax_ce(const Vector& features, const linalg::Matrix& weights,
                       const Vector& bias, int label, ClassifierGrads* grads);

} // namespace scn::layers

#endif
