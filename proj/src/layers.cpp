#include "scn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace scn::layers {

namespace {

void validate_layer_input(const FeatureMap& input, const SCLayerConfig& cfg) {
  if (input.channels != cfg.in_channels)
    throw ContractError("sparse-coding layer: input channel count mismatch");
  if (cfg.window < 1 || cfg.stride < 1 || cfg.pad < 0)
    throw ContractError("sparse-coding layer: bad geometry");
}

} // namespace

linalg::Matrix extract_patches(const FeatureMap& input, const SCLayerConfig& cfg) {
  validate_layer_input(input, cfg);
  const int out_h = output_extent(input.height, cfg.stride);
  const int out_w = output_extent(input.width, cfg.stride);
  const int k = cfg.window;
  linalg::Matrix cols(cfg.patch_dim(), static_cast<std::size_t>(out_h) * out_w);
  for (int c = 0; c < input.channels; ++c) {
    for (int wi = 0; wi < k; ++wi) {
      for (int wj = 0; wj < k; ++wj) {
        const std::size_t row = (static_cast<std::size_t>(c) * k + wi) * k + wj;
        Real* dst = cols.data() + row * cols.cols();
        for (int oi = 0; oi < out_h; ++oi) {
          const int ii = oi * cfg.stride + wi - cfg.pad;
          for (int oj = 0; oj < out_w; ++oj, ++dst) {
            const int jj = oj * cfg.stride + wj - cfg.pad;
            *dst = (ii >= 0 && ii < input.height && jj >= 0 && jj < input.width)
                       ? input.at(c, ii, jj)
                       : Real(0);
          }
        }
      }
    }
  }
  return cols;
}

FeatureMap scatter_patches(const linalg::Matrix& cols, const SCLayerConfig& cfg,
                           int in_height, int in_width) {
  const int out_h = output_extent(in_height, cfg.stride);
  const int out_w = output_extent(in_width, cfg.stride);
  if (cols.rows() != static_cast<std::size_t>(cfg.patch_dim()) ||
      cols.cols() != static_cast<std::size_t>(out_h) * out_w)
    throw ContractError("scatter_patches: column matrix shape mismatch");
  const int k = cfg.window;
  FeatureMap out(cfg.in_channels, in_height, in_width);
  for (int c = 0; c < cfg.in_channels; ++c) {
    for (int wi = 0; wi < k; ++wi) {
      for (int wj = 0; wj < k; ++wj) {
        const std::size_t row = (static_cast<std::size_t>(c) * k + wi) * k + wj;
        const Real* src = cols.data() + row * cols.cols();
        for (int oi = 0; oi < out_h; ++oi) {
          const int ii = oi * cfg.stride + wi - cfg.pad;
          if (ii < 0 || ii >= in_height) {
            src += out_w;
            continue;
          }
          for (int oj = 0; oj < out_w; ++oj, ++src) {
            const int jj = oj * cfg.stride + wj - cfg.pad;
            if (jj >= 0 && jj < in_width) out.at(c, ii, jj) += *src;
          }
        }
      }
    }
  }
  return out;
}

std::pair<FeatureMap, SCLayerCache> sc_forward(const FeatureMap& input,
                                               const linalg::Matrix& dict,
                                               const SCLayerConfig& cfg,
                                               const sparse::SolverPrecompute& pre) {
  validate_layer_input(input, cfg);
  if (dict.rows() != static_cast<std::size_t>(cfg.patch_dim()) ||
      dict.cols() != static_cast<std::size_t>(cfg.out_channels))
    throw ContractError("sc_forward: dictionary shape mismatch");

  SCLayerCache cache;
  cache.in_height = input.height;
  cache.in_width = input.width;
  cache.out_height = output_extent(input.height, cfg.stride);
  cache.out_width = output_extent(input.width, cfg.stride);
  cache.patches = extract_patches(input, cfg);

  const std::size_t locations = cache.patches.cols();
  const std::size_t m = cache.patches.rows();
  cache.codes.resize(locations);
  FeatureMap out(cfg.out_channels, cache.out_height, cache.out_width);

  parallel_for_chunks(locations, [&](std::size_t begin, std::size_t end, int) {
    Vector x(m);
    for (std::size_t col = begin; col < end; ++col) {
      for (std::size_t i = 0; i < m; ++i) x[i] = cache.patches(i, col);
      try {
        cache.codes[col] = sparse::fista_nonneg(dict, x, cfg.params, pre);
      } catch (const Error& e) {
        const int oi = static_cast<int>(col) / cache.out_width;
        const int oj = static_cast<int>(col) % cache.out_width;
        std::ostringstream os;
        os << "sc_forward at location (" << oi << "," << oj << "): " << e.what();
        throw NumericalError(os.str());
      }
      const Vector& alpha = cache.codes[col].alpha;
      const std::size_t spatial =
          static_cast<std::size_t>(cache.out_height) * cache.out_width;
      for (int ch = 0; ch < cfg.out_channels; ++ch)
        out.data[static_cast<std::size_t>(ch) * spatial + col] = alpha[ch];
    }
  });
  return {std::move(out), std::move(cache)};
}

SCGrads sc_backward(const SCLayerCache& cache, const linalg::Matrix& dict,
                    const SCLayerConfig& cfg, const FeatureMap& grad_out) {
  const std::size_t locations = cache.patches.cols();
  if (grad_out.channels != cfg.out_channels ||
      grad_out.height != cache.out_height || grad_out.width != cache.out_width ||
      cache.codes.size() != locations)
    throw ContractError("sc_backward: cache/config mismatch");
  const std::size_t m = cache.patches.rows();
  const std::size_t n = dict.cols();
  const std::size_t spatial = locations;

  const int workers = worker_count();
  std::vector<linalg::Matrix> dict_partials(workers);
  std::vector<Real> lambda_partials(workers, Real(0));
  for (auto& p : dict_partials) p = linalg::Matrix(m, n);
  cache.factor_memo.assign(workers, {});
  linalg::Matrix grad_cols(m, locations); // dL/dx per patch, disjoint columns

  parallel_for_chunks(locations, [&](std::size_t begin, std::size_t end, int worker) {
    linalg::Matrix& grad_dict = dict_partials[worker];
    auto& memo = cache.factor_memo[worker];
    Vector g_sub, gamma_sub, u(m), r(m);
    for (std::size_t col = begin; col < end; ++col) {
      const sparse::SparseCode& code = cache.codes[col];
      const std::vector<int>& active = code.active_set;
      if (active.empty()) continue;

      g_sub.resize(active.size());
      for (std::size_t k = 0; k < active.size(); ++k)
        g_sub[k] =
            grad_out.data[static_cast<std::size_t>(active[k]) * spatial + col];

      auto it = memo.find(active);
      if (it == memo.end()) {
        it = memo
                 .emplace(active, linalg::Cholesky::factor(sparse::gram_active(
                                      dict, active, cfg.params.lambda2)))
                 .first;
      }
      gamma_sub = it->second.solve(g_sub);

      // u = D_L gamma_L, r = x - D_L alpha_L
      std::fill(u.begin(), u.end(), Real(0));
      for (std::size_t i = 0; i < m; ++i) r[i] = cache.patches(i, col);
      for (std::size_t k = 0; k < active.size(); ++k) {
        const Real* dcol = dict.data() + active[k];
        const Real gk = gamma_sub[k];
        const Real ak = code.alpha[static_cast<std::size_t>(active[k])];
        for (std::size_t i = 0; i < m; ++i) {
          const Real dij = dcol[i * n];
          u[i] += dij * gk;
          r[i] -= dij * ak;
        }
      }
      for (std::size_t i = 0; i < m; ++i) grad_cols(i, col) = u[i];

      for (std::size_t k = 0; k < active.size(); ++k) {
        const Real ak = code.alpha[static_cast<std::size_t>(active[k])];
        const Real gk = gamma_sub[k];
        Real* gd = grad_dict.data() + active[k];
        for (std::size_t i = 0; i < m; ++i)
          gd[i * n] += r[i] * gk - u[i] * ak;
        lambda_partials[worker] -= gk;
      }
    }
  });

  SCGrads grads;
  grads.dict = std::move(dict_partials[0]);
  grads.lambda1 = lambda_partials[0];
  for (int w = 1; w < workers; ++w) {
    for (std::size_t i = 0; i < grads.dict.size(); ++i)
      grads.dict.storage()[i] += dict_partials[w].storage()[i];
    grads.lambda1 += lambda_partials[w];
  }
  grads.input = scatter_patches(grad_cols, cfg, cache.in_height, cache.in_width);
  return grads;
}

std::vector<FeatureMap> batchnorm_forward(const std::vector<FeatureMap>& input,
                                          BatchNormState& state, Mode mode,
                                          BatchNormCache* cache) {
  if (input.empty()) throw ContractError("batchnorm_forward: empty batch");
  const int channels = state.channels();
  for (const auto& map : input)
    if (map.channels != channels || !map.same_shape(input.front()))
      throw ContractError("batchnorm_forward: inconsistent batch shapes");

  const int h = input.front().height, w = input.front().width;
  const std::size_t per_map = static_cast<std::size_t>(h) * w;
  const Real count = static_cast<Real>(per_map * input.size());

  Vector mean(channels, Real(0)), var(channels, Real(0));
  if (mode == Mode::kTrain) {
    for (const auto& map : input)
      for (int c = 0; c < channels; ++c) {
        const Real* p = map.data.data() + static_cast<std::size_t>(c) * per_map;
        Real s = 0;
        for (std::size_t i = 0; i < per_map; ++i) s += p[i];
        mean[c] += s;
      }
    for (int c = 0; c < channels; ++c) mean[c] /= count;
    for (const auto& map : input)
      for (int c = 0; c < channels; ++c) {
        const Real* p = map.data.data() + static_cast<std::size_t>(c) * per_map;
        Real s = 0;
        for (std::size_t i = 0; i < per_map; ++i) {
          const Real d = p[i] - mean[c];
          s += d * d;
        }
        var[c] += s;
      }
    for (int c = 0; c < channels; ++c) var[c] /= count;
    for (int c = 0; c < channels; ++c) {
      state.running_mean[c] =
          state.momentum * state.running_mean[c] + (Real(1) - state.momentum) * mean[c];
      state.running_var[c] =
          state.momentum * state.running_var[c] + (Real(1) - state.momentum) * var[c];
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  Vector inv_std(channels);
  for (int c = 0; c < channels; ++c)
    inv_std[c] = Real(1) / std::sqrt(var[c] + state.epsilon);

  std::vector<FeatureMap> out(input.size());
  if (cache) {
    cache->inv_std = inv_std;
    cache->normalized.assign(input.size(), FeatureMap());
  }
  for (std::size_t s = 0; s < input.size(); ++s) {
    out[s] = FeatureMap(channels, h, w);
    FeatureMap* norm = nullptr;
    if (cache) {
      cache->normalized[s] = FeatureMap(channels, h, w);
      norm = &cache->normalized[s];
    }
    for (int c = 0; c < channels; ++c) {
      const Real* p = input[s].data.data() + static_cast<std::size_t>(c) * per_map;
      Real* q = out[s].data.data() + static_cast<std::size_t>(c) * per_map;
      Real* nq = norm ? norm->data.data() + static_cast<std::size_t>(c) * per_map
                      : nullptr;
      for (std::size_t i = 0; i < per_map; ++i) {
        const Real xhat = (p[i] - mean[c]) * inv_std[c];
        q[i] = state.scale[c] * xhat + state.shift[c];
        if (nq) nq[i] = xhat;
      }
    }
  }
  return out;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache,
                                  const BatchNormState& state,
                                  const std::vector<FeatureMap>& grad_out) {
  if (cache.normalized.size() != grad_out.size() || grad_out.empty())
    throw ContractError("batchnorm_backward: cache/batch mismatch");
  const int channels = state.channels();
  const int h = grad_out.front().height, w = grad_out.front().width;
  const std::size_t per_map = static_cast<std::size_t>(h) * w;
  const Real count = static_cast<Real>(per_map * grad_out.size());

  BatchNormGrads grads;
  grads.scale.assign(channels, Real(0));
  grads.shift.assign(channels, Real(0));
  for (std::size_t s = 0; s < grad_out.size(); ++s)
    for (int c = 0; c < channels; ++c) {
      const Real* dy = grad_out[s].data.data() + static_cast<std::size_t>(c) * per_map;
      const Real* xh =
          cache.normalized[s].data.data() + static_cast<std::size_t>(c) * per_map;
      Real sum_dy = 0, sum_dy_xh = 0;
      for (std::size_t i = 0; i < per_map; ++i) {
        sum_dy += dy[i];
        sum_dy_xh += dy[i] * xh[i];
      }
      grads.shift[c] += sum_dy;
      grads.scale[c] += sum_dy_xh;
    }

  grads.input.assign(grad_out.size(), FeatureMap());
  for (std::size_t s = 0; s < grad_out.size(); ++s) {
    grads.input[s] = FeatureMap(channels, h, w);
    for (int c = 0; c < channels; ++c) {
      const Real* dy = grad_out[s].data.data() + static_cast<std::size_t>(c) * per_map;
      const Real* xh =
          cache.normalized[s].data.data() + static_cast<std::size_t>(c) * per_map;
      Real* dx = grads.input[s].data.data() + static_cast<std::size_t>(c) * per_map;
      const Real k = state.scale[c] * cache.inv_std[c];
      const Real mean_dy = grads.shift[c] / count;
      const Real mean_dy_xh = grads.scale[c] / count;
      for (std::size_t i = 0; i < per_map; ++i)
        dx[i] = k * (dy[i] - mean_dy - xh[i] * mean_dy_xh);
    }
  }
  return grads;
}

Vector global_avg_pool_forward(const FeatureMap& input) {
  const std::size_t per_map = static_cast<std::size_t>(input.height) * input.width;
  Vector out(input.channels, Real(0));
  for (int c = 0; c < input.channels; ++c) {
    const Real* p = input.data.data() + static_cast<std::size_t>(c) * per_map;
    Real s = 0;
    for (std::size_t i = 0; i < per_map; ++i) s += p[i];
    out[c] = s / static_cast<Real>(per_map);
  }
  return out;
}

FeatureMap global_avg_pool_backward(const Vector& grad, int channels, int height,
                                    int width) {
  if (grad.size() != static_cast<std::size_t>(channels))
    throw ContractError("global_avg_pool_backward: channel mismatch");
  FeatureMap out(channels, height, width);
  const std::size_t per_map = static_cast<std::size_t>(height) * width;
  for (int c = 0; c < channels; ++c) {
    const Real v = grad[c] / static_cast<Real>(per_map);
    Real* p = out.data.data() + static_cast<std::size_t>(c) * per_map;
    for (std::size_t i = 0; i < per_map; ++i) p[i] = v;
  }
  return out;
}

Vector linear_logits(const Vector& features, const linalg::Matrix& weights,
                     const Vector& bias) {
  if (weights.cols() != features.size() || weights.rows() != bias.size())
    throw ContractError("linear_logits: shape mismatch");
  Vector z = linalg::matvec(weights, features);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += bias[i];
  return z;
}

Real linear_softmax_ce(const Vector& features, const linalg::Matrix& weights,
                       const Vector& bias, int label, ClassifierGrads* grads) {
  const Vector z = linear_logits(features, weights, bias);
  if (label < 0 || static_cast<std::size_t>(label) >= z.size())
    throw ContractError("linear_softmax_ce: label out of range");

  const Real zmax = *std::max_element(z.begin(), z.end());
  Real sum = 0;
  for (Real v : z) sum += std::exp(v - zmax);
  const Real lse = zmax + std::log(sum);
  const Real loss = lse - z[static_cast<std::size_t>(label)];

  if (grads) {
    Vector dz(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) dz[i] = std::exp(z[i] - lse);
    dz[static_cast<std::size_t>(label)] -= Real(1);

    grads->bias = dz;
    grads->weights = linalg::Matrix(weights.rows(), weights.cols());
    for (std::size_t i = 0; i < weights.rows(); ++i)
      for (std::size_t j = 0; j < weights.cols(); ++j)
        grads->weights(i, j) = dz[i] * features[j];
    grads->features.assign(features.size(), Real(0));
    for (std::size_t i = 0; i < weights.rows(); ++i)
      for (std::size_t j = 0; j < weights.cols(); ++j)
        grads->features[j] += weights(i, j) * dz[i];
  }
  return loss;
}

} // namespace scn::layers
