#include "scn/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "scn/config_text.hpp"

namespace scn::network {

int NetworkConfig::sparse_layer_count() const {
  int repeats = 0;
  for (const auto& s : sections) repeats += s.repeat;
  return 2 * repeats;
}

void NetworkConfig::validate() const {
  if (sections.empty()) throw ConfigError("network: no bottleneck sections");
  for (std::size_t i = 0; i < sections.size(); ++i) {
    const auto& s = sections[i];
    const std::string where = "network section " + std::to_string(i + 1);
    if (s.reduction_width < 1 || s.expansion_width < 1)
      throw ConfigError(where + ": widths must be positive");
    // K = 1 stacks degenerate to equal widths; wider multipliers must expand.
    if (s.expansion_width < s.reduction_width)
      throw ConfigError(where + ": expansion width must be at least the reduction width");
    if (s.repeat < 1) throw ConfigError(where + ": repeat must be >= 1");
  }
  if (first_layer_channels < 0)
    throw ConfigError("network: first_layer_channels must be >= 0");
  if (num_classes < 2) throw ConfigError("network: need at least 2 classes");
  if (input_channels < 1 || input_height < 1 || input_width < 1)
    throw ConfigError("network: bad input shape");
  if (!(elastic_net_defaults.lambda1 > Real(0)))
    throw ConfigError("network: lambda1 must be > 0");
  if (!(elastic_net_defaults.lambda2 > Real(0)))
    throw ConfigError("network: lambda2 must be > 0");
  if (elastic_net_defaults.max_iter < 1)
    throw ConfigError("network: fista_max_iter must be >= 1");
  // Spatial geometry: every stride-2 layer halves (rounding up); the final
  // map must stay at least 1x1.
  int h = input_height, w = input_width;
  for (std::size_t i = 1; i < sections.size(); ++i)
    if (sections[i].stride_at_first) {
      h = layers::output_extent(h, 2);
      w = layers::output_extent(w, 2);
    }
  if (h < 1 || w < 1) throw ConfigError("network: input too small for the stride plan");
}

NetworkConfig NetworkConfig::cifar_scn(int k, int num_classes) {
  NetworkConfig cfg;
  cfg.width_multiplier = k;
  cfg.sections = {{16, 16 * k, 3, false}, {32, 32 * k, 2, true}, {64, 64 * k, 2, true}};
  cfg.first_layer_channels = 0;
  cfg.num_classes = num_classes;
  cfg.input_channels = 3;
  cfg.input_height = 32;
  cfg.input_width = 32;
  return cfg;
}

NetworkConfig NetworkConfig::mnist_scn() {
  NetworkConfig cfg = cifar_scn(4, 10);
  cfg.first_layer_channels = 8;
  cfg.sections[0].reduction_width = 2; // 8 / K
  cfg.sections[0].expansion_width = 8;
  cfg.input_channels = 1;
  cfg.input_height = 28;
  cfg.input_width = 28;
  return cfg;
}

std::string to_config_text(const NetworkConfig& cfg) {
  using configtext::format_real;
  configtext::Document doc;
  auto& sec = doc.get_or_add("network");
  for (const auto& s : cfg.sections) {
    std::string v = std::to_string(s.reduction_width) + " " +
                    std::to_string(s.expansion_width) + " " +
                    std::to_string(s.repeat);
    if (s.stride_at_first) v += " stride2";
    sec.entries.push_back({"section", v});
  }
  sec.entries.push_back({"width_multiplier", std::to_string(cfg.width_multiplier)});
  sec.entries.push_back(
      {"first_layer_channels", std::to_string(cfg.first_layer_channels)});
  sec.entries.push_back({"num_classes", std::to_string(cfg.num_classes)});
  sec.entries.push_back({"input_shape", std::to_string(cfg.input_channels) + " " +
                                            std::to_string(cfg.input_height) + " " +
                                            std::to_string(cfg.input_width)});
  sec.entries.push_back({"lambda1", format_real(cfg.elastic_net_defaults.lambda1)});
  sec.entries.push_back({"lambda2", format_real(cfg.elastic_net_defaults.lambda2)});
  sec.entries.push_back(
      {"fista_max_iter", std::to_string(cfg.elastic_net_defaults.max_iter)});
  sec.entries.push_back(
      {"fista_rel_tol", format_real(cfg.elastic_net_defaults.rel_tol)});
  return configtext::serialize(doc);
}

NetworkConfig network_config_from_text(const std::string& text) {
  const configtext::Document doc = configtext::parse(text);
  const configtext::Section* sec = doc.find("network");
  if (!sec) throw ConfigError("missing [network] section");
  return network_config_from_section(*sec);
}

NetworkConfig network_config_from_section(const configtext::Section& section) {
  const configtext::Section* sec = &section;
  NetworkConfig cfg;
  cfg.sections.clear();
  for (const auto& e : sec->entries) {
    const std::string ctx = "[network] " + e.key;
    if (e.key == "section") {
      std::istringstream is(e.value);
      BottleneckConfig b;
      std::string tail;
      if (!(is >> b.reduction_width >> b.expansion_width >> b.repeat))
        throw ConfigError(ctx + ": expected 'M E P [stride2]', got '" + e.value + "'");
      if (is >> tail) {
        if (tail != "stride2")
          throw ConfigError(ctx + ": unknown flag '" + tail + "'");
        b.stride_at_first = true;
      }
      cfg.sections.push_back(b);
    } else if (e.key == "width_multiplier") {
      cfg.width_multiplier = static_cast<int>(configtext::parse_int(e.value, ctx));
    } else if (e.key == "first_layer_channels") {
      cfg.first_layer_channels = static_cast<int>(configtext::parse_int(e.value, ctx));
    } else if (e.key == "num_classes") {
      cfg.num_classes = static_cast<int>(configtext::parse_int(e.value, ctx));
    } else if (e.key == "input_shape") {
      std::istringstream is(e.value);
      if (!(is >> cfg.input_channels >> cfg.input_height >> cfg.input_width))
        throw ConfigError(ctx + ": expected 'channels height width'");
    } else if (e.key == "lambda1") {
      cfg.elastic_net_defaults.lambda1 = configtext::parse_real(e.value, ctx);
    } else if (e.key == "lambda2") {
      cfg.elastic_net_defaults.lambda2 = configtext::parse_real(e.value, ctx);
    } else if (e.key == "fista_max_iter") {
      cfg.elastic_net_defaults.max_iter =
          static_cast<int>(configtext::parse_int(e.value, ctx));
    } else if (e.key == "fista_rel_tol") {
      cfg.elastic_net_defaults.rel_tol = configtext::parse_real(e.value, ctx);
    } else {
      throw ConfigError("[network]: unknown key '" + e.key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

std::size_t Network::learnable_parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) {
    n += b.sc.dict.size();
    n += 1; // lambda1
    n += b.bn.scale.size() + b.bn.shift.size();
  }
  n += classifier.weight.size() + classifier.bias.size();
  return n;
}

Network build_scn(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Network net;
  net.cfg = cfg;
  std::mt19937_64 rng(seed);

  int in_channels = cfg.input_channels;
  bool first_layer = true;
  for (std::size_t si = 0; si < cfg.sections.size(); ++si) {
    const BottleneckConfig& section = cfg.sections[si];
    for (int rep = 0; rep < section.repeat; ++rep) {
      int expansion = section.expansion_width;
      if (first_layer && cfg.first_layer_channels > 0)
        expansion = cfg.first_layer_channels;
      const int stride = (rep == 0 && section.stride_at_first) ? 2 : 1;

      const int widths[2] = {expansion, section.reduction_width};
      for (int half = 0; half < 2; ++half) {
        Block block;
        block.sc.cfg.in_channels = in_channels;
        block.sc.cfg.out_channels = widths[half];
        block.sc.cfg.window = 3;
        block.sc.cfg.stride = half == 0 ? stride : 1;
        block.sc.cfg.pad = 1;
        block.sc.cfg.params = cfg.elastic_net_defaults;

        const std::size_t m = static_cast<std::size_t>(block.sc.cfg.patch_dim());
        const std::size_t n = static_cast<std::size_t>(widths[half]);
        block.sc.dict = linalg::Matrix(m, n);
        std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(double(m)));
        for (std::size_t i = 0; i < block.sc.dict.size(); ++i)
          block.sc.dict.storage()[i] = static_cast<Real>(gauss(rng));

        block.bn = layers::BatchNormState(widths[half]);
        net.blocks.push_back(std::move(block));
        in_channels = widths[half];
      }
      first_layer = false;
    }
  }

  net.classifier.weight = linalg::Matrix(cfg.num_classes, in_channels);
  net.classifier.bias.assign(cfg.num_classes, Real(0));
  return net;
}

std::vector<Vector> forward(Network& net, const std::vector<layers::FeatureMap>& batch,
                            layers::Mode mode, ForwardCaches* caches,
                            const SolverTolerance* tighten) {
  if (batch.empty()) throw ContractError("forward: empty batch");
  if (mode == layers::Mode::kTrain && !caches)
    throw ContractError("forward: train mode requires caches");
  for (const auto& img : batch)
    if (img.channels != net.cfg.input_channels || img.height != net.cfg.input_height ||
        img.width != net.cfg.input_width)
      throw ContractError("forward: input shape does not match network config");

  const std::size_t bsz = batch.size();
  if (caches) {
    caches->sc.assign(net.blocks.size(), {});
    caches->bn.assign(net.blocks.size(), {});
    caches->features.assign(bsz, {});
  }

  std::vector<layers::FeatureMap> acts = batch;
  for (std::size_t h = 0; h < net.blocks.size(); ++h) {
    Block& block = net.blocks[h];
    layers::SCLayerConfig cfg = block.sc.cfg;
    if (tighten) {
      cfg.params.max_iter = tighten->max_iter;
      cfg.params.rel_tol = tighten->rel_tol;
    }

    Vector warm_copy = block.sc.eig_warm;
    Vector* warm = mode == layers::Mode::kTrain ? &block.sc.eig_warm : &warm_copy;
    const sparse::SolverPrecompute pre =
        sparse::make_precompute(block.sc.dict, cfg.params.lambda2, warm);

    std::vector<layers::FeatureMap> outs(bsz);
    std::vector<layers::SCLayerCache> local_caches(bsz);
    for (std::size_t s = 0; s < bsz; ++s) {
      auto [out, cache] = layers::sc_forward(acts[s], block.sc.dict, cfg, pre);
      outs[s] = std::move(out);
      local_caches[s] = std::move(cache);
    }
    if (caches) caches->sc[h] = std::move(local_caches);

    acts = layers::batchnorm_forward(outs, block.bn, mode,
                                     caches ? &caches->bn[h] : nullptr);
  }

  std::vector<Vector> logits(bsz);
  for (std::size_t s = 0; s < bsz; ++s) {
    Vector feat = layers::global_avg_pool_forward(acts[s]);
    logits[s] =
        layers::linear_logits(feat, net.classifier.weight, net.classifier.bias);
    if (caches) caches->features[s] = std::move(feat);
  }
  return logits;
}

NetworkGrads NetworkGrads::zeros_like(const Network& net) {
  NetworkGrads g;
  g.blocks.resize(net.blocks.size());
  for (std::size_t h = 0; h < net.blocks.size(); ++h) {
    const Block& b = net.blocks[h];
    g.blocks[h].dict = linalg::Matrix(b.sc.dict.rows(), b.sc.dict.cols());
    g.blocks[h].lambda1 = 0;
    g.blocks[h].bn_scale.assign(b.bn.scale.size(), Real(0));
    g.blocks[h].bn_shift.assign(b.bn.shift.size(), Real(0));
  }
  g.cls_weight =
      linalg::Matrix(net.classifier.weight.rows(), net.classifier.weight.cols());
  g.cls_bias.assign(net.classifier.bias.size(), Real(0));
  return g;
}

BackwardResult backward_batch(const Network& net, const ForwardCaches& caches,
                              const std::vector<Vector>& logits,
                              const std::vector<int>& labels) {
  const std::size_t bsz = logits.size();
  if (labels.size() != bsz || caches.features.size() != bsz ||
      caches.sc.size() != net.blocks.size() || caches.bn.size() != net.blocks.size())
    throw ContractError("backward_batch: cache/batch mismatch");

  BackwardResult res;
  res.grads = NetworkGrads::zeros_like(net);
  const Real inv_b = Real(1) / static_cast<Real>(bsz);

  std::vector<layers::FeatureMap> grad_maps(bsz);
  for (std::size_t s = 0; s < bsz; ++s) {
    layers::ClassifierGrads cg;
    const Real loss = layers::linear_softmax_ce(
        caches.features[s], net.classifier.weight, net.classifier.bias, labels[s], &cg);
    res.loss += loss * inv_b;
    const auto pred = std::distance(
        logits[s].begin(), std::max_element(logits[s].begin(), logits[s].end()));
    if (static_cast<int>(pred) == labels[s]) ++res.correct;

    for (std::size_t i = 0; i < cg.weights.size(); ++i)
      res.grads.cls_weight.storage()[i] += cg.weights.storage()[i] * inv_b;
    for (std::size_t i = 0; i < cg.bias.size(); ++i)
      res.grads.cls_bias[i] += cg.bias[i] * inv_b;

    const layers::FeatureMap& top = caches.bn.back().normalized[s];
    for (Real& v : cg.features) v *= inv_b;
    grad_maps[s] =
        layers::global_avg_pool_backward(cg.features, top.channels, top.height, top.width);
  }

  for (std::size_t h = net.blocks.size(); h-- > 0;) {
    const Block& block = net.blocks[h];
    layers::BatchNormGrads bn_grads =
        layers::batchnorm_backward(caches.bn[h], block.bn, grad_maps);
    res.grads.blocks[h].bn_scale = std::move(bn_grads.scale);
    res.grads.blocks[h].bn_shift = std::move(bn_grads.shift);

    for (std::size_t s = 0; s < bsz; ++s) {
      layers::SCGrads sg = layers::sc_backward(caches.sc[h][s], block.sc.dict,
                                               block.sc.cfg, bn_grads.input[s]);
      for (std::size_t i = 0; i < sg.dict.size(); ++i)
        res.grads.blocks[h].dict.storage()[i] += sg.dict.storage()[i];
      res.grads.blocks[h].lambda1 += sg.lambda1;
      grad_maps[s] = std::move(sg.input);
    }
  }
  return res;
}

namespace {

void plain_update(Real* p, const Real* g, std::size_t n, Real rho, Real mu) {
  for (std::size_t i = 0; i < n; ++i) p[i] -= rho * (g[i] + mu * p[i]);
}

void momentum_update(Real* p, const Real* g, Real* v, std::size_t n, Real rho,
                     Real mu, Real momentum) {
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = momentum * v[i] + g[i] + mu * p[i];
    p[i] -= rho * v[i];
  }
}

} // namespace

void apply_weight_decay_and_project(Network& net, const NetworkGrads& grads,
                                    Real mu, Real rho) {
  for (std::size_t h = 0; h < net.blocks.size(); ++h) {
    Block& b = net.blocks[h];
    const auto& g = grads.blocks[h];
    plain_update(b.sc.dict.data(), g.dict.data(), b.sc.dict.size(), rho, mu);
    Real& l1 = b.sc.cfg.params.lambda1;
    l1 = std::max(l1 - rho * (g.lambda1 + mu * l1), kLambdaFloor);
    plain_update(b.bn.scale.data(), g.bn_scale.data(), b.bn.scale.size(), rho, Real(0));
    plain_update(b.bn.shift.data(), g.bn_shift.data(), b.bn.shift.size(), rho, Real(0));
  }
  plain_update(net.classifier.weight.data(), grads.cls_weight.data(),
               net.classifier.weight.size(), rho, Real(0));
  plain_update(net.classifier.bias.data(), grads.cls_bias.data(),
               net.classifier.bias.size(), rho, Real(0));
}

void sgd_step(Network& net, const NetworkGrads& grads, NetworkGrads& velocity,
              Real rho, Real mu, Real momentum) {
  if (momentum == Real(0)) {
    apply_weight_decay_and_project(net, grads, mu, rho);
    return;
  }
  for (std::size_t h = 0; h < net.blocks.size(); ++h) {
    Block& b = net.blocks[h];
    const auto& g = grads.blocks[h];
    auto& v = velocity.blocks[h];
    momentum_update(b.sc.dict.data(), g.dict.data(), v.dict.data(), b.sc.dict.size(),
                    rho, mu, momentum);
    Real& l1 = b.sc.cfg.params.lambda1;
    v.lambda1 = momentum * v.lambda1 + g.lambda1 + mu * l1;
    l1 = std::max(l1 - rho * v.lambda1, kLambdaFloor);
    momentum_update(b.bn.scale.data(), g.bn_scale.data(), v.bn_scale.data(),
                    b.bn.scale.size(), rho, Real(0), momentum);
    momentum_update(b.bn.shift.data(), g.bn_shift.data(), v.bn_shift.data(),
                    b.bn.shift.size(), rho, Real(0), momentum);
  }
  momentum_update(net.classifier.weight.data(), grads.cls_weight.data(),
                  velocity.cls_weight.data(), net.classifier.weight.size(), rho,
                  Real(0), momentum);
  momentum_update(net.classifier.bias.data(), grads.cls_bias.data(),
                  velocity.cls_bias.data(), net.classifier.bias.size(), rho, Real(0),
                  momentum);
}

namespace {

std::string block_name(std::size_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "block%02zu", h);
  return buf;
}

} // namespace

std::vector<ParamView> parameter_views(Network& net) {
  std::vector<ParamView> views;
  for (std::size_t h = 0; h < net.blocks.size(); ++h) {
    Block& b = net.blocks[h];
    const std::string base = block_name(h);
    views.push_back({base + ".dict",
                     {b.sc.dict.rows(), b.sc.dict.cols()},
                     b.sc.dict.data(),
                     b.sc.dict.size(),
                     true});
    views.push_back({base + ".lambda1", {1}, &b.sc.cfg.params.lambda1, 1, true});
    views.push_back(
        {base + ".bn.scale", {b.bn.scale.size()}, b.bn.scale.data(), b.bn.scale.size(), true});
    views.push_back(
        {base + ".bn.shift", {b.bn.shift.size()}, b.bn.shift.data(), b.bn.shift.size(), true});
    views.push_back({base + ".bn.running_mean",
                     {b.bn.running_mean.size()},
                     b.bn.running_mean.data(),
                     b.bn.running_mean.size(),
                     false});
    views.push_back({base + ".bn.running_var",
                     {b.bn.running_var.size()},
                     b.bn.running_var.data(),
                     b.bn.running_var.size(),
                     false});
  }
  views.push_back({"classifier.weight",
                   {net.classifier.weight.rows(), net.classifier.weight.cols()},
                   net.classifier.weight.data(),
                   net.classifier.weight.size(),
                   true});
  views.push_back({"classifier.bias",
                   {net.classifier.bias.size()},
                   net.classifier.bias.data(),
                   net.classifier.bias.size(),
                   true});
  return views;
}

std::vector<ParamView> gradient_views(NetworkGrads& grads) {
  std::vector<ParamView> views;
  for (std::size_t h = 0; h < grads.blocks.size(); ++h) {
    auto& b = grads.blocks[h];
    const std::string base = block_name(h);
    views.push_back({base + ".dict",
                     {b.dict.rows(), b.dict.cols()},
                     b.dict.data(),
                     b.dict.size(),
                     true});
    views.push_back({base + ".lambda1", {1}, &b.lambda1, 1, true});
    views.push_back(
        {base + ".bn.scale", {b.bn_scale.size()}, b.bn_scale.data(), b.bn_scale.size(), true});
    views.push_back(
        {base + ".bn.shift", {b.bn_shift.size()}, b.bn_shift.data(), b.bn_shift.size(), true});
  }
  views.push_back({"classifier.weight",
                   {grads.cls_weight.rows(), grads.cls_weight.cols()},
                   grads.cls_weight.data(),
                   grads.cls_weight.size(),
                   true});
  views.push_back({"classifier.bias",
                   {grads.cls_bias.size()},
                   grads.cls_bias.data(),
                   grads.cls_bias.size(),
                   true});
  return views;
}

namespace {

constexpr char kMagic[4] = {'S', 'C', 'N', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw FormatError("checkpoint: truncated while reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

float read_f32(std::istream& in, const std::string& what) {
  const std::uint32_t bits = read_u32(in, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

} // namespace

void save_checkpoint(const Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("checkpoint: cannot open '" + path + "' for writing");
  out.write(kMagic, 4);

  const std::string manifest = to_config_text(net.cfg);
  write_u32(out, static_cast<std::uint32_t>(manifest.size()));
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));

  auto views = parameter_views(const_cast<Network&>(net));
  write_u32(out, static_cast<std::uint32_t>(views.size()));
  for (const auto& v : views) {
    write_u32(out, static_cast<std::uint32_t>(v.name.size()));
    out.write(v.name.data(), static_cast<std::streamsize>(v.name.size()));
    write_u32(out, static_cast<std::uint32_t>(v.shape.size()));
    for (std::size_t d : v.shape) write_u32(out, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < v.size; ++i)
      write_f32(out, static_cast<float>(v.data[i]));
  }
  if (!out) throw Error("checkpoint: write failed for '" + path + "'");
}

Network load_checkpoint(const std::string& path, const NetworkConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot open '" + path + "'");

  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic in '" + path + "' (want SCN1)");

  const std::uint32_t manifest_len = read_u32(in, "manifest length");
  std::string manifest(manifest_len, '\0');
  if (!in.read(manifest.data(), manifest_len))
    throw FormatError("checkpoint: truncated manifest");

  if (expected) {
    const std::string want = to_config_text(*expected);
    if (want != manifest) {
      std::istringstream a(manifest), b(want);
      std::string la, lb;
      int line = 0;
      while (true) {
        ++line;
        const bool ga = static_cast<bool>(std::getline(a, la));
        const bool gb = static_cast<bool>(std::getline(b, lb));
        if (!ga && !gb) break;
        if (la != lb || ga != gb) {
          throw FormatError("checkpoint: architecture manifest mismatch at line " +
                            std::to_string(line) + ": checkpoint has '" +
                            (ga ? la : "<end>") + "', requested config has '" +
                            (gb ? lb : "<end>") + "'");
        }
      }
    }
  }

  Network net = build_scn(network_config_from_text(manifest), 0);
  auto views = parameter_views(net);

  const std::uint32_t count = read_u32(in, "array count");
  if (count != views.size())
    throw FormatError("checkpoint: expected " + std::to_string(views.size()) +
                      " arrays, file has " + std::to_string(count));
  for (auto& v : views) {
    const std::uint32_t name_len = read_u32(in, "array name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      throw FormatError("checkpoint: truncated array name");
    if (name != v.name)
      throw FormatError("checkpoint: array order mismatch, expected '" + v.name +
                        "', found '" + name + "'");
    const std::uint32_t ndim = read_u32(in, name + " rank");
    if (ndim != v.shape.size())
      throw FormatError("checkpoint: rank mismatch for '" + name + "'");
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::uint32_t extent = read_u32(in, name + " shape");
      if (extent != v.shape[d])
        throw FormatError("checkpoint: shape mismatch for '" + name + "'");
      total *= extent;
    }
    for (std::size_t i = 0; i < total; ++i)
      v.data[i] = static_cast<Real>(read_f32(in, name + " data"));
  }
  return net;
}

Real kkt_spot_audit(const Network& net, const ForwardCaches& caches, int draws,
                    std::mt19937_64& rng) {
  if (caches.sc.empty()) throw ContractError("kkt_spot_audit: no cached forward");
  Real worst = 0;
  std::uniform_int_distribution<std::size_t> pick_block(0, caches.sc.size() - 1);
  for (int t = 0; t < draws; ++t) {
    const std::size_t h = pick_block(rng);
    const auto& per_sample = caches.sc[h];
    std::uniform_int_distribution<std::size_t> pick_sample(0, per_sample.size() - 1);
    const auto& cache = per_sample[pick_sample(rng)];
    std::uniform_int_distribution<std::size_t> pick_col(0, cache.patches.cols() - 1);
    const std::size_t col = pick_col(rng);

    Vector x(cache.patches.rows());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = cache.patches(i, col);
    worst = std::max(worst, sparse::check_kkt(net.blocks[h].sc.dict, x,
                                              net.blocks[h].sc.cfg.params,
                                              cache.codes[col].alpha));
  }
  return worst;
}

} // namespace scn::network
