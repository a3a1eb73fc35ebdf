#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "scn/network.hpp"

using namespace scn;
using layers::FeatureMap;
using network::Network;
using network::NetworkConfig;

namespace {

NetworkConfig toy_config(int input_c = 1, int input_hw = 8) {
  NetworkConfig cfg;
  cfg.sections = {{4, 8, 1, false}, {8, 16, 1, true}};
  cfg.width_multiplier = 2;
  cfg.num_classes = 10;
  cfg.input_channels = input_c;
  cfg.input_height = input_hw;
  cfg.input_width = input_hw;
  cfg.elastic_net_defaults.lambda1 = Real(0.1);
  cfg.elastic_net_defaults.lambda2 = Real(0.01);
  return cfg;
}

std::vector<FeatureMap> random_batch(const NetworkConfig& cfg, int n,
                                     std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  std::vector<FeatureMap> batch;
  for (int s = 0; s < n; ++s) {
    FeatureMap img(cfg.input_channels, cfg.input_height, cfg.input_width);
    for (Real& v : img.data) v = static_cast<Real>(uni(rng));
    batch.push_back(std::move(img));
  }
  return batch;
}

} // namespace

TEST_CASE("parameter counts reproduce the published model sizes") {
  struct Row {
    int k;
    double millions;
  };
  for (const Row row : {Row{1, 0.17}, Row{2, 0.35}, Row{4, 0.69}}) {
    NetworkConfig cfg = NetworkConfig::cifar_scn(row.k, 10);
    Network net = network::build_scn(cfg, 1);
    const double count = static_cast<double>(net.learnable_parameter_count());
    CHECK(count >= row.millions * 1e6 * 0.9);
    CHECK(count <= row.millions * 1e6 * 1.1);
    CHECK(net.sparse_layer_count() == 14);
    CHECK(cfg.sparse_layer_count() == 14);
    CHECK(net.classifier.weight.rows() == 10);
  }
}

TEST_CASE("builds are bitwise deterministic in the seed") {
  NetworkConfig cfg = toy_config();
  Network a = network::build_scn(cfg, 42);
  Network b = network::build_scn(cfg, 42);
  REQUIRE(a.blocks.size() == b.blocks.size());
  for (std::size_t h = 0; h < a.blocks.size(); ++h) {
    CHECK(std::memcmp(a.blocks[h].sc.dict.data(), b.blocks[h].sc.dict.data(),
                      a.blocks[h].sc.dict.size() * sizeof(Real)) == 0);
    CHECK(a.blocks[h].sc.cfg.params.lambda1 == b.blocks[h].sc.cfg.params.lambda1);
  }
  Network c = network::build_scn(cfg, 43);
  CHECK(std::memcmp(a.blocks[0].sc.dict.data(), c.blocks[0].sc.dict.data(),
                    a.blocks[0].sc.dict.size() * sizeof(Real)) != 0);
}

TEST_CASE("config validation names the offender") {
  NetworkConfig bad = toy_config();
  bad.sections[1].expansion_width = bad.sections[1].reduction_width - 1;
  CHECK_THROWS_WITH_AS(network::build_scn(bad, 1), doctest::Contains("section 2"),
                       ConfigError);

  NetworkConfig bad2 = toy_config();
  bad2.elastic_net_defaults.lambda2 = Real(0);
  CHECK_THROWS_AS(network::build_scn(bad2, 1), ConfigError);
}

TEST_CASE("geometry: stride plan halves the spatial grid at section boundaries") {
  NetworkConfig cfg = NetworkConfig::cifar_scn(1, 10);
  Network net = network::build_scn(cfg, 3);
  std::mt19937_64 rng(4);
  auto batch = random_batch(cfg, 1, rng);
  network::ForwardCaches caches;
  network::forward(net, batch, layers::Mode::kTrain, &caches);
  // 32x32 through sections 1/2/3 -> 32, 16, 8; final pooling sees 8x8.
  CHECK(caches.sc[0][0].out_height == 32);
  CHECK(caches.sc[6][0].out_height == 16);
  CHECK(caches.sc[10][0].out_height == 8);
  CHECK(caches.bn.back().normalized[0].height == 8);
}

TEST_CASE("mnist variant scales the first section") {
  NetworkConfig cfg = NetworkConfig::mnist_scn();
  Network net = network::build_scn(cfg, 1);
  CHECK(net.blocks[0].sc.cfg.out_channels == 8);
  CHECK(net.blocks[0].sc.cfg.in_channels == 1);
  CHECK(net.sparse_layer_count() == 14);
}

TEST_CASE("forward on a zero image produces finite logits") {
  NetworkConfig cfg = toy_config();
  Network net = network::build_scn(cfg, 7);
  std::vector<FeatureMap> batch(1, FeatureMap(1, 8, 8));
  const auto logits = network::forward(net, batch, layers::Mode::kEval, nullptr);
  REQUIRE(logits.size() == 1);
  for (Real v : logits[0]) CHECK(std::isfinite(v));
}

TEST_CASE("eval forward is idempotent and leaves the network untouched") {
  NetworkConfig cfg = toy_config();
  Network net = network::build_scn(cfg, 8);
  std::mt19937_64 rng(9);
  auto batch = random_batch(cfg, 2, rng);

  const Vector warm_before = net.blocks[0].sc.eig_warm;
  const Vector run_mean_before = net.blocks[0].bn.running_mean;
  const auto a = network::forward(net, batch, layers::Mode::kEval, nullptr);
  const auto b = network::forward(net, batch, layers::Mode::kEval, nullptr);
  for (std::size_t s = 0; s < a.size(); ++s) CHECK(a[s] == b[s]);
  CHECK(net.blocks[0].sc.eig_warm == warm_before);
  CHECK(net.blocks[0].bn.running_mean == run_mean_before);
}

TEST_CASE("train-mode forward passes a per-layer optimality audit") {
  NetworkConfig cfg = toy_config();
  Network net = network::build_scn(cfg, 10);
  std::mt19937_64 rng(11);
  auto batch = random_batch(cfg, 2, rng);
  network::ForwardCaches caches;
  network::SolverTolerance tight{100, Real(1e-6)};
  network::forward(net, batch, layers::Mode::kTrain, &caches, &tight);

  for (std::size_t h = 0; h < net.blocks.size(); ++h)
    for (const auto& cache : caches.sc[h])
      for (std::size_t col = 0; col < cache.codes.size(); ++col) {
        Vector x(cache.patches.rows());
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = cache.patches(i, col);
        CHECK(sparse::check_kkt(net.blocks[h].sc.dict, x,
                                net.blocks[h].sc.cfg.params,
                                cache.codes[col].alpha) <= 1e-5);
      }

  std::mt19937_64 audit_rng(1);
  CHECK(network::kkt_spot_audit(net, caches, 100, audit_rng) <= 1e-5);
}

TEST_CASE("plain update: zero gradients leave parameters unchanged") {
  NetworkConfig cfg = toy_config();
  Network net = network::build_scn(cfg, 12);
  Network before = net;
  auto grads = network::NetworkGrads::zeros_like(net);
  network::apply_weight_decay_and_project(net, grads, Real(0), Real(0.5));
  for (std::size_t h = 0; h < net.blocks.size(); ++h)
    CHECK(std::memcmp(net.blocks[h].sc.dict.data(), before.blocks[h].sc.dict.data(),
                      net.blocks[h].sc.dict.size() * sizeof(Real)) == 0);
}

TEST_CASE("plain update: pure decay shrinks dictionaries by exactly 1 - rho*mu") {
  NetworkConfig cfg = toy_config();
  Network net = network::build_scn(cfg, 13);
  Network before = net;
  auto grads = network::NetworkGrads::zeros_like(net);
  const Real rho = Real(0.2), mu = Real(0.1);
  network::apply_weight_decay_and_project(net, grads, mu, rho);
  const Real factor = Real(1) - rho * mu;
  for (std::size_t h = 0; h < net.blocks.size(); ++h)
    for (std::size_t i = 0; i < net.blocks[h].sc.dict.size(); ++i)
      CHECK(net.blocks[h].sc.dict.storage()[i] ==
            doctest::Approx(before.blocks[h].sc.dict.storage()[i] * factor)
                .epsilon(1e-15));
  // BN and classifier carry no decay.
  CHECK(net.blocks[0].bn.scale == before.blocks[0].bn.scale);
}

TEST_CASE("lambda1 projects onto its positivity floor") {
  NetworkConfig cfg = toy_config();
  cfg.elastic_net_defaults.lambda1 = Real(0.01);
  Network net = network::build_scn(cfg, 14);
  auto grads = network::NetworkGrads::zeros_like(net);
  grads.blocks[0].lambda1 = Real(0.03); // rho = 1 pushes 0.01 to -0.02
  network::apply_weight_decay_and_project(net, grads, Real(0), Real(1));
  CHECK(net.blocks[0].sc.cfg.params.lambda1 == network::kLambdaFloor);
  for (std::size_t h = 1; h < net.blocks.size(); ++h)
    CHECK(net.blocks[h].sc.cfg.params.lambda1 == Real(0.01));
}

TEST_CASE("lambda1 stays above the floor under many random updates") {
  NetworkConfig cfg = toy_config();
  Network net = network::build_scn(cfg, 15);
  auto velocity = network::NetworkGrads::zeros_like(net);
  std::mt19937_64 rng(16);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int step = 0; step < 200; ++step) {
    auto grads = network::NetworkGrads::zeros_like(net);
    for (auto& b : grads.blocks) b.lambda1 = static_cast<Real>(gauss(rng));
    network::sgd_step(net, grads, velocity, Real(0.05), Real(5e-4), Real(0.9));
    for (const auto& b : net.blocks)
      CHECK(b.sc.cfg.params.lambda1 >= network::kLambdaFloor);
  }
}

TEST_CASE("momentum step with momentum zero equals the plain update") {
  NetworkConfig cfg = toy_config();
  Network a = network::build_scn(cfg, 17);
  Network b = a;
  std::mt19937_64 rng(18);
  auto grads = network::NetworkGrads::zeros_like(a);
  for (auto& blk : grads.blocks) {
    blk.dict = testing::random_matrix(blk.dict.rows(), blk.dict.cols(), rng);
    blk.lambda1 = Real(0.01);
  }
  auto velocity = network::NetworkGrads::zeros_like(a);
  network::sgd_step(a, grads, velocity, Real(0.1), Real(1e-3), Real(0));
  network::apply_weight_decay_and_project(b, grads, Real(1e-3), Real(0.1));
  for (std::size_t h = 0; h < a.blocks.size(); ++h)
    CHECK(std::memcmp(a.blocks[h].sc.dict.data(), b.blocks[h].sc.dict.data(),
                      a.blocks[h].sc.dict.size() * sizeof(Real)) == 0);
}

TEST_CASE("checkpoint round-trips through the float32 container") {
  NetworkConfig cfg = toy_config();
  Network net = network::build_scn(cfg, 19);
  net.blocks[0].sc.cfg.params.lambda1 = Real(0.125); // exactly representable
  const std::string path = "/tmp/scn_test_checkpoint.scn";
  network::save_checkpoint(net, path);
  Network loaded = network::load_checkpoint(path);

  CHECK(network::to_config_text(loaded.cfg) == network::to_config_text(net.cfg));
  CHECK(loaded.blocks[0].sc.cfg.params.lambda1 == Real(0.125));
  for (std::size_t h = 0; h < net.blocks.size(); ++h)
    for (std::size_t i = 0; i < net.blocks[h].sc.dict.size(); ++i)
      CHECK(loaded.blocks[h].sc.dict.storage()[i] ==
            static_cast<Real>(
                static_cast<float>(net.blocks[h].sc.dict.storage()[i])));
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint magic and manifest validation") {
  NetworkConfig cfg = toy_config();
  Network net = network::build_scn(cfg, 20);
  const std::string path = "/tmp/scn_test_checkpoint2.scn";
  network::save_checkpoint(net, path);

  NetworkConfig other = toy_config();
  other.num_classes = 7;
  CHECK_THROWS_WITH_AS(network::load_checkpoint(path, &other),
                       doctest::Contains("manifest mismatch"), FormatError);

  // Corrupt the magic.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_WITH_AS(network::load_checkpoint(path), doctest::Contains("magic"),
                       FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("gradient views mirror learnable parameter views") {
  NetworkConfig cfg = toy_config();
  Network net = network::build_scn(cfg, 21);
  auto grads = network::NetworkGrads::zeros_like(net);
  auto pviews = network::parameter_views(net);
  auto gviews = network::gradient_views(grads);
  std::size_t learnable_count = 0, learnable_sizes = 0, total = 0;
  for (const auto& v : pviews) {
    total += v.size;
    if (v.learnable) {
      ++learnable_count;
      learnable_sizes += v.size;
    }
  }
  CHECK(gviews.size() == learnable_count);
  CHECK(net.learnable_parameter_count() == learnable_sizes);
  CHECK(total > learnable_sizes); // running statistics are stored but not learnable
}
