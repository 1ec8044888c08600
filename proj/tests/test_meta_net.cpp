#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "core/meta_net.hpp"
#include "oracles.hpp"

using namespace metalora;
namespace fs = std::filesystem;

TEST_CASE("activations") {
  CHECK(apply_activation(Activation::Identity, -2.5) == -2.5);
  CHECK(apply_activation(Activation::Relu, -2.5) == 0.0);
  CHECK(apply_activation(Activation::Relu, 1.5) == 1.5);
  CHECK(apply_activation(Activation::Tanh, 0.5) == std::tanh(0.5));
  CHECK(activation_from_name("tanh") == Activation::Tanh);
  CHECK(activation_name(Activation::Relu) == std::string("relu"));
  CHECK_THROWS_AS(activation_from_name("sigmoid"), ArgError);
}

TEST_CASE("raw flatten keeps row-major order") {
  const DenseTensor x({2, 2, 1}, {1, 2, 3, 4});
  const DenseTensor f = extract_features(x, FeatureExtractor::raw_flatten());
  REQUIRE(f.shape() == std::vector<std::size_t>{4});
  CHECK(f.values() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("pooled conv with an identity-ish kernel averages the input") {
  // 1x1 kernel, single weight 1: feature = spatial mean of the channel.
  FeatureExtractor fe;
  fe.kind = FeatureExtractor::Kind::PooledConv;
  fe.kernel = DenseTensor({1, 1, 1, 1}, {1.0});
  const DenseTensor x({2, 2, 1}, {1, 2, 3, 4});
  const DenseTensor f = extract_features(x, fe);
  REQUIRE(f.shape() == std::vector<std::size_t>{1});
  CHECK(f[0] == doctest::Approx(2.5));
}

TEST_CASE("pooled conv feature count and determinism") {
  Rng rng1(5), rng2(5);
  const FeatureExtractor a = FeatureExtractor::pooled_conv(3, 2, 4, rng1);
  const FeatureExtractor b = FeatureExtractor::pooled_conv(3, 2, 4, rng2);
  CHECK(a.kernel.shape() == std::vector<std::size_t>{3, 3, 2, 4});
  CHECK(a.kernel.values() == b.kernel.values());

  Rng rng(9);
  const DenseTensor x = testutil::rand_tensor(rng, {5, 5, 2});
  CHECK(extract_features(x, a).shape() == std::vector<std::size_t>{4});
}

TEST_CASE("mapping net: hidden geometry and seed reshape") {
  Rng rng(3);
  const MappingNet net = init_mapping_net(6, 4, {2, 2}, 2, 8, Activation::Tanh, rng);
  REQUIRE(net.layers.size() == 3);
  CHECK(net.layers[0].W.shape() == std::vector<std::size_t>{6, 8});
  CHECK(net.layers[0].act == Activation::Tanh);
  CHECK(net.layers[0].b.values() == std::vector<double>(8, 0.0));
  CHECK(net.layers[1].W.shape() == std::vector<std::size_t>{8, 8});
  CHECK(net.layers[2].W.shape() == std::vector<std::size_t>{8, 4});
  CHECK(net.layers[2].act == Activation::Identity);
  CHECK(net.input_dim() == 6);
  CHECK(net.output_dim() == 4);
  // The 4 outputs land row-major in the requested 2x2 seed.
  const DenseTensor s = mapping_forward(net, DenseTensor::full({6}, 0.7));
  REQUIRE(s.shape() == std::vector<std::size_t>{2, 2});
  MappingNet flat = net;
  flat.seed_shape.clear();
  const DenseTensor v = mapping_forward(flat, DenseTensor::full({6}, 0.7));
  REQUIRE(v.shape() == std::vector<std::size_t>{4});
  CHECK(s.values() == v.values());
}

TEST_CASE("mapping net: single identity layer is the identity map") {
  MappingNet net;
  net.layers.push_back({DenseTensor::identity(3), DenseTensor::zeros({3}), Activation::Identity});
  const DenseTensor f({3}, {0.25, -1.0, 2.0});
  CHECK(mapping_forward(net, f).values() == f.values());
}

TEST_CASE("mapping net: hand-computed two-layer case") {
  MappingNet net;
  net.layers.push_back({DenseTensor({2, 2}, {1, 0, 1, 1}), DenseTensor({2}, {0, 0.5}),
                        Activation::Tanh});
  net.layers.push_back({DenseTensor({2, 1}, {2, -1}), DenseTensor({1}, {0.25}),
                        Activation::Identity});
  const DenseTensor f({2}, {0.5, -0.25});
  const double h0 = std::tanh(0.5 - 0.25);
  const double h1 = std::tanh(-0.25 + 0.5);
  const double want = 2 * h0 - h1 + 0.25;
  const DenseTensor got = mapping_forward(net, f);
  REQUIRE(got.shape() == std::vector<std::size_t>{1});
  CHECK(got[0] == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("mapping net: dimension mismatch rejected") {
  Rng rng(2);
  const MappingNet net = init_mapping_net(3, 2, {}, 1, 4, Activation::Tanh, rng);
  CHECK_THROWS_AS(mapping_forward(net, DenseTensor({4})), ShapeError);
  CHECK_THROWS_AS(init_mapping_net(3, 4, {2, 3}, 1, 4, Activation::Tanh, rng), ShapeError);
}

TEST_CASE("mapping net save/load round trip") {
  Rng rng(13);
  MappingNet net = init_mapping_net(5, 4, {2, 2}, 1, 6, Activation::Tanh, rng);
  for (auto& layer : net.layers) {
    for (std::size_t i = 0; i < layer.W.size(); ++i) layer.W[i] = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < layer.b.size(); ++i) layer.b[i] = rng.uniform(-1.0, 1.0);
  }
  const fs::path dir = fs::temp_directory_path() / "metalora_mapping_test";
  save_mapping_net(dir, net);
  const MappingNet back = load_mapping_net(dir);
  REQUIRE(back.layers.size() == net.layers.size());
  CHECK(back.seed_shape == net.seed_shape);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    CHECK(back.layers[l].W.values() == net.layers[l].W.values());
    CHECK(back.layers[l].b.values() == net.layers[l].b.values());
    CHECK(back.layers[l].act == net.layers[l].act);
  }
}
