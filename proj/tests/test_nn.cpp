#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "dynanet/nn.hpp"

using namespace dynanet;
using T = Tensor<double>;

namespace {

template <class Scalar>
Tensor<Scalar> run_block(const BlockSpec& spec, const ParamStore<Scalar>& store, const Tensor<Scalar>& x) {
  Tape<Scalar> tape;
  ParamVars<Scalar> vars(tape, store, false);
  return forward_block(spec, vars, "", tape.constant(x)).value();
}

std::string le32(std::uint32_t v) {
  std::string s;
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  return s;
}

// One f32 tensor "a" of shape [1] holding 1.0, written out by hand.
std::string tiny_file() {
  std::string b = "DYNW";
  b += le32(1);
  b.push_back('\0');
  b += le32(1);
  b += std::string("\x01\x00", 2) + "a";
  b += std::string("\x01\x01", 2);
  b += le32(1);
  b += le32(0x3F800000u);
  return b;
}

}  // namespace

TEST_CASE("parameter layout per block kind") {
  using K = BlockKind;
  const auto names = [](BlockSpec s) { return block_param_names(s, "p."); };
  CHECK(names({K::ConvINRelu, 3, 4, 3, 1, 1}) ==
        std::vector<std::string>{"p.conv.weight", "p.conv.bias", "p.norm.gain", "p.norm.shift"});
  CHECK(names({K::OutputConv, 4, 3, 3, 1, 1}) == std::vector<std::string>{"p.conv.weight", "p.conv.bias"});
  CHECK(names({K::ResidualBlock, 4, 4, 3, 1, 1}).size() == 8);
  CHECK(names(tuning_block(4)).size() == 6);

  const auto store = init_params<float>(BlockSpec{K::ConvINRelu, 3, 5, 3, 2, 1}, 1);
  CHECK(store.at("conv.weight").value.shape() == Shape{5, 3, 3, 3});
  CHECK(store.at("conv.bias").value.shape() == Shape{5});
  CHECK(store.numel() == 5 * 3 * 9 + 5 + 5 + 5);
}

TEST_CASE("He initialization statistics and zero-initialized tuning output") {
  const auto store = init_params<double>(BlockSpec{BlockKind::ConvINRelu, 64, 64, 3, 1, 1}, 11);
  const auto& w = store.at("conv.weight").value;
  double sum = 0, sq = 0;
  for (Index i = 0; i < w.size(); ++i) {
    sum += w[i];
    sq += w[i] * w[i];
  }
  const double n = static_cast<double>(w.size());
  const double expected = 2.0 / (64 * 9);
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sq / n == doctest::Approx(expected).epsilon(0.03));
  CHECK(store.at("norm.gain").value == T::constant({64}, 1.0));

  const auto tb = init_params<double>(tuning_block(4), 3);
  CHECK(tb.at("conv3.weight").value == T({4, 4, 3, 3}));
  Rng rng(5);
  T x({4, 6, 6});
  for (Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1);
  CHECK(run_block(tuning_block(4), tb, x) == T({4, 6, 6}));
}

TEST_CASE("ConvINRelu on a hand-computed example") {
  BlockSpec spec{BlockKind::ConvINRelu, 1, 1, 1, 1, 1};
  ParamStore<double> store;
  store.add("conv.weight", T({1, 1, 1, 1}, {2}));
  store.add("conv.bias", T({1}, {0}));
  store.add("norm.gain", T({1}, {1}));
  store.add("norm.shift", T({1}, {0}));
  const auto y = run_block(spec, store, T({1, 2, 2}, {1, 2, 3, 4}));
  // conv gives 2,4,6,8: mean 5, variance 5.
  const double s = std::sqrt(5.0 + kInstanceNormEps);
  CHECK(y[0] == 0);
  CHECK(y[1] == 0);
  CHECK(y[2] == doctest::Approx(1 / s));
  CHECK(y[3] == doctest::Approx(3 / s));
}

TEST_CASE("residual block with zero convs is the identity") {
  BlockSpec spec{BlockKind::ResidualBlock, 2, 2, 3, 1, 1};
  auto store = init_params<double>(spec, 9);
  for (const char* name : {"conv1.weight", "conv2.weight"}) store.at(name).value = T({2, 2, 3, 3});
  T x({2, 4, 4});
  for (Index i = 0; i < x.size(); ++i) x[i] = 0.1 * static_cast<double>(i) - 1.0;
  CHECK(run_block(spec, store, x) == x);
}

TEST_CASE("output conv squashes an affine map") {
  BlockSpec spec{BlockKind::OutputConv, 2, 1, 1, 1, 1};
  ParamStore<double> store;
  store.add("conv.weight", T({1, 2, 1, 1}, {0.5, -1.0}));
  store.add("conv.bias", T({1}, {0.25}));
  const auto y = run_block(spec, store, T({2, 1, 2}, {1, 2, 3, -4}));
  const double pre0 = 0.5 * 1 - 1.0 * 3 + 0.25, pre1 = 0.5 * 2 + 4.0 + 0.25;
  CHECK(y[0] == doctest::Approx(0.5 * (std::tanh(pre0) + 1)));
  CHECK(y[1] == doctest::Approx(0.5 * (std::tanh(pre1) + 1)));
}

TEST_CASE("block output shapes") {
  using K = BlockKind;
  const T x({4, 8, 8});
  CHECK(run_block(BlockSpec{K::ConvINRelu, 4, 6, 3, 2, 1}, init_params<double>(BlockSpec{K::ConvINRelu, 4, 6, 3, 2, 1}, 1), x)
            .shape() == Shape{6, 4, 4});
  const BlockSpec up{K::UpsampleConv, 4, 2, 3, 1, 2};
  CHECK(run_block(up, init_params<double>(up, 1), x).shape() == Shape{2, 16, 16});
  CHECK_THROWS_AS(run_block(up, init_params<double>(up, 1), T({3, 8, 8})), ShapeError);
}

TEST_CASE("backbone validation") {
  CHECK_NOTHROW(image_backbone().validate());
  CHECK_NOTHROW(regression_backbone().validate());
  CHECK(fixed_backbone().insertion_points.empty());
  CHECK(image_backbone().channels_at(3) == 32);

  auto bad = image_backbone();
  bad.insertion_points = {4, 3};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = image_backbone();
  bad.insertion_points = {9};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = image_backbone();
  bad.blocks[1].in_channels = 8;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = image_backbone();
  bad.blocks[0].kernel = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = image_backbone();
  bad.blocks[3].stride = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(BackboneSpec{}.validate(), ConfigError);
}

TEST_CASE("network parameter naming") {
  const auto spec = image_backbone();
  const auto theta = init_params<float>(spec, 1);
  const auto psi = init_tuning_params<float>(spec, 2);
  CHECK(theta.contains("main.0.conv.weight"));
  CHECK(theta.contains("main.7.conv.bias"));
  CHECK(psi.contains("tune.0.conv1.weight"));
  CHECK(psi.contains("tune.2.conv3.bias"));
  CHECK(psi.at("tune.1.conv1.weight").value.shape() == Shape{32, 32, 3, 3});
  CHECK(init_params<float>(spec, 1) == theta);
  CHECK_FALSE(init_params<float>(spec, 2) == theta);
}

TEST_CASE("freezing by exact name and prefix") {
  auto store = init_tuning_params<float>(image_backbone(), 1);
  freeze(store, {"tune.0.*", "tune.1.conv1.bias"});
  for (const auto& p : store) {
    const bool frozen = p.name.starts_with("tune.0.") || p.name == "tune.1.conv1.bias";
    CHECK(p.trainable == !frozen);
  }
  CHECK_THROWS_AS(freeze(store, {"nope.*"}), UsageError);
  freeze_all(store);
  for (const auto& p : store) CHECK_FALSE(p.trainable);
}

TEST_CASE("weight file bytes match the documented layout") {
  ParamStore<float> store;
  store.add("a", Tensor<float>({1}, {1.0f}));
  CHECK(serialize_weights(store) == tiny_file());
  const auto back = deserialize_weights<float>(tiny_file());
  CHECK(back == store);
}

TEST_CASE("weight round trip is bit exact") {
  auto store = init_params<double>(image_backbone(), 4);
  store[0].value[0] = -0.0;
  store[1].value[0] = 1e-300;
  store[2].trainable = false;
  const auto back = deserialize_weights<double>(serialize_weights(store));
  REQUIRE(back.size() == store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    CHECK(back[i].name == store[i].name);
    CHECK(back[i].trainable == store[i].trainable);
    CHECK(back[i].value.bit_equal(store[i].value));
  }
  const auto path = (std::filesystem::temp_directory_path() / "dynanet_nn_roundtrip.dynw").string();
  save_weights(store, path);
  CHECK(load_weights<double>(path) == store);
  std::filesystem::remove(path);
}

TEST_CASE("malformed weight files are rejected") {
  const std::string good = tiny_file();
  auto with = [&](std::size_t at, char c) {
    std::string b = good;
    b[at] = c;
    return b;
  };
  CHECK_THROWS_AS(deserialize_weights<float>(with(0, 'X')), FormatError);
  CHECK_THROWS_AS(deserialize_weights<float>(with(4, 2)), FormatError);
  CHECK_THROWS_AS(deserialize_weights<double>(good), FormatError);
  CHECK_THROWS_AS(deserialize_weights<float>(good.substr(0, good.size() - 1)), FormatError);
  CHECK_THROWS_AS(deserialize_weights<float>(good + "x"), FormatError);
  CHECK_THROWS_AS(deserialize_weights<float>(with(16, 2)), FormatError);  // trainable flag
  CHECK_THROWS_AS(deserialize_weights<float>(with(17, 0)), FormatError);  // rank
  CHECK_THROWS_AS(deserialize_weights<float>(with(18, 0)), FormatError);  // dimension

  try {
    deserialize_weights<float>(with(4, 2));
  } catch (const FormatError& e) {
    CHECK(e.offset() == 4);
  }

  ParamStore<float> dup;
  dup.add("a", Tensor<float>({1}));
  std::string twice = serialize_weights(dup);
  std::string body = twice.substr(13);
  twice[9] = 2;
  CHECK_THROWS_AS(deserialize_weights<float>(twice + body), FormatError);
  CHECK_THROWS_AS(dup.add("a", Tensor<float>({1})), UsageError);
  CHECK_THROWS_AS(load_weights<float>("/nonexistent/dir/w.dynw"), IoError);
}
