#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "gradcheck.hpp"
#include "lcodom/models.hpp"

namespace lcodom {
namespace {

using testing::random_tensor;

TEST(LayerSpec, Validation) {
  EXPECT_THROW(LayerSpec::conv1d(2, 4, 0, 1, 0).validate(), std::invalid_argument);
  EXPECT_THROW(LayerSpec::conv1d(2, 4, 3, 0, 0).validate(), std::invalid_argument);
  EXPECT_THROW(LayerSpec::dropout(1.0).validate(), std::invalid_argument);
  EXPECT_THROW(LayerSpec::dropout(-0.5).validate(), std::invalid_argument);
  EXPECT_NO_THROW(LayerSpec::dropout(0.0).validate());
  EXPECT_THROW(LayerSpec::conv2d(3, 4, 5, 1, 0).output_shape({2, 9, 9}), ShapeError);
}

TEST(LaserNet, PaperShapeAlgebra) {
  const auto layers = ModelConfig::paper().laser.layers();
  std::size_t convs = 0, pools = 0, relus = 0;
  for (const auto& l : layers) {
    convs += l.kind == LayerKind::kConv1d;
    pools += l.kind == LayerKind::kAvgPool1d;
    relus += l.kind == LayerKind::kRelu;
  }
  EXPECT_EQ(convs, 6u);
  EXPECT_EQ(pools, 3u);
  EXPECT_EQ(relus, 6u);
  EXPECT_EQ(layers.back().in, 450u * 256u);
  EXPECT_EQ(output_shape(layers, {2, 3601}), (Shape{512}));
  // Each pool halves the length (floor): 3601 -> 1800 -> 900 -> 450.
  std::vector<LayerSpec> upto_first_pool(layers.begin(), layers.begin() + 5);
  EXPECT_EQ(output_shape(upto_first_pool, {2, 3601}), (Shape{64, 1800}));
}

TEST(CamNet, PaperShapeAlgebra) {
  const auto layers = ModelConfig::paper().cam.layers();
  EXPECT_EQ(layers.back().in, 2u * 7u * 1024u);
  EXPECT_EQ(output_shape(layers, {6, 128, 416}), (Shape{512}));
  std::vector<LayerSpec> convs(layers.begin(), layers.end() - 1);
  EXPECT_EQ(output_shape(convs, {6, 128, 416}), (Shape{1024, 2, 7}));
}

TEST(LaserNet, FullSizeForwardShapeAndSeedDependence) {
  OdometryNet<float> net(ModelConfig::paper());
  Rng rng(1);
  const auto x = random_tensor<float>({2, 3601}, rng, 0.0, 1.0);
  auto features = [&](std::uint64_t seed) {
    ParamStore<float> store(seed);
    net.register_laser(store);
    Tape<float> tape(GradMode::kInference);
    return net.cnn_laser_forward(tape, store, tape.constant(x), {}).value();
  };
  const auto a = features(1);
  EXPECT_EQ(a.shape(), (Shape{512}));
  EXPECT_NE(a, features(2));
  EXPECT_EQ(a, features(1));
}

TEST(CamNet, FullSizeForwardShapeAndDeterminism) {
  OdometryNet<float> net(ModelConfig::paper());
  ParamStore<float> store(3);
  net.register_cam(store);
  Rng rng(2);
  const auto x = random_tensor<float>({6, 128, 416}, rng, -0.5, 0.5);
  auto run = [&] {
    Tape<float> tape(GradMode::kInference);
    return net.cnn_cam_forward(tape, store, tape.constant(x), {Mode::kEval, nullptr}).value();
  };
  const auto a = run();
  EXPECT_EQ(a.shape(), (Shape{512}));
  EXPECT_EQ(a, run());
}

TEST(LaserNet, ZeroInputZeroWeightsIsAffineInBiases) {
  const auto cfg = ModelConfig::compact();
  OdometryNet<double> net(cfg);
  ParamStore<double> store(4);
  net.register_laser(store);
  Rng rng(3);
  const auto layers = net.laser_layers();
  std::size_t last_conv = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::kConv1d) {
      store.at("laser." + std::to_string(i) + ".weight").value.fill(0.0);
      store.at("laser." + std::to_string(i) + ".bias").value = random_tensor<double>({layers[i].out}, rng);
      last_conv = i;
    }
  }
  const std::size_t lin = layers.size() - 1;
  store.at("laser." + std::to_string(lin) + ".bias").value = random_tensor<double>({cfg.laser.features}, rng);
  Tape<double> tape(GradMode::kInference);
  const auto f = net.cnn_laser_forward(tape, store, tape.constant(Tensor64({2, 3601})), {}).value();

  // Closed form: the last conv emits relu(bias_c) everywhere, pooling keeps
  // constants, so feature_m = sum_c relu(b_c) * sum_l W[m, c*L + l] + bias_m.
  const auto& b6 = store.at("laser." + std::to_string(last_conv) + ".bias").value;
  const auto& w = store.at("laser." + std::to_string(lin) + ".weight").value;
  const auto& bl = store.at("laser." + std::to_string(lin) + ".bias").value;
  const std::size_t channels = b6.size(), len = layers[lin].in / channels;
  for (std::size_t m = 0; m < cfg.laser.features; ++m) {
    double expected = bl[m];
    for (std::size_t c = 0; c < channels; ++c) {
      double row = 0;
      for (std::size_t l = 0; l < len; ++l) row += w[m * layers[lin].in + c * len + l];
      expected += std::max(0.0, b6[c]) * row;
    }
    EXPECT_NEAR(f[m], expected, 1e-10);
  }
}

TEST(CamNet, ConstantInputZeroWeightsGivesBiasFeature) {
  OdometryNet<double> net(ModelConfig::tiny());
  ParamStore<double> store(5);
  net.register_cam(store);
  for (auto& p : store) p.value.fill(0.0);
  const auto layers = net.cam_layers();
  store.at("cam." + std::to_string(layers.size() - 1) + ".bias").value.fill(0.25);
  Tape<double> tape(GradMode::kInference);
  const auto f = net.cnn_cam_forward(tape, store, tape.constant(Tensor64({6, 16, 32}, 0.3)), {}).value();
  for (double v : f.values()) EXPECT_EQ(v, 0.25);
}

TEST(Fusion, OutputLengthsRangeAndZeroWeights) {
  OdometryNet<float> net(ModelConfig::compact());
  ParamStore<float> store(6);
  net.register_fusion_heads(store);
  Rng rng(4);
  Tape<float> tape(GradMode::kInference);
  auto lf = tape.constant(random_tensor<float>({32}, rng, -3, 3));
  auto cf = tape.constant(random_tensor<float>({32}, rng, -3, 3));
  const auto out = net.fusion_forward(tape, store, lf, cf, {});
  EXPECT_EQ(out.rotation.shape(), (Shape{111}));
  EXPECT_EQ(out.translation.shape(), (Shape{269}));
  for (float v : out.rotation.value().values()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }

  for (auto& p : store) {
    if (p.name.ends_with("weight")) p.value.fill(0.0f);
  }
  store.at("head.rot.3.bias").value = random_tensor<float>({111}, rng);
  const auto zeroed = net.fusion_forward(tape, store, lf, cf, {});
  for (std::size_t i = 0; i < 111; ++i) {
    const float b = store.at("head.rot.3.bias").value[i];
    EXPECT_FLOAT_EQ(zeroed.rotation.value()[i], 1.0f / (1.0f + std::exp(-b)));
  }
  EXPECT_THROW(net.fusion_forward(tape, store, lf, tape.constant(Tensor32({31})), {}), ShapeError);
}

TEST(Fusion, EvalModeIgnoresDropoutSeed) {
  OdometryNet<float> net(ModelConfig::compact());
  ParamStore<float> store(7);
  net.register_fusion_heads(store);
  Rng data(5);
  const auto lf = random_tensor<float>({32}, data);
  const auto cf = random_tensor<float>({32}, data);
  auto run = [&](std::uint64_t seed, Mode mode) {
    Rng rng(seed);
    Tape<float> tape(GradMode::kInference);
    return net.fusion_forward(tape, store, tape.constant(lf), tape.constant(cf), {mode, &rng}).rotation.value();
  };
  EXPECT_EQ(run(1, Mode::kEval), run(2, Mode::kEval));
  EXPECT_NE(run(1, Mode::kTrain), run(2, Mode::kTrain));
}

TEST(Loss, SpecExamples) {
  const auto cfg = ModelConfig::paper();
  Tape<double> tape;
  const RelativePose pose{1.23, -0.7};
  const auto targets = rank_targets<double>(pose, cfg);
  // Clamp-perfect predictions.
  auto perfect = [&](const Tensor64& t) {
    Tensor64 p = t;
    for (auto& v : p.values()) v = v > 0.5 ? 1 - kBceClamp : kBceClamp;
    return tape.constant(p);
  };
  HeadOutputs<double> good{perfect(targets.rotation), perfect(targets.translation)};
  EXPECT_LT(odometry_loss(good, targets, 1.0).value()[0], 380 * 2e-7);

  Rng rng(6);
  HeadOutputs<double> out{tape.constant(random_tensor<double>({111}, rng, 0.01, 0.99)),
                          tape.constant(random_tensor<double>({269}, rng, 0.01, 0.99))};
  const double trans = bce_sum(out.translation, targets.translation).value()[0];
  const double rot = bce_sum(out.rotation, targets.rotation).value()[0];
  EXPECT_EQ(odometry_loss(out, targets, 0.0).value()[0], trans);
  for (double beta : {0.5, 1.0, 2.0, 3.7}) {
    const double l = odometry_loss(out, targets, beta).value()[0];
    EXPECT_NEAR(l - trans, beta * rot, 1e-12 * l);
    EXPECT_GE(l, 0.0);
  }
}

TEST(Loss, ArithmeticExample) {
  // beta = 2 with rotation term 0.3 and translation term 0.5 gives 1.1.
  Tape<double> tape;
  const double pr = std::exp(-0.3), pt = std::exp(-0.5);
  HeadOutputs<double> out{tape.constant(Tensor64({1}, std::vector<double>{pr})),
                          tape.constant(Tensor64({1}, std::vector<double>{pt}))};
  RankTargets<double> targets{Tensor64({1}, 1.0), Tensor64({1}, 1.0)};
  EXPECT_NEAR(odometry_loss(out, targets, 2.0).value()[0], 1.1, 1e-12);
}

TEST(Targets, MatchTheCodec) {
  const auto cfg = ModelConfig::paper();
  const auto t = rank_targets<float>({1.0, 0.0}, cfg);
  ASSERT_EQ(t.rotation.size(), 111u);
  ASSERT_EQ(t.translation.size(), 269u);
  EXPECT_EQ(decode_rank(t.rotation.span(), 112), 56u);
  EXPECT_EQ(decode_rank(t.translation.span(), 270), 100u);
}

// Loss over a few random pairs through the whole network, in 64-bit.
Var<double> e2e_loss(const OdometryNet<double>& net, Tape<double>& tape, ParamStore<double>& store,
                     const std::vector<Tensor64>& inputs, std::size_t pairs) {
  Var<double> total;
  Rng drop(11);
  for (std::size_t i = 0; i < pairs; ++i) {
    auto lf = net.cnn_laser_forward(tape, store, tape.constant(inputs[2 * i]), {});
    auto cf = net.cnn_cam_forward(tape, store, tape.constant(inputs[2 * i + 1]), {});
    auto out = net.fusion_forward(tape, store, lf, cf, {Mode::kTrain, &drop});
    auto loss = odometry_loss(out, rank_targets<double>({0.1 + 0.4 * i, 1.5 - i}, net.config()), 1.0);
    total = total.valid() ? add(total, loss) : loss;
  }
  return total;
}

TEST(EndToEnd, TinyModelEveryParameterGetsAGradient) {
  OdometryNet<double> net(ModelConfig::tiny());
  ParamStore<double> store(8);
  net.register_laser(store);
  net.register_cam(store);
  net.register_fusion_heads(store);
  Rng rng(9);
  std::vector<Tensor64> inputs;
  const std::size_t pairs = 6;
  for (std::size_t i = 0; i < pairs; ++i) {
    inputs.push_back(random_tensor<double>({2, 64}, rng, 0.0, 1.0));
    inputs.push_back(random_tensor<double>({6, 16, 32}, rng, -0.5, 0.5));
  }
  Tape<double> tape;
  tape.backward(e2e_loss(net, tape, store, inputs, pairs));
  for (const auto& p : store) {
    bool any = false;
    for (double g : p.grad.values()) any |= g != 0.0;
    EXPECT_TRUE(any) << p.name;
  }
}

}  // namespace
}  // namespace lcodom
