#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "gradcheck.hpp"
#include "lcodom/autograd.hpp"
#include "lcodom/kernels.hpp"

namespace lcodom {
namespace {

using testing::check_gradients;
using testing::project;
using testing::random_tensor;

Tensor64 t64(Shape s, std::vector<double> v) { return Tensor64(std::move(s), std::move(v)); }

TEST(Conv1d, SpecExamples) {
  Tape<double> tape;
  auto x = tape.constant(t64({1, 3}, {1, 2, 3}));
  auto id = conv1d(x, tape.constant(t64({1, 1, 1}, {1})), tape.constant(t64({1}, {0})), 1, 0);
  EXPECT_EQ(id.value().values(), (std::vector<double>{1, 2, 3}));
  auto sum = conv1d(x, tape.constant(t64({1, 1, 2}, {1, 1})), tape.constant(t64({1}, {0})), 1, 0);
  EXPECT_EQ(sum.shape(), (Shape{1, 2}));
  EXPECT_EQ(sum.value().values(), (std::vector<double>{3, 5}));
}

TEST(Conv1d, LaserFirstLayerShapeMatchesLoopOracle) {
  Rng rng(1);
  Tape<float> tape(GradMode::kInference);
  auto x = random_tensor<float>({2, 3601}, rng);
  auto w = random_tensor<float>({64, 2, 7}, rng);
  auto b = random_tensor<float>({64}, rng);
  auto y = conv1d(tape.constant(x), tape.constant(w), tape.constant(b), 1, 3);
  ASSERT_EQ(y.shape(), (Shape{64, 3601}));
  // Spot-check against a direct nested loop.
  for (std::size_t o : {0u, 17u, 63u}) {
    for (std::size_t l : {0u, 1u, 1800u, 3599u, 3600u}) {
      double acc = b[o];
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < 7; ++k) {
          const long pos = static_cast<long>(l + k) - 3;
          if (pos >= 0 && pos < 3601) acc += double(w[(o * 2 + c) * 7 + k]) * x[c * 3601 + pos];
        }
      EXPECT_NEAR(y.value()[o * 3601 + l], acc, 1e-4);
    }
  }
}

TEST(Conv1d, ShapeErrorsNameTheDimension) {
  Tape<double> tape;
  auto x = tape.constant(Tensor64({2, 5}));
  try {
    conv1d(x, tape.constant(Tensor64({1, 3, 2})), tape.constant(Tensor64({1})), 1, 0);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
  }
  EXPECT_THROW(conv1d(x, tape.constant(Tensor64({1, 2, 9})), tape.constant(Tensor64({1})), 1, 0), ShapeError);
  EXPECT_THROW(conv1d(x, tape.constant(Tensor64({1, 2, 2})), tape.constant(Tensor64({2})), 1, 0), ShapeError);
  EXPECT_THROW(conv1d(x, tape.constant(Tensor64({1, 2, 2})), tape.constant(Tensor64({1})), 0, 0),
               std::invalid_argument);
}

TEST(Conv2d, SpecExamples) {
  Tape<double> tape;
  auto twos = conv2d(tape.constant(Tensor64({1, 2, 2}, 1.0)), tape.constant(t64({1, 1, 1, 1}, {2})),
                     tape.constant(t64({1}, {0})), 1, 0);
  EXPECT_EQ(twos.value(), Tensor64({1, 2, 2}, 2.0));

  Rng rng(2);
  auto x = random_tensor<double>({1, 5, 7}, rng);
  auto id = conv2d(tape.constant(x), tape.constant(t64({1, 1, 1, 1}, {1})), tape.constant(t64({1}, {0})), 1, 0);
  EXPECT_EQ(id.value(), x);
}

TEST(Conv2d, CameraFirstLayerShapeMatchesLoopOracle) {
  Rng rng(3);
  Tape<float> tape(GradMode::kInference);
  auto x = random_tensor<float>({6, 128, 416}, rng);
  auto w = random_tensor<float>({64, 6, 7, 7}, rng);
  auto b = random_tensor<float>({64}, rng);
  auto y = conv2d(tape.constant(x), tape.constant(w), tape.constant(b), 2, 3);
  ASSERT_EQ(y.shape(), (Shape{64, 64, 208}));
  for (std::size_t o : {0u, 40u}) {
    for (auto [i, j] : {std::pair<std::size_t, std::size_t>{0, 0}, {31, 100}, {63, 207}}) {
      double acc = b[o];
      for (std::size_t c = 0; c < 6; ++c)
        for (std::size_t ki = 0; ki < 7; ++ki)
          for (std::size_t kj = 0; kj < 7; ++kj) {
            const long r = static_cast<long>(2 * i + ki) - 3, s = static_cast<long>(2 * j + kj) - 3;
            if (r >= 0 && r < 128 && s >= 0 && s < 416)
              acc += double(w[((o * 6 + c) * 7 + ki) * 7 + kj]) * x[(c * 128 + r) * 416 + s];
          }
      EXPECT_NEAR(y.value()[(o * 64 + i) * 208 + j], acc, 1e-3);
    }
  }
}

TEST(AvgPool, SpecExamples) {
  Tape<double> tape;
  auto y = avg_pool(tape.constant(t64({1, 4}, {1, 3, 5, 7})), 2, 2, 1);
  EXPECT_EQ(y.value(), t64({1, 2}, {2, 6}));
  auto c = avg_pool(tape.constant(Tensor64({3, 7, 9}, 0.3)), 2, 2, 2);
  EXPECT_EQ(c.shape(), (Shape{3, 3, 4}));
  for (double v : c.value().values()) EXPECT_EQ(v, 0.3);
}

TEST(AvgPool, PropertiesOnRandomTensors) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t window = 1 + rng.below(3);
    const std::size_t h = window * (1 + rng.below(5)), w = window * (1 + rng.below(5));
    auto x = random_tensor<double>({2, h, w}, rng, -5, 5);
    Tape<double> tape;
    auto y = avg_pool(tape.constant(x), window, window, 2).value();
    const double mean_x = std::accumulate(x.values().begin(), x.values().end(), 0.0) / x.size();
    const double mean_y = std::accumulate(y.values().begin(), y.values().end(), 0.0) / y.size();
    EXPECT_NEAR(mean_x, mean_y, 1e-12);
    const auto [lo, hi] = std::minmax_element(x.values().begin(), x.values().end());
    for (double v : y.values()) {
      EXPECT_GE(v, *lo);
      EXPECT_LE(v, *hi);
    }
  }
}

TEST(AvgPool, DropsTrailingElements) {
  Tape<double> tape;
  auto y = avg_pool(tape.constant(t64({1, 5}, {1, 3, 5, 7, 100})), 2, 2, 1);
  EXPECT_EQ(y.value(), t64({1, 2}, {2, 6}));
}

TEST(Linear, SpecExamples) {
  Tape<double> tape;
  auto x = tape.constant(t64({3}, {1, -2, 3}));
  auto eye = tape.constant(t64({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  EXPECT_EQ(linear(x, eye, tape.constant(Tensor64({3}))).value(), t64({3}, {1, -2, 3}));
  auto bias = t64({2}, {0.5, -1.5});
  EXPECT_EQ(linear(tape.constant(Tensor64({4})), tape.constant(Tensor64({2, 4}, 3.0)), tape.constant(bias)).value(), bias);

  Rng rng(5);
  auto xr = random_tensor<double>({4}, rng);
  auto w = random_tensor<double>({3, 4}, rng);
  auto b = random_tensor<double>({3}, rng);
  auto y = linear(tape.constant(xr), tape.constant(w), tape.constant(b)).value();
  for (std::size_t m = 0; m < 3; ++m) {
    double dot = b[m];
    for (std::size_t n = 0; n < 4; ++n) dot += w[m * 4 + n] * xr[n];
    EXPECT_NEAR(y[m], dot, 1e-15);
  }
}

TEST(Activation, SpecExamples) {
  Tape<double> tape;
  EXPECT_EQ(relu(tape.constant(t64({2}, {-1, 2}))).value(), t64({2}, {0, 2}));
  EXPECT_EQ(sigmoid(tape.constant(t64({1}, {0}))).value()[0], 0.5);
  Rng rng(6);
  auto x = random_tensor<double>({100}, rng, -30, 30);
  Tensor64 neg = x;
  for (auto& v : neg.values()) v = -v;
  auto a = sigmoid(tape.constant(x)).value();
  auto b = sigmoid(tape.constant(neg)).value();
  for (std::size_t i = 0; i < 100; ++i) EXPECT_NEAR(a[i] + b[i], 1.0, 1e-15);
}

TEST(Activation, SigmoidSaturatesWithoutOverflow) {
  Tape<float> tape;
  auto y = sigmoid(tape.constant(Tensor32({2}, std::vector<float>{-200.f, 200.f}))).value();
  EXPECT_EQ(y[0], 0.0f);
  EXPECT_EQ(y[1], 1.0f);
}

TEST(Dropout, PassThroughCases) {
  Rng rng(7);
  Tape<double> tape;
  auto x = tape.constant(random_tensor<double>({50}, rng));
  EXPECT_EQ(dropout(x, 0.0, Mode::kTrain, rng).id(), x.id());
  EXPECT_EQ(dropout(x, 0.5, Mode::kEval, rng).id(), x.id());
  EXPECT_THROW(dropout(x, 1.0, Mode::kTrain, rng), std::invalid_argument);
  EXPECT_THROW(dropout(x, -0.1, Mode::kTrain, rng), std::invalid_argument);
}

TEST(Dropout, MonteCarloMeanIsPreserved) {
  Rng rng(8);
  Tape<float> tape(GradMode::kInference);
  auto y = dropout(tape.constant(Tensor32({1000000}, 1.0f)), 0.5, Mode::kTrain, rng).value();
  double sum = 0;
  std::size_t zeros = 0;
  for (float v : y.values()) {
    sum += v;
    zeros += v == 0.0f;
    EXPECT_TRUE(v == 0.0f || v == 2.0f);
  }
  EXPECT_NEAR(sum / 1e6, 1.0, 0.01);
  EXPECT_NEAR(zeros / 1e6, 0.5, 0.01);
}

TEST(Dropout, SameSeedSameMask) {
  auto run = [] {
    Rng rng(99);
    Tape<float> tape;
    return dropout(tape.constant(Tensor32({1000}, 1.0f)), 0.3, Mode::kTrain, rng).value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Bce, SpecExamples) {
  Tape<double> tape;
  EXPECT_NEAR(bce_sum(tape.constant(t64({1}, {0.5})), t64({1}, {1})).value()[0], 0.693147, 1e-6);
  EXPECT_NEAR(bce_sum(tape.constant(t64({1}, {1 - kBceClamp})), t64({1}, {1})).value()[0], kBceClamp, 1e-12);
  const double v = bce_sum(tape.constant(t64({2}, {0.9, 0.2})), t64({2}, {1, 0})).value()[0];
  EXPECT_NEAR(v, -std::log(0.9) - std::log(0.8), 1e-15);
  EXPECT_NEAR(v, 0.328504, 1e-6);
}

TEST(Bce, ClampsExtremes) {
  Tape<double> tape;
  const double v = bce_sum(tape.constant(t64({2}, {0.0, 1.0})), t64({2}, {1, 0})).value()[0];
  EXPECT_NEAR(v, -2 * std::log(kBceClamp), 1e-9);
  EXPECT_TRUE(std::isfinite(v));
}

TEST(Bce, NonNegativeAndZeroOnlyAtClampedPerfection) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    auto p = random_tensor<double>({n}, rng, 0.0, 1.0);
    Tensor64 y({n});
    for (auto& v : y.values()) v = static_cast<double>(rng.below(2));
    Tape<double> tape;
    const double loss = bce_sum(tape.constant(p), y).value()[0];
    EXPECT_GE(loss, 0.0);
    EXPECT_EQ(loss, bce_sum_value<double>(p.span(), y.span()));
    Tape<double> perfect;
    EXPECT_LE(bce_sum(perfect.constant(y), y).value()[0], 2 * kBceClamp * n);
  }
}

TEST(Bce, RejectsNonBinaryTargets) {
  Tape<double> tape;
  EXPECT_THROW(bce_sum(tape.constant(t64({1}, {0.5})), t64({1}, {0.5})), std::invalid_argument);
  EXPECT_THROW(bce_sum(tape.constant(t64({2}, {0.5, 0.5})), t64({1}, {1})), ShapeError);
}

TEST(Tape, NonFiniteValuesAreErrors) {
  Tape<double> tape;
  auto x = tape.constant(t64({1}, {std::numeric_limits<double>::max()}));
  EXPECT_THROW(scale(x, 10.0), NonFiniteError);
  EXPECT_THROW(tape.constant(t64({1}, {std::nan("")})), NonFiniteError);
}

TEST(Tape, BackwardTwiceIsAnError) {
  ParamStore<double> store(1);
  store.add("w", t64({1, 1}, {0.3}));
  store.add("b", t64({1}, {0.1}));
  Tape<double> tape;
  auto y = sigmoid(linear(tape.constant(t64({1}, {2})), tape.parameter(store, "w"), tape.parameter(store, "b")));
  auto loss = bce_sum(y, t64({1}, {1}));
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), std::logic_error);
}

TEST(Tape, InferenceTapeCannotBackward) {
  Tape<double> tape(GradMode::kInference);
  auto x = tape.constant(t64({1}, {2}));
  EXPECT_THROW(tape.backward(scale(x, 2.0)), std::logic_error);
}

TEST(Tape, BackwardNeedsScalarLoss) {
  Tape<double> tape;
  auto x = tape.variable(t64({2}, {1, 2}));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Tape, UnusedParametersGetZeroGradient) {
  ParamStore<double> store(1);
  store.add("used", t64({1, 1}, {0.5}));
  store.add("unused", t64({2}, {1, 1}));
  store.add("b", t64({1}, {0}));
  store.at("unused").grad.fill(7.0);
  Tape<double> tape;
  tape.parameter(store, "unused");
  auto y = linear(tape.constant(t64({1}, {3})), tape.parameter(store, "used"), tape.parameter(store, "b"));
  tape.backward(y);
  EXPECT_EQ(store.at("used").grad[0], 3.0);
  EXPECT_EQ(store.at("unused").grad, Tensor64({2}));
}

TEST(Tape, DeadReluNetHasZeroGradients) {
  ParamStore<double> store(1);
  store.add("w", Tensor64({3, 4}));
  store.add("b", Tensor64({3}));
  store.add("w2", Tensor64({1, 3}, 1.0));
  store.add("b2", Tensor64({1}));
  Tape<double> tape;
  auto x = tape.constant(t64({4}, {-1, -2, -0.5, -3}));
  auto h = relu(linear(x, tape.parameter(store, "w"), tape.parameter(store, "b")));
  auto y = linear(h, tape.parameter(store, "w2"), tape.parameter(store, "b2"));
  tape.backward(y);
  EXPECT_EQ(store.at("w").grad, Tensor64({3, 4}));
  EXPECT_EQ(store.at("b").grad, Tensor64({3}));
  EXPECT_EQ(store.at("w2").grad, Tensor64({1, 3}));
}

TEST(Tape, SharedParameterAccumulates) {
  ParamStore<double> store(1);
  store.add("w", t64({1, 1}, {2.0}));
  store.add("b", t64({1}, {0.0}));
  Tape<double> tape;
  auto x = tape.constant(t64({1}, {3}));
  auto y1 = linear(x, tape.parameter(store, "w"), tape.parameter(store, "b"));
  auto y2 = linear(y1, tape.parameter(store, "w"), tape.parameter(store, "b"));
  tape.backward(y2);  // y2 = w^2 x -> dy/dw = 2 w x = 12
  EXPECT_DOUBLE_EQ(store.at("w").grad[0], 12.0);
}

// Finite-difference checks, one per differentiable op.

constexpr double kGradTol = 1e-4;

TEST(GradCheck, LinearBceSingleParameter) {
  ParamStore<double> store(1);
  store.add("w", t64({1, 1}, {0.7}));
  auto r = check_gradients(store, {t64({1}, {0.4})}, [](auto& tape, auto& s, auto& in) {
    auto z = linear(in[0], tape.parameter(s, "w"), tape.constant(t64({1}, {0.1})));
    return bce_sum(sigmoid(z), t64({1}, {1}));
  });
  EXPECT_LE(r.max_rel_error, kGradTol) << r.worst;
}

TEST(GradCheck, Conv1dAllGeometries) {
  Rng rng(20);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u, 3u}) {
      ParamStore<double> store(2);
      store.add("w", random_tensor<double>({3, 2, 4}, rng));
      store.add("b", random_tensor<double>({3}, rng));
      auto r = check_gradients(store, {random_tensor<double>({2, 11}, rng)}, [&](auto& tape, auto& s, auto& in) {
        return project(tape, conv1d(in[0], tape.parameter(s, "w"), tape.parameter(s, "b"), stride, pad), 5);
      });
      EXPECT_LE(r.max_rel_error, kGradTol) << r.worst;
    }
  }
}

TEST(GradCheck, Conv2dAllGeometries) {
  Rng rng(21);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u, 2u}) {
      ParamStore<double> store(2);
      store.add("w", random_tensor<double>({2, 3, 3, 3}, rng));
      store.add("b", random_tensor<double>({2}, rng));
      auto r = check_gradients(store, {random_tensor<double>({3, 7, 6}, rng)}, [&](auto& tape, auto& s, auto& in) {
        return project(tape, conv2d(in[0], tape.parameter(s, "w"), tape.parameter(s, "b"), stride, pad), 6);
      });
      EXPECT_LE(r.max_rel_error, kGradTol) << r.worst;
    }
  }
}

TEST(GradCheck, AvgPoolOneAndTwoDims) {
  Rng rng(22);
  ParamStore<double> store(0);
  for (int dims : {1, 2}) {
    const Shape shape = dims == 1 ? Shape{3, 9} : Shape{2, 5, 7};
    auto r = check_gradients(store, {random_tensor<double>(shape, rng)}, [&](auto& tape, auto&, auto& in) {
      return project(tape, avg_pool(in[0], 2, 2, dims), 7);
    });
    EXPECT_LE(r.max_rel_error, kGradTol) << r.worst;
  }
}

TEST(GradCheck, ActivationsAndDropout) {
  Rng rng(23);
  ParamStore<double> store(0);
  auto x = random_tensor<double>({40}, rng, -3, 3);
  auto r = check_gradients(store, {x}, [](auto& tape, auto&, auto& in) {
    Rng mask(5);  // re-seeded so every evaluation sees the same mask
    auto h = dropout(relu(in[0]), 0.4, Mode::kTrain, mask);
    return project(tape, add(sigmoid(h), scale(sigmoid(in[0]), 0.5)), 8);
  });
  EXPECT_LE(r.max_rel_error, kGradTol) << r.worst;
}

TEST(GradCheck, ConcatReshapeBce) {
  Rng rng(24);
  ParamStore<double> store(0);
  Tensor64 targets({10});
  for (std::size_t i = 0; i < 10; ++i) targets[i] = i % 3 == 0;
  auto r = check_gradients(store, {random_tensor<double>({2, 3}, rng), random_tensor<double>({4}, rng)},
                           [&](auto& tape, auto&, auto& in) {
                             std::vector<Var<double>> parts{in[0], reshape(in[1], {2, 2})};
                             auto joined = concat<double>(parts);
                             (void)tape;
                             return bce_sum(sigmoid(joined), targets);
                           });
  EXPECT_LE(r.max_rel_error, kGradTol) << r.worst;
}

TEST(Determinism, ForwardIsBitwiseRepeatable) {
  Rng rng(25);
  auto x = random_tensor<float>({3, 40, 50}, rng);
  auto w = random_tensor<float>({8, 3, 5, 5}, rng);
  auto b = random_tensor<float>({8}, rng);
  auto run = [&] {
    Tape<float> tape(GradMode::kInference);
    Rng drop(3);
    auto y = conv2d(tape.constant(x), tape.constant(w), tape.constant(b), 2, 2);
    return dropout(avg_pool(relu(y), 2, 2, 2), 0.5, Mode::kTrain, drop).value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Backend, ReferenceAndOptimizedAgreeThroughTheTape) {
  Rng rng(26);
  auto x = random_tensor<double>({2, 33}, rng);
  ParamStore<double> store(3);
  store.add("w", random_tensor<double>({4, 2, 3}, rng));
  store.add("b", random_tensor<double>({4}, rng));
  auto run = [&](kernels::Backend backend) {
    kernels::set_backend(backend);
    Tape<double> tape;
    auto y = project(tape, avg_pool(relu(conv1d(tape.constant(x), tape.parameter(store, "w"),
                                                tape.parameter(store, "b"), 1, 1)), 2, 2, 1), 9);
    tape.backward(y);
    return std::pair{y.value()[0], store.at("w").grad};
  };
  auto [y0, g0] = run(kernels::Backend::kReference);
  auto [y1, g1] = run(kernels::Backend::kOptimized);
  EXPECT_NEAR(y0, y1, 1e-12);
  for (std::size_t i = 0; i < g0.size(); ++i) EXPECT_NEAR(g0[i], g1[i], 1e-12);
}

}  // namespace
}  // namespace lcodom
