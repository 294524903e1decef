#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cvgeo/gradcheck.hpp"
#include "cvgeo/ops.hpp"
#include "test_util.hpp"

namespace cvgeo {
namespace {

using testing::random_away_from_zero;
using testing::random_tensor;
using testing::random_weights;
using testing::readout;

constexpr double kGradEps = 1e-4;
constexpr double kGradTol = 1e-3;

TEST(Linear, IdentityWeights) {
  Tensor x({1, 2}, {1, 0});
  Tensor w({2, 2}, {1, 0, 0, 1});
  Tensor b({2}, {0, 0});
  auto y = ops::linear(x, w, b);
  EXPECT_EQ(y.shape(), (Shape{1, 2}));
  EXPECT_FLOAT_EQ(y[0], 1.0f);
  EXPECT_FLOAT_EQ(y[1], 0.0f);
}

TEST(Linear, ForcedArithmetic) {
  auto y = ops::linear(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {1, 1}), Tensor({1}, {1}));
  EXPECT_FLOAT_EQ(y.item(), 4.0f);
}

TEST(Linear, ShapeMismatchThrows) {
  EXPECT_THROW(ops::linear(Tensor({1, 3}), Tensor({2, 2}), Tensor({2})), ShapeError);
  EXPECT_THROW(ops::linear(Tensor({1, 2}), Tensor({2, 2}), Tensor({3})), ShapeError);
}

TEST(Linear, GradientOfSumMatchesCentralDifferencesInFloat) {
  Rng rng(11);
  auto x = random_tensor<float>({2, 2}, rng), w = random_tensor<float>({2, 2}, rng);
  auto b = random_tensor<float>({2}, rng);
  auto report = finite_diff_check<float>(
      "linear",
      [&](Tape<float>* tape) {
        auto y = ops::linear(x, w, b, tape);
        return readout(y, std::vector<double>(y.numel(), 1.0), tape);
      },
      {x, w, b}, 1e-2);  // linear in each input, so a wide step costs nothing in float
  EXPECT_LT(report.max_rel_error, kGradTol);
  EXPECT_EQ(report.checked, 10u);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  Tensor x({1, 3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor k({3, 3, 1, 1}, 0.0f);
  k[4] = 1.0f;
  auto y = ops::conv2d(x, k, 1);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < 9; ++i) EXPECT_FLOAT_EQ(y[i], x[i]);
}

TEST(Conv2d, OnesKernelSumsNeighbourhood) {
  Tensor x({1, 4, 4, 1}, 1.0f);
  Tensor k({3, 3, 1, 1}, 1.0f);
  auto y = ops::conv2d(x, k, 1);
  EXPECT_FLOAT_EQ(y[(1 * 4 + 1)], 9.0f);
  EXPECT_FLOAT_EQ(y[0], 4.0f);  // corner sees a 2x2 window through the zero padding
}

TEST(Conv2d, StrideTwoHalvesEvenExtents) {
  auto y = ops::conv2d(Tensor({2, 8, 16, 3}), Tensor({3, 3, 3, 5}), 2);
  EXPECT_EQ(y.shape(), (Shape{2, 4, 8, 5}));
}

TEST(Conv2d, Errors) {
  EXPECT_THROW(ops::conv2d(Tensor({1, 4, 4, 1}), Tensor({3, 3, 1, 1}), 0), ArgumentError);
  EXPECT_THROW(ops::conv2d(Tensor({1, 4, 4, 2}), Tensor({3, 3, 1, 1}), 1), ShapeError);
  EXPECT_THROW(ops::conv2d(Tensor({1, 4, 4, 1}), Tensor({2, 2, 1, 1}), 1), ShapeError);
}

TEST(AvgPool2d, MeanOfWindow) {
  auto y = ops::avg_pool2d(Tensor({1, 2, 2, 1}, {1, 2, 3, 4}), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_FLOAT_EQ(y.item(), 2.5f);
}

TEST(AvgPool2d, ConstantMapStaysConstantAtEveryLevel) {
  Tensor x({8, 8, 3}, 0.7f);
  for (int f : {1, 2, 4, 8}) {
    auto y = ops::avg_pool2d(x, f);
    for (float v : y.data()) EXPECT_FLOAT_EQ(v, 0.7f);
  }
}

TEST(AvgPool2d, GradientOfSumIsUniform) {
  TensorD x({1, 4, 4, 2}, 1.0);
  x.set_requires_grad();
  Tape<double> tape;
  auto y = ops::avg_pool2d(x, 2, &tape);
  auto s = readout(y, std::vector<double>(y.numel(), 1.0), &tape);
  tape.backward(s);
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 0.25);
}

TEST(AvgPool2d, NonDivisibleThrows) { EXPECT_THROW(ops::avg_pool2d(Tensor({1, 3, 4, 1}), 2), ShapeError); }

TEST(GlobalAvgPool, Values) {
  auto y = ops::global_avg_pool(Tensor({1, 3, 5, 2}, 3.0f));
  EXPECT_EQ(y.shape(), (Shape{1, 2}));
  EXPECT_FLOAT_EQ(y[0], 3.0f);
  EXPECT_FLOAT_EQ(ops::global_avg_pool(Tensor({1, 2, 2, 1}, {1, 2, 3, 4})).item(), 2.5f);
}

TEST(GlobalAvgPool, GradientIsInverseArea) {
  TensorD x({1, 2, 3, 1}, 1.0);
  x.set_requires_grad();
  Tape<double> tape;
  auto s = readout(ops::global_avg_pool(x, &tape), {1.0}, &tape);
  tape.backward(s);
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0 / 6.0);
}

TEST(L2Normalize, Values) {
  auto y = ops::l2_normalize(Tensor({1, 2}, {3, 4}));
  EXPECT_FLOAT_EQ(y[0], 0.6f);
  EXPECT_FLOAT_EQ(y[1], 0.8f);
  auto u = ops::l2_normalize(Tensor({1, 3}, {0, 1, 0}));
  EXPECT_FLOAT_EQ(u[1], 1.0f);
  auto z = ops::l2_normalize(Tensor({1, 3}, 0.0f), 1e-12);
  for (float v : z.data()) EXPECT_EQ(v, 0.0f);
}

TEST(L2Normalize, IdempotentOnRandomRows) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor<float>({4, 7}, rng, -5, 5);
    auto once = ops::l2_normalize(x);
    auto twice = ops::l2_normalize(once);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(once[i], twice[i], 1e-6);
  }
}

TEST(Softmax, Values) {
  auto a = ops::softmax(Tensor({2}, {0, 0}), 1.0);
  EXPECT_FLOAT_EQ(a[0], 0.5f);
  auto b = ops::softmax(TensorD({2}, {std::log(3.0), 0.0}), 1.0);
  EXPECT_NEAR(b[0], 0.75, 1e-12);
  EXPECT_NEAR(b[1], 0.25, 1e-12);
  auto c = ops::softmax(Tensor({3}, {0.1f, 0.5f, 0.3f}), 1e-4);
  EXPECT_NEAR(c[1], 1.0f, 1e-6);
  EXPECT_NEAR(c[0], 0.0f, 1e-6);
  EXPECT_THROW(ops::softmax(Tensor({2}), 0.0), ArgumentError);
}

TEST(Softmax, SumsToOneAndIsPermutationEquivariant) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor<float>({9}, rng, -4, 4);
    const double temp = rng.uniform(0.1, 2.0);
    auto y = ops::softmax(x, temp);
    double sum = 0;
    for (float v : y.data()) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-6);

    std::vector<std::size_t> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::rotate(perm.begin(), perm.begin() + 1 + trial % 8, perm.end());
    Tensor xp({9});
    for (std::size_t i = 0; i < 9; ++i) xp[i] = x[perm[i]];
    auto yp = ops::softmax(xp, temp);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(yp[i], y[perm[i]], 1e-7);
  }
}

TEST(Relu, ValuesAndMask) {
  TensorD x({3}, {-1, 0, 2});
  x.set_requires_grad();
  Tape<double> tape;
  auto y = ops::relu(x, &tape);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_EQ(y[2], 2.0);
  auto s = readout(y, {1, 1, 1}, &tape);
  tape.backward(s);
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 0.0);
  EXPECT_EQ(x.grad()[2], 1.0);
  auto pos = ops::relu(Tensor({3}, {0.5f, 1.f, 2.f}));
  EXPECT_EQ(pos[0], 0.5f);
}

TEST(Ops, NonFiniteOutputIsAnError) { EXPECT_THROW(ops::exp(Tensor({1}, {1000.0f})), NumericError); }

TEST(Tape, OpsWithoutTapeRecordNothing) {
  Tensor w({2, 2}, 1.0f);
  w.set_requires_grad();
  auto y = ops::linear(Tensor({1, 2}, 1.0f), w, Tensor({2}));
  EXPECT_FALSE(y.requires_grad());
}

TEST(FiniteDiffCheck, Quadratic) {
  TensorD x({1}, {1.0});
  auto square = [&](Tape<double>* tape) {
    BasicTensor<double> y({1});
    y[0] = x[0] * x[0];
    if (tape) {
      y.set_requires_grad();
      tape->record([x, y]() mutable { x.grad()[0] += 2 * x[0] * y.grad()[0]; });
    }
    return y;
  };
  auto report = finite_diff_check<double>("square", square, {x}, 1e-4);
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_LT(report.max_rel_error * 2.0, 1e-6);
}

TEST(FiniteDiffCheck, ConstantFunctionHasZeroGradients) {
  TensorD x({3}, {1, 2, 3});
  auto report = finite_diff_check<double>(
      "constant", [](Tape<double>*) { return TensorD::scalar(4.0); }, {x}, 1e-3);
  EXPECT_EQ(report.max_rel_error, 0.0);
  EXPECT_FALSE(x.has_grad());
}

// Every differentiable primitive against central differences on 20 random
// small instances.
class OpGradients : public ::testing::TestWithParam<int> {};

TEST_P(OpGradients, MatchCentralDifferences) {
  Rng rng(1000 + GetParam());
  std::vector<GradCheckReport> reports;
  {
    auto x = random_tensor({3, 4}, rng), w = random_tensor({4, 2}, rng), b = random_tensor({2}, rng);
    auto r = random_weights(6, rng);
    reports.push_back(finite_diff_check<double>(
        "linear", [&](Tape<double>* t) { return readout(ops::linear(x, w, b, t), r, t); }, {x, w, b}, kGradEps));
  }
  {
    auto x = random_tensor({1, 6, 6, 2}, rng), k = random_tensor({3, 3, 2, 3}, rng), b = random_tensor({3}, rng);
    const int stride = 1 + GetParam() % 2;
    const std::size_t out = stride == 1 ? 6 : 3;
    auto r = random_weights(out * out * 3, rng);
    reports.push_back(finite_diff_check<double>(
        "conv2d", [&](Tape<double>* t) { return readout(ops::conv2d(x, k, b, stride, t), r, t); }, {x, k, b},
        kGradEps));
  }
  {
    auto x = random_tensor({2, 4, 4, 3}, rng);
    auto r = random_weights(2 * 2 * 2 * 3, rng);
    reports.push_back(finite_diff_check<double>(
        "avg_pool2d", [&](Tape<double>* t) { return readout(ops::avg_pool2d(x, 2, t), r, t); }, {x}, kGradEps));
  }
  {
    auto x = random_tensor({2, 3, 4, 3}, rng);
    auto r = random_weights(6, rng);
    reports.push_back(finite_diff_check<double>(
        "global_avg_pool", [&](Tape<double>* t) { return readout(ops::global_avg_pool(x, t), r, t); }, {x},
        kGradEps));
  }
  {
    auto x = random_away_from_zero({3, 5}, rng);
    auto r = random_weights(15, rng);
    reports.push_back(finite_diff_check<double>(
        "l2_normalize", [&](Tape<double>* t) { return readout(ops::l2_normalize(x, 1e-12, t), r, t); }, {x},
        kGradEps));
  }
  {
    auto x = random_tensor({6}, rng);
    auto r = random_weights(6, rng);
    const double temp = rng.uniform(0.3, 2.0);
    reports.push_back(finite_diff_check<double>(
        "softmax", [&](Tape<double>* t) { return readout(ops::softmax(x, temp, t), r, t); }, {x}, kGradEps));
  }
  {
    auto x = random_away_from_zero({10}, rng);
    auto r = random_weights(10, rng);
    reports.push_back(finite_diff_check<double>(
        "relu", [&](Tape<double>* t) { return readout(ops::relu(x, t), r, t); }, {x}, kGradEps));
  }
  {
    auto x = random_tensor({4}, rng);
    auto r = random_weights(4, rng);
    reports.push_back(finite_diff_check<double>(
        "exp", [&](Tape<double>* t) { return readout(ops::exp(x, t), r, t); }, {x}, kGradEps));
  }
  for (const auto& rep : reports) {
    EXPECT_LT(rep.max_rel_error, kGradTol) << rep.op_name;
    EXPECT_GT(rep.checked, 0u) << rep.op_name;
  }
}

INSTANTIATE_TEST_SUITE_P(Random, OpGradients, ::testing::Range(0, 20));

}  // namespace
}  // namespace cvgeo
