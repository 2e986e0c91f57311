#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

using namespace hairbench;
using namespace hbtest;

namespace {

using V = Var<double>;

// Reduces an arbitrary tensor to a scalar with fixed random weights so every
// output element receives a distinct upstream gradient.
V weighted_sum(const V& x, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(x, V::constant(random_tensor<double>(rng, x.shape()))));
}

}  // namespace

TEST(Autograd, ConvGradients) {
  Rng rng(1);
  for (std::size_t stride : {1u, 2u}) {
    auto x = V::parameter(random_tensor<double>(rng, {2, 2, 4, 6}));
    auto k = V::parameter(random_tensor<double>(rng, {3, 2, 3, 3}));
    auto b = V::parameter(random_tensor<double>(rng, {3}));
    const double err = gradient_check({x, k, b}, [&] { return weighted_sum(conv2d(x, k, b, stride), 5); });
    EXPECT_LT(err, 1e-6) << "stride " << stride;
  }
}

TEST(Autograd, DeconvGradients) {
  Rng rng(2);
  auto x = V::parameter(random_tensor<double>(rng, {2, 3, 3, 2}));
  auto k = V::parameter(random_tensor<double>(rng, {3, 2, 3, 3}));
  auto b = V::parameter(random_tensor<double>(rng, {2}));
  EXPECT_LT(gradient_check({x, k, b}, [&] { return weighted_sum(deconv2d(x, k, b), 6); }), 1e-6);
}

TEST(Autograd, ElementwiseGradients) {
  Rng rng(3);
  auto a = V::parameter(random_tensor<double>(rng, {2, 3, 2, 2}, -2, 2));
  auto b = V::parameter(random_tensor<double>(rng, {2, 3, 2, 2}, 0.5, 2));
  EXPECT_LT(gradient_check({a, b}, [&] { return weighted_sum(add(a, b), 1); }), 1e-6);
  EXPECT_LT(gradient_check({a, b}, [&] { return weighted_sum(sub(a, b), 2); }), 1e-6);
  EXPECT_LT(gradient_check({a, b}, [&] { return weighted_sum(mul(a, b), 3); }), 1e-6);
  EXPECT_LT(gradient_check({a, b}, [&] { return weighted_sum(div(a, b), 4); }), 1e-6);
  EXPECT_LT(gradient_check({a}, [&] { return weighted_sum(square(a), 5); }), 1e-6);
  EXPECT_LT(gradient_check({a}, [&] { return weighted_sum(scale(add_scalar(a, 0.3), -1.7), 6); }), 1e-6);
  EXPECT_LT(gradient_check({a}, [&] { return mean(square(a)); }), 1e-6);
  EXPECT_LT(gradient_check({a}, [&] { return weighted_sum(relu(a), 7); }), 1e-6);
  EXPECT_LT(gradient_check({a}, [&] { return weighted_sum(clamp01(a), 8); }), 1e-6);
}

TEST(Autograd, StructuralOpGradients) {
  Rng rng(4);
  auto a = V::parameter(random_tensor<double>(rng, {2, 2, 4, 4}));
  auto b = V::parameter(random_tensor<double>(rng, {2, 3, 4, 4}));
  EXPECT_LT(gradient_check({a, b}, [&] { return weighted_sum(concat_channels(a, b), 1); }), 1e-6);
  EXPECT_LT(gradient_check({b}, [&] { return weighted_sum(slice_channels(b, 1, 3), 2); }), 1e-6);
  EXPECT_LT(gradient_check({a}, [&] { return weighted_sum(max_pool2(a), 3); }), 1e-6);
  auto big = V::parameter(random_tensor<double>(rng, {1, 2, 13, 12}));
  const auto w = detail::gaussian_window(11, 1.5);
  EXPECT_LT(gradient_check({big}, [&] { return weighted_sum(gaussian_blur_valid(big, w), 4); }), 1e-6);
}

TEST(Autograd, ConcatWithEmptySecondInput) {
  Rng rng(5);
  auto a = V::parameter(random_tensor<double>(rng, {1, 2, 3, 3}));
  const auto e = V::constant(Tensor<double>({1, 0, 3, 3}));
  const auto c = concat_channels(a, e);
  EXPECT_EQ(c.shape(), a.shape());
  EXPECT_EQ(c.value(), a.value());
  backward(sum(c));
  for (double g : a.grad().data()) EXPECT_EQ(g, 1.0);
}

TEST(Autograd, ClampGradientIsZeroAtAndBeyondBounds) {
  auto x = V::parameter(Tensor<double>({5}, std::vector<double>{-0.5, 0.0, 0.5, 1.0, 1.5}));
  backward(sum(clamp01(x)));
  const std::vector<double> want{0, 0, 1, 0, 0};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(x.grad()[i], want[i]);
}

TEST(Autograd, MaxPoolTiesGoToFirstElement) {
  auto x = V::parameter(Tensor<double>({1, 1, 2, 2}, 3.0));
  backward(sum(max_pool2(x)));
  EXPECT_EQ(x.grad()[0], 1.0);
  EXPECT_EQ(x.grad()[1] + x.grad()[2] + x.grad()[3], 0.0);
}

TEST(Autograd, GradientsAccumulateAcrossBackwardCalls) {
  auto x = V::parameter(Tensor<double>({3}, 2.0));
  backward(sum(square(x)));
  backward(sum(square(x)));
  for (double g : x.grad().data()) EXPECT_DOUBLE_EQ(g, 8.0);
  x.zero_grad();
  for (double g : x.grad().data()) EXPECT_EQ(g, 0.0);
}

TEST(Autograd, SharedSubgraphIsVisitedOnce) {
  auto x = V::parameter(Tensor<double>({2}, 3.0));
  const auto y = square(x);
  backward(sum(add(y, y)));  // d/dx 2x^2 = 4x
  for (double g : x.grad().data()) EXPECT_DOUBLE_EQ(g, 12.0);
}

TEST(Autograd, BackwardRequiresScalarRoot) {
  auto x = V::parameter(Tensor<double>({3}, 1.0));
  EXPECT_THROW(backward(square(x)), ContractViolation);
}

TEST(Autograd, ConstantsReceiveNoGradient) {
  auto c = V::constant(Tensor<double>({2}, 1.0));
  auto p = V::parameter(Tensor<double>({2}, 1.0));
  backward(sum(mul(c, p)));
  EXPECT_FALSE(c.requires_grad());
  EXPECT_DOUBLE_EQ(p.grad()[0], 1.0);
}

TEST(Autograd, NonFiniteOutputRaisesNumericalFault) {
  auto a = V::parameter(Tensor<double>({1}, 1.0));
  auto z = V::constant(Tensor<double>({1}, 0.0));
  EXPECT_THROW(div(a, z), NumericalFault);
}

TEST(Autograd, ShapeMismatchIsAContractViolation) {
  auto a = V::constant(Tensor<double>({2}));
  auto b = V::constant(Tensor<double>({3}));
  EXPECT_THROW(add(a, b), ContractViolation);
  EXPECT_THROW(max_pool2(V::constant(Tensor<double>({1, 1, 3, 4}))), ContractViolation);
}

TEST(Adam, FirstStepMovesEachWeightByLearningRate) {
  // With bias correction the first update is lr * g / (|g| + eps') = lr * sign(g).
  ParameterSet<double> ps{{"w", V::parameter(Tensor<double>({3}, std::vector<double>{1.0, -2.0, 0.5}))}};
  AdamState<double> st(ps);
  ps[0].var.grad() = Tensor<double>({3}, std::vector<double>{0.3, -4.0, 1e-3});
  adam_step(ps, st, 0.01);
  EXPECT_NEAR(ps[0].var.value()[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(ps[0].var.value()[1], -2.0 + 0.01, 1e-9);
  EXPECT_NEAR(ps[0].var.value()[2], 0.5 - 0.01 * 1e-3 / (1e-3 + 1e-8), 1e-12);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, MatchesClosedFormRecurrence) {
  ParameterSet<double> ps{{"w", V::parameter(Tensor<double>({1}, 0.0))}};
  AdamState<double> st(ps);
  double w = 0.0, m = 0.0, v = 0.0;
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 20; ++t) {
    const double g = std::sin(t) + 0.5;
    ps[0].var.grad()[0] = g;
    adam_step(ps, st, lr);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    w -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    EXPECT_NEAR(ps[0].var.value()[0], w, 1e-12) << "step " << t;
  }
}

TEST(Adam, NonFiniteGradientLeavesStateUntouched) {
  ParameterSet<double> ps{{"a", V::parameter(Tensor<double>({2}, 1.0))}, {"b", V::parameter(Tensor<double>({2}, 1.0))}};
  AdamState<double> st(ps);
  ps[0].var.grad()[0] = 1.0;
  ps[1].var.grad()[1] = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(ps, st, 0.1);
    FAIL() << "expected NumericalFault";
  } catch (const NumericalFault& e) {
    EXPECT_NE(std::string(e.what()).find('b'), std::string::npos);
  }
  EXPECT_EQ(ps[0].var.value()[0], 1.0);
  EXPECT_EQ(st.step, 0);
  EXPECT_THROW(adam_step(ps, st, 0.0), ConfigError);
}

TEST(Checkpoint, RoundTripsParametersAndOptimizerState) {
  Rng rng(8);
  ParameterSet<float> ps{{"layer.weight", Var<float>::parameter(random_tensor<float>(rng, {2, 3, 3, 3}))},
                         {"layer.bias", Var<float>::parameter(random_tensor<float>(rng, {2}))}};
  AdamState<float> st(ps);
  for (auto& p : ps) p.var.grad().fill(0.25f);
  adam_step(ps, st, 1e-3);
  const auto dir = scratch_dir("ckpt");
  auto records = to_records(ps);
  for (auto& r : optimizer_records(ps, st)) records.push_back(std::move(r));
  write_checkpoint((dir / "a.ckpt").string(), records);

  ParameterSet<float> qs{{"layer.weight", Var<float>::parameter(Tensor<float>({2, 3, 3, 3}))},
                         {"layer.bias", Var<float>::parameter(Tensor<float>({2}))}};
  AdamState<float> st2(qs);
  const auto back = read_checkpoint((dir / "a.ckpt").string());
  load_records(back, qs);
  load_optimizer_records(back, qs, st2);
  EXPECT_EQ(qs[0].var.value(), ps[0].var.value());
  EXPECT_EQ(qs[1].var.value(), ps[1].var.value());
  EXPECT_EQ(st2.step, 1);
  EXPECT_EQ(st2.first_moment[0], st.first_moment[0]);
  EXPECT_EQ(st2.second_moment[1], st.second_moment[1]);
}

TEST(Checkpoint, RejectsWrongShapesAndGarbage) {
  const auto dir = scratch_dir("ckpt_bad");
  write_checkpoint((dir / "a.ckpt").string(), {{"w", Tensor<float>({4}, 1.0f)}});
  ParameterSet<float> qs{{"w", Var<float>::parameter(Tensor<float>({5}))}};
  EXPECT_THROW(load_records(read_checkpoint((dir / "a.ckpt").string()), qs), DataError);
  ParameterSet<float> missing{{"v", Var<float>::parameter(Tensor<float>({4}))}};
  EXPECT_THROW(load_records(read_checkpoint((dir / "a.ckpt").string()), missing), DataError);
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  EXPECT_THROW(read_checkpoint((dir / "junk.ckpt").string()), DataError);
  EXPECT_THROW(read_checkpoint((dir / "absent.ckpt").string()), DataError);
}
