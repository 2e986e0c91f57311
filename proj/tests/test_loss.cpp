#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace hairbench;
using namespace hbtest;

namespace {

MaskedPair<double> row_fixture() {
  // One channel, one row of four pixels; only the first pixel is hair.
  MaskedPair<double> p;
  p.prediction = Var<double>::parameter(Tensor<double>({1, 1, 1, 4}, std::vector<double>{0.5, 0.2, 0.9, 0.1}));
  p.ground_truth = Tensor<double>({1, 1, 1, 4}, std::vector<double>{0.4, 0.4, 0.4, 0.4});
  p.hair_mask = Tensor<double>({1, 1, 1, 4}, std::vector<double>{1, 0, 0, 0});
  return p;
}

MaskedPair<double> random_pair(Rng& rng, std::size_t b, std::size_t c, std::size_t h, std::size_t w) {
  MaskedPair<double> p;
  p.prediction = Var<double>::parameter(random_tensor<double>(rng, {b, c, h, w}, 0.0, 1.0));
  p.ground_truth = random_tensor<double>(rng, {b, c, h, w}, 0.0, 1.0);
  p.hair_mask = Tensor<double>({b, 1, h, w});
  for (auto& m : p.hair_mask.data()) m = rng.uniform() < 0.3 ? 1.0 : 0.0;
  return p;
}

// Straight double loop over valid 11x11 windows.
double naive_ssim(const Tensor<double>& x, const Tensor<double>& y) {
  const std::size_t C = x.dim(1), H = x.dim(2), W = x.dim(3);
  double g[11][11], gs = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2.0 * 1.5 * 1.5));
      gs += g[i][j];
    }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i + 11 <= H; ++i)
      for (std::size_t j = 0; j + 11 <= W; ++j) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (std::size_t u = 0; u < 11; ++u)
          for (std::size_t v = 0; v < 11; ++v) {
            const double wgt = g[u][v] / gs;
            const double a = x.at(0, c, i + u, j + v), b = y.at(0, c, i + u, j + v);
            mx += wgt * a;
            my += wgt * b;
            sxx += wgt * a * a;
            syy += wgt * b * b;
            sxy += wgt * a * b;
          }
        const double vx = sxx - mx * mx, vy = syy - my * my, cv = sxy - mx * my;
        total += (2 * mx * my + c1) * (2 * cv + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  return total / static_cast<double>(count);
}

}  // namespace

TEST(Loss, TermsOnHandComputedRow) {
  const auto p = row_fixture();
  EXPECT_NEAR(l1_foreground(p).value().item(), 0.1, 1e-15);
  EXPECT_NEAR(l1_background(p).value().item(), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(l2_composed(p).value().item(), 0.01 / 4.0, 1e-15);
  // Dilated mask covers pixels 0 and 1: |0.2-0.5| + |0.9-0.2| over 4 pixels.
  EXPECT_NEAR(tv_loss(p).value().item(), 1.0 / 4.0, 1e-15);
}

TEST(Loss, MaskedL1NormalizesByChannelsTimesMaskedPixels) {
  MaskedPair<double> p;
  p.prediction = Var<double>::parameter(Tensor<double>({1, 2, 1, 2}, std::vector<double>{1.0, 0.0, 0.5, 0.0}));
  p.ground_truth = Tensor<double>({1, 2, 1, 2});
  p.hair_mask = Tensor<double>({1, 1, 1, 2}, std::vector<double>{1, 0});
  EXPECT_NEAR(l1_foreground(p).value().item(), 1.5 / 2.0, 1e-15);
  EXPECT_NEAR(l1_background(p).value().item(), 0.0, 1e-15);
  p.hair_mask = Tensor<double>({1, 1, 1, 2});
  EXPECT_EQ(l1_foreground(p).value().item(), 0.0);
}

TEST(Loss, WeightedSumOfTerms) {
  const auto p = row_fixture();
  LossWeights w = LossWeights::zero();
  w.alpha = 2.0;
  w.beta = 3.0;
  w.gamma = 5.0;
  w.lambda = 7.0;
  const auto out = reconstruction_loss(p, w);
  EXPECT_NEAR(out.total.value().item(), 2.0 * 0.1 + 3.0 / 3.0 + 5.0 * 0.0025 + 7.0 * 0.25, 1e-14);
  EXPECT_NEAR(out.weighted[0], 0.2, 1e-15);
  EXPECT_EQ(out.weighted[3], 0.0);
}

TEST(Loss, ZeroWeightTermsAreNotEvaluated) {
  // The SSIM term would reject a 1x4 image; with delta = 0 it must never run.
  auto p = row_fixture();
  LossWeights w;
  w.delta = 0.0;
  EXPECT_NO_THROW(reconstruction_loss(p, w));
  w.delta = 0.5;
  EXPECT_THROW(reconstruction_loss(p, w), ConfigError);

  const auto out = reconstruction_loss(p, LossWeights::zero());
  EXPECT_EQ(out.total.value().item(), 0.0);
  p.prediction.zero_grad();
  backward(out.total);
  for (double g : p.prediction.grad().data()) EXPECT_EQ(g, 0.0);
}

TEST(Loss, DroppingATermRemovesExactlyItsGradient) {
  Rng rng(21);
  auto p = random_pair(rng, 1, 3, 12, 12);
  LossWeights full;
  LossWeights no_fg = full;
  no_fg.alpha = 0.0;
  auto grad_of = [&](const Var<double>& loss) {
    p.prediction.zero_grad();
    backward(loss);
    return p.prediction.grad();
  };
  const auto g_full = grad_of(reconstruction_loss(p, full).total);
  const auto g_nofg = grad_of(reconstruction_loss(p, no_fg).total);
  const auto g_fg = grad_of(scale(l1_foreground(p), full.alpha));
  for (std::size_t i = 0; i < g_full.size(); ++i) EXPECT_NEAR(g_full[i], g_nofg[i] + g_fg[i], 1e-12);
}

TEST(Loss, SsimMatchesNaiveWindowLoop) {
  Rng rng(5);
  auto p = random_pair(rng, 1, 3, 14, 13);
  EXPECT_NEAR(ssim_loss(p).value().item(), 1.0 - naive_ssim(p.prediction.value(), p.ground_truth), 1e-12);
  p.prediction = Var<double>::parameter(p.ground_truth);
  EXPECT_NEAR(ssim_loss(p).value().item(), 0.0, 1e-12);
}

TEST(Loss, SsimRejectsSmallImages) {
  Rng rng(6);
  auto p = random_pair(rng, 1, 3, 10, 16);
  EXPECT_THROW(ssim_loss(p), ConfigError);
}

TEST(Loss, GradientsOfEachTerm) {
  Rng rng(7);
  auto p = random_pair(rng, 2, 3, 12, 12);
  using Fn = Var<double> (*)(const MaskedPair<double>&);
  for (Fn fn : {Fn(&l1_foreground<double>), Fn(&l1_background<double>), Fn(&l2_composed<double>),
                Fn(&ssim_loss<double>), Fn(&tv_loss<double>)}) {
    EXPECT_LT(gradient_check({p.prediction}, [&] { return fn(p); }), 1e-6);
  }
  EXPECT_LT(gradient_check({p.prediction}, [&] { return reconstruction_loss(p, LossWeights{}).total; }), 1e-6);
}

TEST(Loss, ContractChecks) {
  auto p = row_fixture();
  p.hair_mask = Tensor<double>({1, 1, 1, 4}, std::vector<double>{0.5, 0, 0, 0});
  EXPECT_THROW(l1_foreground(p), ContractViolation);
  p = row_fixture();
  p.ground_truth = Tensor<double>({1, 1, 1, 3});
  EXPECT_THROW(l2_composed(p), ContractViolation);
  p = row_fixture();
  p.hair_mask = Tensor<double>({1, 2, 1, 4});
  EXPECT_THROW(tv_loss(p), ContractViolation);
  LossWeights w;
  w.beta = -1.0;
  EXPECT_THROW(reconstruction_loss(row_fixture(), w), ConfigError);
}

TEST(Loss, WeightsJsonRoundTrip) {
  LossWeights w;
  w.lambda = 0.0;
  const nlohmann::json j = w;
  EXPECT_EQ(j.get<LossWeights>(), w);
  EXPECT_EQ(nlohmann::json::parse(R"({"alpha": 1})").get<LossWeights>().beta, LossWeights{}.beta);
}
