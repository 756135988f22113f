/* Copyright 2026 The SegPL Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cmath>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "segpl/datagen.hpp"
#include "segpl/evalsuite.hpp"
#include "segpl/trainer.hpp"
#include "test_util.hpp"

namespace segpl {
namespace {

Dataset small_data(int n_test = 6) {
  SynthConfig s;
  s.image_size = 32;
  s.n_labelled = 2;
  s.n_unlabelled = 4;
  s.n_val = 0;
  s.n_test = n_test;
  return synthesize(s);
}

UNetConfig small_model(bool head) {
  UNetConfig c;
  c.base_width = 4;
  c.depth = 2;
  c.threshold_head = head;
  c.init_seed = 1;
  return c;
}

/// Model that predicts foreground everywhere with probability sigmoid(20).
UNet<float> constant_model(bool head = false) {
  UNet<float> m(small_model(head));
  m.zero_output_layer();
  for (auto* p : m.parameters()) {
    if (p->name == "output.bias") std::fill(p->value.begin(), p->value.end(), 20.0f);
  }
  return m;
}

UNet<float> trained_model(const Dataset& d, bool head) {
  TrainConfig c;
  c.variant = head ? Variant::kSegPLVI : Variant::kSegPL;
  c.base_width = 4;
  c.depth = 2;
  c.total_steps = 40;
  c.ratio_unlabelled = 1;
  c.val_every = 1000;
  UNet<float> m(c.model_config(1, 1));
  train(m, d, c);
  return m;
}

void set_param(UNet<float>& m, const std::string& name, float v) {
  for (auto* p : m.parameters()) {
    if (p->name == name) std::fill(p->value.begin(), p->value.end(), v);
  }
}

TEST(SummaryTest, PopulationStatisticsSkipUnscorable) {
  const IoUSummary s = summarise({0.5, std::nullopt, 1.0, 0.0});
  EXPECT_EQ(s.cases, 3);
  EXPECT_DOUBLE_EQ(s.mean, 0.5);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt((0.0 + 0.25 + 0.25) / 3.0));
  EXPECT_EQ(summarise({}).cases, 0);
}

TEST(EvaluateTest, PerfectPredictorScoresOne) {
  Dataset d = small_data();
  d.test.masks.fill(1.0f);
  const EvalReport r = evaluate_iou(constant_model(), d.test, ThresholdMode::fixed(0.5f));
  EXPECT_DOUBLE_EQ(r.summary.mean, 1.0);
  EXPECT_DOUBLE_EQ(r.summary.std, 0.0);
  EXPECT_EQ(r.summary.cases, 6);
  EXPECT_EQ(r.ids, d.test.ids);
}

TEST(EvaluateTest, EmptyOrUnlabelledTestSetRejected) {
  const Dataset d = small_data();
  const UNet<float> m(small_model(false));
  EXPECT_THROW(evaluate_iou(m, DataSplit{}, ThresholdMode::fixed(0.5f)), DataError);
  EXPECT_THROW(evaluate_iou(m, d.unlabelled, ThresholdMode::fixed(0.5f)), DataError);
}

TEST(EvaluateTest, PosteriorMeanIgnoresSigmaAndMatchesFixedMean) {
  const Dataset d = small_data();
  UNet<float> m = trained_model(d, true);
  const Prediction p = predict(m, d.test.images);
  const EvalReport post = evaluate_iou(m, d.test, ThresholdMode::posterior_mean());
  const auto manual = iou_per_case(binarize(p.prob, p.head.mu), MaskBatch(d.test.masks));
  EXPECT_EQ(post.per_case, manual);

  // Constant head: every image gets mu = 0.3 whatever sigma is.
  set_param(m, "head.mu.weight", 0.0f);
  set_param(m, "head.mu.bias", 0.3f);
  set_param(m, "head.log_sigma.bias", 2.0f);
  EXPECT_EQ(evaluate_iou(m, d.test, ThresholdMode::posterior_mean()).per_case,
            evaluate_iou(m, d.test, ThresholdMode::fixed(0.3f)).per_case);
  EXPECT_THROW(evaluate_iou(UNet<float>(small_model(false)), d.test, ThresholdMode::posterior_mean()),
               CapabilityError);
}

TEST(EvaluateTest, IdenticalModelsGiveIdenticalCsvAndZeroDifferences) {
  const Dataset d = small_data();
  const UNet<float> a(small_model(false)), b(small_model(false));
  const EvalReport ra = evaluate_iou(a, d.test, ThresholdMode::fixed(0.5f));
  const EvalReport rb = evaluate_iou(b, d.test, ThresholdMode::fixed(0.5f));
  testing::TempDir tmp("eval");
  ra.write_csv(tmp / "a.csv");
  rb.write_csv(tmp / "b.csv");
  std::ifstream fa(tmp / "a.csv"), fb(tmp / "b.csv");
  const std::string sa{std::istreambuf_iterator<char>(fa), {}}, sb{std::istreambuf_iterator<char>(fb), {}};
  EXPECT_EQ(sa, sb);
  EXPECT_EQ(sa.rfind("case,iou\r\n", 0), 0u);
  for (const auto& [mean, diff] : bland_altman(ra, rb)) EXPECT_EQ(diff, 0.0);
  EvalReport short_report = rb;
  short_report.per_case.pop_back();
  EXPECT_THROW(bland_altman(ra, short_report), ShapeError);
}

TEST(BlandAltmanTest, MeanAndDifferencePairs) {
  EvalReport a, b;
  a.per_case = {0.8, 0.6, std::nullopt};
  b.per_case = {0.6, 0.7, 0.5};
  const auto pairs = bland_altman(a, b);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_DOUBLE_EQ(pairs[0].first, 0.7);
  EXPECT_NEAR(pairs[0].second, 0.2, 1e-15);
  EXPECT_DOUBLE_EQ(pairs[1].first, 0.65);
  EXPECT_NEAR(pairs[1].second, -0.1, 1e-15);
}

TEST(PerturbConfigTest, Validation) {
  PerturbConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma_grid = {};
  EXPECT_THROW(c.validate(), ConfigError);
  c = PerturbConfig{};
  c.gamma_grid = {0.0, 1.2};
  EXPECT_THROW(c.validate(), ConfigError);
  c = PerturbConfig{};
  c.contrast_range = {1.5, 0.5};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(OodTest, BlendEndpoints) {
  const Dataset d = small_data();
  const PerturbConfig cfg;
  const Tensor<float> xp = ood_perturbed(d.test.images, cfg);
  EXPECT_EQ(ood_blend(d.test.images, xp, 0.0), d.test.images);
  EXPECT_EQ(ood_blend(d.test.images, xp, 1.0), xp);
  const Tensor<float> half = ood_blend(d.test.images, xp, 0.5);
  for (std::size_t i = 0; i < half.size(); i += 97) {
    EXPECT_FLOAT_EQ(half[i], 0.5f * xp[i] + 0.5f * d.test.images[i]);
  }
}

TEST(OodTest, PerturbedCasesAreNormalisedAndOrderIndependent) {
  const Dataset d = small_data();
  PerturbConfig cfg;
  cfg.seed = 5;
  const Tensor<float> xp = ood_perturbed(d.test.images, cfg);
  for (int b = 0; b < xp.n(); ++b) {
    double m = 0.0, v = 0.0;
    for (float x : xp.sample(b)) m += x;
    m /= xp.shape().sample();
    for (float x : xp.sample(b)) v += (x - m) * (x - m);
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(std::sqrt(v / xp.shape().sample()), 1.0, 1e-3);
  }
  // The first two cases perturb the same way on their own.
  EXPECT_EQ(ood_perturbed(d.test.images.slice(0, 2), cfg), xp.slice(0, 2));
  cfg.seed = 6;
  EXPECT_NE(ood_perturbed(d.test.images, cfg), xp);
}

TEST(OodTest, ZeroStrengthReproducesCleanEvaluation) {
  const Dataset d = small_data();
  const UNet<float> m = trained_model(d, false);
  const auto pts = ood_sweep(m, d.test, PerturbConfig{}, ThresholdMode::fixed(0.5f));
  ASSERT_EQ(pts.size(), 5u);
  const EvalReport clean = evaluate_iou(m, d.test, ThresholdMode::fixed(0.5f));
  EXPECT_EQ(pts[0].strength, 0.0);
  EXPECT_EQ(pts[0].report.per_case, clean.per_case);
  EXPECT_EQ(pts[0].report.summary.mean, clean.summary.mean);
}

TEST(AttackConfigTest, Validation) {
  AttackConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epsilon_grid = {0.0, -0.01};
  EXPECT_THROW(c.validate(), ConfigError);
  c.epsilon_grid = {0.02, 0.01};
  EXPECT_THROW(c.validate(), ConfigError);
  c.epsilon_grid = {};
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(fgsm_perturb(Tensor<float>(Shape4{1, 1, 8, 8}), Tensor<float>(Shape4{1, 1, 8, 8}), -1.0),
               ConfigError);
}

TEST(FgsmTest, SignStepHasExactInfinityNorm) {
  const Dataset d = small_data();
  UNet<float> m = trained_model(d, false);
  const Tensor<float> g = input_gradient(m, d.test.images, d.test.masks);
  const Tensor<float> adv = fgsm_perturb(d.test.images, g, 0.01);
  for (std::size_t i = 0; i < adv.size(); ++i) {
    const float delta = adv[i] - d.test.images[i];
    if (g[i] == 0.0f) {
      ASSERT_EQ(delta, 0.0f);
    } else {
      ASSERT_NEAR(std::abs(delta), 0.01f, 1e-6f);
      ASSERT_EQ(delta > 0, g[i] > 0);
    }
  }
  for (const auto* p : m.parameters()) {
    for (float v : p->grad) ASSERT_EQ(v, 0.0f);
  }
}

double case_dice(const UNet<float>& m, const Tensor<float>& x, const Tensor<float>& y) {
  const Prediction p = predict(m, x);
  return dice_loss(p.prob.tensor(), y);
}

TEST(FgsmTest, InputGradientMatchesDifferences) {
  const Dataset d = small_data(2);
  UNet<float> m = trained_model(d, false);
  const Tensor<float> g = input_gradient(m, d.test.images, d.test.masks);
  Tensor<float> x = d.test.images.slice(0, 1);
  const Tensor<float> y = d.test.masks.slice(0, 1);
  // Check the largest-magnitude entries, where float differences are reliable.
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + 10, idx.end(),
                    [&](auto a, auto b) { return std::abs(g[a]) > std::abs(g[b]); });
  for (int k = 0; k < 10; ++k) {
    const std::size_t i = idx[k];
    const float o = x[i], h = 1e-2f;
    x[i] = o + h;
    const double a = case_dice(m, x, y);
    x[i] = o - h;
    const double b = case_dice(m, x, y);
    x[i] = o;
    EXPECT_NEAR(g[i], (a - b) / (2 * h), 0.05 * std::abs(g[i]) + 1e-6) << i;
  }
}

TEST(FgsmTest, SmallStepIncreasesAttackedLoss) {
  const Dataset d = small_data(20);
  UNet<float> m = trained_model(d, false);
  const Tensor<float> g = input_gradient(m, d.test.images, d.test.masks);
  const Tensor<float> adv = fgsm_perturb(d.test.images, g, 0.005);
  int up = 0;
  for (int b = 0; b < d.test.size(); ++b) {
    const Tensor<float> y = d.test.masks.slice(b, 1);
    up += case_dice(m, adv.slice(b, 1), y) >= case_dice(m, d.test.images.slice(b, 1), y);
  }
  EXPECT_GE(up, 18);
}

TEST(FgsmTest, ZeroStrengthReproducesCleanEvaluation) {
  const Dataset d = small_data();
  UNet<float> m = trained_model(d, false);
  AttackConfig cfg;
  const auto pts = fgsm_sweep(m, d.test, cfg, ThresholdMode::fixed(0.5f));
  ASSERT_EQ(pts.size(), 4u);
  EXPECT_EQ(pts[0].report.per_case, evaluate_iou(m, d.test, ThresholdMode::fixed(0.5f)).per_case);
}

TEST(UncertaintyTest, RequiresThresholdHead) {
  const Dataset d = small_data();
  EXPECT_THROW(mc_uncertainty(UNet<float>(small_model(false)), d.test), CapabilityError);
  EXPECT_THROW(mc_uncertainty(UNet<float>(small_model(true)), d.test, 0), ConfigError);
  EXPECT_EQ(kDefaultMcSamples, 5);
}

TEST(UncertaintyTest, FrequencyOnSampleGridAndBrierRecomputed) {
  const Dataset d = small_data();
  const UNet<float> m = trained_model(d, true);
  const UncertaintyResult r = mc_uncertainty(m, d.test, 5, 3);
  EXPECT_EQ(r.samples, 5);
  for (float v : r.frequency.storage()) {
    const float k = v * 5.0f;
    ASSERT_EQ(k, std::round(k));
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < r.frequency.size(); ++i) {
    const double e = double(r.frequency[i]) - d.test.masks[i];
    acc += e * e;
  }
  EXPECT_NEAR(r.brier, acc / r.frequency.size(), 1e-7);
  EXPECT_EQ(r.mean_prob.tensor(), predict(m, d.test.images).prob.tensor());
}

TEST(UncertaintyTest, ZeroSigmaGivesBinaryFrequency) {
  const Dataset d = small_data();
  UNet<float> m = trained_model(d, true);
  set_param(m, "head.log_sigma.weight", 0.0f);
  set_param(m, "head.log_sigma.bias", -std::numeric_limits<float>::infinity());
  const UncertaintyResult r = mc_uncertainty(m, d.test, 5);
  for (float v : r.frequency.storage()) ASSERT_TRUE(v == 0.0f || v == 1.0f);
  const MaskBatch at_mean = predict_masks(predict(m, d.test.images), ThresholdMode::posterior_mean());
  EXPECT_EQ(r.frequency, at_mean.tensor());
}

TEST(UncertaintyTest, CasesAreIndependentOfBatchComposition) {
  const Dataset d = small_data();
  const UNet<float> m = trained_model(d, true);
  const UncertaintyResult all = mc_uncertainty(m, d.test, 5, 9);
  DataSplit first;
  first.images = d.test.images.slice(0, 3);
  first.masks = d.test.masks.slice(0, 3);
  EXPECT_EQ(mc_uncertainty(m, first, 5, 9).frequency, all.frequency.slice(0, 3));
}

}  // namespace
}  // namespace segpl
