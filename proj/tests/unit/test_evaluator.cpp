#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "synthetic.hpp"
#include "tensorial/errors.hpp"
#include "tensorial/evaluator.hpp"

using namespace tensorial;

namespace {

const std::string kEcho = std::string(TENSORIAL_PYTHON) + " " + TENSORIAL_ECHO_CLASSIFIER;

DenoiserConfig matched_cfg() {
  DenoiserConfig cfg;
  cfg.patch = PatchConfig{.kernel = 8, .stride = 2};
  cfg.rank_k = 8;
  cfg.rank_p = 4;
  return cfg;
}

DenoiserConfig identity_cfg() {
  DenoiserConfig cfg = matched_cfg();
  cfg.rank_k = 1000;
  cfg.rank_p = 1000;
  return cfg;
}

LabeledBatch synthetic_batch(std::size_t count, std::uint64_t seed) {
  LabeledBatch b;
  b.num_classes = 10;
  b.images = Tensor({count, 3, 32, 32});
  for (std::size_t n = 0; n < count; ++n) {
    Tensor img = synthetic::separable_image(seed + n);
    std::copy(img.data().begin(), img.data().end(), b.images.data().begin() + static_cast<std::ptrdiff_t>(n * img.size()));
    b.labels.push_back(static_cast<std::int32_t>(n % 10));
  }
  return b;
}

LabeledBatch perturbed(const LabeledBatch& clean, std::uint64_t seed) {
  LabeledBatch adv = clean;
  const std::size_t plane = clean.images.size() / clean.size();
  for (std::size_t n = 0; n < clean.size(); ++n) {
    Tensor p = perturb(clean.image(n), PerturbationSpec{.norm = Norm::linf, .epsilon = 8.0 / 255.0, .seed = seed + n}).image;
    std::copy(p.data().begin(), p.data().end(), adv.images.data().begin() + static_cast<std::ptrdiff_t>(n * plane));
  }
  return adv;
}

}  // namespace

TEST(EvaluatorTest, ParseResponses) {
  EXPECT_EQ(parse_accuracy_response(R"({"accuracy": 0.25})"), 0.25);
  EXPECT_EQ(parse_accuracy_response("loading model...\n{\"accuracy\": 1}\n"), 1.0);
  EXPECT_THROW(parse_accuracy_response(""), EvaluatorError);
  EXPECT_THROW(parse_accuracy_response(R"({"acc": 0.5})"), EvaluatorError);
  EXPECT_THROW(parse_accuracy_response(R"({"accuracy": "high"})"), EvaluatorError);
  EXPECT_THROW(parse_accuracy_response(R"({"accuracy": 1.5})"), EvaluatorError);
  EXPECT_THROW(parse_accuracy_response(R"({"accuracy": -0.1})"), EvaluatorError);
}

TEST(EvaluatorTest, ExternalPassThrough) {
  ExternalEvaluator e(kEcho + " {manifest} --fixed 1.0");
  LabeledBatch clean = synthetic_batch(2, 1);
  Accuracy a = e.evaluate(clean, perturbed(clean, 10), matched_cfg());
  EXPECT_EQ(a.clean, 1.0);
  EXPECT_EQ(a.adversarial, 1.0);
  EXPECT_EQ(e.kind(), "external");
}

TEST(EvaluatorTest, EchoRoundTripIsLossless) {
  std::mt19937_64 rng(2);
  LabeledBatch b;
  b.num_classes = 100;
  b.images = oracle::random_tensor({4, 3, 8, 8}, rng, 0.0, 1.0);
  b.labels = {0, 99, 42, 7};
  double expected = 0.0;
  for (double v : b.images.values()) expected += static_cast<double>(static_cast<float>(v));
  expected /= static_cast<double>(b.images.size());
  ExternalEvaluator e(kEcho);
  EXPECT_NEAR(e.classify(b), expected, 1e-12);
}

TEST(EvaluatorTest, ExternalProtocolViolations) {
  LabeledBatch b = synthetic_batch(1, 3);
  EXPECT_THROW(ExternalEvaluator(kEcho + " {manifest} --garbage").classify(b), EvaluatorError);
  EXPECT_THROW(ExternalEvaluator(kEcho + " {manifest} --fixed 2").classify(b), EvaluatorError);
  EXPECT_THROW(ExternalEvaluator("exit 3").classify(b), EvaluatorError);
  EXPECT_THROW(ExternalEvaluator(""), ConfigError);
}

TEST(EvaluatorTest, LabelMismatchIsAnArgumentError) {
  LabeledBatch clean = synthetic_batch(2, 4);
  LabeledBatch adv = clean;
  adv.labels[1] = 5;
  SurrogateEvaluator s(30.0);
  EXPECT_THROW(s.evaluate(clean, adv, matched_cfg()), ArgumentError);
  adv = clean;
  adv.labels[0] = 10;
  EXPECT_THROW(s.evaluate(clean, adv, matched_cfg()), ArgumentError);
}

TEST(EvaluatorTest, SurrogateIdenticalBatches) {
  LabeledBatch clean = synthetic_batch(3, 5);
  SurrogateEvaluator s(30.0);
  Accuracy a = s.evaluate(clean, clean, identity_cfg());
  EXPECT_EQ(a.clean, a.adversarial);
  EXPECT_EQ(a.clean, 1.0);
  EXPECT_EQ(s.kind(), "surrogate");
}

TEST(EvaluatorTest, SurrogateMonotoneInTau) {
  LabeledBatch clean = synthetic_batch(6, 6);
  LabeledBatch adv = perturbed(clean, 60);
  DenoiserConfig cfg = matched_cfg();
  cfg.rank_k = 4;
  double last_clean = 2.0, last_adv = 2.0;
  for (double tau : {10.0, 25.0, 30.0, 33.0, 36.0, 40.0, 60.0}) {
    Accuracy a = SurrogateEvaluator(tau).evaluate(clean, adv, cfg);
    EXPECT_LE(a.clean, last_clean);
    EXPECT_LE(a.adversarial, last_adv);
    last_clean = a.clean;
    last_adv = a.adversarial;
  }
}

TEST(EvaluatorTest, MatchedRankBeatsIdentityBaseline) {
  LabeledBatch clean = synthetic_batch(100, 1000);
  LabeledBatch adv = perturbed(clean, 5000);
  // Unclipped ±ε noise puts the no-op baseline at exactly 20·log10(1/ε) dB.
  const double baseline_db = 20.0 * std::log10(255.0 / 8.0);
  EXPECT_NEAR(fidelity(clean.image(0), adv.image(0)).psnr_db, baseline_db, 1e-9);
  SurrogateEvaluator s(35.0);
  Accuracy matched = s.evaluate(clean, adv, matched_cfg());
  Accuracy noop = s.evaluate(clean, adv, identity_cfg());
  EXPECT_EQ(noop.adversarial, 0.0);
  EXPECT_GT(matched.adversarial, noop.adversarial);
  EXPECT_EQ(matched.clean, 1.0);
}

TEST(EvaluatorTest, DenoiseBatchKeepsLabels) {
  LabeledBatch clean = synthetic_batch(3, 7);
  LabeledBatch d = denoise_batch(clean, matched_cfg());
  EXPECT_EQ(d.labels, clean.labels);
  EXPECT_LE(oracle::relative_diff(clean.images, d.images), 1e-6);
}
