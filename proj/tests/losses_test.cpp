// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "misfit/core/rng.hpp"
#include "misfit/losses/losses.hpp"

using namespace misfit;

namespace {

Image random_image(int h, int w, int c, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w, c);
  for (float& v : img.px) v = static_cast<float>(rng.uniform());
  return img;
}

}  // namespace

TEST(AdversarialLoss, DiscriminatorAtMaximalUncertainty) {
  EXPECT_NEAR(adversarial_loss_discriminator(0.5, 0.5), 2.0 * std::log(2.0), 1e-9);
}

TEST(AdversarialLoss, DiscriminatorHandEvaluated) {
  // -ln 0.9 - ln 0.9
  EXPECT_NEAR(adversarial_loss_discriminator(0.9, 0.1), 0.21072103131565256, 1e-12);
}

TEST(AdversarialLoss, PerfectDiscriminatorApproachesZero) {
  const double loss = adversarial_loss_discriminator(1.0 - 1e-9, 1e-9);
  EXPECT_NEAR(loss, 0.0, 1e-6);
  EXPECT_GE(loss, 0.0);
}

TEST(AdversarialLoss, DiscriminatorRejectsNaN) {
  EXPECT_THROW(adversarial_loss_discriminator(std::nan(""), 0.5), NumericError);
}

TEST(AdversarialLoss, GeneratorAtHalf) {
  LossWeights w;
  w.lambda_ir = 1.0;
  w.lambda_rgb = 1.0;
  EXPECT_NEAR(adversarial_loss_generator(0.5, 0.5, w), 2.0 * std::log(2.0), 1e-9);
}

TEST(AdversarialLoss, GeneratorFullyFoolingBothIsZero) {
  LossWeights w;
  EXPECT_NEAR(adversarial_loss_generator(1.0, 1.0, w), 0.0, 1e-5);
}

TEST(AdversarialLoss, GeneratorSingleModalityWeight) {
  LossWeights w;
  w.lambda_ir = 2.0;
  w.lambda_rgb = 0.0;
  EXPECT_NEAR(adversarial_loss_generator(0.5, 0.5, w), 2.0 * std::log(2.0), 1e-9);
}

TEST(AdversarialLoss, NegativeWeightsRejected) {
  LossWeights w;
  w.lambda_ir = -1.0;
  EXPECT_THROW(adversarial_loss_generator(0.5, 0.5, w), ValidationError);
}

TEST(ImageDistribution, ConstantImageConcentratesInOneBin) {
  const Image img = make_constant_image(16, 16, 1, 0.5f);
  const PixelDistribution d = image_to_distribution(img, 16, 1e-8);
  double sum = 0.0;
  int heavy = 0;
  for (double p : d.probs) {
    sum += p;
    if (p > 0.5) ++heavy;
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
  EXPECT_EQ(heavy, 1);
  EXPECT_GT(d.probs[8], 0.99);  // 0.5 * 16 = bin 8
}

TEST(ImageDistribution, ThermalLuminanceIsIdentity) {
  const Image th = random_image(12, 12, 1, 7);
  const Image lum = to_luminance(th);
  for (std::size_t i = 0; i < th.px.size(); ++i) EXPECT_EQ(th.px[i], lum.px[i]);
}

TEST(ImageDistribution, HalfBlackHalfWhite) {
  Image img(8, 8, 1);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) img.at(y, x, 0) = (y < 4) ? 0.0f : 1.0f;
  }
  // Brute-force expectation: 32 pixels in bin 0, 32 in the top bin.
  const int bins = 16;
  const PixelDistribution d = image_to_distribution(img, bins, 1e-12);
  EXPECT_NEAR(d.probs.front(), 0.5, 1e-9);
  EXPECT_NEAR(d.probs.back(), 0.5, 1e-9);
}

TEST(KlLoss, IdenticalDistributionsGiveZero) {
  const Image img = random_image(32, 32, 1, 3);
  Image rgb(32, 32, 3);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      rgb.at(y, x, 0) = rgb.at(y, x, 1) = rgb.at(y, x, 2) = img.at(y, x, 0);
    }
  }
  // Fused luminance equals both inputs' luminance, bin for bin.
  EXPECT_NEAR(kl_loss(rgb, img, rgb), 0.0, 1e-9);
}

TEST(KlLoss, TwoBinHandEvaluated) {
  // P = (0.5, 0.5), Q = (0.25, 0.75): KL = 0.5 ln 2 + 0.5 ln(2/3).
  PixelDistribution p, q;
  p.probs = {0.5, 0.5};
  q.probs = {0.25, 0.75};
  EXPECT_NEAR(kl_divergence(p, q), 0.14384103622589042, 1e-12);
  EXPECT_NEAR(kl_divergence(p, q) * 2.0, 0.28768207245178085, 1e-12);
}

TEST(KlLoss, NonNegativeOnRandomInputs) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Image fused = random_image(16, 16, 3, 100 + s);
    const Image ir = random_image(16, 16, 1, 200 + s);
    const Image rgb = random_image(16, 16, 3, 300 + s);
    EXPECT_GE(kl_loss(fused, ir, rgb), 0.0);
  }
}

TEST(L1Loss, IdentityGivesZero) {
  Image ir = random_image(8, 8, 1, 11);
  const Image rgb = replicate3(ir);
  EXPECT_EQ(l1_loss(rgb, ir, rgb), 0.0);
}

TEST(L1Loss, ConstantImagesHandEvaluated) {
  const Image fused = make_constant_image(8, 12, 3, 0.5f);
  const Image ir = make_constant_image(8, 12, 1, 0.25f);
  const Image rgb = make_constant_image(8, 12, 3, 0.75f);
  EXPECT_NEAR(l1_loss(fused, ir, rgb), 0.5, 1e-12);
}

TEST(L1Loss, SwapSymmetryOfConstants) {
  const Image fused = make_constant_image(8, 8, 3, 0.5f);
  const Image ir_a = make_constant_image(8, 8, 1, 0.25f);
  const Image rgb_a = make_constant_image(8, 8, 3, 0.75f);
  const Image ir_b = make_constant_image(8, 8, 1, 0.75f);
  const Image rgb_b = make_constant_image(8, 8, 3, 0.25f);
  EXPECT_NEAR(l1_loss(fused, ir_a, rgb_a), l1_loss(fused, ir_b, rgb_b), 1e-12);
}

TEST(L1Loss, SizeMismatchThrows) {
  const Image fused = make_constant_image(8, 8, 3, 0.5f);
  const Image ir = make_constant_image(8, 10, 1, 0.25f);
  const Image rgb = make_constant_image(8, 8, 3, 0.75f);
  EXPECT_THROW(l1_loss(fused, ir, rgb), ShapeError);
}

TEST(TotalLoss, CompositionExample) {
  LossWeights w;
  w.lambda_kl = 10.0;
  w.lambda_l1 = 100.0;
  EXPECT_NEAR(total_loss(1.386294, 0.287682, 0.5, w), 54.263114, 1e-9);
}

TEST(TotalLoss, AllZeros) {
  LossWeights w;
  EXPECT_EQ(total_loss(0.0, 0.0, 0.0, w), 0.0);
}

TEST(TotalLoss, ZeroWeightsPassGenThrough) {
  LossWeights w;
  w.lambda_kl = 0.0;
  w.lambda_l1 = 0.0;
  EXPECT_EQ(total_loss(1.25, 99.0, 42.0, w), 1.25);
}

TEST(TotalLoss, NonFiniteComponentNamed) {
  LossWeights w;
  try {
    total_loss(std::numeric_limits<double>::infinity(), 0.0, 0.0, w);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("gen"), std::string::npos);
  }
}

TEST(SoftHistogram, MatchesHardHistogramShape) {
  // Soft binning with a narrow kernel approaches the hard histogram.
  Rng rng(5);
  std::vector<double> values(512);
  for (double& v : values) v = rng.uniform();
  const SoftHistogram soft = soft_histogram(values, 16, 1e-8, 0.002);
  Image img(16, 32, 1);
  for (std::size_t i = 0; i < values.size(); ++i) img.px[i] = static_cast<float>(values[i]);
  const PixelDistribution hard = image_to_distribution(img, 16, 1e-8);
  for (int b = 0; b < 16; ++b) {
    EXPECT_NEAR(soft.probs[static_cast<std::size_t>(b)], hard.probs[static_cast<std::size_t>(b)], 0.02);
  }
  double sum = 0.0;
  for (double p : soft.probs) sum += p;
  EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(SoftHistogram, BackwardMatchesFiniteDifferences) {
  Rng rng(17);
  std::vector<double> values(24);
  for (double& v : values) v = 0.05 + 0.9 * rng.uniform();
  const int bins = 8;
  const double eps = 1e-8, sigma = 1.0 / bins;

  // Scalar readout: weighted sum of probabilities.
  std::vector<double> coeffs(bins);
  for (double& c : coeffs) c = rng.uniform(-1.0, 1.0);
  auto readout = [&](const std::vector<double>& vals) {
    const SoftHistogram h = soft_histogram(vals, bins, eps, sigma);
    double acc = 0.0;
    for (int b = 0; b < bins; ++b) acc += coeffs[static_cast<std::size_t>(b)] * h.probs[static_cast<std::size_t>(b)];
    return acc;
  };

  const SoftHistogram h = soft_histogram(values, bins, eps, sigma);
  const std::vector<double> analytic = soft_histogram_backward(h, coeffs);

  const double step = 1e-6;
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::vector<double> up = values, down = values;
    up[i] += step;
    down[i] -= step;
    const double numeric = (readout(up) - readout(down)) / (2.0 * step);
    EXPECT_NEAR(analytic[i], numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
  }
}

TEST(SoftHistogram, GibbsInequalityUnderSoftBinning) {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> a(64), b(64);
    for (double& v : a) v = rng.uniform();
    for (double& v : b) v = rng.uniform();
    const SoftHistogram pa = soft_histogram(a, 32, 1e-8, 1.0 / 32);
    const SoftHistogram pb = soft_histogram(b, 32, 1e-8, 1.0 / 32);
    double kl = 0.0;
    for (int i = 0; i < 32; ++i) {
      kl += pa.probs[static_cast<std::size_t>(i)] *
            std::log(pa.probs[static_cast<std::size_t>(i)] / pb.probs[static_cast<std::size_t>(i)]);
    }
    EXPECT_GE(kl, -1e-12);
  }
}
