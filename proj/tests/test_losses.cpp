#include <doctest.h>

#include <cmath>
#include <limits>

#include "cartoonize/errors.hpp"
#include "cartoonize/losses.hpp"
#include "helpers.hpp"

using namespace ctz;
using ctz::testing::gradient_error;
using ctz::testing::random_tensor;
using ctz::testing::away_from;
using ctz::testing::tv_safe;

namespace {

Tensor uniform_scores(double squashed, Shape shape = {1, 1, 6, 6}) {
  return Tensor(std::move(shape), std::log(squashed / (1.0 - squashed)));
}

ImageTensor image_of(const Shape& shape, std::vector<double> values) { return ImageTensor(Tensor(shape, std::move(values))); }

ImageTensor offset(const ImageTensor& img, double d) {
  Tensor t = img.data();
  for (double& v : t.values()) v += d;
  return ImageTensor(t, {-2.0, 2.0});
}


}  // namespace

TEST_CASE("discriminator objective closed forms") {
  CHECK(adversarial_loss_discriminator(uniform_scores(0.5), uniform_scores(0.5)) ==
        doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(adversarial_loss_discriminator(uniform_scores(0.5), uniform_scores(0.5)) == doctest::Approx(-1.3863).epsilon(1e-4));
  CHECK(adversarial_loss_discriminator(uniform_scores(0.8), uniform_scores(0.3)) ==
        doctest::Approx(std::log(0.8) + std::log(0.7)).epsilon(1e-12));
  CHECK(adversarial_loss_discriminator(uniform_scores(0.8), uniform_scores(0.3)) == doctest::Approx(-0.5798).epsilon(1e-4));
  // Saturated ideal: huge logits stay finite and reach 0.
  const double ideal = adversarial_loss_discriminator(Tensor({1, 1, 2, 2}, 800.0), Tensor({1, 1, 2, 2}, -800.0));
  CHECK(std::isfinite(ideal));
  CHECK(std::abs(ideal) < 1e-12);
  const double worst = adversarial_loss_discriminator(Tensor({1, 1, 2, 2}, -800.0), Tensor({1, 1, 2, 2}, 800.0));
  CHECK(worst == doctest::Approx(-1600.0));
  CHECK_THROWS_AS(adversarial_loss_discriminator(Tensor({1, 1, 2, 2}), Tensor({1, 1, 3, 3})), Error);
  CHECK(adversarial_loss_discriminator(Tensor({1, 1, 2, 2}, 1.0), Tensor({1, 1, 2, 2}, 0.0), GanMode::lsgan) == 0.0);
  CHECK(adversarial_loss_discriminator(Tensor({1, 1, 2, 2}, 0.0), Tensor({1, 1, 2, 2}, 1.0), GanMode::lsgan) == -2.0);
}

TEST_CASE("generator loss closed forms and monotonicity") {
  CHECK(adversarial_loss_generator(uniform_scores(0.5)) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(adversarial_loss_generator(uniform_scores(0.25)) == doctest::Approx(-std::log(0.25)).epsilon(1e-12));
  CHECK(adversarial_loss_generator(uniform_scores(0.25)) == doctest::Approx(1.3863).epsilon(1e-4));
  CHECK(adversarial_loss_generator(Tensor({1, 1, 2, 2}, 60.0)) < 1e-20);
  CHECK(adversarial_loss_generator(Tensor({1, 1, 2, 2}, -1000.0)) == doctest::Approx(1000.0));
  double previous = std::numeric_limits<double>::infinity();
  for (double z = -8.0; z <= 8.0; z += 0.25) {
    const double v = adversarial_loss_generator(Tensor({1, 1, 3, 3}, z));
    CHECK(v < previous);
    previous = v;
  }
  CHECK(adversarial_loss_generator(Tensor({1, 1, 2, 2}, 1.0), GanMode::lsgan) == 0.0);
  CHECK(adversarial_loss_generator(Tensor({1, 1, 2, 2}, 0.0), GanMode::lsgan) == 1.0);
}

TEST_CASE("cycle loss") {
  const ImageTensor x(random_tensor({3, 8, 8}, 1));
  CHECK(cycle_loss(x, x) == 0.0);
  CHECK(cycle_loss(ImageTensor(x.data(), {-2, 2}), offset(x, 0.1)) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(cycle_loss(image_of({1, 1, 2}, {0.0, 0.5}), image_of({1, 1, 2}, {0.2, 0.1})) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK_THROWS_AS(cycle_loss(x, ImageTensor(random_tensor({3, 8, 4}, 2))), Error);
  // Batched form averages the per-sample means.
  Tensor a({2, 1, 1, 2}, std::vector<double>{0.0, 0.0, 0.0, 0.0});
  Tensor b({2, 1, 1, 2}, std::vector<double>{0.2, 0.2, 0.6, 0.0});
  CHECK(cycle_loss(constant(a), constant(b)).item() == doctest::Approx((0.2 + 0.3) / 2));
}

TEST_CASE("attentive cycle loss") {
  const ImageTensor x(random_tensor({3, 8, 8}, 3));
  const RegionSet eyes = RegionSet::with_components({{"eyes", {0.25, 0.25, 0.5, 0.25}}});
  const RegionSet four = RegionSet::with_components(
      {{"eyes", {0.2, 0.3, 0.6, 0.15}}, {"nose", {0.4, 0.4, 0.2, 0.2}}, {"mouth", {0.3, 0.7, 0.4, 0.1}}});
  CHECK(attentive_cycle_loss(x, x, four, default_weights(four)) == 0.0);

  const ImageTensor wide(x.data(), {-2, 2});
  CHECK(attentive_cycle_loss(wide, offset(x, 0.2), eyes, AttentionWeights{{1.0, 0.5}}) ==
        doctest::Approx(0.3).epsilon(1e-12));

  const ImageTensor y(random_tensor({3, 8, 8}, 4));
  CHECK(attentive_cycle_loss(x, y, RegionSet(), AttentionWeights{{1.0}}) == cycle_loss(x, y));

  // Hand-computed crop mean: eyes window is rows 2..3, columns 2..5.
  double acc = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int r = 2; r < 4; ++r)
      for (int col = 2; col < 6; ++col) acc += std::abs(y.data()[(c * 8 + r) * 8 + col] - x.data()[(c * 8 + r) * 8 + col]);
  CHECK(attentive_cycle_loss(x, y, eyes, AttentionWeights{{0.0, 1.0}}) == doctest::Approx(acc / 24.0).epsilon(1e-12));

  const double base = attentive_cycle_loss(x, y, four, default_weights(four));
  CHECK(base > 0.0);
  CHECK(attentive_cycle_loss(x, y, four, AttentionWeights{{3.0, 1.5, 1.5, 1.5}}) == doctest::Approx(3.0 * base).epsilon(1e-13));
  CHECK_THROWS_AS(attentive_cycle_loss(x, y, four, AttentionWeights{{1.0, 0.5}}), Error);
}

TEST_CASE("total variation") {
  CHECK(tv_loss(ImageTensor(Tensor({3, 8, 8}, 0.4))) == 0.0);
  CHECK(tv_loss(image_of({1, 2, 2}, {0, 1, 0, 1})) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(tv_loss(ImageTensor(Tensor({3, 1, 1}))), Error);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor t = random_tensor({3, 7, 9}, seed);
    Tensor fh = t, fv = t;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 9; ++x) {
          fh[(c * 7 + y) * 9 + x] = t[(c * 7 + y) * 9 + (8 - x)];
          fv[(c * 7 + y) * 9 + x] = t[(c * 7 + (6 - y)) * 9 + x];
        }
    const double v = tv_loss(ImageTensor(t));
    CHECK(v > 0.0);
    CHECK(tv_loss(ImageTensor(fh)) == doctest::Approx(v).epsilon(1e-13));
    CHECK(tv_loss(ImageTensor(fv)) == doctest::Approx(v).epsilon(1e-13));
  }
}

TEST_CASE("perceptual loss with the identity stub") {
  const IdentityExtractor stub;
  const ImageTensor x(random_tensor({3, 8, 8}, 5, -0.5, 0.5));
  CHECK(perceptual_loss(x, x, stub) == 0.0);
  CHECK(perceptual_loss(ImageTensor(x.data(), {-2, 2}), offset(x, 0.3), stub) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK_THROWS_AS(perceptual_loss(x, ImageTensor(Tensor({1, 8, 8})), stub), Error);
}

TEST_CASE("full objective") {
  const LossWeights w;
  CHECK(w.alpha == 10.0);
  CHECK(w.beta == 2.0);
  CHECK(w.gamma == 0.5);
  CHECK(full_objective(LossReport{}, w) == 0.0);
  const LossReport r{-1.0, -1.2, 0.3, 0.25, 0.5, 0.2, 0.0, 0};
  CHECK(full_objective(r, w) == doctest::Approx(4.4).epsilon(1e-12));
  CHECK(full_objective(r, {0.0, 0.0, 0.0}) == doctest::Approx(-2.2).epsilon(1e-15));
  LossReport bad = r;
  bad.tv = std::nan("");
  try {
    full_objective(bad, w);
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK(std::string(e.what()).find("tv") != std::string::npos);
  }
  bad = r;
  bad.gan_ba = std::numeric_limits<double>::infinity();
  CHECK_THROWS_WITH_AS(full_objective(bad, w), doctest::Contains("gan_ba"), Error);
}

TEST_CASE("non-negativity on random inputs") {
  const IdentityExtractor stub;
  const RegionSet four = RegionSet::with_components(
      {{"eyes", {0.2, 0.3, 0.6, 0.15}}, {"nose", {0.4, 0.4, 0.2, 0.2}}, {"mouth", {0.3, 0.7, 0.4, 0.1}}});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ImageTensor a(random_tensor({3, 8, 8}, seed)), b(random_tensor({3, 8, 8}, seed + 100));
    CHECK(cycle_loss(a, b) >= 0.0);
    CHECK(attentive_cycle_loss(a, b, four, default_weights(four)) >= 0.0);
    CHECK(tv_loss(a) >= 0.0);
    CHECK(perceptual_loss(a, b, stub) >= 0.0);
  }
}

TEST_CASE("loss gradients agree with central differences") {
  const IdentityExtractor stub;
  const RegionSet four = RegionSet::with_components(
      {{"eyes", {0.2, 0.3, 0.6, 0.15}}, {"nose", {0.4, 0.4, 0.2, 0.2}}, {"mouth", {0.3, 0.7, 0.4, 0.1}}});
  const std::vector<RegionSet> regions{four};
  const std::vector<AttentionWeights> weights{default_weights(four)};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor x = random_tensor({1, 3, 8, 8}, seed);
    const Tensor target = away_from(x, seed + 50);
    CHECK(gradient_error([&](const Var& v) { return cycle_loss(constant(target), v); }, x) < 1e-6);
    CHECK(gradient_error([&](const Var& v) { return cycle_loss(v, constant(target)); }, x) < 1e-6);
    CHECK(gradient_error([&](const Var& v) { return attentive_cycle_loss(constant(target), v, regions, weights); }, x) <
          1e-6);
    CHECK(gradient_error([&](const Var& v) { return perceptual_loss(constant(target), v, stub); }, x) < 1e-6);
    CHECK(gradient_error([&](const Var& v) { return tv_loss(v); }, tv_safe({1, 3, 8, 8}, seed)) < 1e-6);
    const Tensor scores = random_tensor({1, 1, 6, 6}, seed + 7, -3.0, 3.0);
    CHECK(gradient_error([&](const Var& v) { return adversarial_loss_generator(v); }, scores) < 1e-6);
    CHECK(gradient_error([&](const Var& v) { return adversarial_loss_discriminator(v, constant(scores)); }, scores) < 1e-6);
    CHECK(gradient_error([&](const Var& v) { return adversarial_loss_discriminator(constant(scores), v); }, scores) < 1e-6);
    CHECK(gradient_error([&](const Var& v) { return adversarial_loss_generator(v, GanMode::lsgan); }, scores) < 1e-6);
  }
}
