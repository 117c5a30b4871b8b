#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "cartoonize/autograd.hpp"
#include "cartoonize/extractor.hpp"
#include "cartoonize/image.hpp"
#include "cartoonize/regions.hpp"

namespace ctz {

enum class GanMode { log, lsgan };

struct LossWeights {
  double alpha = 10.0;  // cycle terms
  double beta = 2.0;    // total variation
  double gamma = 0.5;   // perceptual
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossReport {
  double gan_ab = 0.0;
  double gan_ba = 0.0;
  double att_cyc_ab = 0.0;
  double cyc_ba = 0.0;
  double tv = 0.0;
  double perceptual = 0.0;
  double total = 0.0;
  std::int64_t step = 0;
  friend bool operator==(const LossReport&, const LossReport&) = default;
};

// gan_ab + gan_ba + alpha (att_cyc_ab + cyc_ba) + beta tv + gamma perceptual.
// Numeric error naming the first non-finite component.
double full_objective(const LossReport& components, const LossWeights& weights);

// All tensor-valued losses below take N×C×H×W Vars and return a
// single-element Var. Per-sample values are averaged over the batch.

// Discriminator objective, to be ascended. log mode:
//   mean[log sigmoid(real)] + mean[log(1 - sigmoid(fake))]
// lsgan mode: -(mean[(real - 1)^2] + mean[fake^2]).
// Callers score detached fakes so the generator receives no gradient here.
Var adversarial_loss_discriminator(const Var& real_scores, const Var& fake_scores, GanMode mode = GanMode::log);

// Generator loss, to be descended. log mode (non-saturating):
//   mean[-log sigmoid(fake)]
// lsgan mode: mean[(fake - 1)^2].
Var adversarial_loss_generator(const Var& fake_scores, GanMode mode = GanMode::log);

// Mean absolute difference.
Var cycle_loss(const Var& original, const Var& reconstruction);

// sum_j lambda_j * mean|crop_j(reconstruction) - crop_j(original)|, one
// RegionSet and weight vector per sample.
Var attentive_cycle_loss(const Var& original, const Var& reconstruction, std::span<const RegionSet> regions,
                         std::span<const AttentionWeights> weights);

// (sum |forward horizontal diffs| + sum |forward vertical diffs|) / (C H W).
Var tv_loss(const Var& image);

// Mean absolute difference of the extractor's features.
Var perceptual_loss(const Var& input_image, const Var& output_image, const FeatureExtractor& extractor);

// Convenience forms over single images.
double adversarial_loss_discriminator(const Tensor& real_scores, const Tensor& fake_scores, GanMode mode = GanMode::log);
double adversarial_loss_generator(const Tensor& fake_scores, GanMode mode = GanMode::log);
double cycle_loss(const ImageTensor& original, const ImageTensor& reconstruction);
double attentive_cycle_loss(const ImageTensor& original, const ImageTensor& reconstruction, const RegionSet& regions,
                            const AttentionWeights& weights);
double tv_loss(const ImageTensor& image);
double perceptual_loss(const ImageTensor& input_image, const ImageTensor& output_image,
                       const FeatureExtractor& extractor);

}  // namespace ctz
