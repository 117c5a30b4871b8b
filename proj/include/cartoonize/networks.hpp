#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cartoonize/autograd.hpp"
#include "cartoonize/image.hpp"
#include "cartoonize/ops.hpp"

namespace ctz {

struct NamedParameter {
  std::string name;
  Var var;
};

using ParameterList = std::vector<NamedParameter>;

std::size_t parameter_count(const ParameterList& params);
std::uint64_t parameter_checksum(const ParameterList& params);
void set_requires_grad(const ParameterList& params, bool on);
void zero_grad(const ParameterList& params);

inline constexpr double kInitStd = 0.02;

/// Convolution with learnable weight [out, in, k, k] and optional bias.
class Conv2d {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, ops::ConvGeometry geometry, bool bias,
         std::mt19937_64& rng);

  Var operator()(const Var& x) const { return ops::conv2d(x, weight_, bias_, geometry_); }
  void collect(const std::string& prefix, ParameterList& out) const;
  Conv2d clone() const;

 private:
  Conv2d() = default;
  Var weight_;
  Var bias_;
  ops::ConvGeometry geometry_;
};

struct GeneratorConfig {
  int depth = 4;
  int base_channels = 64;
  int in_channels = 3;
  int out_channels = 3;
  bool skip_connections = true;

  void validate() const;
  // Channel width after `stage` downsamplings (stage 0 = full resolution).
  int channels_at(int stage) const;
  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

/// Unet encoder-decoder.
///
///   stem   conv3x3            in -> c0          InstanceNorm, LeakyReLU(0.2)
///   down i conv4x4 stride 2   c(i-1) -> c(i)    InstanceNorm, LeakyReLU(0.2)
///   up i   nearest x2, conv3x3 -> c(i-1)        InstanceNorm, ReLU, concat skip e(i-1)
///   head   conv3x3 (+bias)    -> out            tanh
///
/// with c(i) = base * 2^min(i, 3). Convolutions followed by a normalization
/// carry no bias.
class Generator {
 public:
  Generator(const GeneratorConfig& config, std::uint64_t seed);

  Generator(Generator&&) noexcept = default;
  Generator& operator=(Generator&&) noexcept = default;
  Generator clone() const;

  // x: N×in×H×W with H, W divisible by 2^depth.
  Var forward(const Var& x) const;
  ImageTensor translate(const ImageTensor& image) const;

  const GeneratorConfig& config() const noexcept { return config_; }
  ParameterList parameters() const;

 private:
  Generator() = default;
  GeneratorConfig config_;
  std::vector<Conv2d> convs_;  // stem, down_1..down_depth, up_depth..up_1, head
};

Generator build_generator(const GeneratorConfig& config, std::uint64_t seed);

struct DiscriminatorConfig {
  int num_layers = 3;  // stride-2 layers
  int base_channels = 64;
  int in_channels = 3;

  void validate() const;
  friend bool operator==(const DiscriminatorConfig&, const DiscriminatorConfig&) = default;
};

/// Raw (pre-sigmoid) per-patch scores for one image, shape 1×h'×w'.
struct PatchScoreMap {
  Tensor scores;

  Tensor squashed() const;
};

/// Patch-level discriminator: num_layers conv4x4/stride-2 layers (the first
/// without normalization), then two conv4x4/stride-1 layers, the last one
/// emitting a single score channel.
///
/// Grid side for input side s: apply s -> floor(s / 2) num_layers times, then
/// subtract 2.
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& config, std::uint64_t seed);

  Discriminator(Discriminator&&) noexcept = default;
  Discriminator& operator=(Discriminator&&) noexcept = default;
  Discriminator clone() const;

  Var forward(const Var& x) const;  // N×1×h'×w' raw scores
  PatchScoreMap score(const ImageTensor& image) const;

  static int grid_side(const DiscriminatorConfig& config, int input_side);
  static int min_input_side(const DiscriminatorConfig& config);

  const DiscriminatorConfig& config() const noexcept { return config_; }
  ParameterList parameters() const;

 private:
  Discriminator() = default;
  DiscriminatorConfig config_;
  std::vector<Conv2d> convs_;
};

Discriminator build_discriminator(const DiscriminatorConfig& config, std::uint64_t seed);

}  // namespace ctz
