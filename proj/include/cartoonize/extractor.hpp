#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cartoonize/autograd.hpp"
#include "cartoonize/image.hpp"

namespace ctz {

/// Frozen feature map used by the perceptual loss. Gradients flow to the
/// image argument only.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual Var extract(const Var& images) const = 0;  // N×3×H×W in the pipeline value range
  virtual std::string layer_id() const = 0;
};

/// Features equal to the input. Reduces the perceptual loss to plain L1.
class IdentityExtractor : public FeatureExtractor {
 public:
  Var extract(const Var& images) const override { return images; }
  std::string layer_id() const override { return "identity"; }
};

struct FeatureExtractorHandle {
  std::string layer_id = "conv4_4";
  std::filesystem::path weights_path;
  bool post_activation = true;
  ValueRange input_range{};
};

struct ConvWeights {
  int out_channels = 0;
  int in_channels = 0;
  int kernel = 3;
  std::vector<double> weight;  // [out, in, k, k]
  std::vector<double> bias;    // [out]
};

// VGG19 convolution table, in order: conv1_1 ... conv5_4.
const std::vector<std::pair<std::string, std::pair<int, int>>>& vgg19_layers();

// Index into vgg19_layers() for "convB_I" (or "reluB_I"); configuration
// error for anything else.
int vgg19_layer_index(const std::string& layer_id);

// Weights file: "CTZVGG19" magic, uint32 version (1), uint32 layer count,
// then per layer uint32 out, in, kernel followed by float32 weights and
// biases, all little-endian. A prefix of the 16 layers is allowed.
void write_vgg19_weights(const std::filesystem::path& path, const std::vector<ConvWeights>& layers);
std::vector<ConvWeights> read_vgg19_weights(const std::filesystem::path& path);

// Deterministic He-uniform stand-in weights (float32-representable) for the
// first `layers` convolutions. Used when pretrained weights are unavailable
// and as a fixed reference for tests.
std::vector<ConvWeights> synthesize_vgg19_weights(std::uint64_t seed, int layers = 12);

class Vgg19Extractor : public FeatureExtractor {
 public:
  // Resource error if the weights file is missing or holds too few layers.
  static Vgg19Extractor load(const FeatureExtractorHandle& handle);
  Vgg19Extractor(const FeatureExtractorHandle& handle, std::vector<ConvWeights> layers);

  Var extract(const Var& images) const override;
  std::string layer_id() const override { return handle_.layer_id; }

  std::uint64_t checksum() const;

 private:
  FeatureExtractorHandle handle_;
  int last_layer_ = 0;
  std::vector<Var> weights_;  // constants
  std::vector<Var> biases_;
};

// C×H×W features for one image.
Tensor extract_features(const FeatureExtractor& extractor, const ImageTensor& image);

}  // namespace ctz
