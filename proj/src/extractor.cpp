#include "cartoonize/extractor.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>

#include "cartoonize/errors.hpp"
#include "cartoonize/ops.hpp"

namespace ctz {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'Z', 'V', 'G', 'G', '1', '9'};
constexpr std::uint32_t kVersion = 1;

// ImageNet statistics the pretrained classifier expects on [0, 1] input.
constexpr std::array<double, 3> kMean{0.485, 0.456, 0.406};
constexpr std::array<double, 3> kStd{0.229, 0.224, 0.225};

// Max pooling follows these layer indices.
bool pool_after(int index) { return index == 1 || index == 3 || index == 7 || index == 11 || index == 15; }

void put_u32(std::ostream& out, std::uint32_t v) {
  static_assert(std::endian::native == std::endian::little);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) raise(ErrorKind::resource, "truncated weights file: " + what);
  return v;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

const std::vector<std::pair<std::string, std::pair<int, int>>>& vgg19_layers() {
  static const std::vector<std::pair<std::string, std::pair<int, int>>> table = {
      {"conv1_1", {3, 64}},    {"conv1_2", {64, 64}},   {"conv2_1", {64, 128}},  {"conv2_2", {128, 128}},
      {"conv3_1", {128, 256}}, {"conv3_2", {256, 256}}, {"conv3_3", {256, 256}}, {"conv3_4", {256, 256}},
      {"conv4_1", {256, 512}}, {"conv4_2", {512, 512}}, {"conv4_3", {512, 512}}, {"conv4_4", {512, 512}},
      {"conv5_1", {512, 512}}, {"conv5_2", {512, 512}}, {"conv5_3", {512, 512}}, {"conv5_4", {512, 512}},
  };
  return table;
}

int vgg19_layer_index(const std::string& layer_id) {
  std::string id = layer_id;
  if (id.rfind("relu", 0) == 0) id = "conv" + id.substr(4);
  const auto& table = vgg19_layers();
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].first == id) return static_cast<int>(i);
  }
  raise(ErrorKind::configuration, "unknown feature layer '" + layer_id + "'");
}

void write_vgg19_weights(const std::filesystem::path& path, const std::vector<ConvWeights>& layers) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::io, "cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(layers.size()));
  for (const auto& l : layers) {
    put_u32(out, static_cast<std::uint32_t>(l.out_channels));
    put_u32(out, static_cast<std::uint32_t>(l.in_channels));
    put_u32(out, static_cast<std::uint32_t>(l.kernel));
    for (double v : l.weight) {
      const float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
    for (double v : l.bias) {
      const float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
  }
  if (!out) raise(ErrorKind::io, "failed writing " + path.string());
}

std::vector<ConvWeights> read_vgg19_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::resource, "feature extractor weights not found: " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    raise(ErrorKind::resource, "not a VGG19 weights file: " + path.string());
  }
  const std::uint32_t version = get_u32(in, path.string());
  if (version != kVersion) {
    raise(ErrorKind::resource, "weights file version " + std::to_string(version) + ", expected " +
                                   std::to_string(kVersion));
  }
  const std::uint32_t count = get_u32(in, path.string());
  const auto& table = vgg19_layers();
  if (count > table.size()) raise(ErrorKind::resource, "weights file lists too many layers");
  std::vector<ConvWeights> layers(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto& l = layers[i];
    l.out_channels = static_cast<int>(get_u32(in, path.string()));
    l.in_channels = static_cast<int>(get_u32(in, path.string()));
    l.kernel = static_cast<int>(get_u32(in, path.string()));
    if (l.in_channels != table[i].second.first || l.out_channels != table[i].second.second || l.kernel != 3) {
      raise(ErrorKind::resource, "layer " + table[i].first + " has unexpected shape in " + path.string());
    }
    std::vector<float> buf(static_cast<std::size_t>(l.out_channels) * l.in_channels * 9 + l.out_channels);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
      raise(ErrorKind::resource, "truncated weights file: " + path.string());
    }
    const std::size_t nw = buf.size() - l.out_channels;
    l.weight.assign(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(nw));
    l.bias.assign(buf.begin() + static_cast<std::ptrdiff_t>(nw), buf.end());
  }
  return layers;
}

std::vector<ConvWeights> synthesize_vgg19_weights(std::uint64_t seed, int layers) {
  const auto& table = vgg19_layers();
  if (layers < 1 || layers > static_cast<int>(table.size())) raise(ErrorKind::argument, "layer count out of range");
  std::vector<ConvWeights> out;
  std::uint64_t state = seed;
  auto uniform = [&state]() {
    // 53 random bits -> [-1, 1)
    return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
  };
  for (int i = 0; i < layers; ++i) {
    ConvWeights l;
    l.in_channels = table[static_cast<std::size_t>(i)].second.first;
    l.out_channels = table[static_cast<std::size_t>(i)].second.second;
    l.kernel = 3;
    const double bound = std::sqrt(6.0 / (l.in_channels * 9));
    l.weight.resize(static_cast<std::size_t>(l.out_channels) * l.in_channels * 9);
    for (double& w : l.weight) w = static_cast<float>(bound * uniform());
    l.bias.resize(static_cast<std::size_t>(l.out_channels));
    for (double& b : l.bias) b = static_cast<float>(0.05 * uniform());
    out.push_back(std::move(l));
  }
  return out;
}

Vgg19Extractor Vgg19Extractor::load(const FeatureExtractorHandle& handle) {
  vgg19_layer_index(handle.layer_id);
  if (handle.weights_path.empty()) raise(ErrorKind::resource, "no feature extractor weights path configured");
  return Vgg19Extractor(handle, read_vgg19_weights(handle.weights_path));
}

Vgg19Extractor::Vgg19Extractor(const FeatureExtractorHandle& handle, std::vector<ConvWeights> layers)
    : handle_(handle), last_layer_(vgg19_layer_index(handle.layer_id)) {
  if (static_cast<int>(layers.size()) <= last_layer_) {
    raise(ErrorKind::resource, "weights cover " + std::to_string(layers.size()) + " layers; " + handle.layer_id +
                                   " needs " + std::to_string(last_layer_ + 1));
  }
  for (int i = 0; i <= last_layer_; ++i) {
    auto& l = layers[static_cast<std::size_t>(i)];
    weights_.push_back(constant(Tensor({l.out_channels, l.in_channels, 3, 3}, std::move(l.weight))));
    biases_.push_back(constant(Tensor({l.out_channels}, std::move(l.bias))));
  }
}

Var Vgg19Extractor::extract(const Var& images) const {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != 3) raise(ErrorKind::shape, "feature extractor needs N×3×H×W, got " + shape_string(s));
  // Range -> [0, 1] -> ImageNet standardization, folded into one affine map.
  std::array<double, 3> scale{}, shift{};
  const ValueRange& r = handle_.input_range;
  for (int c = 0; c < 3; ++c) {
    scale[c] = 1.0 / (r.width() * kStd[c]);
    shift[c] = (-r.lo / r.width() - kMean[c]) / kStd[c];
  }
  Var h = ops::channel_affine(images, scale, shift);
  for (int i = 0; i <= last_layer_; ++i) {
    h = ops::conv2d(h, weights_[static_cast<std::size_t>(i)], biases_[static_cast<std::size_t>(i)], {1, 1});
    if (i == last_layer_) return handle_.post_activation ? ops::relu(h) : h;
    h = ops::relu(h);
    if (pool_after(i)) h = ops::max_pool2x2(h);
  }
  return h;
}

std::uint64_t Vgg19Extractor::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    h = ctz::checksum(weights_[i].value(), h);
    h = ctz::checksum(biases_[i].value(), h);
  }
  return h;
}

Tensor extract_features(const FeatureExtractor& extractor, const ImageTensor& image) {
  const Tensor batch = image.data().reshaped({1, image.channels(), image.height(), image.width()});
  const Tensor f = extractor.extract(constant(batch)).value();
  return f.reshaped({f.dim(1), f.dim(2), f.dim(3)});
}

}  // namespace ctz
