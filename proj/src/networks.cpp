#include "cartoonize/networks.hpp"

#include <algorithm>
#include <cmath>

#include "cartoonize/errors.hpp"

namespace ctz {

namespace {
constexpr double kLeakySlope = 0.2;

Tensor gaussian(Shape shape, std::mt19937_64& rng, double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.values()) v = dist(rng);
  return t;
}
}  // namespace

std::size_t parameter_count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.var.value().size();
  return n;
}

std::uint64_t parameter_checksum(const ParameterList& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) h = checksum(p.var.value(), h);
  return h;
}

void set_requires_grad(const ParameterList& params, bool on) {
  for (const auto& p : params) {
    Var v = p.var;
    v.set_requires_grad(on);
  }
}

void zero_grad(const ParameterList& params) {
  for (const auto& p : params) {
    Var v = p.var;
    v.zero_grad();
  }
}

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, ops::ConvGeometry geometry, bool bias,
               std::mt19937_64& rng)
    : weight_(parameter(gaussian({out_channels, in_channels, kernel, kernel}, rng, kInitStd))),
      geometry_(geometry) {
  if (bias) bias_ = parameter(Tensor({out_channels}));
}

void Conv2d::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight_});
  if (bias_.defined()) out.push_back({prefix + ".bias", bias_});
}

Conv2d Conv2d::clone() const {
  Conv2d c;
  c.weight_ = parameter(weight_.value());
  c.weight_.set_requires_grad(weight_.requires_grad());
  if (bias_.defined()) {
    c.bias_ = parameter(bias_.value());
    c.bias_.set_requires_grad(bias_.requires_grad());
  }
  c.geometry_ = geometry_;
  return c;
}

// ---------------------------------------------------------------------------

void GeneratorConfig::validate() const {
  if (depth < 1 || depth > 8) raise(ErrorKind::configuration, "generator depth must be in [1, 8]");
  if (base_channels < 1) raise(ErrorKind::configuration, "generator base_channels must be positive");
  for (int c : {in_channels, out_channels}) {
    if (c != 1 && c != 3) raise(ErrorKind::configuration, "generator channels must be 1 or 3");
  }
}

int GeneratorConfig::channels_at(int stage) const { return base_channels << std::min(stage, 3); }

Generator::Generator(const GeneratorConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int d = config_.depth;
  convs_.emplace_back(config_.in_channels, config_.channels_at(0), 3, ops::ConvGeometry{1, 1}, false, rng);
  for (int i = 1; i <= d; ++i) {
    convs_.emplace_back(config_.channels_at(i - 1), config_.channels_at(i), 4, ops::ConvGeometry{2, 1}, false, rng);
  }
  for (int i = d; i >= 1; --i) {
    const int in = (i == d || !config_.skip_connections) ? config_.channels_at(i) : 2 * config_.channels_at(i);
    convs_.emplace_back(in, config_.channels_at(i - 1), 3, ops::ConvGeometry{1, 1}, false, rng);
  }
  const int head_in = config_.skip_connections ? 2 * config_.channels_at(0) : config_.channels_at(0);
  convs_.emplace_back(head_in, config_.out_channels, 3, ops::ConvGeometry{1, 1}, true, rng);
}

Generator Generator::clone() const {
  Generator g;
  g.config_ = config_;
  for (const auto& c : convs_) g.convs_.push_back(c.clone());
  return g;
}

Var Generator::forward(const Var& x) const {
  const Shape& s = x.shape();
  const int factor = 1 << config_.depth;
  if (s.size() != 4 || s[1] != config_.in_channels) {
    raise(ErrorKind::shape, "generator expects N×" + std::to_string(config_.in_channels) + "×H×W, got " +
                                shape_string(s));
  }
  if (s[2] % factor != 0 || s[3] % factor != 0) {
    raise(ErrorKind::shape, "generator input " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                                " is not divisible by 2^" + std::to_string(config_.depth));
  }
  const int d = config_.depth;
  std::vector<Var> skips;
  Var h = ops::leaky_relu(ops::instance_norm(convs_[0](x)), kLeakySlope);
  for (int i = 1; i <= d; ++i) {
    skips.push_back(h);
    h = ops::leaky_relu(ops::instance_norm(convs_[i](h)), kLeakySlope);
  }
  for (int i = d; i >= 1; --i) {
    const Conv2d& conv = convs_[static_cast<std::size_t>(d + 1 + (d - i))];
    h = ops::relu(ops::instance_norm(conv(ops::upsample_nearest2x(h))));
    if (config_.skip_connections) h = ops::concat_channels(h, skips[static_cast<std::size_t>(i - 1)]);
  }
  return ops::tanh(convs_.back()(h));
}

ImageTensor Generator::translate(const ImageTensor& image) const {
  const Tensor batch = image.data().reshaped({1, image.channels(), image.height(), image.width()});
  Tensor out = forward(constant(batch)).value();
  const ValueRange unit{-1.0, 1.0};
  // tanh lands in [-1, 1]; rescale when the pipeline uses another range.
  if (!(image.range() == unit)) {
    for (double& v : out.values()) v = image.range().lo + (v + 1.0) * 0.5 * image.range().width();
  }
  return ImageTensor(out.reshaped({config_.out_channels, image.height(), image.width()}), image.range());
}

ParameterList Generator::parameters() const {
  ParameterList out;
  const int d = config_.depth;
  convs_[0].collect("stem", out);
  for (int i = 1; i <= d; ++i) convs_[static_cast<std::size_t>(i)].collect("down" + std::to_string(i), out);
  for (int i = d; i >= 1; --i) {
    convs_[static_cast<std::size_t>(d + 1 + (d - i))].collect("up" + std::to_string(i), out);
  }
  convs_.back().collect("head", out);
  return out;
}

Generator build_generator(const GeneratorConfig& config, std::uint64_t seed) { return Generator(config, seed); }

// ---------------------------------------------------------------------------

void DiscriminatorConfig::validate() const {
  if (num_layers < 1 || num_layers > 8) raise(ErrorKind::configuration, "discriminator num_layers must be in [1, 8]");
  if (base_channels < 1) raise(ErrorKind::configuration, "discriminator base_channels must be positive");
  if (in_channels != 1 && in_channels != 3) raise(ErrorKind::configuration, "discriminator channels must be 1 or 3");
}

Tensor PatchScoreMap::squashed() const {
  Tensor out(scores.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-scores[i]));
  return out;
}

Discriminator::Discriminator(const DiscriminatorConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  auto width = [&](int i) { return config_.base_channels << std::min(i, 3); };
  convs_.emplace_back(config_.in_channels, width(0), 4, ops::ConvGeometry{2, 1}, true, rng);
  for (int i = 1; i < config_.num_layers; ++i) {
    convs_.emplace_back(width(i - 1), width(i), 4, ops::ConvGeometry{2, 1}, false, rng);
  }
  convs_.emplace_back(width(config_.num_layers - 1), width(config_.num_layers), 4, ops::ConvGeometry{1, 1}, false, rng);
  convs_.emplace_back(width(config_.num_layers), 1, 4, ops::ConvGeometry{1, 1}, true, rng);
}

Discriminator Discriminator::clone() const {
  Discriminator d;
  d.config_ = config_;
  for (const auto& c : convs_) d.convs_.push_back(c.clone());
  return d;
}

int Discriminator::grid_side(const DiscriminatorConfig& config, int input_side) {
  int s = input_side;
  for (int i = 0; i < config.num_layers; ++i) s = ops::conv_output_size(s, 4, {2, 1});
  s = ops::conv_output_size(s, 4, {1, 1});
  return ops::conv_output_size(s, 4, {1, 1});
}

int Discriminator::min_input_side(const DiscriminatorConfig& config) { return 3 << config.num_layers; }

Var Discriminator::forward(const Var& x) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != config_.in_channels) {
    raise(ErrorKind::shape, "discriminator expects N×" + std::to_string(config_.in_channels) + "×H×W, got " +
                                shape_string(s));
  }
  const int min_side = min_input_side(config_);
  if (s[2] < min_side || s[3] < min_side) {
    raise(ErrorKind::shape, "discriminator input " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                                " below the receptive-field minimum " + std::to_string(min_side));
  }
  Var h = ops::leaky_relu(convs_[0](x), kLeakySlope);
  for (std::size_t i = 1; i + 1 < convs_.size(); ++i) {
    h = ops::leaky_relu(ops::instance_norm(convs_[i](h)), kLeakySlope);
  }
  return convs_.back()(h);
}

PatchScoreMap Discriminator::score(const ImageTensor& image) const {
  const Tensor batch = image.data().reshaped({1, image.channels(), image.height(), image.width()});
  const Tensor raw = forward(constant(batch)).value();
  return PatchScoreMap{raw.reshaped({1, raw.dim(2), raw.dim(3)})};
}

ParameterList Discriminator::parameters() const {
  ParameterList out;
  for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect("conv" + std::to_string(i), out);
  return out;
}

Discriminator build_discriminator(const DiscriminatorConfig& config, std::uint64_t seed) {
  return Discriminator(config, seed);
}

}  // namespace ctz
