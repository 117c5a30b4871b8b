#include "cartoonize/training.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "cartoonize/errors.hpp"
#include "cartoonize/ops.hpp"
#include "cartoonize/region_provider.hpp"

namespace fs = std::filesystem;

namespace ctz {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void require_finite(const char* name, double value) {
  if (!std::isfinite(value)) raise(ErrorKind::numeric, std::string("non-finite loss component ") + name);
}

Var stack_images(const std::vector<DomainSample>& samples) {
  std::vector<Tensor> images;
  images.reserve(samples.size());
  for (const auto& s : samples) images.push_back(s.image.data());
  return constant(ops::stack(images));
}

}  // namespace

std::string_view to_string(AblationPreset preset) noexcept {
  switch (preset) {
    case AblationPreset::A_cycle_only: return "A";
    case AblationPreset::B_attentive: return "B";
    case AblationPreset::C_attentive_plus_perceptual: return "C";
    case AblationPreset::full: return "full";
  }
  return "full";
}

std::string_view to_string(GanMode mode) noexcept { return mode == GanMode::log ? "log" : "lsgan"; }

std::string_view to_string(AttentiveMode mode) noexcept {
  return mode == AttentiveMode::crop_reconstruction ? "crop_reconstruction" : "crop_then_generate";
}

AblationPreset parse_preset(std::string_view text) {
  if (text == "A" || text == "A_cycle_only") return AblationPreset::A_cycle_only;
  if (text == "B" || text == "B_attentive") return AblationPreset::B_attentive;
  if (text == "C" || text == "C_attentive_plus_perceptual") return AblationPreset::C_attentive_plus_perceptual;
  if (text == "full") return AblationPreset::full;
  raise(ErrorKind::configuration, "unknown preset '" + std::string(text) + "' (expected A, B, C or full)");
}

GanMode parse_gan_mode(std::string_view text) {
  if (text == "log") return GanMode::log;
  if (text == "lsgan") return GanMode::lsgan;
  raise(ErrorKind::configuration, "unknown gan mode '" + std::string(text) + "' (expected log or lsgan)");
}

AttentiveMode parse_attentive_mode(std::string_view text) {
  if (text == "crop_reconstruction") return AttentiveMode::crop_reconstruction;
  if (text == "crop_then_generate") return AttentiveMode::crop_then_generate;
  raise(ErrorKind::configuration,
        "unknown attentive mode '" + std::string(text) + "' (expected crop_reconstruction or crop_then_generate)");
}

void TrainConfig::validate() const {
  generator.validate();
  discriminator.validate();
  if (batch_size < 1) raise(ErrorKind::configuration, "batch_size must be positive");
  if (total_steps < 0) raise(ErrorKind::configuration, "total_steps must be non-negative");
  if (checkpoint_interval < 1) raise(ErrorKind::configuration, "checkpoint_interval must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    raise(ErrorKind::configuration, "learning_rate must be finite and non-negative");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    raise(ErrorKind::configuration, "optimizer betas must lie in [0, 1)");
  }
  for (double w : {weights.alpha, weights.beta, weights.gamma, lambda.whole, lambda.component}) {
    if (!(w >= 0.0) || !std::isfinite(w)) raise(ErrorKind::configuration, "loss weights must be finite and >= 0");
  }
  if (pool_size < 0) raise(ErrorKind::configuration, "pool_size must be non-negative");
  const int factor = 1 << generator.depth;
  if (image_size < kMinImageSide || image_size % factor != 0) {
    raise(ErrorKind::configuration, "image_size " + std::to_string(image_size) + " must be divisible by 2^" +
                                        std::to_string(generator.depth));
  }
  if (image_size < Discriminator::min_input_side(discriminator)) {
    raise(ErrorKind::configuration, "image_size below the discriminator's receptive-field minimum");
  }
  if (generator.in_channels != 3 || generator.out_channels != 3 || discriminator.in_channels != 3) {
    raise(ErrorKind::configuration, "training runs on 3-channel images");
  }
}

std::uint64_t TrainConfig::architecture_fingerprint() const {
  std::ostringstream s;
  s << "G:" << generator.depth << ',' << generator.base_channels << ',' << generator.in_channels << ','
    << generator.out_channels << ',' << generator.skip_connections << ";D:" << discriminator.num_layers << ','
    << discriminator.base_channels << ',' << discriminator.in_channels;
  return fnv1a(s.str());
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"weights", {{"alpha", c.weights.alpha}, {"beta", c.weights.beta}, {"gamma", c.weights.gamma}}},
      {"lambda", {{"whole", c.lambda.whole}, {"component", c.lambda.component}}},
      {"batch_size", c.batch_size},
      {"total_steps", c.total_steps},
      {"learning_rate", c.learning_rate},
      {"optimizer", {{"name", "adam"}, {"beta1", c.beta1}, {"beta2", c.beta2}}},
      {"seed", c.seed},
      {"preset", std::string(to_string(c.preset))},
      {"gan_mode", std::string(to_string(c.gan_mode))},
      {"attentive_mode", std::string(to_string(c.attentive_mode))},
      {"pool_size", c.pool_size},
      {"image_size", c.image_size},
      {"checkpoint_interval", c.checkpoint_interval},
      {"generator",
       {{"depth", c.generator.depth},
        {"base_channels", c.generator.base_channels},
        {"in_channels", c.generator.in_channels},
        {"out_channels", c.generator.out_channels},
        {"skip_connections", c.generator.skip_connections}}},
      {"discriminator",
       {{"num_layers", c.discriminator.num_layers},
        {"base_channels", c.discriminator.base_channels},
        {"in_channels", c.discriminator.in_channels}}},
  };
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) raise(ErrorKind::configuration, "training config must be an object");
  try {
    auto get = [](const nlohmann::json& obj, const char* key, auto& out) {
      if (obj.contains(key)) out = obj.at(key).get<std::decay_t<decltype(out)>>();
    };
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      get(w, "alpha", c.weights.alpha);
      get(w, "beta", c.weights.beta);
      get(w, "gamma", c.weights.gamma);
    }
    if (j.contains("lambda")) {
      get(j.at("lambda"), "whole", c.lambda.whole);
      get(j.at("lambda"), "component", c.lambda.component);
    }
    get(j, "batch_size", c.batch_size);
    get(j, "total_steps", c.total_steps);
    get(j, "learning_rate", c.learning_rate);
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      if (o.contains("name") && o.at("name") != "adam") raise(ErrorKind::configuration, "only adam is supported");
      get(o, "beta1", c.beta1);
      get(o, "beta2", c.beta2);
    }
    get(j, "seed", c.seed);
    if (j.contains("preset")) c.preset = parse_preset(j.at("preset").get<std::string>());
    if (j.contains("gan_mode")) c.gan_mode = parse_gan_mode(j.at("gan_mode").get<std::string>());
    if (j.contains("attentive_mode")) c.attentive_mode = parse_attentive_mode(j.at("attentive_mode").get<std::string>());
    get(j, "pool_size", c.pool_size);
    get(j, "image_size", c.image_size);
    get(j, "checkpoint_interval", c.checkpoint_interval);
    if (j.contains("generator")) {
      const auto& g = j.at("generator");
      get(g, "depth", c.generator.depth);
      get(g, "base_channels", c.generator.base_channels);
      get(g, "in_channels", c.generator.in_channels);
      get(g, "out_channels", c.generator.out_channels);
      get(g, "skip_connections", c.generator.skip_connections);
    }
    if (j.contains("discriminator")) {
      const auto& d = j.at("discriminator");
      get(d, "num_layers", c.discriminator.num_layers);
      get(d, "base_channels", c.discriminator.base_channels);
      get(d, "in_channels", c.discriminator.in_channels);
    }
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::configuration, std::string("bad training config: ") + e.what());
  }
}

ActiveTerms active_terms(const TrainConfig& config) {
  ActiveTerms t;
  const bool cycles = config.weights.alpha > 0.0;
  t.cycle = cycles;
  t.attentive = cycles && config.preset != AblationPreset::A_cycle_only;
  t.perceptual = config.weights.gamma > 0.0 && (config.preset == AblationPreset::C_attentive_plus_perceptual ||
                                                config.preset == AblationPreset::full);
  t.tv = config.weights.beta > 0.0 && config.preset == AblationPreset::full;
  return t;
}

// ---------------------------------------------------------------------------

ReplayPool::ReplayPool(int capacity) : capacity_(capacity) {
  if (capacity < 0) raise(ErrorKind::argument, "pool capacity must be non-negative");
}

Tensor ReplayPool::draw(const Tensor& candidate, std::mt19937_64& rng) {
  if (capacity_ == 0) return candidate;
  if (static_cast<int>(images_.size()) < capacity_) {
    images_.push_back(candidate);
    return candidate;
  }
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < 0.5) return candidate;
  std::uniform_int_distribution<std::size_t> pick(0, images_.size() - 1);
  const std::size_t i = pick(rng);
  Tensor stored = std::move(images_[i]);
  images_[i] = candidate;
  return stored;
}

void ReplayPool::restore(std::vector<Tensor> images) {
  if (static_cast<int>(images.size()) > capacity_) raise(ErrorKind::integrity, "replay pool overfilled");
  images_ = std::move(images);
}

ImageTensor replay_pool_draw(ReplayPool& pool, const ImageTensor& candidate, std::mt19937_64& rng) {
  return ImageTensor(pool.draw(candidate.data(), rng), candidate.range());
}

// ---------------------------------------------------------------------------

TrainState TrainState::initialize(const TrainConfig& config) {
  config.validate();
  return TrainState{
      .config = config,
      .fingerprint = config.architecture_fingerprint(),
      .step = 0,
      .g_ab = build_generator(config.generator, derive_seed(config.seed, 1)),
      .g_ba = build_generator(config.generator, derive_seed(config.seed, 2)),
      .d_a = build_discriminator(config.discriminator, derive_seed(config.seed, 3)),
      .d_b = build_discriminator(config.discriminator, derive_seed(config.seed, 4)),
      .opt_g_ab = {},
      .opt_g_ba = {},
      .opt_d_a = {},
      .opt_d_b = {},
      .pool_fake_a = ReplayPool(config.pool_size),
      .pool_fake_b = ReplayPool(config.pool_size),
      .rng = std::mt19937_64(derive_seed(config.seed, 5)),
  };
}

TrainState TrainState::clone() const {
  return TrainState{
      .config = config,
      .fingerprint = fingerprint,
      .step = step,
      .g_ab = g_ab.clone(),
      .g_ba = g_ba.clone(),
      .d_a = d_a.clone(),
      .d_b = d_b.clone(),
      .opt_g_ab = opt_g_ab,
      .opt_g_ba = opt_g_ba,
      .opt_d_a = opt_d_a,
      .opt_d_b = opt_d_b,
      .pool_fake_a = pool_fake_a,
      .pool_fake_b = pool_fake_b,
      .rng = rng,
  };
}

bool states_equal(const TrainState& a, const TrainState& b) {
  auto same_params = [](const ParameterList& x, const ParameterList& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].name != y[i].name || !(x[i].var.value() == y[i].var.value())) return false;
    }
    return true;
  };
  return a.fingerprint == b.fingerprint && a.step == b.step && same_params(a.g_ab.parameters(), b.g_ab.parameters()) &&
         same_params(a.g_ba.parameters(), b.g_ba.parameters()) &&
         same_params(a.d_a.parameters(), b.d_a.parameters()) &&
         same_params(a.d_b.parameters(), b.d_b.parameters()) && a.opt_g_ab == b.opt_g_ab &&
         a.opt_g_ba == b.opt_g_ba && a.opt_d_a == b.opt_d_a && a.opt_d_b == b.opt_d_b &&
         a.pool_fake_a == b.pool_fake_a && a.pool_fake_b == b.pool_fake_b && a.rng == b.rng;
}

void ensure_compatible(const TrainState& state, const TrainConfig& config) {
  const std::uint64_t expected = config.architecture_fingerprint();
  if (state.fingerprint != expected) {
    std::ostringstream msg;
    msg << "architecture fingerprint mismatch: state " << std::hex << state.fingerprint << ", config " << expected;
    raise(ErrorKind::configuration, msg.str());
  }
}

// ---------------------------------------------------------------------------

ForwardPass forward_generators(const TrainState& state, const UnpairedBatch& batch, const TrainConfig& config) {
  if (batch.batch_a.empty() || batch.batch_a.size() != batch.batch_b.size()) {
    raise(ErrorKind::data, "batch halves must be non-empty and of equal size");
  }
  ForwardPass pass;
  pass.real_a = stack_images(batch.batch_a);
  pass.real_b = stack_images(batch.batch_b);
  pass.fake_b = state.g_ab.forward(pass.real_a);
  pass.rec_a = state.g_ba.forward(pass.fake_b);
  pass.fake_a = state.g_ba.forward(pass.real_b);
  pass.rec_b = state.g_ab.forward(pass.fake_a);
  for (const auto& sample : batch.batch_a) {
    pass.regions.push_back(sample.regions.value_or(RegionSet()));
    pass.lambdas.push_back(default_weights(pass.regions.back(), config.lambda));
  }
  return pass;
}

namespace {

Var pool_batch(ReplayPool& pool, const Var& fakes, std::mt19937_64& rng) {
  const Tensor& all = fakes.value();
  std::vector<Tensor> drawn;
  for (int i = 0; i < all.dim(0); ++i) drawn.push_back(pool.draw(ops::unstack(all, i), rng));
  return constant(ops::stack(drawn));
}

void discriminator_half(const Discriminator& d, AdamState& opt, const Var& real, const Var& fake,
                        const TrainConfig& config, const char* name) {
  const ParameterList params = d.parameters();
  set_requires_grad(params, true);
  zero_grad(params);
  const Var objective = adversarial_loss_discriminator(d.forward(real), d.forward(fake), config.gan_mode);
  require_finite(name, objective.item());
  const std::pair<double, Var> negated[] = {{-1.0, objective}};
  backward(ops::weighted_sum(negated));
  adam_step(params, opt, config.adam());
  zero_grad(params);
}

// Literal reading of the attentive cycle: each region crop, resized to the
// working size, goes through both generators on its own.
Var crop_then_generate_loss(const TrainState& state, const ForwardPass& pass) {
  const Tensor& x = pass.real_a.value();
  const int batch = x.dim(0), height = x.dim(2), width = x.dim(3);
  std::vector<RegionSet> whole(static_cast<std::size_t>(batch));
  std::vector<AttentionWeights> whole_weights;
  std::vector<Tensor> crops;
  std::vector<AttentionWeights> crop_weights;
  for (int n = 0; n < batch; ++n) {
    const auto& set = pass.regions[static_cast<std::size_t>(n)];
    const auto& lambda = pass.lambdas[static_cast<std::size_t>(n)].lambda;
    whole_weights.push_back({{lambda[0]}});
    for (std::size_t j = 1; j < set.k(); ++j) {
      const PixelWindow win = pixel_window(set[j].box, height, width);
      const Tensor sample = ops::unstack(x, n);
      const Tensor single = sample.reshaped({1, sample.dim(0), height, width});
      const Tensor cropped = ops::crop(constant(single), win.top, win.left, win.height, win.width).value();
      crops.push_back(ops::unstack(ops::resize_bilinear(cropped, height, width), 0));
      crop_weights.push_back({{lambda[j]}});
    }
  }
  Var whole_term = attentive_cycle_loss(pass.real_a, pass.rec_a, whole, whole_weights);
  if (crops.empty()) return whole_term;
  const Var crop_batch = constant(ops::stack(crops));
  const Var crop_rec = state.g_ba.forward(state.g_ab.forward(crop_batch));
  std::vector<RegionSet> crop_regions(crops.size());
  Var crop_term = attentive_cycle_loss(crop_batch, crop_rec, crop_regions, crop_weights);
  // crop_term averages over crops; rescale to a per-sample sum.
  const std::pair<double, Var> terms[] = {{1.0, whole_term},
                                          {static_cast<double>(crops.size()) / batch, crop_term}};
  return ops::weighted_sum(terms);
}

}  // namespace

void update_discriminators(TrainState& state, const ForwardPass& pass, const TrainConfig& config) {
  const Var fake_b = pool_batch(state.pool_fake_b, pass.fake_b, state.rng);
  const Var fake_a = pool_batch(state.pool_fake_a, pass.fake_a, state.rng);
  discriminator_half(state.d_b, state.opt_d_b, pass.real_b, fake_b, config, "d_b");
  discriminator_half(state.d_a, state.opt_d_a, pass.real_a, fake_a, config, "d_a");
}

LossReport update_generators(TrainState& state, const ForwardPass& pass, const TrainConfig& config,
                             const TrainingContext& context) {
  const ActiveTerms active = active_terms(config);
  if (active.perceptual && context.extractor == nullptr) {
    raise(ErrorKind::configuration, "the perceptual term is active but no feature extractor was supplied");
  }
  const ParameterList d_params = [&] {
    ParameterList p = state.d_a.parameters();
    ParameterList q = state.d_b.parameters();
    p.insert(p.end(), q.begin(), q.end());
    return p;
  }();
  const ParameterList g_ab = state.g_ab.parameters();
  const ParameterList g_ba = state.g_ba.parameters();

  struct Restore {
    const ParameterList& params;
    ~Restore() { set_requires_grad(params, true); }
  } restore{d_params};
  set_requires_grad(d_params, false);
  zero_grad(g_ab);
  zero_grad(g_ba);

  LossReport report;
  report.step = state.step + 1;
  std::vector<std::pair<double, Var>> terms;

  const Var gan_ab = adversarial_loss_generator(state.d_b.forward(pass.fake_b), config.gan_mode);
  const Var gan_ba = adversarial_loss_generator(state.d_a.forward(pass.fake_a), config.gan_mode);
  report.gan_ab = gan_ab.item();
  report.gan_ba = gan_ba.item();
  terms.emplace_back(1.0, gan_ab);
  terms.emplace_back(1.0, gan_ba);

  if (active.cycle) {
    Var att;
    if (!active.attentive) {
      att = cycle_loss(pass.real_a, pass.rec_a);
    } else if (config.attentive_mode == AttentiveMode::crop_reconstruction) {
      att = attentive_cycle_loss(pass.real_a, pass.rec_a, pass.regions, pass.lambdas);
    } else {
      att = crop_then_generate_loss(state, pass);
    }
    const Var cyc = cycle_loss(pass.real_b, pass.rec_b);
    report.att_cyc_ab = att.item();
    report.cyc_ba = cyc.item();
    terms.emplace_back(config.weights.alpha, att);
    terms.emplace_back(config.weights.alpha, cyc);
  }
  if (active.tv) {
    const Var tv = tv_loss(pass.fake_b);
    report.tv = tv.item();
    terms.emplace_back(config.weights.beta, tv);
  }
  if (active.perceptual) {
    const Var per = perceptual_loss(pass.real_a, pass.fake_b, *context.extractor);
    report.perceptual = per.item();
    terms.emplace_back(config.weights.gamma, per);
  }

  report.total = full_objective(report, config.weights);
  backward(ops::weighted_sum(terms));
  adam_step(g_ab, state.opt_g_ab, config.adam());
  adam_step(g_ba, state.opt_g_ba, config.adam());
  zero_grad(g_ab);
  zero_grad(g_ba);
  return report;
}

LossReport train_step(TrainState& state, const UnpairedBatch& batch, const TrainConfig& config,
                      const TrainingContext& context) {
  ensure_compatible(state, config);
  const ForwardPass pass = forward_generators(state, batch, config);

  // Snapshot everything the discriminator half mutates so a failure in
  // either half leaves the state as it was.
  Discriminator d_a = state.d_a.clone(), d_b = state.d_b.clone();
  AdamState opt_d_a = state.opt_d_a, opt_d_b = state.opt_d_b;
  ReplayPool pool_a = state.pool_fake_a, pool_b = state.pool_fake_b;
  std::mt19937_64 rng = state.rng;
  try {
    update_discriminators(state, pass, config);
    LossReport report = update_generators(state, pass, config, context);
    ++state.step;
    return report;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::numeric) throw;
    state.d_a = std::move(d_a);
    state.d_b = std::move(d_b);
    state.opt_d_a = std::move(opt_d_a);
    state.opt_d_b = std::move(opt_d_b);
    state.pool_fake_a = std::move(pool_a);
    state.pool_fake_b = std::move(pool_b);
    state.rng = rng;
    throw;
  }
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const LossReport& r) {
  return nlohmann::json{{"step", r.step},       {"gan_ab", r.gan_ab}, {"gan_ba", r.gan_ba},
                        {"att_cyc_ab", r.att_cyc_ab}, {"cyc_ba", r.cyc_ba}, {"tv", r.tv},
                        {"perceptual", r.perceptual}, {"total", r.total}};
}

LossReport loss_report_from_json(const nlohmann::json& j) {
  try {
    LossReport r;
    r.step = j.at("step").get<std::int64_t>();
    r.gan_ab = j.at("gan_ab").get<double>();
    r.gan_ba = j.at("gan_ba").get<double>();
    r.att_cyc_ab = j.at("att_cyc_ab").get<double>();
    r.cyc_ba = j.at("cyc_ba").get<double>();
    r.tv = j.at("tv").get<double>();
    r.perceptual = j.at("perceptual").get<double>();
    r.total = j.at("total").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::parse, std::string("bad loss record: ") + e.what());
  }
}

std::vector<LossReport> read_loss_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::io, "cannot open loss log " + path.string());
  std::vector<LossReport> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(loss_report_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      raise(ErrorKind::parse, path.filename().string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

fs::path checkpoint_path(const fs::path& out_dir, std::int64_t step) {
  char name[64];
  std::snprintf(name, sizeof name, "checkpoint_%06lld.ckpt", static_cast<long long>(step));
  return out_dir / name;
}

fs::path train(const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  const CorpusLayout layout{options.data_root, options.style};
  layout.validate();
  const ActiveTerms active = active_terms(config);

  const ImageSize size{config.image_size, config.image_size};
  DomainDataset data_a = DomainDataset::from_directory(layout.train_a(), Domain::a_selfie, size);
  DomainDataset data_b = DomainDataset::from_directory(layout.train_b(), Domain::b_cartoon, size);
  std::optional<fs::path> annotations = options.annotations;
  if (!annotations && fs::exists(layout.annotations())) annotations = layout.annotations();
  if (annotations) {
    data_a.set_region_provider(
        std::make_shared<SidecarRegionProvider>(SidecarRegionProvider::from_file(*annotations)), options.warn);
  }

  TrainState state = options.resume_from ? load_checkpoint(*options.resume_from) : TrainState::initialize(config);
  ensure_compatible(state, config);
  state.config = config;
  if (active.perceptual && options.extractor == nullptr && state.step < config.total_steps) {
    raise(ErrorKind::resource, "the perceptual term needs feature extractor weights");
  }

  fs::create_directories(options.out_dir);
  {
    std::ofstream cfg(options.out_dir / kConfigName);
    cfg << nlohmann::json(config).dump(2) << '\n';
  }

  const fs::path log_path = options.out_dir / kLossLogName;
  std::vector<LossReport> kept;
  if (options.resume_from && fs::exists(log_path)) {
    for (const auto& r : read_loss_log(log_path)) {
      if (r.step <= state.step) kept.push_back(r);
    }
  }
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) raise(ErrorKind::io, "cannot write " + log_path.string());
  for (const auto& r : kept) log << to_json(r).dump() << '\n';
  log.flush();

  fs::path last = checkpoint_path(options.out_dir, state.step);
  if (state.step == 0) save_checkpoint(state, last);

  const TrainingContext context{options.extractor};
  while (state.step < config.total_steps) {
    const UnpairedBatch batch =
        unpaired_batch(data_a, data_b, config.batch_size, config.seed, static_cast<std::uint64_t>(state.step));
    const LossReport report = train_step(state, batch, config, context);
    log << to_json(report).dump() << '\n';
    log.flush();
    if (options.on_step) options.on_step(report);
    if (state.step % config.checkpoint_interval == 0 || state.step == config.total_steps) {
      last = checkpoint_path(options.out_dir, state.step);
      save_checkpoint(state, last);
    }
  }
  return last;
}

}  // namespace ctz
