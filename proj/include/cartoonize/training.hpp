#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cartoonize/data.hpp"
#include "cartoonize/extractor.hpp"
#include "cartoonize/losses.hpp"
#include "cartoonize/networks.hpp"
#include "cartoonize/optim.hpp"
#include "cartoonize/regions.hpp"

namespace ctz {

// Ablation setups. A: plain cycle loss both ways. B: attentive cycle loss on
// A->B->A. C: B plus perceptual loss. full: C plus total variation.
enum class AblationPreset { A_cycle_only, B_attentive, C_attentive_plus_perceptual, full };
enum class AttentiveMode { crop_reconstruction, crop_then_generate };

std::string_view to_string(AblationPreset preset) noexcept;
std::string_view to_string(GanMode mode) noexcept;
std::string_view to_string(AttentiveMode mode) noexcept;
AblationPreset parse_preset(std::string_view text);  // "A", "B", "C", "full" or the enum names
GanMode parse_gan_mode(std::string_view text);
AttentiveMode parse_attentive_mode(std::string_view text);

struct TrainConfig {
  LossWeights weights;
  AttentionRule lambda;
  int batch_size = 1;
  std::int64_t total_steps = 10000;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  AblationPreset preset = AblationPreset::full;
  GanMode gan_mode = GanMode::log;
  AttentiveMode attentive_mode = AttentiveMode::crop_reconstruction;
  int pool_size = 50;
  int image_size = 256;
  std::int64_t checkpoint_interval = 1000;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;

  void validate() const;
  // Hash of everything that determines parameter shapes.
  std::uint64_t architecture_fingerprint() const;
  AdamOptions adam() const { return {learning_rate, beta1, beta2, 1e-8}; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& config);
void from_json(const nlohmann::json& j, TrainConfig& config);  // missing keys keep defaults

struct ActiveTerms {
  bool attentive = false;  // region-weighted A->B->A cycle (else plain cycle)
  bool cycle = false;
  bool tv = false;
  bool perceptual = false;
};

// Terms that are both enabled by the preset and carry a positive weight.
ActiveTerms active_terms(const TrainConfig& config);

/// History of generated images shown to the discriminator.
class ReplayPool {
 public:
  explicit ReplayPool(int capacity = 0);

  // capacity 0: returns the candidate. Filling: stores and returns the
  // candidate. Full: with probability 1/2 returns the candidate, otherwise
  // swaps it with a uniformly chosen stored image and returns that one.
  Tensor draw(const Tensor& candidate, std::mt19937_64& rng);

  int capacity() const noexcept { return capacity_; }
  const std::vector<Tensor>& images() const noexcept { return images_; }
  void restore(std::vector<Tensor> images);

  friend bool operator==(const ReplayPool&, const ReplayPool&) = default;

 private:
  int capacity_ = 0;
  std::vector<Tensor> images_;
};

ImageTensor replay_pool_draw(ReplayPool& pool, const ImageTensor& candidate, std::mt19937_64& rng);

struct TrainState {
  TrainConfig config;
  std::uint64_t fingerprint = 0;
  std::int64_t step = 0;  // completed steps
  Generator g_ab;
  Generator g_ba;
  Discriminator d_a;
  Discriminator d_b;
  AdamState opt_g_ab;
  AdamState opt_g_ba;
  AdamState opt_d_a;
  AdamState opt_d_b;
  ReplayPool pool_fake_a;
  ReplayPool pool_fake_b;
  std::mt19937_64 rng;

  static TrainState initialize(const TrainConfig& config);
  TrainState clone() const;
};

// Bitwise equality of step, parameters, optimizer moments, pools and rng.
bool states_equal(const TrainState& a, const TrainState& b);

// Configuration error unless the config's architecture matches the state.
void ensure_compatible(const TrainState& state, const TrainConfig& config);

struct TrainingContext {
  const FeatureExtractor* extractor = nullptr;  // required when the perceptual term is active
};

/// Generator outputs for one batch, shared by both half-steps.
struct ForwardPass {
  Var real_a, real_b;
  Var fake_b, rec_a;  // G_AB(x), G_BA(G_AB(x))
  Var fake_a, rec_b;  // G_BA(y), G_AB(G_BA(y))
  std::vector<RegionSet> regions;
  std::vector<AttentionWeights> lambdas;
};

ForwardPass forward_generators(const TrainState& state, const UnpairedBatch& batch, const TrainConfig& config);

// Ascends both discriminator objectives on real images and pool-drawn,
// detached fakes. Generator parameters are untouched.
void update_discriminators(TrainState& state, const ForwardPass& pass, const TrainConfig& config);

// Descends the full objective for both generators with the discriminators
// frozen. Discriminator parameters are untouched.
LossReport update_generators(TrainState& state, const ForwardPass& pass, const TrainConfig& config,
                             const TrainingContext& context);

// One discriminator update then one generator update. On a non-finite loss
// the state is rolled back and a numeric error names the component.
LossReport train_step(TrainState& state, const UnpairedBatch& batch, const TrainConfig& config,
                      const TrainingContext& context);

struct TrainOptions {
  std::filesystem::path data_root;
  std::filesystem::path out_dir;
  std::string style;
  std::optional<std::filesystem::path> annotations;  // default: <root>/annotations_a.jsonl if present
  std::optional<std::filesystem::path> resume_from;
  const FeatureExtractor* extractor = nullptr;
  std::function<void(const LossReport&)> on_step;
  WarningSink warn;
};

inline constexpr const char* kLossLogName = "loss_log.jsonl";
inline constexpr const char* kConfigName = "train_config.json";

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, std::int64_t step);

// Runs steps state.step + 1 .. total_steps, logging one LossReport per line
// and checkpointing at the start (fresh runs), every interval, and at the
// end. Returns the final checkpoint path.
std::filesystem::path train(const TrainConfig& config, const TrainOptions& options);

nlohmann::json to_json(const LossReport& report);
LossReport loss_report_from_json(const nlohmann::json& j);
std::vector<LossReport> read_loss_log(const std::filesystem::path& path);

// Checkpoint container: magic "CTZCKPT", version, architecture fingerprint,
// payload length and checksum, then the config and full state. Written
// atomically (temp file + rename).
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace ctz
