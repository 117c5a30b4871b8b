#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <ostream>

#include "cartoonize/data.hpp"
#include "cartoonize/errors.hpp"
#include "cartoonize/evaluation.hpp"
#include "cartoonize/extractor.hpp"
#include "cartoonize/ops.hpp"
#include "cartoonize/training.hpp"

namespace fs = std::filesystem;

namespace ctz::cli {

namespace {

constexpr const char* kWeightsEnv = "SCGAN_EXTRACTOR_WEIGHTS";

#ifdef CARTOONIZE_DATA_DIR
const fs::path kBundledSurvey = fs::path(CARTOONIZE_DATA_DIR) / "survey_scores.csv";
#else
const fs::path kBundledSurvey = "data/survey_scores.csv";
#endif

void print_error(std::ostream& err, std::string_view kind, const std::string& message) {
  err << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
}

std::vector<fs::path> collect_inputs(const fs::path& input) {
  std::error_code ec;
  if (fs::is_directory(input, ec)) {
    auto files = list_images(input);
    if (files.empty()) raise(ErrorKind::data, "no images in " + input.string());
    return files;
  }
  if (!fs::exists(input, ec)) raise(ErrorKind::io, "no such file or directory: " + input.string());
  return {input};
}

ImageTensor load_native(const fs::path& path) { return load_image(path, probe_image_size(path)); }

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) raise(ErrorKind::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

struct PreprocessArgs {
  std::string input;
  std::string out;
  int min_size = 64;
  int output_size = 256;
  std::string crop = "center_square";
  bool no_dedup = false;
};

void add_preprocess(CLI::App& app, PreprocessArgs& a) {
  auto* cmd = app.add_subcommand("preprocess", "Filter, crop, resize and deduplicate a raw image folder");
  cmd->add_option("--input", a.input, "Raw image directory")->required();
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_option("--min-size", a.min_size, "Reject images whose shorter side is smaller")->capture_default_str();
  cmd->add_option("--output-size", a.output_size, "Side length of written images")->capture_default_str();
  cmd->add_option("--crop", a.crop, "center_square or none")
      ->check(CLI::IsMember({"center_square", "none"}))
      ->capture_default_str();
  cmd->add_flag("--no-dedup", a.no_dedup, "Keep exact duplicates");
}

int run_preprocess(const PreprocessArgs& a, std::ostream& out) {
  PreprocessOptions options;
  options.min_size = a.min_size;
  options.output_size = a.output_size;
  options.crop_mode = a.crop == "none" ? CropMode::none : CropMode::center_square;
  options.dedup = !a.no_dedup;
  const PreprocessReport report = preprocess_corpus(a.input, a.out, options);
  nlohmann::json j{{"kept", report.kept}, {"rejected", report.rejected}, {"reasons", report.reasons}};
  nlohmann::json rejections = nlohmann::json::array();
  for (const auto& [file, reason] : report.rejections) rejections.push_back({{"file", file}, {"reason", reason}});
  j["rejections"] = rejections;
  write_json(fs::path(a.out) / "preprocess_report.json", j);
  out << nlohmann::json{{"kept", report.kept}, {"rejected", report.rejected}, {"reasons", report.reasons}}.dump()
      << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data_root;
  std::string out = "runs/train";
  std::string style;
  std::string checkpoint;
  std::string extractor_weights;
  std::string annotations;
  std::int64_t steps = 0;
  int batch_size = 0;
  std::uint64_t seed = 0;
  std::string preset;
  std::string gan_mode;
  std::string attentive_mode;
  int image_size = 0;
  int generator_channels = 0;
  int discriminator_channels = 0;
  int discriminator_layers = 0;
  std::int64_t checkpoint_interval = 0;
  int pool_size = 0;
  double lr = 0, alpha = 0, beta = 0, gamma = 0, lambda_whole = 0, lambda_component = 0;
  bool verbose = false;
};

struct TrainOptionsRef {
  CLI::App* cmd = nullptr;
};

void add_train(CLI::App& app, TrainArgs& a, TrainOptionsRef& ref) {
  const TrainConfig d;
  auto* cmd = app.add_subcommand("train", "Train both generators and discriminators on an unpaired corpus");
  ref.cmd = cmd;
  cmd->add_option("--config", a.config, "JSON config file; flags override its keys");
  cmd->add_option("--data-root", a.data_root, "Corpus root holding trainA/ and trainB[_<style>]/");
  cmd->add_option("--out", a.out, "Output directory for logs and checkpoints")->capture_default_str();
  cmd->add_option("--style", a.style, "Domain-B corpus suffix: trainB_<style> (default trainB)");
  cmd->add_option("--checkpoint", a.checkpoint, "Resume from this checkpoint");
  cmd->add_option("--extractor-weights", a.extractor_weights,
                  std::string("VGG19 weights file (fallback: $") + kWeightsEnv + ")");
  cmd->add_option("--annotations", a.annotations, "Region sidecar (default <data-root>/annotations_a.jsonl)");
  cmd->add_option("--steps", a.steps, "Total optimizer steps")->default_str(std::to_string(d.total_steps));
  cmd->add_option("--batch-size", a.batch_size, "Images per domain per step")->default_str(std::to_string(d.batch_size));
  cmd->add_option("--seed", a.seed, "Seed for initialization and sampling")->default_str(std::to_string(d.seed));
  cmd->add_option("--preset", a.preset, "Loss preset: A, B, C or full")
      ->check(CLI::IsMember({"A", "B", "C", "full"}))
      ->default_str("full");
  cmd->add_option("--gan-mode", a.gan_mode, "log or lsgan")->check(CLI::IsMember({"log", "lsgan"}))->default_str("log");
  cmd->add_option("--attentive-mode", a.attentive_mode, "crop_reconstruction or crop_then_generate")
      ->check(CLI::IsMember({"crop_reconstruction", "crop_then_generate"}))
      ->default_str("crop_reconstruction");
  cmd->add_option("--image-size", a.image_size, "Training resolution")->default_str(std::to_string(d.image_size));
  cmd->add_option("--generator-channels", a.generator_channels, "Generator base width")
      ->default_str(std::to_string(d.generator.base_channels));
  cmd->add_option("--discriminator-channels", a.discriminator_channels, "Discriminator base width")
      ->default_str(std::to_string(d.discriminator.base_channels));
  cmd->add_option("--discriminator-layers", a.discriminator_layers, "Stride-2 discriminator layers")
      ->default_str(std::to_string(d.discriminator.num_layers));
  cmd->add_option("--checkpoint-interval", a.checkpoint_interval, "Steps between checkpoints")
      ->default_str(std::to_string(d.checkpoint_interval));
  cmd->add_option("--pool-size", a.pool_size, "Replay pool capacity")->default_str(std::to_string(d.pool_size));
  cmd->add_option("--lr", a.lr, "Adam learning rate")->default_str("0.0002");
  cmd->add_option("--alpha", a.alpha, "Cycle loss weight")->default_str("10");
  cmd->add_option("--beta", a.beta, "Total variation weight")->default_str("2");
  cmd->add_option("--gamma", a.gamma, "Perceptual loss weight")->default_str("0.5");
  cmd->add_option("--lambda-whole", a.lambda_whole, "Attentive weight of the whole image")->default_str("1");
  cmd->add_option("--lambda-component", a.lambda_component, "Attentive weight of each facial region")
      ->default_str("0.5");
  cmd->add_flag("--verbose", a.verbose, "Print every step's losses");
}

std::optional<fs::path> extractor_weights_path(const std::string& flag) {
  if (!flag.empty()) return fs::path(flag);
  if (const char* env = std::getenv(kWeightsEnv); env != nullptr && *env != '\0') return fs::path(env);
  return std::nullopt;
}

int run_train(const TrainArgs& a, const CLI::App& cmd, std::ostream& out, std::ostream& err) {
  auto given = [&](const char* flag) { return cmd.count(flag) > 0; };
  nlohmann::json file = nlohmann::json::object();
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) raise(ErrorKind::io, "cannot open config " + a.config);
    try {
      file = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      raise(ErrorKind::parse, a.config + ": " + e.what());
    }
  }
  TrainConfig config = file.contains("train") ? file.at("train").get<TrainConfig>() : TrainConfig{};
  auto text = [&](const char* flag, const std::string& value, const char* key) -> std::string {
    if (given(flag)) return value;
    if (file.contains(key)) return file.at(key).get<std::string>();
    return value;
  };
  const fs::path data_root = text("--data-root", a.data_root, "data_root");
  const fs::path out_dir = text("--out", a.out, "out");
  const std::string style = text("--style", a.style, "style");
  const std::string annotations = text("--annotations", a.annotations, "annotations");
  const std::string weights_flag = text("--extractor-weights", a.extractor_weights, "extractor_weights");
  if (data_root.empty()) raise(ErrorKind::configuration, "--data-root is required");

  if (given("--steps")) config.total_steps = a.steps;
  if (given("--batch-size")) config.batch_size = a.batch_size;
  if (given("--seed")) config.seed = a.seed;
  if (given("--preset")) config.preset = parse_preset(a.preset);
  if (given("--gan-mode")) config.gan_mode = parse_gan_mode(a.gan_mode);
  if (given("--attentive-mode")) config.attentive_mode = parse_attentive_mode(a.attentive_mode);
  if (given("--image-size")) config.image_size = a.image_size;
  if (given("--generator-channels")) config.generator.base_channels = a.generator_channels;
  if (given("--discriminator-channels")) config.discriminator.base_channels = a.discriminator_channels;
  if (given("--discriminator-layers")) config.discriminator.num_layers = a.discriminator_layers;
  if (given("--checkpoint-interval")) config.checkpoint_interval = a.checkpoint_interval;
  if (given("--pool-size")) config.pool_size = a.pool_size;
  if (given("--lr")) config.learning_rate = a.lr;
  if (given("--alpha")) config.weights.alpha = a.alpha;
  if (given("--beta")) config.weights.beta = a.beta;
  if (given("--gamma")) config.weights.gamma = a.gamma;
  if (given("--lambda-whole")) config.lambda.whole = a.lambda_whole;
  if (given("--lambda-component")) config.lambda.component = a.lambda_component;
  config.validate();

  std::optional<Vgg19Extractor> extractor;
  const auto weights = extractor_weights_path(weights_flag);
  const bool needs_extractor = active_terms(config).perceptual && config.total_steps > 0;
  if (needs_extractor) {
    if (!weights) {
      raise(ErrorKind::resource, std::string("perceptual loss needs --extractor-weights or $") + kWeightsEnv);
    }
    FeatureExtractorHandle handle;
    handle.weights_path = *weights;
    extractor.emplace(Vgg19Extractor::load(handle));
  }

  TrainOptions options;
  options.data_root = data_root;
  options.out_dir = out_dir;
  options.style = style;
  if (!annotations.empty()) options.annotations = fs::path(annotations);
  if (!a.checkpoint.empty()) options.resume_from = fs::path(a.checkpoint);
  options.extractor = extractor ? &*extractor : nullptr;
  options.warn = [&err](const std::string& message) { err << "warning: " << message << '\n'; };
  if (a.verbose) {
    options.on_step = [&out](const LossReport& r) { out << to_json(r).dump() << '\n'; };
  }

  nlohmann::json run{{"train", config},
                     {"data_root", data_root.string()},
                     {"out", out_dir.string()},
                     {"style", style},
                     {"annotations", annotations},
                     {"extractor_weights", weights ? weights->string() : std::string()},
                     {"resume_from", a.checkpoint}};
  write_json(out_dir / "run_config.json", run);

  const fs::path last = train(config, options);
  out << nlohmann::json{{"checkpoint", last.string()}, {"loss_log", (out_dir / kLossLogName).string()}}.dump()
      << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct InferArgs {
  std::string checkpoint;
  std::string input;
  std::string out;
  std::string direction = "a2b";
  std::string suffix = "_cartoon";
};

void add_infer(CLI::App& app, InferArgs& a) {
  auto* cmd = app.add_subcommand("infer", "Translate an image or a folder of images with a trained checkpoint");
  cmd->add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required();
  cmd->add_option("--input", a.input, "Image file or directory")->required();
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_option("--direction", a.direction, "a2b (selfie to cartoon) or b2a")
      ->check(CLI::IsMember({"a2b", "b2a"}))
      ->capture_default_str();
  cmd->add_option("--suffix", a.suffix, "Appended to each output file stem")->capture_default_str();
}

int run_infer(const InferArgs& a, std::ostream& out) {
  const TrainState state = load_checkpoint(a.checkpoint);
  const Generator& g = a.direction == "a2b" ? state.g_ab : state.g_ba;
  const int factor = 1 << g.config().depth;
  auto round_up = [factor](int v) { return std::max(factor, (v + factor - 1) / factor * factor); };
  for (const auto& path : collect_inputs(a.input)) {
    const ImageSize native = probe_image_size(path);
    const ImageSize work{round_up(native.height), round_up(native.width)};
    const ImageTensor input = load_image(path, work);
    ImageTensor result = g.translate(input);
    if (work.height != native.height || work.width != native.width) {
      const Tensor& t = result.data();
      const Tensor batch = t.reshaped({1, t.dim(0), t.dim(1), t.dim(2)});
      result = ImageTensor(ops::unstack(ops::resize_bilinear(batch, native.height, native.width), 0), result.range());
    }
    const fs::path target = fs::path(a.out) / (path.stem().string() + a.suffix + ".png");
    save_image(result, target);
    out << nlohmann::json{{"input", path.string()}, {"output", target.string()}}.dump() << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string input;
  std::string out;
  double scale = 255.0;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  auto* cmd = app.add_subcommand("evaluate", "Average-gradient report and gradient maps for generated images");
  cmd->add_option("--input", a.input, "Image file or directory")->required();
  cmd->add_option("--out", a.out, "Directory for gradient maps and report.json (optional)");
  cmd->add_option("--scale", a.scale, "Display scale the values are mapped to")->capture_default_str();
}

int run_evaluate(const EvaluateArgs& a, std::ostream& out) {
  nlohmann::json images = nlohmann::json::array();
  double sum = 0.0;
  for (const auto& path : collect_inputs(a.input)) {
    const ImageTensor image = load_native(path);
    const double value = average_gradient(image, a.scale);
    sum += value;
    nlohmann::json row{{"image", path.string()}, {"average_gradient", value}};
    if (!a.out.empty()) {
      const fs::path map_path = fs::path(a.out) / (path.stem().string() + "_gradient.png");
      save_image(gradient_map(image), map_path);
      row["gradient_map"] = map_path.string();
    }
    out << row.dump() << '\n';
    images.push_back(row);
  }
  const nlohmann::json summary{{"images", images.size()}, {"mean_average_gradient", sum / images.size()}};
  out << nlohmann::json{{"summary", summary}}.dump() << '\n';
  if (!a.out.empty()) write_json(fs::path(a.out) / "report.json", {{"images", images}, {"summary", summary}});
  return 0;
}

// ---------------------------------------------------------------------------

struct SurveyArgs {
  std::string input = kBundledSurvey.string();
};

void add_survey(CLI::App& app, SurveyArgs& a) {
  auto* cmd = app.add_subcommand("aggregate-survey", "Average 5-point survey scores per method");
  cmd->add_option("--input", a.input, "CSV: method followed by five score fractions")->capture_default_str();
}

int run_survey(const SurveyArgs& a, std::ostream& out) {
  const auto averages = aggregate_survey(SurveyTable::from_file(a.input));
  out << "method,average\n";
  for (const auto& row : averages) out << row.method << ',' << format_score(row.average) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct WeightsArgs {
  std::string out;
  std::uint64_t seed = 0;
  int layers = 12;
};

void add_weights(CLI::App& app, WeightsArgs& a) {
  auto* cmd = app.add_subcommand("synth-extractor-weights",
                                 "Write deterministic stand-in VGG19 weights (for smoke tests without pretrained ones)");
  cmd->add_option("--out", a.out, "Weights file to write")->required();
  cmd->add_option("--seed", a.seed, "Seed")->capture_default_str();
  cmd->add_option("--layers", a.layers, "Number of leading VGG19 convolutions")
      ->check(CLI::Range(1, 16))
      ->capture_default_str();
}

int run_weights(const WeightsArgs& a, std::ostream& out) {
  write_vgg19_weights(a.out, synthesize_vgg19_weights(a.seed, a.layers));
  out << nlohmann::json{{"weights", a.out}, {"layers", a.layers}}.dump() << '\n';
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Selfie-to-cartoon translation: preprocessing, training, inference and evaluation", "cartoonize"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::simple);

  PreprocessArgs preprocess;
  TrainArgs train_args;
  TrainOptionsRef train_ref;
  InferArgs infer;
  EvaluateArgs evaluate;
  SurveyArgs survey;
  WeightsArgs weights;
  add_preprocess(app, preprocess);
  add_train(app, train_args, train_ref);
  add_infer(app, infer);
  add_evaluate(app, evaluate);
  add_survey(app, survey);
  add_weights(app, weights);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, "usage", e.what());
    return 2;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "preprocess") return run_preprocess(preprocess, out);
    if (name == "train") return run_train(train_args, *train_ref.cmd, out, err);
    if (name == "infer") return run_infer(infer, out);
    if (name == "evaluate") return run_evaluate(evaluate, out);
    if (name == "aggregate-survey") return run_survey(survey, out);
    if (name == "synth-extractor-weights") return run_weights(weights, out);
    print_error(err, "usage", "unknown subcommand " + name);
    return 2;
  } catch (const Error& e) {
    print_error(err, to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    print_error(err, "internal", e.what());
  }
  return 1;
}

}  // namespace ctz::cli
