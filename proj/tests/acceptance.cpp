// One PASS/FAIL line per criterion; exit status 0 iff all pass.
// Toy runs: 16-channel networks, 64x64, 4 images per domain.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "cartoonize/errors.hpp"
#include "cartoonize/evaluation.hpp"
#include "cartoonize/extractor.hpp"
#include "cartoonize/losses.hpp"
#include "cartoonize/networks.hpp"
#include "cartoonize/training.hpp"
#include "cli.hpp"
#include "helpers.hpp"
#include "toy_corpus.hpp"

using namespace ctz;
namespace fs = std::filesystem;
using ctz::testing::away_from;
using ctz::testing::gradient_error;
using ctz::testing::random_tensor;
using ctz::testing::tv_safe;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed checks; the first few end up in the report line.
struct Checks {
  int failed = 0;
  std::string first;
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (++failed <= 3) first += (first.empty() ? "" : "; ") + what;
  }
  Outcome done(std::string detail) const {
    if (failed) return {false, std::to_string(failed) + " failed: " + first};
    return {true, std::move(detail)};
  }
};

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

int cli(std::vector<std::string> args, std::string* captured = nullptr) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  if (captured) *captured = out.str();
  if (code != 0) std::cerr << "  cli failure: " << err.str();
  return code;
}

Tensor scores_of(double squashed) { return Tensor({1, 1, 6, 6}, std::log(squashed / (1.0 - squashed))); }

// ---------------------------------------------------------------------------

Outcome loss_examples() {
  Checks c;
  int examples = 0;
  auto near = [&](double got, double want, const std::string& name, double tol = 1e-6) {
    ++examples;
    c.expect(std::abs(got - want) <= tol, name + " = " + fmt(got, "%.9g") + " (want " + fmt(want, "%.9g") + ")");
  };
  near(adversarial_loss_discriminator(Tensor({1, 1, 6, 6}, 40.0), Tensor({1, 1, 6, 6}, -40.0)), 0.0, "D saturated");
  near(adversarial_loss_discriminator(scores_of(0.5), scores_of(0.5)), -2.0 * std::log(2.0), "D at 0.5");
  near(adversarial_loss_discriminator(scores_of(0.5), scores_of(0.5)), -1.3863, "D at 0.5 printed", 5e-5);
  near(adversarial_loss_discriminator(scores_of(0.8), scores_of(0.3)), std::log(0.8) + std::log(0.7), "D 0.8/0.3");
  near(adversarial_loss_discriminator(scores_of(0.8), scores_of(0.3)), -0.5798, "D 0.8/0.3 printed", 5e-5);
  near(adversarial_loss_generator(scores_of(0.5)), std::log(2.0), "G at 0.5");
  near(adversarial_loss_generator(Tensor({1, 1, 6, 6}, 40.0)), 0.0, "G saturated");
  near(adversarial_loss_generator(scores_of(0.25)), -std::log(0.25), "G at 0.25");
  near(adversarial_loss_generator(scores_of(0.25)), 1.3863, "G at 0.25 printed", 5e-5);

  const ImageTensor x(random_tensor({3, 8, 8}, 1, -0.5, 0.5));
  Tensor shifted = x.data(), shifted3 = x.data(), shifted2 = x.data();
  for (double& v : shifted.values()) v += 0.1;
  for (double& v : shifted2.values()) v += 0.2;
  for (double& v : shifted3.values()) v += 0.3;
  near(cycle_loss(x, x), 0.0, "cycle identical");
  near(cycle_loss(x, ImageTensor(shifted)), 0.1, "cycle +0.1");
  near(cycle_loss(ImageTensor(Tensor({1, 1, 2}, {0.0, 0.5})), ImageTensor(Tensor({1, 1, 2}, {0.2, 0.1}))), 0.3,
       "cycle hand sum");

  const RegionSet whole;
  const RegionSet eyes = RegionSet::with_components({{"eyes", {0.25, 0.25, 0.5, 0.25}}});
  near(attentive_cycle_loss(x, x, eyes, default_weights(eyes)), 0.0, "attentive perfect");
  near(attentive_cycle_loss(x, ImageTensor(shifted), whole, AttentionWeights{{1.0}}), cycle_loss(x, ImageTensor(shifted)),
       "attentive k=1");
  near(attentive_cycle_loss(x, ImageTensor(shifted2), eyes, default_weights(eyes)), 0.3, "attentive offset");

  near(tv_loss(ImageTensor(Tensor({3, 8, 8}, 0.4))), 0.0, "tv constant");
  near(tv_loss(ImageTensor(Tensor({1, 2, 2}, {0.0, 1.0, 0.0, 1.0}))), 0.5, "tv hand sum");
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor r = random_tensor({3, 8, 8}, seed);
    Tensor flipped(r.shape());
    for (int ch = 0; ch < 3; ++ch)
      for (int y = 0; y < 8; ++y)
        for (int xx = 0; xx < 8; ++xx) flipped[(ch * 8 + y) * 8 + xx] = r[(ch * 8 + y) * 8 + 7 - xx];
    near(tv_loss(ImageTensor(r)), tv_loss(ImageTensor(flipped)), "tv flip symmetry", 1e-12);
  }

  const IdentityExtractor stub;
  near(perceptual_loss(x, x, stub), 0.0, "perceptual identical");
  near(perceptual_loss(x, ImageTensor(shifted3), stub), 0.3, "perceptual stub");

  std::ifstream in(std::string(CARTOONIZE_TEST_DATA) + "/vgg_fixture_golden.json");
  c.expect(static_cast<bool>(in), "golden fixture missing");
  double per = 0.0;
  if (in) {
    const auto golden = nlohmann::json::parse(in);
    const Vgg19Extractor vgg(FeatureExtractorHandle{}, synthesize_vgg19_weights(7));
    Tensor a({3, 32, 32}), b({3, 32, 32});
    for (int ch = 0; ch < 3; ++ch)
      for (int y = 0; y < 32; ++y)
        for (int xx = 0; xx < 32; ++xx) {
          const double v = (((xx / 4) + (y / 4)) % 2 ? 0.8 : -0.8) * (1.0 - 0.2 * ch);
          a[(ch * 32 + y) * 32 + xx] = v;
          b[(ch * 32 + y) * 32 + xx] = 0.9 * v + 0.1 * std::sin(0.3 * xx + 0.2 * y + ch);
        }
    per = perceptual_loss(ImageTensor(a), ImageTensor(b), vgg);
    near(per, golden["perceptual"].get<double>(), "perceptual golden", 1e-4);
    near(perceptual_loss(ImageTensor(a), ImageTensor(a), vgg), 0.0, "perceptual golden identical");
  }

  const LossWeights w;
  near(full_objective(LossReport{}, w), 0.0, "objective zeros");
  const LossReport r{-1.0, -1.2, 0.3, 0.25, 0.5, 0.2, 0.0, 0};
  near(full_objective(r, w), 4.4, "objective example");
  near(full_objective(r, LossWeights{0.0, 0.0, 0.0}), -2.2, "objective annihilated");
  return c.done(std::to_string(examples) + " examples, tol 1e-6 (extractor 1e-4); vgg perceptual " + fmt(per, "%.9f"));
}

Outcome gradient_checks() {
  Checks c;
  const IdentityExtractor stub;
  const RegionSet four = RegionSet::with_components(
      {{"eyes", {0.2, 0.3, 0.6, 0.15}}, {"nose", {0.4, 0.4, 0.2, 0.2}}, {"mouth", {0.3, 0.7, 0.4, 0.1}}});
  const std::vector<RegionSet> regions{four};
  const std::vector<AttentionWeights> weights{default_weights(four)};
  double worst = 0.0;
  auto check = [&](double err, const std::string& name) {
    worst = std::max(worst, err);
    c.expect(err <= 1e-3, name + " rel err " + fmt(err));
  };
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::string s = " seed " + std::to_string(seed);
    const Tensor x = random_tensor({1, 3, 8, 8}, 1000 + seed);
    const Tensor target = away_from(x, 2000 + seed);
    check(gradient_error([&](const Var& v) { return tv_loss(v); }, tv_safe({1, 3, 8, 8}, 3000 + seed)), "tv" + s);
    check(gradient_error([&](const Var& v) { return cycle_loss(constant(target), v); }, x), "cycle" + s);
    check(gradient_error([&](const Var& v) { return attentive_cycle_loss(constant(target), v, regions, weights); }, x),
          "attentive" + s);
    check(gradient_error([&](const Var& v) { return perceptual_loss(constant(target), v, stub); }, x), "perceptual" + s);
    const Tensor scores = random_tensor({1, 1, 6, 6}, 4000 + seed, -3.0, 3.0);
    const Tensor other = random_tensor({1, 1, 6, 6}, 5000 + seed, -3.0, 3.0);
    check(gradient_error([&](const Var& v) { return adversarial_loss_generator(v); }, scores), "gan_g" + s);
    check(gradient_error([&](const Var& v) { return adversarial_loss_discriminator(v, constant(other)); }, scores),
          "gan_d real" + s);
    check(gradient_error([&](const Var& v) { return adversarial_loss_discriminator(constant(other), v); }, scores),
          "gan_d fake" + s);
  }
  return c.done("20 seeds x 7 checks, worst rel err " + fmt(worst));
}

Outcome reduction_identity() {
  Checks c;
  const RegionSet whole;
  const AttentionWeights one{{1.0}};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const ImageTensor a(random_tensor({3, 16, 16}, 7000 + seed)), b(random_tensor({3, 16, 16}, 8000 + seed));
    const double plain = cycle_loss(a, b), attentive = attentive_cycle_loss(a, b, whole, one);
    c.expect(std::memcmp(&plain, &attentive, sizeof plain) == 0, "seed " + std::to_string(seed) + " differs");
  }
  return c.done("100 random pairs bit-identical");
}

Outcome survey() {
  Checks c;
  std::string out;
  c.expect(cli({"aggregate-survey"}, &out) == 0, "aggregate-survey failed");
  const double want[] = {2.46, 1.78, 1.76, 3.21, 2.90, 3.74};
  const auto rows = aggregate_survey(SurveyTable::from_file(CARTOONIZE_DATA_DIR "/survey_scores.csv"));
  c.expect(rows.size() == 6, "expected 6 methods");
  std::string printed;
  for (std::size_t i = 0; i < rows.size() && i < 6; ++i) {
    c.expect(std::abs(rows[i].average - want[i]) <= 0.005, rows[i].method + " = " + fmt(rows[i].average));
    c.expect(format_score(rows[i].average) == fmt(want[i], "%.2f"), rows[i].method + " rounds wrong");
    c.expect(out.find(rows[i].method + "," + fmt(want[i], "%.2f") + "\n") != std::string::npos,
             rows[i].method + " missing from cli output");
    printed += (printed.empty() ? "" : " ") + format_score(rows[i].average);
  }
  return c.done(printed);
}

// ---------------------------------------------------------------------------

struct Toy {
  fs::path root;
  fs::path corpus;
  fs::path weights;
  std::vector<std::string> common;

  fs::path run(const std::string& name, std::vector<std::string> extra) const {
    const fs::path out = root / name;
    std::vector<std::string> args = {"train", "--data-root", corpus.string(), "--out", out.string(),
                                     "--extractor-weights", weights.string()};
    args.insert(args.end(), common.begin(), common.end());
    args.insert(args.end(), extra.begin(), extra.end());
    if (cli(args) != 0) throw std::runtime_error("train run " + name + " failed");
    return out;
  }
};

Toy make_toy() {
  Toy toy;
  toy.root = ctz::testing::scratch_dir("acceptance");
  toy.corpus = toy.root / "corpus";
  ctz::testing::write_toy_corpus(toy.corpus, 4, 64, 1);
  toy.weights = toy.root / "vgg_synthetic.bin";
  if (cli({"synth-extractor-weights", "--out", toy.weights.string(), "--seed", "7"}) != 0) {
    throw std::runtime_error("cannot write extractor weights");
  }
  toy.common = {"--image-size", "64", "--batch-size", "1", "--seed", "0", "--generator-channels", "16",
                "--discriminator-channels", "16", "--checkpoint-interval", "100"};
  return toy;
}

bool finite_report(const LossReport& r) {
  for (double v : {r.gan_ab, r.gan_ba, r.att_cyc_ab, r.cyc_ba, r.tv, r.perceptual, r.total}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Outcome toy_convergence(const fs::path& run) {
  Checks c;
  const auto log = read_loss_log(run / kLossLogName);
  c.expect(log.size() == 200, "log has " + std::to_string(log.size()) + " rows");
  if (log.size() != 200) return c.done("");
  for (const auto& r : log) c.expect(finite_report(r), "non-finite loss at step " + std::to_string(r.step));
  const auto &first = log.front(), &last = log.back();
  const double att = last.att_cyc_ab / first.att_cyc_ab, cyc = last.cyc_ba / first.cyc_ba;
  c.expect(att <= 0.5, "att_cyc_ab ratio " + fmt(att));
  c.expect(cyc <= 0.5, "cyc_ba ratio " + fmt(cyc));
  return c.done("att_cyc_ab " + fmt(first.att_cyc_ab, "%.4f") + " -> " + fmt(last.att_cyc_ab, "%.4f") + " (" +
                fmt(100 * att, "%.0f") + "%), cyc_ba " + fmt(first.cyc_ba, "%.4f") + " -> " +
                fmt(last.cyc_ba, "%.4f") + " (" + fmt(100 * cyc, "%.0f") + "%)");
}

double mean_gradient_of_outputs(const Toy& toy, const fs::path& run) {
  const fs::path out = run / "test_outputs";
  if (cli({"infer", "--checkpoint", checkpoint_path(run, 200).string(), "--input", (toy.corpus / "testA").string(),
           "--out", out.string()}) != 0) {
    throw std::runtime_error("inference failed for " + run.string());
  }
  std::string report;
  if (cli({"evaluate", "--input", out.string()}, &report) != 0) throw std::runtime_error("evaluate failed");
  const auto summary = nlohmann::json::parse(report.substr(report.rfind("{\"summary\"")));
  return summary["summary"]["mean_average_gradient"].get<double>();
}

Outcome tv_direction(const Toy& toy, const fs::path& with_tv, const fs::path& without_tv) {
  Checks c;
  const double g2 = mean_gradient_of_outputs(toy, with_tv), g0 = mean_gradient_of_outputs(toy, without_tv);
  c.expect(g2 < g0, "beta=2 gives " + fmt(g2) + ", beta=0 gives " + fmt(g0));
  return c.done("mean average gradient beta=0 " + fmt(g0, "%.2f") + " > beta=2 " + fmt(g2, "%.2f"));
}

Outcome ablation_presets(const Toy& toy) {
  Checks c;
  std::string detail;
  for (const char* preset : {"A", "B", "C"}) {
    const fs::path run = toy.run(std::string("preset_") + preset, {"--preset", preset, "--steps", "5"});
    TrainConfig config;
    config.preset = parse_preset(preset);
    const ActiveTerms active = active_terms(config);
    const auto log = read_loss_log(run / kLossLogName);
    c.expect(log.size() == 5, std::string(preset) + ": log has " + std::to_string(log.size()) + " rows");
    for (const auto& r : log) {
      const std::string at = std::string(preset) + " step " + std::to_string(r.step);
      c.expect((r.tv == 0.0) == !active.tv, at + ": tv " + fmt(r.tv));
      c.expect((r.perceptual == 0.0) == !active.perceptual, at + ": perceptual " + fmt(r.perceptual));
      c.expect(r.att_cyc_ab != 0.0 && r.cyc_ba != 0.0 && r.gan_ab != 0.0 && r.gan_ba != 0.0, at + ": active term is 0");
    }
    detail += std::string(detail.empty() ? "" : ", ") + preset + ": zero {" + (active.tv ? "" : "tv") +
              (!active.tv && !active.perceptual ? "," : "") + (active.perceptual ? "" : "perceptual") + "}";
  }
  return c.done(detail + " at every step");
}

Outcome shape_contracts() {
  Checks c;
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> side_pick(1, 4);
  const GeneratorConfig small{4, 16, 3, 3, true};
  const Generator g(small, 3);
  for (int i = 0; i < 1000; ++i) {
    const int h = 16 * side_pick(rng), w = 16 * side_pick(rng);
    const Tensor x = random_tensor({1, 3, h, w}, 10000 + i);
    const Tensor y = g.forward(constant(x)).value();
    c.expect(y.shape() == Shape({1, 3, h, w}), "input " + std::to_string(i) + " changed shape");
    bool in_range = true;
    for (double v : y.values()) in_range = in_range && v >= -1.0 && v <= 1.0 && std::isfinite(v);
    c.expect(in_range, "input " + std::to_string(i) + " left [-1, 1]");
  }
  // The full-width generator on a handful of inputs.
  const Generator full(GeneratorConfig{}, 4);
  for (int i = 0; i < 3; ++i) {
    const Tensor y = full.forward(constant(random_tensor({1, 3, 64, 64}, 20000 + i))).value();
    bool ok = y.shape() == Shape({1, 3, 64, 64});
    for (double v : y.values()) ok = ok && v >= -1.0 && v <= 1.0;
    c.expect(ok, "full generator contract");
  }

  // Conv arithmetic: out = floor((s + 2p - k) / stride) + 1 with k 4, p 1.
  auto traced = [](const DiscriminatorConfig& d, int s) {
    for (int i = 0; i < d.num_layers; ++i) s = (s + 2 - 4) / 2 + 1;
    for (int i = 0; i < 2; ++i) s = (s + 2 - 4) / 1 + 1;
    return s;
  };
  const DiscriminatorConfig dc;
  const Discriminator d(dc, 5);
  std::string grids;
  for (int s : {64, 128, 256}) {
    const Tensor scores = d.forward(constant(random_tensor({1, 3, s, s}, s))).value();
    const int want = traced(dc, s);
    c.expect(scores.shape() == Shape({1, 1, want, want}), "grid for " + std::to_string(s));
    c.expect(Discriminator::grid_side(dc, s) == want, "grid_side for " + std::to_string(s));
    grids += (grids.empty() ? "" : ", ") + std::to_string(s) + "->" + std::to_string(scores.dim(2));
  }
  return c.done("1000 random inputs keep shape and range; grids " + grids);
}

Outcome reproducibility(const Toy& toy, const fs::path& first, const fs::path& second) {
  Checks c;
  const auto log_a = read_loss_log(first / kLossLogName), log_b = read_loss_log(second / kLossLogName);
  c.expect(log_a.size() == 200 && log_a == log_b, "repeated runs differ");
  c.expect(states_equal(load_checkpoint(checkpoint_path(first, 200)), load_checkpoint(checkpoint_path(second, 200))),
           "final states differ");

  const fs::path resumed = toy.run("resumed", {"--steps", "200", "--checkpoint", checkpoint_path(first, 100).string()});
  const auto tail = read_loss_log(resumed / kLossLogName);
  c.expect(tail.size() == 100, "resumed log has " + std::to_string(tail.size()) + " rows");
  if (tail.size() == 100 && log_a.size() == 200) {
    c.expect(tail.front().step == 101, "resumed log starts at step " + std::to_string(tail.front().step));
    c.expect(std::equal(tail.begin(), tail.end(), log_a.begin() + 100), "resumed log differs from step 101");
  }
  return c.done("identical logs for repeated runs; resume at 100 matches steps 101..200 exactly");
}

}  // namespace

int main() {
  struct Line {
    int id;
    std::string name;
    Outcome outcome;
    double seconds;
  };
  std::vector<Line> lines;
  auto record = [&](int id, const std::string& name, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d [%s] %s: %s (%.1f s)\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), s);
    std::fflush(stdout);
    lines.push_back({id, name, o, s});
  };

  record(1, "loss analytic suite", loss_examples);
  record(2, "gradient checks", gradient_checks);
  record(3, "reduction identity", reduction_identity);
  record(4, "survey averages", survey);

  Toy toy;
  fs::path full, no_tv, repeat;
  record(5, "toy convergence", [&] {
    toy = make_toy();
    full = toy.run("full", {"--preset", "full", "--beta", "2", "--steps", "200"});
    return toy_convergence(full);
  });
  record(6, "tv direction", [&] {
    no_tv = toy.run("no_tv", {"--preset", "full", "--beta", "0", "--steps", "200"});
    return tv_direction(toy, full, no_tv);
  });
  record(7, "ablation presets", [&] { return ablation_presets(toy); });
  record(8, "shape and range contracts", shape_contracts);
  record(9, "reproducibility", [&] {
    repeat = toy.run("full_repeat", {"--preset", "full", "--beta", "2", "--steps", "200"});
    return reproducibility(toy, full, repeat);
  });

  int failed = 0;
  for (const auto& l : lines) failed += l.outcome.pass ? 0 : 1;
  std::printf("%d/%zu criteria passed\n", static_cast<int>(lines.size()) - failed, lines.size());
  return failed == 0 ? 0 : 1;
}
