#include <doctest.h>

#include <fstream>
#include <map>

#include "cartoonize/data.hpp"
#include "cartoonize/errors.hpp"
#include "cartoonize/region_provider.hpp"
#include "helpers.hpp"

using namespace ctz;
namespace fs = std::filesystem;
using ctz::testing::scratch_dir;
using ctz::testing::write_raw_png;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::argument;
}

DomainDataset tagged_dataset(Domain domain, int count) {
  std::vector<DomainSample> samples;
  for (int i = 0; i < count; ++i) {
    DomainSample s{ImageTensor(Tensor({3, 8, 8}, -1.0 + 0.1 * i)), domain, std::nullopt, "img" + std::to_string(i)};
    samples.push_back(s);
  }
  return DomainDataset::from_samples(samples);
}

}  // namespace

TEST_CASE("pixel levels map affinely onto the value range") {
  const ValueRange r{};
  CHECK(pixel_to_value(255, r) == 1.0);
  CHECK(pixel_to_value(0, r) == -1.0);
  CHECK(pixel_to_value(128, r) == doctest::Approx(2.0 * 128.0 / 255.0 - 1.0).epsilon(1e-15));
  CHECK(pixel_to_value(128, r) == doctest::Approx(0.0039215686).epsilon(1e-8));
  for (int level = 0; level < 256; ++level) CHECK(value_to_pixel(pixel_to_value(level, r), r) == level);
  CHECK(value_to_pixel(7.0, r) == 255);
  CHECK(value_to_pixel(-7.0, r) == 0);
}

TEST_CASE("load_image decodes, converts channels and resizes") {
  const fs::path dir = scratch_dir("load_image");
  // BGR on disk: pure blue.
  write_raw_png(dir / "blue.png", 8, 8, 3, [](int, int, int c) { return c == 0 ? 255 : 0; });
  const ImageTensor blue = load_image(dir / "blue.png", {8, 8});
  CHECK(blue.channels() == 3);
  CHECK(blue.data()[0] == -1.0);                 // R
  CHECK(blue.data()[2 * 64] == 1.0);             // B
  write_raw_png(dir / "gray.png", 8, 8, 1, [](int, int, int) { return 128; });
  const ImageTensor gray3 = load_image(dir / "gray.png", {8, 8});
  CHECK(gray3.channels() == 3);
  for (double v : gray3.data().values()) CHECK(v == doctest::Approx(pixel_to_value(128, {})));
  CHECK(load_image(dir / "blue.png", {8, 8}, {{}, 1}).channels() == 1);
  write_raw_png(dir / "rgba.png", 8, 8, 4, [](int, int, int c) { return c == 2 ? 255 : 10; });
  CHECK(load_image(dir / "rgba.png", {8, 8}).data()[0] == doctest::Approx(1.0));

  // 8 rows × 16 columns, left half black: a centered square keeps columns 4..11.
  write_raw_png(dir / "wide.png", 8, 16, 1, [](int, int x, int) { return x < 8 ? 0 : 255; });
  const ImageTensor sq = load_image(dir / "wide.png", {8, 8}, {{}, 1});
  CHECK(sq.data()[0] == -1.0);
  CHECK(sq.data()[3] == -1.0);
  CHECK(sq.data()[4] == 1.0);
  CHECK(sq.data()[7] == 1.0);

  const ImageTensor small = load_image(dir / "blue.png", {4, 6});
  CHECK(small.height() == 4);
  CHECK(small.width() == 6);
  CHECK(probe_image_size(dir / "wide.png").width == 16);

  std::ofstream(dir / "junk.png") << "not an image";
  CHECK(kind_of([&] { load_image(dir / "junk.png", {8, 8}); }) == ErrorKind::decode);
  CHECK(kind_of([&] { load_image(dir / "missing.png", {8, 8}); }) == ErrorKind::decode);
  CHECK(kind_of([&] { load_image(dir / "blue.png", {0, 8}); }) == ErrorKind::argument);
}

TEST_CASE("save then load is within one quantization step") {
  const fs::path dir = scratch_dir("roundtrip");
  const ImageTensor img(ctz::testing::random_tensor({3, 9, 11}, 5));
  save_image(img, dir / "nested" / "x.png");
  const ImageTensor back = load_image(dir / "nested" / "x.png", {9, 11});
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    CHECK(std::abs(back.data()[i] - img.data()[i]) <= 1.0 / 255.0 + 1e-12);
  }
  save_image(back, dir / "again.png");
  CHECK(load_image(dir / "again.png", {9, 11}) == back);
}

TEST_CASE("image tensor invariants") {
  CHECK(kind_of([] { ImageTensor(Tensor({2, 8, 8})); }) == ErrorKind::validation);
  CHECK(kind_of([] { ImageTensor(Tensor({3, 8, 8}, 1.5)); }) == ErrorKind::validation);
  CHECK(kind_of([] { ImageTensor(Tensor({8, 8})); }) == ErrorKind::shape);
  CHECK(kind_of([] { validate_pipeline_image(ImageTensor(Tensor({3, 4, 8}))); }) == ErrorKind::validation);
  validate_pipeline_image(ImageTensor(Tensor({1, 8, 8})));
  const ImageTensor unit(Tensor({3, 8, 8}, 0.5), {0.0, 1.0});
  CHECK(unit.range().hi == 1.0);
}

TEST_CASE("unpaired batches") {
  const DomainDataset a1 = tagged_dataset(Domain::a_selfie, 1), b1 = tagged_dataset(Domain::b_cartoon, 1);
  const UnpairedBatch single = unpaired_batch(a1, b1, 1, 42);
  REQUIRE(single.batch_a.size() == 1);
  CHECK(single.batch_a[0].source_path == "img0");
  CHECK(single.batch_b[0].domain == Domain::b_cartoon);

  const DomainDataset a = tagged_dataset(Domain::a_selfie, 4), b = tagged_dataset(Domain::b_cartoon, 3);
  const UnpairedBatch first = unpaired_batch(a, b, 5, 7, 0), second = unpaired_batch(a, b, 5, 7, 0);
  CHECK(first.batch_a.size() == 5);
  CHECK(first.batch_b.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(first.batch_a[i].source_path == second.batch_a[i].source_path);
    CHECK(first.batch_b[i].source_path == second.batch_b[i].source_path);
    validate_sample(first.batch_a[i]);
  }
  CHECK(draw_indices(4, 16, 7, 0, 0) != draw_indices(4, 16, 7, 1, 0));
  CHECK(draw_indices(4, 16, 7, 0, 0) != draw_indices(4, 16, 7, 0, 1));

  std::map<std::size_t, int> counts;
  for (std::uint64_t call = 0; call < 1000; ++call) ++counts[draw_indices(4, 1, 3, call, 0)[0]];
  REQUIRE(counts.size() == 4);
  for (const auto& [index, n] : counts) {
    CHECK(index < 4);
    CHECK(n / 1000.0 == doctest::Approx(0.25).epsilon(0.2));  // 0.25 ± 0.05
  }

  const DomainDataset empty = DomainDataset::from_samples({});
  CHECK(kind_of([&] { unpaired_batch(empty, b, 1, 0); }) == ErrorKind::data);
  CHECK(kind_of([&] { unpaired_batch(a, b, 0, 0); }) == ErrorKind::argument);
}

TEST_CASE("datasets read a corpus directory") {
  const fs::path dir = scratch_dir("dataset");
  for (int i = 0; i < 3; ++i) {
    write_raw_png(dir / "trainA" / ("s" + std::to_string(i) + ".png"), 10, 12, 3, [i](int y, int x, int c) {
      return (y * 7 + x * 3 + c * 40 + i * 20) % 256;
    });
  }
  std::ofstream(dir / "trainA" / "notes.txt") << "ignored";
  const auto files = list_images(dir / "trainA");
  REQUIRE(files.size() == 3);
  CHECK(files[0].filename() == "s0.png");
  for (bool preload : {true, false}) {
    const DomainDataset ds = DomainDataset::from_directory(dir / "trainA", Domain::a_selfie, {8, 8}, {}, preload);
    CHECK(ds.size() == 3);
    const DomainSample s = ds.get(2);
    CHECK(s.image.height() == 8);
    CHECK(s.source_path.find("s2.png") != std::string::npos);
    CHECK(kind_of([&] { ds.get(3); }) == ErrorKind::argument);
  }
  CHECK(kind_of([&] { DomainDataset::from_directory(dir / "nope", Domain::a_selfie, {8, 8}); }) == ErrorKind::io);

  CorpusLayout layout{dir, ""};
  CHECK(kind_of([&] { layout.validate(); }) == ErrorKind::data);
  write_raw_png(dir / "trainB_sketch" / "c.png", 8, 8, 3, [](int, int, int) { return 9; });
  layout.style = "sketch";
  CHECK(layout.train_b() == dir / "trainB_sketch");
  layout.validate();
}

TEST_CASE("preprocess_corpus filters, crops and deduplicates") {
  const fs::path raw = scratch_dir("pre_raw"), out = scratch_dir("pre_out");
  SUBCASE("empty directory") {
    const auto r = preprocess_corpus(raw, out);
    CHECK(r.kept == 0);
    CHECK(r.rejected == 0);
  }
  SUBCASE("one image below the minimum") {
    write_raw_png(raw / "tiny.png", 20, 30, 3, [](int, int, int) { return 100; });
    const auto r = preprocess_corpus(raw, out, {.min_size = 32});
    CHECK(r.kept == 0);
    CHECK(r.rejected == 1);
    CHECK(r.reasons.at("too_small") == 1);
  }
  SUBCASE("ten image fixture with three small images") {
    for (int i = 0; i < 10; ++i) {
      const int side = i < 3 ? 24 : 48 + i;
      write_raw_png(raw / ("img" + std::to_string(i) + ".png"), side, side + 5, 3,
                    [i](int y, int x, int c) { return (x * (i + 1) + y * 3 + c * 50) % 256; });
    }
    const auto r = preprocess_corpus(raw, out, {.min_size = 32, .output_size = 16});
    CHECK(r.kept == 7);
    CHECK(r.rejected == 3);
    CHECK(r.kept + r.rejected == 10);
    const auto written = list_images(out);
    CHECK(written.size() == 7);
    CHECK(probe_image_size(written[0]).height == 16);
    CHECK(probe_image_size(written[0]).width == 16);
  }
  SUBCASE("duplicates and undecodable files") {
    for (const char* name : {"a.png", "b.png"}) write_raw_png(raw / name, 40, 40, 3, [](int y, int, int) { return y; });
    write_raw_png(raw / "c.jpg", 40, 40, 3, [](int, int x, int) { return x * 5; });
    std::ofstream(raw / "broken.jpg") << "garbage";
    std::ofstream(raw / "readme.txt") << "text";
    auto r = preprocess_corpus(raw, out, {.min_size = 32, .output_size = 16});
    CHECK(r.kept == 2);
    CHECK(r.reasons.at("duplicate") == 1);
    CHECK(r.reasons.at("undecodable") == 2);
    CHECK(r.kept + r.rejected == 5);
    const fs::path out2 = scratch_dir("pre_out2");
    r = preprocess_corpus(raw, out2, {.min_size = 32, .dedup = false, .output_size = 16});
    CHECK(r.kept == 3);
  }
  CHECK(kind_of([&] { preprocess_corpus(raw / "missing", out); }) == ErrorKind::io);
}

TEST_CASE("annotation sidecar") {
  const fs::path dir = scratch_dir("annotations");
  auto write = [&](const std::string& text) {
    std::ofstream(dir / "a.jsonl") << text;
    return dir / "a.jsonl";
  };
  CHECK(load_annotations(write("")).empty());

  auto one = load_annotations(write(R"({"image": "x.png", "regions": [{"label": "eyes", "bbox": [0.25, 0.25, 0.5, 0.5]}]})"));
  REQUIRE(one.size() == 1);
  const RegionSet& rs = one.at("x.png");
  REQUIRE(rs.k() == 2);
  CHECK(rs[0].label == "whole");
  CHECK(rs[1] == RegionEntry{"eyes", {0.25, 0.25, 0.5, 0.5}});

  auto merged = load_annotations(write(
      "{\"image\": \"p.png\", \"regions\": [{\"label\": \"eyes\", \"bbox\": [0.1, 0.2, 0.3, 0.1]}]}\n"
      "\n"
      "{\"image\": \"q.png\", \"regions\": [{\"label\": \"nose\", \"bbox\": [0.4, 0.4, 0.2, 0.2]}]}\n"
      "{\"image\": \"p.png\", \"regions\": [{\"label\": \"mouth\", \"bbox\": [0.3, 0.7, 0.4, 0.1]}]}\n"));
  CHECK(merged.size() == 2);
  CHECK(merged.at("p.png").k() == 3);
  CHECK(merged.at("p.png")[2].label == "mouth");
  CHECK(merged.at("q.png").k() == 2);

  try {
    load_annotations(write("{\"image\": \"p.png\", \"regions\": []}\n{not json\n"));
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse);
    CHECK(std::string(e.what()).find("a.jsonl:2") != std::string::npos);
  }
  CHECK(kind_of([&] { load_annotations(write(R"({"image": "p.png"})")); }) == ErrorKind::parse);
  CHECK(kind_of([&] {
          load_annotations(write(R"({"image": "p.png", "regions": [{"label": "eyes", "bbox": [0.8, 0, 0.5, 0.5]}]})"));
        }) == ErrorKind::validation);
  CHECK(kind_of([&] {
          load_annotations(write(R"({"image": "p.png", "regions": [{"label": "whole", "bbox": [0, 0, 1, 1]}]})"));
        }) == ErrorKind::validation);
  CHECK(kind_of([&] { load_annotations(dir / "absent.jsonl"); }) == ErrorKind::io);
}
