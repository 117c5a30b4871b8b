#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cartoonize/image.hpp"
#include "cartoonize/regions.hpp"

namespace ctz {

enum class Domain { a_selfie, b_cartoon };

std::string_view to_string(Domain domain) noexcept;

struct DomainSample {
  ImageTensor image;
  Domain domain = Domain::a_selfie;
  std::optional<RegionSet> regions;  // domain A only
  std::string source_path;
};

void validate_sample(const DomainSample& sample);

class RegionProvider;
using WarningSink = std::function<void(const std::string&)>;

/// Images of one domain. Decoding happens on access unless preloaded.
class DomainDataset {
 public:
  static DomainDataset from_directory(const std::filesystem::path& dir, Domain domain, ImageSize size,
                                      LoadOptions options = {}, bool preload = true);
  static DomainDataset from_samples(std::vector<DomainSample> samples);

  // Domain-A datasets consult the provider on every access (see detect_regions).
  void set_region_provider(std::shared_ptr<const RegionProvider> provider, WarningSink warnings = {});

  std::size_t size() const noexcept { return count_; }
  Domain domain() const noexcept { return domain_; }
  DomainSample get(std::size_t index) const;
  const std::vector<std::filesystem::path>& files() const noexcept { return files_; }

 private:
  Domain domain_ = Domain::a_selfie;
  std::size_t count_ = 0;
  std::vector<std::filesystem::path> files_;
  std::vector<DomainSample> cached_;
  ImageSize size_{};
  LoadOptions options_{};
  std::shared_ptr<const RegionProvider> provider_;
  WarningSink warnings_;
};

// Sorted list of PNG/JPEG files directly inside `dir`.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

struct SeedState {
  std::uint64_t seed = 0;
  std::uint64_t call_index = 0;
};

struct UnpairedBatch {
  std::vector<DomainSample> batch_a;
  std::vector<DomainSample> batch_b;
  SeedState seed_state;
};

// Uniform, independent draws (with replacement) from each dataset. The draw
// depends only on (seed, call_index), so prefetching cannot reorder batches.
std::vector<std::size_t> draw_indices(std::size_t population, int count, std::uint64_t seed,
                                      std::uint64_t call_index, std::uint64_t stream);

UnpairedBatch unpaired_batch(const DomainDataset& dataset_a, const DomainDataset& dataset_b, int batch_size,
                             std::uint64_t seed, std::uint64_t call_index = 0);

enum class CropMode { center_square, none };

struct PreprocessOptions {
  int min_size = 64;  // shorter side, in source pixels
  CropMode crop_mode = CropMode::center_square;
  bool dedup = true;
  int output_size = 256;
};

struct PreprocessReport {
  int kept = 0;
  int rejected = 0;
  std::map<std::string, int> reasons;
  std::vector<std::pair<std::string, std::string>> rejections;  // file, reason
};

PreprocessReport preprocess_corpus(const std::filesystem::path& raw_dir, const std::filesystem::path& out_dir,
                                   const PreprocessOptions& options = {});

using AnnotationMap = std::map<std::string, RegionSet>;

// Newline-delimited JSON sidecar:
//   {"image": "<relative path>", "regions": [{"label": "eyes", "bbox": [x, y, w, h]}]}
// Several records for one image are merged in file order.
AnnotationMap load_annotations(const std::filesystem::path& path);

struct CorpusLayout {
  std::filesystem::path root;
  std::string style;  // empty: <root>/trainB, otherwise <root>/trainB_<style>

  std::filesystem::path train_a() const { return root / "trainA"; }
  std::filesystem::path train_b() const { return root / (style.empty() ? "trainB" : "trainB_" + style); }
  std::filesystem::path test_a() const { return root / "testA"; }
  std::filesystem::path annotations() const { return root / "annotations_a.jsonl"; }

  // Both training directories must exist and contain images.
  void validate() const;
};

}  // namespace ctz
