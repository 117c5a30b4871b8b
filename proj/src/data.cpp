#include "cartoonize/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <random>
#include <set>

#include "cartoonize/errors.hpp"
#include "cartoonize/region_provider.hpp"

namespace fs = std::filesystem;

namespace ctz {

std::string_view to_string(Domain domain) noexcept { return domain == Domain::a_selfie ? "A_selfie" : "B_cartoon"; }

void validate_sample(const DomainSample& sample) {
  validate_pipeline_image(sample.image);
  if (sample.regions && sample.domain != Domain::a_selfie) {
    raise(ErrorKind::validation, "regions attached to a domain-B sample: " + sample.source_path);
  }
}

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::uint64_t fnv1a(const unsigned char* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::vector<fs::path> list_images(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) raise(ErrorKind::io, "not a readable directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
  }
  if (ec) raise(ErrorKind::io, "cannot list " + dir.string() + ": " + ec.message());
  std::sort(out.begin(), out.end());
  return out;
}

DomainDataset DomainDataset::from_directory(const fs::path& dir, Domain domain, ImageSize size, LoadOptions options,
                                            bool preload) {
  DomainDataset ds;
  ds.domain_ = domain;
  ds.files_ = list_images(dir);
  ds.count_ = ds.files_.size();
  ds.size_ = size;
  ds.options_ = options;
  if (preload) {
    ds.cached_.reserve(ds.count_);
    for (const auto& f : ds.files_) {
      DomainSample s{load_image(f, size, options), domain, std::nullopt, f.generic_string()};
      validate_sample(s);
      ds.cached_.push_back(std::move(s));
    }
  }
  return ds;
}

DomainDataset DomainDataset::from_samples(std::vector<DomainSample> samples) {
  DomainDataset ds;
  if (!samples.empty()) ds.domain_ = samples.front().domain;
  for (const auto& s : samples) {
    if (s.domain != ds.domain_) raise(ErrorKind::data, "mixed domains in one dataset");
    validate_sample(s);
  }
  ds.count_ = samples.size();
  ds.cached_ = std::move(samples);
  return ds;
}

void DomainDataset::set_region_provider(std::shared_ptr<const RegionProvider> provider, WarningSink warnings) {
  if (provider && domain_ != Domain::a_selfie) raise(ErrorKind::argument, "region providers apply to domain A only");
  provider_ = std::move(provider);
  warnings_ = std::move(warnings);
}

DomainSample DomainDataset::get(std::size_t index) const {
  if (index >= count_) raise(ErrorKind::argument, "dataset index " + std::to_string(index) + " out of range");
  DomainSample sample;
  if (!cached_.empty()) {
    sample = cached_[index];
  } else {
    sample = DomainSample{load_image(files_[index], size_, options_), domain_, std::nullopt, files_[index].generic_string()};
    validate_sample(sample);
  }
  if (provider_ && !sample.regions) sample.regions = detect_regions(sample, *provider_, warnings_);
  return sample;
}

std::vector<std::size_t> draw_indices(std::size_t population, int count, std::uint64_t seed, std::uint64_t call_index,
                                      std::uint64_t stream) {
  if (population == 0) raise(ErrorKind::data, "cannot draw from an empty dataset");
  if (count <= 0) raise(ErrorKind::argument, "batch size must be positive");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(call_index), static_cast<std::uint32_t>(call_index >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::mt19937_64 engine(seq);
  std::uniform_int_distribution<std::size_t> pick(0, population - 1);
  std::vector<std::size_t> out(static_cast<std::size_t>(count));
  for (auto& i : out) i = pick(engine);
  return out;
}

UnpairedBatch unpaired_batch(const DomainDataset& dataset_a, const DomainDataset& dataset_b, int batch_size,
                             std::uint64_t seed, std::uint64_t call_index) {
  if (dataset_a.size() == 0 || dataset_b.size() == 0) raise(ErrorKind::data, "unpaired_batch: empty dataset");
  if (dataset_a.domain() != Domain::a_selfie || dataset_b.domain() != Domain::b_cartoon) {
    raise(ErrorKind::data, "unpaired_batch expects (domain A, domain B) datasets");
  }
  UnpairedBatch batch;
  batch.seed_state = {seed, call_index};
  for (std::size_t i : draw_indices(dataset_a.size(), batch_size, seed, call_index, 0)) {
    batch.batch_a.push_back(dataset_a.get(i));
  }
  for (std::size_t i : draw_indices(dataset_b.size(), batch_size, seed, call_index, 1)) {
    batch.batch_b.push_back(dataset_b.get(i));
  }
  return batch;
}

PreprocessReport preprocess_corpus(const fs::path& raw_dir, const fs::path& out_dir, const PreprocessOptions& options) {
  if (options.min_size < 1 || options.output_size < 1) raise(ErrorKind::argument, "sizes must be positive");
  std::error_code ec;
  if (!fs::is_directory(raw_dir, ec)) raise(ErrorKind::io, "not a readable directory: " + raw_dir.string());
  std::vector<fs::path> inputs;
  for (const auto& entry : fs::directory_iterator(raw_dir, ec)) {
    if (entry.is_regular_file()) inputs.push_back(entry.path());
  }
  if (ec) raise(ErrorKind::io, "cannot list " + raw_dir.string() + ": " + ec.message());
  std::sort(inputs.begin(), inputs.end());
  fs::create_directories(out_dir);

  PreprocessReport report;
  std::set<std::uint64_t> seen;
  std::set<std::string> used_names;
  auto reject = [&report](const fs::path& p, const std::string& reason) {
    ++report.rejected;
    ++report.reasons[reason];
    report.rejections.emplace_back(p.filename().string(), reason);
  };

  for (const auto& path : inputs) {
    cv::Mat img;
    if (is_image_file(path)) {
      try {
        img = cv::imread(path.string(), cv::IMREAD_COLOR);
      } catch (const cv::Exception&) {
        img.release();
      }
    }
    if (img.empty()) {
      reject(path, "undecodable");
      continue;
    }
    if (std::min(img.rows, img.cols) < options.min_size) {
      reject(path, "too_small");
      continue;
    }
    cv::Mat framed = img;
    if (options.crop_mode == CropMode::center_square) {
      const int side = std::min(img.rows, img.cols);
      framed = img(cv::Rect((img.cols - side) / 2, (img.rows - side) / 2, side, side));
    }
    cv::Mat sized;
    cv::Size target(options.output_size, options.output_size);
    if (options.crop_mode == CropMode::none) {
      const double scale = static_cast<double>(options.output_size) / std::max(framed.rows, framed.cols);
      target = cv::Size(std::max(1, static_cast<int>(std::lround(framed.cols * scale))),
                        std::max(1, static_cast<int>(std::lround(framed.rows * scale))));
    }
    cv::resize(framed, sized, target, 0, 0, cv::INTER_LINEAR);
    if (!sized.isContinuous()) sized = sized.clone();
    if (options.dedup) {
      const std::uint64_t h = fnv1a(sized.data, sized.total() * sized.elemSize(),
                                    fnv1a(reinterpret_cast<const unsigned char*>(&sized.rows), sizeof(int) * 2));
      if (!seen.insert(h).second) {
        reject(path, "duplicate");
        continue;
      }
    }
    std::string name = path.stem().string();
    for (int suffix = 1; !used_names.insert(name).second; ++suffix) name = path.stem().string() + "_" + std::to_string(suffix);
    const fs::path dest = out_dir / (name + ".png");
    if (!cv::imwrite(dest.string(), sized)) raise(ErrorKind::io, "cannot write " + dest.string());
    ++report.kept;
  }
  return report;
}

AnnotationMap load_annotations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::io, "cannot open annotations " + path.string());
  std::map<std::string, std::vector<RegionEntry>> merged;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no) + ": ";
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      raise(ErrorKind::parse, where + "malformed JSON (" + e.what() + ")");
    }
    if (!record.is_object() || !record.contains("image") || !record["image"].is_string() ||
        !record.contains("regions") || !record["regions"].is_array()) {
      raise(ErrorKind::parse, where + "expected {\"image\": string, \"regions\": array}");
    }
    auto& entries = merged[record["image"].get<std::string>()];
    for (const auto& region : record["regions"]) {
      if (!region.is_object() || !region.contains("label") || !region["label"].is_string() ||
          !region.contains("bbox") || !region["bbox"].is_array() || region["bbox"].size() != 4) {
        raise(ErrorKind::parse, where + "region needs a string label and a 4-element bbox");
      }
      for (const auto& v : region["bbox"]) {
        if (!v.is_number()) raise(ErrorKind::parse, where + "bbox values must be numbers");
      }
      const auto& b = region["bbox"];
      RegionEntry entry{region["label"].get<std::string>(),
                        {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()}};
      try {
        validate_box(entry.box);
        if (entry.label.empty() || entry.label == kWholeLabel) {
          raise(ErrorKind::validation, "label '" + entry.label + "' is empty or reserved");
        }
      } catch (const Error& e) {
        raise(ErrorKind::validation, where + e.what());
      }
      entries.push_back(std::move(entry));
    }
  }
  AnnotationMap out;
  for (auto& [image, entries] : merged) out.emplace(image, RegionSet::with_components(std::move(entries)));
  return out;
}

void CorpusLayout::validate() const {
  for (const auto& dir : {train_a(), train_b()}) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) raise(ErrorKind::data, "corpus is missing " + dir.string());
    if (list_images(dir).empty()) raise(ErrorKind::data, "no images in " + dir.string());
  }
}

}  // namespace ctz
