#include "cartoonize/regions.hpp"

#include <algorithm>
#include <cmath>

#include "cartoonize/errors.hpp"

namespace ctz {

namespace {
constexpr double kBoxSlack = 1e-9;
}

void validate_box(const RegionBox& box) {
  const bool finite = std::isfinite(box.x) && std::isfinite(box.y) && std::isfinite(box.w) && std::isfinite(box.h);
  if (!finite || box.x < 0.0 || box.y < 0.0 || box.w <= 0.0 || box.h <= 0.0 || box.x + box.w > 1.0 + kBoxSlack ||
      box.y + box.h > 1.0 + kBoxSlack) {
    raise(ErrorKind::validation, "bbox [" + std::to_string(box.x) + ", " + std::to_string(box.y) + ", " +
                                     std::to_string(box.w) + ", " + std::to_string(box.h) +
                                     "] is not a non-empty box inside [0,1]");
  }
}

RegionSet::RegionSet() : entries_{{kWholeLabel, RegionBox{}}} {}

RegionSet RegionSet::with_components(std::vector<RegionEntry> components) {
  RegionSet set;
  for (auto& entry : components) {
    if (entry.label.empty()) raise(ErrorKind::validation, "region label must not be empty");
    if (entry.label == kWholeLabel) raise(ErrorKind::validation, "region label 'whole' is reserved");
    validate_box(entry.box);
    set.entries_.push_back(std::move(entry));
  }
  return set;
}

AttentionWeights default_weights(const RegionSet& regions, const AttentionRule& rule) {
  AttentionWeights weights;
  weights.lambda.reserve(regions.k());
  for (const auto& entry : regions.entries()) {
    weights.lambda.push_back(entry.label == kWholeLabel ? rule.whole : rule.component);
  }
  return weights;
}

PixelWindow pixel_window(const RegionBox& box, int height, int width) {
  validate_box(box);
  auto axis = [](double offset, double extent, int size, int& start, int& length) {
    start = std::min(static_cast<int>(std::floor(offset * size)), size - 1);
    length = std::max(1, static_cast<int>(std::lround(extent * size)));
    length = std::min(length, size - start);
  };
  PixelWindow win;
  axis(box.y, box.h, height, win.top, win.height);
  axis(box.x, box.w, width, win.left, win.width);
  return win;
}

ImageTensor crop_region(const ImageTensor& image, const RegionBox& box) {
  const PixelWindow win = pixel_window(box, image.height(), image.width());
  const int c = image.channels(), h = image.height(), w = image.width();
  Tensor out({c, win.height, win.width});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < win.height; ++y) {
      const double* src = image.data().data() + (static_cast<std::size_t>(ch) * h + win.top + y) * w + win.left;
      std::copy_n(src, win.width, out.data() + (static_cast<std::size_t>(ch) * win.height + y) * win.width);
    }
  }
  return ImageTensor(std::move(out), image.range());
}

}  // namespace ctz
