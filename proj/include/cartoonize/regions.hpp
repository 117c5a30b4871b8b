#pragma once

#include <string>
#include <vector>

#include "cartoonize/image.hpp"

namespace ctz {

/// Normalized box: (x, y) is the top-left corner, all values in [0, 1].
struct RegionBox {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  friend bool operator==(const RegionBox&, const RegionBox&) = default;
};

struct RegionEntry {
  std::string label;
  RegionBox box;

  friend bool operator==(const RegionEntry&, const RegionEntry&) = default;
};

inline constexpr const char* kWholeLabel = "whole";

void validate_box(const RegionBox& box);

/// Attentive regions of one selfie. Entry 0 is always the whole image.
class RegionSet {
 public:
  // Whole-image-only set (k = 1).
  RegionSet();

  // Prefixes `components` with the whole-image entry. Components may not use
  // the reserved "whole" label.
  static RegionSet with_components(std::vector<RegionEntry> components);

  const std::vector<RegionEntry>& entries() const noexcept { return entries_; }
  std::size_t k() const noexcept { return entries_.size(); }
  const RegionEntry& operator[](std::size_t i) const { return entries_.at(i); }

  friend bool operator==(const RegionSet&, const RegionSet&) = default;

 private:
  std::vector<RegionEntry> entries_;
};

struct AttentionWeights {
  std::vector<double> lambda;
};

struct AttentionRule {
  double whole = 1.0;
  double component = 0.5;
  friend bool operator==(const AttentionRule&, const AttentionRule&) = default;
};

// Whole image -> rule.whole, every other label -> rule.component.
AttentionWeights default_weights(const RegionSet& regions, const AttentionRule& rule = {});

struct PixelWindow {
  int top = 0;
  int left = 0;
  int height = 1;
  int width = 1;
};

// floor(offset * size) for offsets, round(extent * size) clamped to >= 1 for
// extents, then clipped to the image.
PixelWindow pixel_window(const RegionBox& box, int height, int width);

ImageTensor crop_region(const ImageTensor& image, const RegionBox& box);

}  // namespace ctz
