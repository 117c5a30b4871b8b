#pragma once

#include <filesystem>

#include "cartoonize/tensor.hpp"

namespace ctz {

struct ValueRange {
  double lo = -1.0;
  double hi = 1.0;

  double width() const noexcept { return hi - lo; }
  bool contains(double v) const noexcept { return v >= lo && v <= hi; }
  friend bool operator==(const ValueRange&, const ValueRange&) = default;
};

inline constexpr int kMinImageSide = 8;

/// A C×H×W image whose elements live in a closed value range.
///
/// The type itself enforces the channel count and the range. The pipeline
/// minimum side length is enforced where images enter the pipeline (loading,
/// DomainSample) so that crops and small analytic fixtures remain
/// representable.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(Tensor data, ValueRange range = {});

  const Tensor& data() const noexcept { return data_; }
  const ValueRange& range() const noexcept { return range_; }
  int channels() const { return data_.dim(0); }
  int height() const { return data_.dim(1); }
  int width() const { return data_.dim(2); }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  Tensor data_;
  ValueRange range_;
};

// Throws validation error unless the image satisfies every pipeline invariant
// (including the minimum side length).
void validate_pipeline_image(const ImageTensor& image);

struct ImageSize {
  int height = 0;
  int width = 0;
};

struct LoadOptions {
  ValueRange range{};
  int channels = 3;  // 1 or 3; 0 keeps the file's own layout
};

// Decodes an 8-bit PNG/JPEG, center-crops to the target aspect ratio and
// resizes bilinearly to `target`.
ImageTensor load_image(const std::filesystem::path& path, ImageSize target, const LoadOptions& options = {});

// Decodes the file and reports its pixel dimensions.
ImageSize probe_image_size(const std::filesystem::path& path);

// Writes an 8-bit image, mapping the value range linearly onto [0, 255].
void save_image(const ImageTensor& image, const std::filesystem::path& path);

// Affine map of an 8-bit level onto the range.
double pixel_to_value(int level, const ValueRange& range);
int value_to_pixel(double value, const ValueRange& range);

}  // namespace ctz
