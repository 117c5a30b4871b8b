#include "cartoonize/image.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cartoonize/errors.hpp"

namespace ctz {

ImageTensor::ImageTensor(Tensor data, ValueRange range) : data_(std::move(data)), range_(range) {
  if (!(range_.hi > range_.lo)) raise(ErrorKind::validation, "empty value range");
  if (data_.rank() != 3) raise(ErrorKind::shape, "image must be C×H×W, got " + shape_string(data_.shape()));
  const int c = data_.dim(0);
  if (c != 1 && c != 3) raise(ErrorKind::validation, "image must have 1 or 3 channels, got " + std::to_string(c));
  if (data_.dim(1) < 1 || data_.dim(2) < 1) raise(ErrorKind::validation, "image has an empty spatial extent");
  for (double v : data_.values()) {
    if (!range_.contains(v)) {
      raise(ErrorKind::validation, "image element " + std::to_string(v) + " outside [" + std::to_string(range_.lo) +
                                       ", " + std::to_string(range_.hi) + "]");
    }
  }
}

void validate_pipeline_image(const ImageTensor& image) {
  const ImageTensor check(image.data(), image.range());
  if (check.height() < kMinImageSide || check.width() < kMinImageSide) {
    raise(ErrorKind::validation, "image " + shape_string(image.data().shape()) + " smaller than " +
                                     std::to_string(kMinImageSide) + " pixels per side");
  }
}

double pixel_to_value(int level, const ValueRange& range) { return range.lo + range.width() * (level / 255.0); }

int value_to_pixel(double value, const ValueRange& range) {
  const double level = std::round((value - range.lo) / range.width() * 255.0);
  return static_cast<int>(std::clamp(level, 0.0, 255.0));
}

ImageSize probe_image_size(const std::filesystem::path& path) {
  const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) raise(ErrorKind::decode, "cannot decode image " + path.string());
  return {raw.rows, raw.cols};
}

ImageTensor load_image(const std::filesystem::path& path, ImageSize target, const LoadOptions& options) {
  if (target.height <= 0 || target.width <= 0) {
    raise(ErrorKind::argument, "target size must be positive, got " + std::to_string(target.height) + "x" +
                                   std::to_string(target.width));
  }
  if (options.channels != 0 && options.channels != 1 && options.channels != 3) {
    raise(ErrorKind::argument, "channels must be 0, 1 or 3");
  }
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) raise(ErrorKind::decode, "cannot decode image " + path.string());
  if (raw.depth() != CV_8U) raise(ErrorKind::decode, "not an 8-bit image: " + path.string());

  cv::Mat img;
  const int file_channels = raw.channels();
  if (file_channels != 1 && file_channels != 3 && file_channels != 4) {
    raise(ErrorKind::decode, "unsupported channel layout in " + path.string());
  }
  int channels = options.channels == 0 ? (file_channels == 1 ? 1 : 3) : options.channels;
  if (channels == 1) {
    if (file_channels == 1) img = raw;
    else if (file_channels == 3) cv::cvtColor(raw, img, cv::COLOR_BGR2GRAY);
    else cv::cvtColor(raw, img, cv::COLOR_BGRA2GRAY);
  } else {
    if (file_channels == 1) cv::cvtColor(raw, img, cv::COLOR_GRAY2RGB);
    else if (file_channels == 3) cv::cvtColor(raw, img, cv::COLOR_BGR2RGB);
    else cv::cvtColor(raw, img, cv::COLOR_BGRA2RGB);
  }

  // Aspect-preserving center crop, then bilinear resize.
  const double target_aspect = static_cast<double>(target.width) / target.height;
  int crop_w = img.cols, crop_h = img.rows;
  if (static_cast<double>(img.cols) / img.rows > target_aspect) {
    crop_w = std::max(1, static_cast<int>(std::lround(img.rows * target_aspect)));
  } else {
    crop_h = std::max(1, static_cast<int>(std::lround(img.cols / target_aspect)));
  }
  cv::Mat cropped = img(cv::Rect((img.cols - crop_w) / 2, (img.rows - crop_h) / 2, crop_w, crop_h));
  cv::Mat sized;
  if (cropped.cols == target.width && cropped.rows == target.height) {
    sized = cropped;
  } else {
    cv::resize(cropped, sized, cv::Size(target.width, target.height), 0, 0, cv::INTER_LINEAR);
  }

  Tensor data({channels, target.height, target.width});
  for (int y = 0; y < target.height; ++y) {
    const unsigned char* row = sized.ptr<unsigned char>(y);
    for (int x = 0; x < target.width; ++x) {
      for (int c = 0; c < channels; ++c) {
        data[(static_cast<std::size_t>(c) * target.height + y) * target.width + x] =
            pixel_to_value(row[x * channels + c], options.range);
      }
    }
  }
  return ImageTensor(std::move(data), options.range);
}

void save_image(const ImageTensor& image, const std::filesystem::path& path) {
  const int c = image.channels(), h = image.height(), w = image.width();
  cv::Mat out(h, w, c == 1 ? CV_8UC1 : CV_8UC3);
  const Tensor& data = image.data();
  for (int y = 0; y < h; ++y) {
    unsigned char* row = out.ptr<unsigned char>(y);
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        // OpenCV stores BGR.
        const int dst = c == 3 ? 2 - ch : ch;
        row[x * c + dst] = static_cast<unsigned char>(
            value_to_pixel(data[(static_cast<std::size_t>(ch) * h + y) * w + x], image.range()));
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), out);
  } catch (const cv::Exception& e) {
    raise(ErrorKind::io, "cannot write image " + path.string() + ": " + e.what());
  }
  if (!ok) raise(ErrorKind::io, "cannot write image " + path.string());
}

}  // namespace ctz
