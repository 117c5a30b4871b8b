#include "cartoonize/region_provider.hpp"

#include <algorithm>
#include <limits>

#include "cartoonize/errors.hpp"

namespace ctz {

SidecarRegionProvider::SidecarRegionProvider(AnnotationMap annotations) : annotations_(std::move(annotations)) {}

SidecarRegionProvider SidecarRegionProvider::from_file(const std::filesystem::path& path) {
  return SidecarRegionProvider(load_annotations(path));
}

std::vector<RegionEntry> SidecarRegionProvider::regions_for(const DomainSample& sample) const {
  // Try "a/b/c.png", then "b/c.png", then "c.png".
  std::string key = std::filesystem::path(sample.source_path).generic_string();
  while (!key.empty()) {
    if (auto it = annotations_.find(key); it != annotations_.end()) {
      const auto& entries = it->second.entries();
      return {entries.begin() + 1, entries.end()};
    }
    const auto slash = key.find('/');
    if (slash == std::string::npos) break;
    key.erase(0, slash + 1);
  }
  return {};
}

LandmarkRegionProvider::LandmarkRegionProvider(Detector detector, double margin, bool concurrent_safe)
    : detector_(std::move(detector)), margin_(margin), concurrent_safe_(concurrent_safe) {}

std::vector<RegionEntry> LandmarkRegionProvider::boxes_from_landmarks(const std::vector<Point2>& landmarks,
                                                                      int height, int width, double margin) {
  if (landmarks.size() != 68) {
    raise(ErrorKind::argument, "expected 68 landmarks, got " + std::to_string(landmarks.size()));
  }
  auto box = [&](const char* label, std::size_t first, std::size_t last) {
    double x0 = std::numeric_limits<double>::max(), y0 = x0, x1 = -x0, y1 = -x0;
    for (std::size_t i = first; i <= last; ++i) {
      x0 = std::min(x0, landmarks[i].x);
      x1 = std::max(x1, landmarks[i].x);
      y0 = std::min(y0, landmarks[i].y);
      y1 = std::max(y1, landmarks[i].y);
    }
    const double mx = (x1 - x0) * margin, my = (y1 - y0) * margin;
    const double left = std::clamp((x0 - mx) / width, 0.0, 1.0);
    const double top = std::clamp((y0 - my) / height, 0.0, 1.0);
    const double right = std::clamp((x1 + mx) / width, 0.0, 1.0);
    const double bottom = std::clamp((y1 + my) / height, 0.0, 1.0);
    return RegionEntry{label, {left, top, right - left, bottom - top}};
  };
  // iBUG-68: 36-47 eyes, 27-35 nose, 48-67 mouth.
  return {box("eyes", 36, 47), box("nose", 27, 35), box("mouth", 48, 67)};
}

std::vector<RegionEntry> LandmarkRegionProvider::regions_for(const DomainSample& sample) const {
  auto landmarks = detector_(sample);
  if (!landmarks) return {};
  return boxes_from_landmarks(*landmarks, sample.image.height(), sample.image.width(), margin_);
}

RegionSet detect_regions(const DomainSample& sample, const RegionProvider& provider, const WarningSink& warn) {
  if (sample.domain != Domain::a_selfie) {
    raise(ErrorKind::argument, "detect_regions applies to domain-A samples only: " + sample.source_path);
  }
  try {
    return RegionSet::with_components(provider.regions_for(sample));
  } catch (const std::exception& e) {
    if (warn) warn("region provider failed for " + sample.source_path + " (" + e.what() + "); using whole image only");
    return RegionSet();
  }
}

}  // namespace ctz
