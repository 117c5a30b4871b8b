#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "cartoonize/data.hpp"
#include "cartoonize/regions.hpp"

namespace ctz {

/// Source of facial-component boxes for a selfie. Implementations must be
/// safe for concurrent queries unless concurrent_safe() returns false.
class RegionProvider {
 public:
  virtual ~RegionProvider() = default;
  virtual std::vector<RegionEntry> regions_for(const DomainSample& sample) const = 0;
  virtual bool concurrent_safe() const { return true; }
};

/// Boxes from an annotation sidecar, matched on the sample's path suffix.
class SidecarRegionProvider : public RegionProvider {
 public:
  explicit SidecarRegionProvider(AnnotationMap annotations);
  static SidecarRegionProvider from_file(const std::filesystem::path& path);

  std::vector<RegionEntry> regions_for(const DomainSample& sample) const override;

 private:
  AnnotationMap annotations_;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Adapts a 68-point landmark detector (iBUG ordering, pixel coordinates) to
/// eyes/nose/mouth boxes.
class LandmarkRegionProvider : public RegionProvider {
 public:
  using Detector = std::function<std::optional<std::vector<Point2>>(const DomainSample&)>;

  explicit LandmarkRegionProvider(Detector detector, double margin = 0.15, bool concurrent_safe = false);

  std::vector<RegionEntry> regions_for(const DomainSample& sample) const override;
  bool concurrent_safe() const override { return concurrent_safe_; }

  static std::vector<RegionEntry> boxes_from_landmarks(const std::vector<Point2>& landmarks, int height, int width,
                                                       double margin);

 private:
  Detector detector_;
  double margin_;
  bool concurrent_safe_;
};

// Provider regions prefixed with the whole image. Provider failures and
// invalid boxes degrade to the whole-image-only set and report a warning.
RegionSet detect_regions(const DomainSample& sample, const RegionProvider& provider, const WarningSink& warn = {});

}  // namespace ctz
