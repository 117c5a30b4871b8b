#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cartoonize/image.hpp"

namespace ctz {

// Mean over all C×H×W elements of |right diff| + |down diff| (forward
// differences, zero past the border), on the image mapped to [0, display_max].
double average_gradient(const ImageTensor& image, double display_max = 255.0);

// Per-pixel gradient magnitude summed over channels, scaled so the largest
// value maps to range.hi. Constant images map to range.lo everywhere.
ImageTensor gradient_map(const ImageTensor& image);

struct SurveyRow {
  std::string method;
  std::array<double, 5> fractions{};  // scores 1..5
};

class SurveyTable {
 public:
  // Validation error if any row has fractions outside [0, 1] or not summing to 1.
  explicit SurveyTable(std::vector<SurveyRow> rows);

  // Comma-separated text: an optional header, then `method,f1,f2,f3,f4,f5`.
  // Fractions may be written as percentages ("32.8%").
  static SurveyTable parse(const std::string& text);
  static SurveyTable from_file(const std::filesystem::path& path);

  const std::vector<SurveyRow>& rows() const noexcept { return rows_; }

 private:
  std::vector<SurveyRow> rows_;
};

struct SurveyAverage {
  std::string method;
  double average = 0.0;
};

// sum_s s * fraction_s per method, in table order.
std::vector<SurveyAverage> aggregate_survey(const SurveyTable& table);

double round_half_up(double value, int decimals = 2);
std::string format_score(double value);  // "3.74"

}  // namespace ctz
