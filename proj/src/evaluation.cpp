#include "cartoonize/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cartoonize/errors.hpp"

namespace ctz {

namespace {

void require_gradient_size(const ImageTensor& image) {
  if (image.height() < 2 || image.width() < 2) {
    raise(ErrorKind::argument, "gradient needs at least 2x2 pixels, got " + std::to_string(image.height()) + "x" +
                                   std::to_string(image.width()));
  }
}

// Per-channel magnitude |I(y,x+1)-I(y,x)| + |I(y+1,x)-I(y,x)|.
template <typename F>
void for_each_magnitude(const Tensor& t, F&& f) {
  const int channels = t.dim(0), height = t.dim(1), width = t.dim(2);
  const double* p = t.data();
  for (int c = 0; c < channels; ++c) {
    const double* plane = p + static_cast<std::size_t>(c) * height * width;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double v = plane[y * width + x];
        double g = 0.0;
        if (x + 1 < width) g += std::abs(plane[y * width + x + 1] - v);
        if (y + 1 < height) g += std::abs(plane[(y + 1) * width + x] - v);
        f(y, x, g);
      }
    }
  }
}

double parse_fraction(std::string cell, int line_no) {
  auto trim = [](std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  trim(cell);
  bool percent = false;
  if (!cell.empty() && cell.back() == '%') {
    percent = true;
    cell.pop_back();
    trim(cell);
  }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (cell.empty() || used != cell.size()) {
    raise(ErrorKind::parse, "line " + std::to_string(line_no) + ": not a number: '" + cell + "'");
  }
  return percent ? v / 100.0 : v;
}

}  // namespace

double average_gradient(const ImageTensor& image, double display_max) {
  require_gradient_size(image);
  if (!(display_max > 0.0)) raise(ErrorKind::argument, "display scale must be positive");
  const ValueRange range = image.range();
  const double scale = display_max / (range.hi - range.lo);
  double total = 0.0;
  for_each_magnitude(image.data(), [&](int, int, double g) { total += g; });
  return total * scale / static_cast<double>(image.data().size());
}

ImageTensor gradient_map(const ImageTensor& image) {
  require_gradient_size(image);
  const int height = image.height(), width = image.width();
  Tensor magnitude({1, height, width});
  for_each_magnitude(image.data(), [&](int y, int x, double g) { magnitude[static_cast<std::size_t>(y) * width + x] += g; });
  double peak = 0.0;
  for (double g : magnitude.values()) peak = std::max(peak, g);
  const ValueRange range = image.range();
  for (auto& g : magnitude.values()) g = peak > 0.0 ? range.lo + (range.hi - range.lo) * g / peak : range.lo;
  return ImageTensor(std::move(magnitude), range);
}

SurveyTable::SurveyTable(std::vector<SurveyRow> rows) : rows_(std::move(rows)) {
  if (rows_.empty()) raise(ErrorKind::validation, "survey table has no rows");
  for (const auto& row : rows_) {
    double sum = 0.0;
    for (double f : row.fractions) {
      if (!(f >= 0.0 && f <= 1.0)) raise(ErrorKind::validation, "fraction outside [0, 1] for '" + row.method + "'");
      sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      std::ostringstream msg;
      msg << "fractions for '" << row.method << "' sum to " << sum << ", expected 1";
      raise(ErrorKind::validation, msg.str());
    }
  }
}

SurveyTable SurveyTable::parse(const std::string& text) {
  std::istringstream in(text);
  std::vector<SurveyRow> rows;
  std::string line;
  int line_no = 0;
  bool seen_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) {
      raise(ErrorKind::parse, "line " + std::to_string(line_no) + ": expected 6 columns, got " +
                                  std::to_string(cells.size()));
    }
    if (!seen_content) {
      seen_content = true;
      try {
        parse_fraction(cells[1], line_no);
      } catch (const Error&) {
        continue;  // header
      }
    }
    SurveyRow row;
    row.method = cells[0];
    const auto b = row.method.find_first_not_of(" \t");
    const auto e = row.method.find_last_not_of(" \t\r");
    row.method = b == std::string::npos ? "" : row.method.substr(b, e - b + 1);
    if (row.method.empty()) raise(ErrorKind::parse, "line " + std::to_string(line_no) + ": empty method name");
    for (int s = 0; s < 5; ++s) row.fractions[static_cast<std::size_t>(s)] = parse_fraction(cells[s + 1], line_no);
    rows.push_back(std::move(row));
  }
  return SurveyTable(std::move(rows));
}

SurveyTable SurveyTable::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::io, "cannot open survey table " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::vector<SurveyAverage> aggregate_survey(const SurveyTable& table) {
  std::vector<SurveyAverage> out;
  for (const auto& row : table.rows()) {
    double avg = 0.0;
    for (int s = 0; s < 5; ++s) avg += (s + 1) * row.fractions[static_cast<std::size_t>(s)];
    out.push_back({row.method, avg});
  }
  return out;
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::floor(value * scale + 0.5 + 1e-9) / scale;
}

std::string format_score(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", round_half_up(value, 2));
  return buf;
}

}  // namespace ctz
