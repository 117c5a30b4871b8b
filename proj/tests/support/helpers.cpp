#include "helpers.hpp"

#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <stdexcept>

namespace ctz::testing {

Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

double gradient_error(const std::function<Var(const Var&)>& f, const Tensor& x, double h) {
  Var input = parameter(x);
  backward(f(input));
  const Tensor analytic = input.grad();

  Tensor probe = x;
  double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = f(constant(probe)).item();
    probe[i] = saved - h;
    const double down = f(constant(probe)).item();
    probe[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    diff += (analytic[i] - numeric) * (analytic[i] - numeric);
    norm_a += analytic[i] * analytic[i];
    norm_n += numeric * numeric;
  }
  const double scale = std::max(std::sqrt(std::max(norm_a, norm_n)), 1e-12);
  return std::sqrt(diff) / scale;
}

Tensor away_from(const Tensor& base, std::uint64_t seed, double gap) {
  Tensor t = random_tensor(base.shape(), seed);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (std::abs(t[i] - base[i]) < gap) t[i] = base[i] + (t[i] >= base[i] ? gap : -gap);
  }
  return t;
}

Tensor tv_safe(const Shape& shape, std::uint64_t seed, double gap) {
  Tensor t = random_tensor(shape, seed);
  const int n = shape[0], c = shape[1], h = shape[2], w = shape[3];
  for (int pass = 0; pass < 50; ++pass) {
    bool clean = true;
    for (int i = 0; i < n * c; ++i) {
      double* p = t.data() + static_cast<std::size_t>(i) * h * w;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double v = p[y * w + x];
          if ((x + 1 < w && std::abs(p[y * w + x + 1] - v) < gap) || (y + 1 < h && std::abs(p[(y + 1) * w + x] - v) < gap)) {
            p[y * w + x] += 3 * gap;
            clean = false;
          }
        }
      }
    }
    if (clean) return t;
  }
  throw std::runtime_error("tv_safe: could not separate differences");
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cartoonize_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_raw_png(const std::filesystem::path& path, int height, int width, int channels,
                   const std::function<int(int, int, int)>& level) {
  cv::Mat m(height, width, channels == 1 ? CV_8UC1 : (channels == 3 ? CV_8UC3 : CV_8UC4));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) m.ptr<unsigned char>(y)[x * channels + c] = static_cast<unsigned char>(level(y, x, c));
    }
  }
  std::filesystem::create_directories(path.parent_path());
  cv::imwrite(path.string(), m);
}

}  // namespace ctz::testing
