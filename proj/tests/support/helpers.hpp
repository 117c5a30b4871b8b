#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "cartoonize/autograd.hpp"
#include "cartoonize/image.hpp"

namespace ctz::testing {

Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0);

// ||analytic - numeric|| / max(||analytic||, ||numeric||) for a scalar
// function of one tensor, using central differences with step h.
double gradient_error(const std::function<Var(const Var&)>& f, const Tensor& x, double h = 1e-3);

// Random tensor shaped like base with every |t - base| >= gap, so central
// differences never straddle an L1 kink.
Tensor away_from(const Tensor& base, std::uint64_t seed, double gap = 0.02);

// Random N×C×H×W tensor whose forward differences all have magnitude >= gap.
Tensor tv_safe(const Shape& shape, std::uint64_t seed, double gap = 0.02);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

// Writes an 8-bit image straight from BGR/gray bytes so decoding tests do not
// depend on save_image.
void write_raw_png(const std::filesystem::path& path, int height, int width, int channels,
                   const std::function<int(int y, int x, int c)>& level);

}  // namespace ctz::testing
