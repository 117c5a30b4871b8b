#pragma once

#include <span>
#include <vector>

#include "cartoonize/autograd.hpp"

// Differentiable building blocks over NCHW tensors.
namespace ctz::ops {

struct ConvGeometry {
  int stride = 1;
  int padding = 0;
};

int conv_output_size(int input, int kernel, ConvGeometry geometry);

// weight: [out, in, kh, kw]; bias: [out] or undefined.
Var conv2d(const Var& input, const Var& weight, const Var& bias, ConvGeometry geometry);

// Per-sample, per-channel normalization over the spatial extent (no affine).
Var instance_norm(const Var& input, double epsilon = 1e-5);

Var leaky_relu(const Var& input, double slope);
Var relu(const Var& input);
Var tanh(const Var& input);

Var upsample_nearest2x(const Var& input);
Var max_pool2x2(const Var& input);
Var concat_channels(const Var& a, const Var& b);

// y[n,c] = x[n,c] * scale[c] + shift[c]
Var channel_affine(const Var& input, std::span<const double> scale, std::span<const double> shift);

Var crop(const Var& input, int top, int left, int height, int width);

// Weighted sum of single-element Vars.
Var weighted_sum(std::span<const std::pair<double, Var>> terms);

// Non-differentiable helpers for data handling.
Tensor stack(std::span<const Tensor> images);  // each C×H×W -> N×C×H×W
Tensor unstack(const Tensor& batch, int index);
Tensor resize_bilinear(const Tensor& images, int height, int width);

}  // namespace ctz::ops
