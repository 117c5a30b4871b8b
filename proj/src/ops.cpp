#include "cartoonize/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

#include "cartoonize/errors.hpp"

namespace ctz::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void require_rank4(const Tensor& t, const char* what) {
  if (t.rank() != 4) raise(ErrorKind::shape, std::string(what) + " expects NCHW input, got " + shape_string(t.shape()));
}

struct ConvDims {
  int channels, height, width, kh, kw, out_h, out_w;
  ConvGeometry g;
};

void im2col(const double* image, const ConvDims& d, double* cols) {
  const int plane = d.out_h * d.out_w;
  for (int c = 0; c < d.channels; ++c) {
    const double* src = image + static_cast<std::size_t>(c) * d.height * d.width;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        double* row = cols + (static_cast<std::size_t>(c * d.kh + ki) * d.kw + kj) * plane;
        for (int oy = 0; oy < d.out_h; ++oy) {
          const int iy = oy * d.g.stride - d.g.padding + ki;
          double* dst = row + oy * d.out_w;
          if (iy < 0 || iy >= d.height) {
            std::fill(dst, dst + d.out_w, 0.0);
            continue;
          }
          const double* line = src + static_cast<std::size_t>(iy) * d.width;
          for (int ox = 0; ox < d.out_w; ++ox) {
            const int ix = ox * d.g.stride - d.g.padding + kj;
            dst[ox] = (ix >= 0 && ix < d.width) ? line[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvDims& d, double* image) {
  const int plane = d.out_h * d.out_w;
  for (int c = 0; c < d.channels; ++c) {
    double* dst = image + static_cast<std::size_t>(c) * d.height * d.width;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        const double* row = cols + (static_cast<std::size_t>(c * d.kh + ki) * d.kw + kj) * plane;
        for (int oy = 0; oy < d.out_h; ++oy) {
          const int iy = oy * d.g.stride - d.g.padding + ki;
          if (iy < 0 || iy >= d.height) continue;
          double* line = dst + static_cast<std::size_t>(iy) * d.width;
          const double* src = row + oy * d.out_w;
          for (int ox = 0; ox < d.out_w; ++ox) {
            const int ix = ox * d.g.stride - d.g.padding + kj;
            if (ix >= 0 && ix < d.width) line[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

int conv_output_size(int input, int kernel, ConvGeometry geometry) {
  const int span = input + 2 * geometry.padding - kernel;
  if (span < 0) return 0;
  return span / geometry.stride + 1;
}

Var conv2d(const Var& input, const Var& weight, const Var& bias, ConvGeometry geometry) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  require_rank4(x, "conv2d");
  if (w.rank() != 4 || w.dim(1) != x.dim(1)) {
    raise(ErrorKind::shape, "conv2d weight " + shape_string(w.shape()) + " incompatible with input " +
                                shape_string(x.shape()));
  }
  const int batch = x.dim(0);
  const int out_channels = w.dim(0);
  ConvDims d{x.dim(1), x.dim(2), x.dim(3), w.dim(2), w.dim(3), 0, 0, geometry};
  d.out_h = conv_output_size(d.height, d.kh, geometry);
  d.out_w = conv_output_size(d.width, d.kw, geometry);
  if (d.out_h < 1 || d.out_w < 1) {
    raise(ErrorKind::shape, "conv2d input " + shape_string(x.shape()) + " too small for kernel " +
                                std::to_string(d.kh) + "x" + std::to_string(d.kw));
  }
  if (bias.defined() && (bias.value().rank() != 1 || bias.value().dim(0) != out_channels)) {
    raise(ErrorKind::shape, "conv2d bias shape " + shape_string(bias.value().shape()));
  }

  const int k = d.channels * d.kh * d.kw;
  const int plane = d.out_h * d.out_w;
  const std::size_t in_stride = static_cast<std::size_t>(d.channels) * d.height * d.width;
  const std::size_t out_stride = static_cast<std::size_t>(out_channels) * plane;

  Tensor out({batch, out_channels, d.out_h, d.out_w});
  std::vector<double> cols(static_cast<std::size_t>(k) * plane);
  ConstMatMap wm(w.data(), out_channels, k);
  for (int n = 0; n < batch; ++n) {
    im2col(x.data() + n * in_stride, d, cols.data());
    MatMap y(out.data() + n * out_stride, out_channels, plane);
    y.noalias() = wm * ConstMatMap(cols.data(), k, plane);
    if (bias.defined()) {
      const double* b = bias.value().data();
      for (int o = 0; o < out_channels; ++o) y.row(o).array() += b[o];
    }
  }

  std::vector<Var> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(std::move(out), std::move(inputs),
                 [d, batch, out_channels, k, plane, in_stride, out_stride](const Tensor& gout, std::span<Var> in) {
                   const Tensor& xv = in[0].value();
                   const Tensor& wv = in[1].value();
                   Tensor* gx = grad_sink(in[0]);
                   Tensor* gw = grad_sink(in[1]);
                   Tensor* gb = in.size() > 2 ? grad_sink(in[2]) : nullptr;
                   std::vector<double> cols(static_cast<std::size_t>(k) * plane);
                   ConstMatMap wm(wv.data(), out_channels, k);
                   for (int n = 0; n < batch; ++n) {
                     ConstMatMap gy(gout.data() + n * out_stride, out_channels, plane);
                     if (gw) {
                       im2col(xv.data() + n * in_stride, d, cols.data());
                       MatMap(gw->data(), out_channels, k).noalias() +=
                           gy * ConstMatMap(cols.data(), k, plane).transpose();
                     }
                     if (gb) {
                       for (int o = 0; o < out_channels; ++o) {
                         const double* row = gout.data() + n * out_stride + static_cast<std::size_t>(o) * plane;
                         double acc = 0.0;
                         for (int i = 0; i < plane; ++i) acc += row[i];
                         (*gb)[o] += acc;
                       }
                     }
                     if (gx) {
                       MatMap(cols.data(), k, plane).noalias() = wm.transpose() * gy;
                       col2im_add(cols.data(), d, gx->data() + n * in_stride);
                     }
                   }
                 });
}

Var instance_norm(const Var& input, double epsilon) {
  const Tensor& x = input.value();
  require_rank4(x, "instance_norm");
  const int groups = x.dim(0) * x.dim(1);
  const int plane = x.dim(2) * x.dim(3);
  std::vector<double> mean(groups), inv_std(groups);
  Tensor out(x.shape());
  for (int g = 0; g < groups; ++g) {
    const double* src = x.data() + static_cast<std::size_t>(g) * plane;
    double m = 0.0;
    for (int i = 0; i < plane; ++i) m += src[i];
    m /= plane;
    double var = 0.0;
    for (int i = 0; i < plane; ++i) var += (src[i] - m) * (src[i] - m);
    var /= plane;
    const double inv = 1.0 / std::sqrt(var + epsilon);
    mean[g] = m;
    inv_std[g] = inv;
    double* dst = out.data() + static_cast<std::size_t>(g) * plane;
    for (int i = 0; i < plane; ++i) dst[i] = (src[i] - m) * inv;
  }
  return make_op(std::move(out), {input},
                 [mean = std::move(mean), inv_std = std::move(inv_std), groups, plane](const Tensor& gout,
                                                                                       std::span<Var> in) {
                   Tensor* gx = grad_sink(in[0]);
                   if (!gx) return;
                   const Tensor& xv = in[0].value();
                   for (int g = 0; g < groups; ++g) {
                     const std::size_t off = static_cast<std::size_t>(g) * plane;
                     const double* src = xv.data() + off;
                     const double* gy = gout.data() + off;
                     double mean_gy = 0.0, mean_gy_xhat = 0.0;
                     for (int i = 0; i < plane; ++i) {
                       const double xhat = (src[i] - mean[g]) * inv_std[g];
                       mean_gy += gy[i];
                       mean_gy_xhat += gy[i] * xhat;
                     }
                     mean_gy /= plane;
                     mean_gy_xhat /= plane;
                     double* dst = gx->data() + off;
                     for (int i = 0; i < plane; ++i) {
                       const double xhat = (src[i] - mean[g]) * inv_std[g];
                       dst[i] += inv_std[g] * (gy[i] - mean_gy - xhat * mean_gy_xhat);
                     }
                   }
                 });
}

Var leaky_relu(const Var& input, double slope) {
  const Tensor& x = input.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  return make_op(std::move(out), {input}, [slope](const Tensor& gout, std::span<Var> in) {
    Tensor* gx = grad_sink(in[0]);
    if (!gx) return;
    const Tensor& xv = in[0].value();
    for (std::size_t i = 0; i < xv.size(); ++i) (*gx)[i] += xv[i] > 0.0 ? gout[i] : slope * gout[i];
  });
}

Var relu(const Var& input) { return leaky_relu(input, 0.0); }

Var tanh(const Var& input) {
  const Tensor& x = input.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
  return make_op(std::move(out), {input}, [](const Tensor& gout, std::span<Var> in) {
    Tensor* gx = grad_sink(in[0]);
    if (!gx) return;
    const Tensor& xv = in[0].value();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double y = std::tanh(xv[i]);
      (*gx)[i] += gout[i] * (1.0 - y * y);
    }
  });
}

Var upsample_nearest2x(const Var& input) {
  const Tensor& x = input.value();
  require_rank4(x, "upsample_nearest2x");
  const int planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({x.dim(0), x.dim(1), 2 * h, 2 * w});
  for (int p = 0; p < planes; ++p) {
    const double* src = x.data() + static_cast<std::size_t>(p) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(p) * 4 * h * w;
    for (int y = 0; y < 2 * h; ++y) {
      for (int xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
    }
  }
  return make_op(std::move(out), {input}, [planes, h, w](const Tensor& gout, std::span<Var> in) {
    Tensor* gx = grad_sink(in[0]);
    if (!gx) return;
    for (int p = 0; p < planes; ++p) {
      const double* src = gout.data() + static_cast<std::size_t>(p) * 4 * h * w;
      double* dst = gx->data() + static_cast<std::size_t>(p) * h * w;
      for (int y = 0; y < 2 * h; ++y) {
        for (int xx = 0; xx < 2 * w; ++xx) dst[(y / 2) * w + xx / 2] += src[y * 2 * w + xx];
      }
    }
  });
}

Var max_pool2x2(const Var& input) {
  const Tensor& x = input.value();
  require_rank4(x, "max_pool2x2");
  const int planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h / 2, ow = w / 2;
  if (oh < 1 || ow < 1) raise(ErrorKind::shape, "max_pool2x2 input too small: " + shape_string(x.shape()));
  Tensor out({x.dim(0), x.dim(1), oh, ow});
  std::vector<std::uint32_t> argmax(out.size());
  for (int p = 0; p < planes; ++p) {
    const std::size_t in_off = static_cast<std::size_t>(p) * h * w;
    const std::size_t out_off = static_cast<std::size_t>(p) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        std::uint32_t best = static_cast<std::uint32_t>((2 * y) * w + 2 * xx);
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const auto idx = static_cast<std::uint32_t>((2 * y + dy) * w + 2 * xx + dx);
            if (x[in_off + idx] > x[in_off + best]) best = idx;
          }
        }
        out[out_off + y * ow + xx] = x[in_off + best];
        argmax[out_off + y * ow + xx] = best;
      }
    }
  }
  return make_op(std::move(out), {input},
                 [argmax = std::move(argmax), planes, h, w, oh, ow](const Tensor& gout, std::span<Var> in) {
                   Tensor* gx = grad_sink(in[0]);
                   if (!gx) return;
                   for (int p = 0; p < planes; ++p) {
                     const std::size_t in_off = static_cast<std::size_t>(p) * h * w;
                     const std::size_t out_off = static_cast<std::size_t>(p) * oh * ow;
                     for (int i = 0; i < oh * ow; ++i) (*gx)[in_off + argmax[out_off + i]] += gout[out_off + i];
                   }
                 });
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_rank4(x, "concat_channels");
  require_rank4(y, "concat_channels");
  if (x.dim(0) != y.dim(0) || x.dim(2) != y.dim(2) || x.dim(3) != y.dim(3)) {
    raise(ErrorKind::shape, "concat_channels mismatch " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
  }
  const int batch = x.dim(0);
  const std::size_t xs = x.size() / batch, ys = y.size() / batch;
  Tensor out({batch, x.dim(1) + y.dim(1), x.dim(2), x.dim(3)});
  for (int n = 0; n < batch; ++n) {
    std::copy_n(x.data() + n * xs, xs, out.data() + n * (xs + ys));
    std::copy_n(y.data() + n * ys, ys, out.data() + n * (xs + ys) + xs);
  }
  return make_op(std::move(out), {a, b}, [batch, xs, ys](const Tensor& gout, std::span<Var> in) {
    Tensor* ga = grad_sink(in[0]);
    Tensor* gb = grad_sink(in[1]);
    for (int n = 0; n < batch; ++n) {
      const double* src = gout.data() + n * (xs + ys);
      if (ga) {
        for (std::size_t i = 0; i < xs; ++i) (*ga)[n * xs + i] += src[i];
      }
      if (gb) {
        for (std::size_t i = 0; i < ys; ++i) (*gb)[n * ys + i] += src[xs + i];
      }
    }
  });
}

Var channel_affine(const Var& input, std::span<const double> scale, std::span<const double> shift) {
  const Tensor& x = input.value();
  require_rank4(x, "channel_affine");
  const int channels = x.dim(1);
  if (scale.size() != static_cast<std::size_t>(channels) || shift.size() != scale.size()) {
    raise(ErrorKind::shape, "channel_affine coefficient count does not match " + shape_string(x.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  std::vector<double> s(scale.begin(), scale.end());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t c = (i / plane) % channels;
    out[i] = x[i] * scale[c] + shift[c];
  }
  return make_op(std::move(out), {input}, [s = std::move(s), plane, channels](const Tensor& gout, std::span<Var> in) {
    Tensor* gx = grad_sink(in[0]);
    if (!gx) return;
    for (std::size_t i = 0; i < gout.size(); ++i) (*gx)[i] += gout[i] * s[(i / plane) % channels];
  });
}

Var crop(const Var& input, int top, int left, int height, int width) {
  const Tensor& x = input.value();
  require_rank4(x, "crop");
  const int h = x.dim(2), w = x.dim(3);
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > h || left + width > w) {
    raise(ErrorKind::argument, "crop window out of bounds for " + shape_string(x.shape()));
  }
  const int planes = x.dim(0) * x.dim(1);
  Tensor out({x.dim(0), x.dim(1), height, width});
  for (int p = 0; p < planes; ++p) {
    for (int y = 0; y < height; ++y) {
      const double* src = x.data() + (static_cast<std::size_t>(p) * h + top + y) * w + left;
      std::copy_n(src, width, out.data() + (static_cast<std::size_t>(p) * height + y) * width);
    }
  }
  return make_op(std::move(out), {input}, [=](const Tensor& gout, std::span<Var> in) {
    Tensor* gx = grad_sink(in[0]);
    if (!gx) return;
    for (int p = 0; p < planes; ++p) {
      for (int y = 0; y < height; ++y) {
        double* dst = gx->data() + (static_cast<std::size_t>(p) * h + top + y) * w + left;
        const double* src = gout.data() + (static_cast<std::size_t>(p) * height + y) * width;
        for (int xx = 0; xx < width; ++xx) dst[xx] += src[xx];
      }
    }
  });
}

Var weighted_sum(std::span<const std::pair<double, Var>> terms) {
  double total = 0.0;
  std::vector<Var> inputs;
  std::vector<double> weights;
  for (const auto& [weight, term] : terms) {
    if (term.value().size() != 1) raise(ErrorKind::shape, "weighted_sum expects scalar terms");
    total += weight * term.value()[0];
    inputs.push_back(term);
    weights.push_back(weight);
  }
  return make_op(Tensor({1}, {total}), std::move(inputs),
                 [weights = std::move(weights)](const Tensor& gout, std::span<Var> in) {
                   for (std::size_t i = 0; i < in.size(); ++i) {
                     if (Tensor* g = grad_sink(in[i])) (*g)[0] += weights[i] * gout[0];
                   }
                 });
}

Tensor stack(std::span<const Tensor> images) {
  if (images.empty()) raise(ErrorKind::argument, "stack of zero images");
  const Shape& s = images.front().shape();
  if (s.size() != 3) raise(ErrorKind::shape, "stack expects C×H×W images, got " + shape_string(s));
  Tensor out({static_cast<int>(images.size()), s[0], s[1], s[2]});
  const std::size_t n = images.front().size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != s) {
      raise(ErrorKind::shape, "stack shape mismatch " + shape_string(images[i].shape()) + " vs " + shape_string(s));
    }
    std::copy_n(images[i].data(), n, out.data() + i * n);
  }
  return out;
}

Tensor unstack(const Tensor& batch, int index) {
  require_rank4(batch, "unstack");
  if (index < 0 || index >= batch.dim(0)) raise(ErrorKind::argument, "unstack index out of range");
  Tensor out({batch.dim(1), batch.dim(2), batch.dim(3)});
  std::copy_n(batch.data() + index * out.size(), out.size(), out.data());
  return out;
}

Tensor resize_bilinear(const Tensor& images, int height, int width) {
  require_rank4(images, "resize_bilinear");
  if (height < 1 || width < 1) raise(ErrorKind::argument, "resize_bilinear to empty size");
  const int planes = images.dim(0) * images.dim(1), h = images.dim(2), w = images.dim(3);
  Tensor out({images.dim(0), images.dim(1), height, width});
  const double sy = static_cast<double>(h) / height, sx = static_cast<double>(w) / width;
  // Half-pixel centers, edge clamped.
  for (int p = 0; p < planes; ++p) {
    const double* src = images.data() + static_cast<std::size_t>(p) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(p) * height * width;
    for (int y = 0; y < height; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, h - 1);
      const double ty = fy - y0;
      for (int x = 0; x < width; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, w - 1);
        const double tx = fx - x0;
        const double top = src[y0 * w + x0] * (1 - tx) + src[y0 * w + x1] * tx;
        const double bottom = src[y1 * w + x0] * (1 - tx) + src[y1 * w + x1] * tx;
        dst[y * width + x] = top * (1 - ty) + bottom * ty;
      }
    }
  }
  return out;
}

}  // namespace ctz::ops
