#include "cartoonize/losses.hpp"

#include <cmath>

#include "cartoonize/errors.hpp"
#include "cartoonize/ops.hpp"

namespace ctz {

namespace {

// log(1 + e^z) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}
double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    raise(ErrorKind::shape, std::string(what) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_batch(const Tensor& t, const char* what) {
  if (t.rank() != 4 || t.size() == 0) {
    raise(ErrorKind::shape, std::string(what) + " expects a non-empty N×C×H×W tensor, got " + shape_string(t.shape()));
  }
}

Tensor scalar(double v) { return Tensor({1}, {v}); }

Var batch_of(const ImageTensor& image) {
  return constant(image.data().reshaped({1, image.channels(), image.height(), image.width()}));
}

Var scores_batch(const Tensor& scores) {
  if (scores.rank() == 4) return constant(scores);
  if (scores.rank() == 3) return constant(scores.reshaped({1, scores.dim(0), scores.dim(1), scores.dim(2)}));
  return constant(scores.reshaped({1, 1, 1, static_cast<int>(scores.size())}));
}

// Mean over every element of f(v), with df/dv for the backward pass.
template <typename F, typename DF>
Var elementwise_mean(const Var& input, F f, DF df) {
  const Tensor& x = input.value();
  if (x.size() == 0) raise(ErrorKind::shape, "mean over an empty tensor");
  double acc = 0.0;
  for (double v : x.values()) acc += f(v);
  const double n = static_cast<double>(x.size());
  return make_op(scalar(acc / n), {input}, [df, n](const Tensor& gout, std::span<Var> in) {
    Tensor* gx = grad_sink(in[0]);
    if (!gx) return;
    const Tensor& xv = in[0].value();
    const double g = gout[0] / n;
    for (std::size_t i = 0; i < xv.size(); ++i) (*gx)[i] += g * df(xv[i]);
  });
}

Var mean_abs_difference(const Var& a, const Var& b, const char* what) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, what);
  require_batch(x, what);
  const int batch = x.dim(0);
  const std::size_t per = x.size() / static_cast<std::size_t>(batch);
  double total = 0.0;
  for (int n = 0; n < batch; ++n) {
    const double* xs = x.data() + n * per;
    const double* ys = y.data() + n * per;
    double acc = 0.0;
    for (std::size_t i = 0; i < per; ++i) acc += std::abs(ys[i] - xs[i]);
    total += acc / static_cast<double>(per);
  }
  return make_op(scalar(total / batch), {a, b}, [batch, per](const Tensor& gout, std::span<Var> in) {
    Tensor* ga = grad_sink(in[0]);
    Tensor* gb = grad_sink(in[1]);
    const Tensor& xv = in[0].value();
    const Tensor& yv = in[1].value();
    const double g = gout[0] / (static_cast<double>(batch) * static_cast<double>(per));
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double s = g * sign(yv[i] - xv[i]);
      if (ga) (*ga)[i] -= s;
      if (gb) (*gb)[i] += s;
    }
  });
}

}  // namespace

double full_objective(const LossReport& c, const LossWeights& w) {
  const std::pair<const char*, double> parts[] = {{"gan_ab", c.gan_ab}, {"gan_ba", c.gan_ba},
                                                  {"att_cyc_ab", c.att_cyc_ab}, {"cyc_ba", c.cyc_ba},
                                                  {"tv", c.tv}, {"perceptual", c.perceptual}};
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value)) raise(ErrorKind::numeric, std::string("non-finite loss component ") + name);
  }
  return c.gan_ab + c.gan_ba + w.alpha * (c.att_cyc_ab + c.cyc_ba) + w.beta * c.tv + w.gamma * c.perceptual;
}

Var adversarial_loss_discriminator(const Var& real_scores, const Var& fake_scores, GanMode mode) {
  require_same_shape(real_scores.value(), fake_scores.value(), "adversarial_loss_discriminator");
  const Var& fake = fake_scores;
  if (mode == GanMode::log) {
    // log sigmoid(z) = -softplus(-z); log(1 - sigmoid(z)) = -softplus(z)
    Var real_term = elementwise_mean(
        real_scores, [](double z) { return -softplus(-z); }, [](double z) { return sigmoid(-z); });
    Var fake_term = elementwise_mean(
        fake, [](double z) { return -softplus(z); }, [](double z) { return -sigmoid(z); });
    const std::pair<double, Var> terms[] = {{1.0, real_term}, {1.0, fake_term}};
    return ops::weighted_sum(terms);
  }
  Var real_term = elementwise_mean(
      real_scores, [](double z) { return (z - 1.0) * (z - 1.0); }, [](double z) { return 2.0 * (z - 1.0); });
  Var fake_term = elementwise_mean(
      fake, [](double z) { return z * z; }, [](double z) { return 2.0 * z; });
  const std::pair<double, Var> terms[] = {{-1.0, real_term}, {-1.0, fake_term}};
  return ops::weighted_sum(terms);
}

Var adversarial_loss_generator(const Var& fake_scores, GanMode mode) {
  if (mode == GanMode::log) {
    return elementwise_mean(
        fake_scores, [](double z) { return softplus(-z); }, [](double z) { return -sigmoid(-z); });
  }
  return elementwise_mean(
      fake_scores, [](double z) { return (z - 1.0) * (z - 1.0); }, [](double z) { return 2.0 * (z - 1.0); });
}

Var cycle_loss(const Var& original, const Var& reconstruction) {
  return mean_abs_difference(original, reconstruction, "cycle_loss");
}

Var attentive_cycle_loss(const Var& original, const Var& reconstruction, std::span<const RegionSet> regions,
                         std::span<const AttentionWeights> weights) {
  const Tensor& x = original.value();
  const Tensor& r = reconstruction.value();
  require_same_shape(x, r, "attentive_cycle_loss");
  require_batch(x, "attentive_cycle_loss");
  const int batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
  if (regions.size() != static_cast<std::size_t>(batch) || weights.size() != regions.size()) {
    raise(ErrorKind::argument, "attentive_cycle_loss needs one RegionSet and weight vector per sample");
  }
  struct Term {
    int sample;
    PixelWindow win;
    double lambda;
  };
  std::vector<Term> terms;
  for (int n = 0; n < batch; ++n) {
    const auto& set = regions[static_cast<std::size_t>(n)];
    const auto& lambda = weights[static_cast<std::size_t>(n)].lambda;
    if (lambda.size() != set.k()) {
      raise(ErrorKind::argument, "attention weights have " + std::to_string(lambda.size()) + " entries for k = " +
                                     std::to_string(set.k()));
    }
    for (std::size_t j = 0; j < set.k(); ++j) {
      const PixelWindow win = pixel_window(set[j].box, height, width);
      terms.push_back({n, win, lambda[j]});
    }
  }

  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const std::size_t per = static_cast<std::size_t>(channels) * plane;
  std::vector<double> per_sample(static_cast<std::size_t>(batch), 0.0);
  for (const auto& t : terms) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      for (int y = t.win.top; y < t.win.top + t.win.height; ++y) {
        const std::size_t row = t.sample * per + c * plane + static_cast<std::size_t>(y) * width;
        for (int xx = t.win.left; xx < t.win.left + t.win.width; ++xx) acc += std::abs(r[row + xx] - x[row + xx]);
      }
    }
    const double count = static_cast<double>(channels) * t.win.height * t.win.width;
    per_sample[static_cast<std::size_t>(t.sample)] += t.lambda * (acc / count);
  }
  double total = 0.0;
  for (double v : per_sample) total += v;

  return make_op(scalar(total / batch), {original, reconstruction},
                 [terms = std::move(terms), batch, channels, width, plane, per](const Tensor& gout, std::span<Var> in) {
                   Tensor* gx = grad_sink(in[0]);
                   Tensor* gr = grad_sink(in[1]);
                   const Tensor& xv = in[0].value();
                   const Tensor& rv = in[1].value();
                   for (const auto& t : terms) {
                     const double count = static_cast<double>(channels) * t.win.height * t.win.width;
                     const double g = gout[0] * t.lambda / count / batch;
                     for (int c = 0; c < channels; ++c) {
                       for (int y = t.win.top; y < t.win.top + t.win.height; ++y) {
                         const std::size_t row = t.sample * per + c * plane + static_cast<std::size_t>(y) * width;
                         for (int xx = t.win.left; xx < t.win.left + t.win.width; ++xx) {
                           const double s = g * sign(rv[row + xx] - xv[row + xx]);
                           if (gr) (*gr)[row + xx] += s;
                           if (gx) (*gx)[row + xx] -= s;
                         }
                       }
                     }
                   }
                 });
}

Var tv_loss(const Var& image) {
  const Tensor& x = image.value();
  require_batch(x, "tv_loss");
  const int batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
  if (height < 2 || width < 2) raise(ErrorKind::argument, "tv_loss needs at least 2×2 spatial extent");
  const std::size_t per = static_cast<std::size_t>(channels) * height * width;
  double total = 0.0;
  for (int n = 0; n < batch; ++n) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const double* p = x.data() + n * per + static_cast<std::size_t>(c) * height * width;
      for (int y = 0; y < height; ++y) {
        for (int xx = 0; xx < width; ++xx) {
          const double v = p[y * width + xx];
          if (xx + 1 < width) acc += std::abs(p[y * width + xx + 1] - v);
          if (y + 1 < height) acc += std::abs(p[(y + 1) * width + xx] - v);
        }
      }
    }
    total += acc / static_cast<double>(per);
  }
  return make_op(scalar(total / batch), {image}, [=](const Tensor& gout, std::span<Var> in) {
    Tensor* gx = grad_sink(in[0]);
    if (!gx) return;
    const Tensor& xv = in[0].value();
    const double g = gout[0] / (static_cast<double>(per) * batch);
    for (int n = 0; n < batch; ++n) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t off = n * per + static_cast<std::size_t>(c) * height * width;
        const double* p = xv.data() + off;
        double* d = gx->data() + off;
        for (int y = 0; y < height; ++y) {
          for (int xx = 0; xx < width; ++xx) {
            const int i = y * width + xx;
            if (xx + 1 < width) {
              const double s = g * sign(p[i + 1] - p[i]);
              d[i + 1] += s;
              d[i] -= s;
            }
            if (y + 1 < height) {
              const double s = g * sign(p[i + width] - p[i]);
              d[i + width] += s;
              d[i] -= s;
            }
          }
        }
      }
    }
  });
}

Var perceptual_loss(const Var& input_image, const Var& output_image, const FeatureExtractor& extractor) {
  const Tensor& a = input_image.value();
  const Tensor& b = output_image.value();
  if (a.rank() != 4 || b.rank() != 4 || a.dim(1) != 3 || b.dim(1) != 3) {
    raise(ErrorKind::shape, "perceptual_loss needs 3-channel images, got " + shape_string(a.shape()) + " and " +
                                shape_string(b.shape()));
  }
  require_same_shape(a, b, "perceptual_loss");
  return mean_abs_difference(extractor.extract(input_image), extractor.extract(output_image), "perceptual_loss");
}

double adversarial_loss_discriminator(const Tensor& real_scores, const Tensor& fake_scores, GanMode mode) {
  return adversarial_loss_discriminator(scores_batch(real_scores), scores_batch(fake_scores), mode).item();
}

double adversarial_loss_generator(const Tensor& fake_scores, GanMode mode) {
  return adversarial_loss_generator(scores_batch(fake_scores), mode).item();
}

double cycle_loss(const ImageTensor& original, const ImageTensor& reconstruction) {
  return cycle_loss(batch_of(original), batch_of(reconstruction)).item();
}

double attentive_cycle_loss(const ImageTensor& original, const ImageTensor& reconstruction, const RegionSet& regions,
                            const AttentionWeights& weights) {
  return attentive_cycle_loss(batch_of(original), batch_of(reconstruction), std::span(&regions, 1),
                              std::span(&weights, 1))
      .item();
}

double tv_loss(const ImageTensor& image) { return tv_loss(batch_of(image)).item(); }

double perceptual_loss(const ImageTensor& input_image, const ImageTensor& output_image,
                       const FeatureExtractor& extractor) {
  if (input_image.channels() != 3 || output_image.channels() != 3) {
    raise(ErrorKind::shape, "perceptual_loss needs 3-channel images");
  }
  return perceptual_loss(batch_of(input_image), batch_of(output_image), extractor).item();
}

}  // namespace ctz
