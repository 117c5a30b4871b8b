#include "cartoonize/tensor.hpp"

#include <algorithm>
#include <cstring>

#include "cartoonize/errors.hpp"

namespace ctz {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::argument: return "argument";
    case ErrorKind::shape: return "shape";
    case ErrorKind::decode: return "decode";
    case ErrorKind::data: return "data";
    case ErrorKind::io: return "io";
    case ErrorKind::parse: return "parse";
    case ErrorKind::validation: return "validation";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::resource: return "resource";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::integrity: return "integrity";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}

void raise(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) raise(ErrorKind::shape, "negative dimension in " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_size(shape_)) {
    raise(ErrorKind::shape, "value count " + std::to_string(data_.size()) + " does not match shape " +
                                shape_string(shape_));
  }
}

int Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank()) {
    raise(ErrorKind::shape, "axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

double& Tensor::at(int n, int c, int y, int x) {
  const std::size_t idx = ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  return data_[idx];
}

double Tensor::at(int n, int c, int y, int x) const {
  const std::size_t idx = ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  return data_[idx];
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    raise(ErrorKind::shape, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

std::uint64_t checksum(const Tensor& tensor, std::uint64_t seed) {
  std::uint64_t h = seed;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (int d : tensor.shape()) mix(&d, sizeof d);
  mix(tensor.data(), tensor.size() * sizeof(double));
  return h;
}

}  // namespace ctz
