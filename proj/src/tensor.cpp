#include "sybilfl/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace sybilfl {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) { return fmt::format("({})", fmt::join(shape, ",")); }

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw std::invalid_argument(fmt::format("tensor shape {} holds {} elements, got {}", shape_string(shape_),
                                            shape_size(shape_), data_.size()));
  }
}

std::span<const double> Tensor::row(std::size_t i) const {
  const std::size_t stride = shape_.empty() || shape_[0] == 0 ? 0 : data_.size() / shape_[0];
  return std::span<const double>(data_).subspan(i * stride, stride);
}

std::span<double> Tensor::row(std::size_t i) {
  const std::size_t stride = shape_.empty() || shape_[0] == 0 ? 0 : data_.size() / shape_[0];
  return std::span<double>(data_).subspan(i * stride, stride);
}

std::size_t layout_size(const ParamLayout& layout) {
  std::size_t offset = 0;
  for (const auto& block : layout) {
    if (block.offset != offset) {
      throw std::invalid_argument(
          fmt::format("parameter block for layer {} starts at {}, expected {}", block.layer, block.offset, offset));
    }
    offset += block.size();
  }
  return offset;
}

ParamVector::ParamVector(std::shared_ptr<const ParamLayout> layout)
    : layout_(std::move(layout)), data_(layout_size(*layout_), 0.0) {}

ParamVector::ParamVector(std::shared_ptr<const ParamLayout> layout, std::vector<double> data)
    : layout_(std::move(layout)), data_(std::move(data)) {
  const std::size_t expected = layout_size(*layout_);
  if (data_.size() != expected) {
    throw std::invalid_argument(fmt::format("parameter vector has {} entries, layout needs {}", data_.size(), expected));
  }
}

bool ParamVector::same_layout(const ParamVector& other) const {
  if (layout_ == other.layout_) return true;
  if (!layout_ || !other.layout_) return false;
  const auto& a = *layout_;
  const auto& b = *other.layout_;
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].layer != b[i].layer || a[i].role != b[i].role || a[i].shape != b[i].shape || a[i].offset != b[i].offset)
      return false;
  }
  return true;
}

std::vector<Tensor> ParamVector::unflatten() const {
  std::vector<Tensor> out;
  out.reserve(layout_->size());
  for (const auto& block : *layout_) {
    auto first = data_.begin() + static_cast<std::ptrdiff_t>(block.offset);
    out.emplace_back(block.shape, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(block.size())));
  }
  return out;
}

ParamVector ParamVector::flatten(std::shared_ptr<const ParamLayout> layout, std::span<const Tensor> blocks) {
  if (blocks.size() != layout->size()) {
    throw std::invalid_argument(fmt::format("expected {} parameter blocks, got {}", layout->size(), blocks.size()));
  }
  ParamVector out(layout);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& block = (*layout)[i];
    if (blocks[i].shape() != block.shape) {
      throw std::invalid_argument(fmt::format("parameter block {} has shape {}, layout expects {}", i,
                                              shape_string(blocks[i].shape()), shape_string(block.shape)));
    }
    std::copy(blocks[i].data().begin(), blocks[i].data().end(),
              out.data_.begin() + static_cast<std::ptrdiff_t>(block.offset));
  }
  return out;
}

namespace vec {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void scale(double alpha, std::span<double> x) {
  for (auto& v : x) v *= alpha;
}

bool all_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace vec

}  // namespace sybilfl
