#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sybilfl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with an explicit shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Leading dimension is the batch axis; returns one sample's elements.
  std::span<const double> row(std::size_t i) const;
  std::span<double> row(std::size_t i);

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

enum class ParamRole { Weight, Bias };

struct ParamBlock {
  std::size_t layer = 0;
  ParamRole role = ParamRole::Weight;
  Shape shape;
  std::size_t offset = 0;

  std::size_t size() const { return shape_size(shape); }
};

using ParamLayout = std::vector<ParamBlock>;

/// Flat parameter (or parameter-gradient) vector sharing the layout of a model.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::shared_ptr<const ParamLayout> layout);
  ParamVector(std::shared_ptr<const ParamLayout> layout, std::vector<double> data);

  std::size_t size() const { return data_.size(); }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  const ParamLayout& layout() const { return *layout_; }
  const std::shared_ptr<const ParamLayout>& layout_ptr() const { return layout_; }
  bool same_layout(const ParamVector& other) const;

  std::vector<Tensor> unflatten() const;
  static ParamVector flatten(std::shared_ptr<const ParamLayout> layout,
                             std::span<const Tensor> blocks);

  ParamVector zeros_like() const { return ParamVector(layout_); }

  bool operator==(const ParamVector& other) const { return data_ == other.data_; }

 private:
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<double> data_;
};

// Validates contiguity of a layout and returns its total length.
std::size_t layout_size(const ParamLayout& layout);

namespace vec {

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double distance(std::span<const double> a, std::span<const double> b);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void scale(double alpha, std::span<double> x);
bool all_finite(std::span<const double> x);

}  // namespace vec

}  // namespace sybilfl
