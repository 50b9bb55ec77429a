#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sybilfl/tensor.hpp"

namespace sybilfl {

enum class LayerKind { Dense, Conv2d, MaxPool2d, ReLU, Flatten };

std::string_view layer_kind_name(LayerKind kind);

/// Shape incompatibility, tagged with the index of the offending layer.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::size_t layer, const std::string& what);
  std::size_t layer() const { return layer_; }

 private:
  std::size_t layer_;
};

/// One layer of a feed-forward network.
///
/// Dense: `in`/`out` are feature counts. Conv2d: `in`/`out` are channel
/// counts with a square `kernel`, `stride`, no padding. MaxPool2d: square
/// `kernel` window moved by `stride`. ReLU and Flatten carry no sizes.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;

  static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::Dense, in, out, 0, 1}; }
  static LayerSpec conv(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride = 1) {
    return {LayerKind::Conv2d, in_ch, out_ch, kernel, stride};
  }
  static LayerSpec maxpool(std::size_t kernel, std::size_t stride) { return {LayerKind::MaxPool2d, 0, 0, kernel, stride}; }
  static LayerSpec relu() { return {LayerKind::ReLU}; }
  static LayerSpec flatten() { return {LayerKind::Flatten}; }

  bool has_params() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }
};

/// Immutable network description. Construction checks that consecutive
/// layer shapes are compatible and builds the flat parameter layout.
class Model {
 public:
  Model(std::vector<LayerSpec> layers, Shape input_shape, std::string name = {});

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const LayerSpec& layer(std::size_t k) const { return layers_[k]; }
  std::size_t num_layers() const { return layers_.size(); }
  const std::string& name() const { return name_; }

  const Shape& input_shape() const { return input_shape_; }
  // Per-sample shape entering / leaving layer k.
  const Shape& layer_input_shape(std::size_t k) const { return shapes_[k]; }
  const Shape& layer_output_shape(std::size_t k) const { return shapes_[k + 1]; }
  std::size_t num_classes() const { return shapes_.back()[0]; }

  std::size_t param_count() const { return param_count_; }
  const std::shared_ptr<const ParamLayout>& layout() const { return layout_; }
  // Offsets into the flat vector; only meaningful for Dense/Conv2d layers.
  std::size_t weight_offset(std::size_t k) const { return weight_offset_[k]; }
  std::size_t bias_offset(std::size_t k) const { return bias_offset_[k]; }

  // The penultimate representation is the input of this (final) layer.
  std::size_t feature_layer() const { return layers_.size() - 1; }
  std::size_t feature_dim() const { return shape_size(shapes_[feature_layer()]); }

 private:
  std::vector<LayerSpec> layers_;
  Shape input_shape_;
  std::string name_;
  std::vector<Shape> shapes_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  std::shared_ptr<const ParamLayout> layout_;
  std::size_t param_count_ = 0;
};

// Fully connected stack with ReLU between hidden layers and raw logits out.
Model build_fc(std::span<const std::size_t> sizes);
// Same, preceded by a Flatten when `input_shape` is multi-dimensional.
Model build_fc(std::span<const std::size_t> sizes, const Shape& input_shape);

// LeNet-style net for 1x28x28 inputs:
// conv5(1->6) relu pool2 conv5(6->16) relu pool2 flatten fc256-120 relu fc120-84 relu fc84-10.
Model build_cnn();

// "fc-mnist" (hidden widths 32,16,8 over the flattened input) or "cnn-fmnist".
Model model_by_name(std::string_view name, const Shape& input_shape, std::size_t num_classes);

// Glorot-uniform weights, zero biases, deterministic in `seed`.
ParamVector init_params(const Model& model, std::uint64_t seed);

}  // namespace sybilfl
