#include "sybilfl/model.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "sybilfl/rng.hpp"

namespace sybilfl {

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::MaxPool2d: return "maxpool2d";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Flatten: return "flatten";
  }
  return "unknown";
}

ShapeError::ShapeError(std::size_t layer, const std::string& what)
    : std::invalid_argument(fmt::format("layer {}: {}", layer, what)), layer_(layer) {}

namespace {

Shape infer_output(std::size_t k, const LayerSpec& spec, const Shape& in) {
  switch (spec.kind) {
    case LayerKind::Dense:
      if (in.size() != 1 || in[0] != spec.in) {
        throw ShapeError(k, fmt::format("dense expects ({}), got {}", spec.in, shape_string(in)));
      }
      if (spec.out == 0) throw ShapeError(k, "dense output width must be positive");
      return {spec.out};
    case LayerKind::Conv2d: {
      if (in.size() != 3 || in[0] != spec.in) {
        throw ShapeError(k, fmt::format("conv2d expects ({},H,W), got {}", spec.in, shape_string(in)));
      }
      if (spec.kernel == 0 || spec.stride == 0 || spec.out == 0 || in[1] < spec.kernel || in[2] < spec.kernel) {
        throw ShapeError(k, fmt::format("conv2d kernel {} does not fit {}", spec.kernel, shape_string(in)));
      }
      return {spec.out, (in[1] - spec.kernel) / spec.stride + 1, (in[2] - spec.kernel) / spec.stride + 1};
    }
    case LayerKind::MaxPool2d:
      if (in.size() != 3 || spec.kernel == 0 || spec.stride == 0 || in[1] < spec.kernel || in[2] < spec.kernel) {
        throw ShapeError(k, fmt::format("maxpool2d window {} does not fit {}", spec.kernel, shape_string(in)));
      }
      return {in[0], (in[1] - spec.kernel) / spec.stride + 1, (in[2] - spec.kernel) / spec.stride + 1};
    case LayerKind::ReLU:
      return in;
    case LayerKind::Flatten:
      return {shape_size(in)};
  }
  throw ShapeError(k, "unknown layer kind");
}

}  // namespace

Model::Model(std::vector<LayerSpec> layers, Shape input_shape, std::string name)
    : layers_(std::move(layers)), input_shape_(std::move(input_shape)), name_(std::move(name)) {
  if (layers_.empty()) throw std::invalid_argument("model needs at least one layer");
  if (input_shape_.empty() || shape_size(input_shape_) == 0) {
    throw std::invalid_argument(fmt::format("invalid model input shape {}", shape_string(input_shape_)));
  }
  shapes_.push_back(input_shape_);
  auto layout = std::make_shared<ParamLayout>();
  weight_offset_.assign(layers_.size(), 0);
  bias_offset_.assign(layers_.size(), 0);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& spec = layers_[k];
    shapes_.push_back(infer_output(k, spec, shapes_.back()));
    if (!spec.has_params()) continue;
    Shape wshape = spec.kind == LayerKind::Dense ? Shape{spec.out, spec.in}
                                                 : Shape{spec.out, spec.in, spec.kernel, spec.kernel};
    weight_offset_[k] = offset;
    layout->push_back({k, ParamRole::Weight, wshape, offset});
    offset += shape_size(wshape);
    bias_offset_[k] = offset;
    layout->push_back({k, ParamRole::Bias, {spec.out}, offset});
    offset += spec.out;
  }
  if (shapes_.back().size() != 1) {
    throw ShapeError(layers_.size() - 1, fmt::format("final output must be a class vector, got {}",
                                                     shape_string(shapes_.back())));
  }
  param_count_ = offset;
  layout_ = std::move(layout);
}

Model build_fc(std::span<const std::size_t> sizes) {
  if (sizes.size() < 2) throw std::invalid_argument("build_fc needs at least an input and an output size");
  for (auto s : sizes)
    if (s == 0) throw std::invalid_argument("build_fc sizes must be positive");
  return build_fc(sizes, Shape{sizes[0]});
}

Model build_fc(std::span<const std::size_t> sizes, const Shape& input_shape) {
  if (sizes.size() < 2) throw std::invalid_argument("build_fc needs at least an input and an output size");
  for (auto s : sizes)
    if (s == 0) throw std::invalid_argument("build_fc sizes must be positive");
  std::vector<LayerSpec> layers;
  if (input_shape.size() != 1) layers.push_back(LayerSpec::flatten());
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    layers.push_back(LayerSpec::dense(sizes[i], sizes[i + 1]));
    if (i + 2 < sizes.size()) layers.push_back(LayerSpec::relu());
  }
  return Model(std::move(layers), input_shape, "fc");
}

Model build_cnn() {
  std::vector<LayerSpec> layers{
      LayerSpec::conv(1, 6, 5),   LayerSpec::relu(), LayerSpec::maxpool(2, 2),
      LayerSpec::conv(6, 16, 5),  LayerSpec::relu(), LayerSpec::maxpool(2, 2),
      LayerSpec::flatten(),       LayerSpec::dense(256, 120), LayerSpec::relu(),
      LayerSpec::dense(120, 84),  LayerSpec::relu(), LayerSpec::dense(84, 10),
  };
  return Model(std::move(layers), Shape{1, 28, 28}, "cnn-fmnist");
}

Model model_by_name(std::string_view name, const Shape& input_shape, std::size_t num_classes) {
  if (name == "fc-mnist") {
    const std::vector<std::size_t> sizes{shape_size(input_shape), 32, 16, 8, num_classes};
    Model fc = build_fc(sizes, input_shape);
    return Model(fc.layers(), input_shape, "fc-mnist");
  }
  if (name == "cnn-fmnist") {
    if (input_shape != Shape{1, 28, 28} || num_classes != 10) {
      throw std::invalid_argument(fmt::format("cnn-fmnist needs (1,28,28) inputs and 10 classes, got {} and {}",
                                              shape_string(input_shape), num_classes));
    }
    return build_cnn();
  }
  throw std::invalid_argument(fmt::format("unknown model '{}' (expected fc-mnist or cnn-fmnist)", name));
}

ParamVector init_params(const Model& model, std::uint64_t seed) {
  ParamVector params(model.layout());
  Rng rng = make_rng(seed, Stream::Init);
  for (const auto& block : *model.layout()) {
    if (block.role == ParamRole::Bias) continue;
    const auto& spec = model.layer(block.layer);
    const std::size_t receptive = spec.kind == LayerKind::Conv2d ? spec.kernel * spec.kernel : 1;
    const double fan_in = static_cast<double>(spec.in * receptive);
    const double fan_out = static_cast<double>(spec.out * receptive);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t i = 0; i < block.size(); ++i) params[block.offset + i] = dist(rng);
  }
  return params;
}

}  // namespace sybilfl
