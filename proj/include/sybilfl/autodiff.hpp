#pragma once

#include <span>

#include "sybilfl/model.hpp"
#include "sybilfl/tensor.hpp"

namespace sybilfl {

// All entry points take a batch tensor shaped (batch, ...sample shape).
// Gradient routines differentiate the *summed* batch cross-entropy; only
// forward_loss reports the mean.

struct LossResult {
  double loss = 0.0;  // mean over batch
  Tensor logits;      // (batch, num_classes)
};

struct LossAndGrad {
  double loss_sum = 0.0;
  ParamVector grad;
};

LossResult forward_loss(const Model& model, const ParamVector& params, const Tensor& images,
                        std::span<const int> labels);

Tensor logits(const Model& model, const ParamVector& params, const Tensor& images);

ParamVector grad_params(const Model& model, const ParamVector& params, const Tensor& images,
                        std::span<const int> labels);

LossAndGrad loss_and_grad_params(const Model& model, const ParamVector& params, const Tensor& images,
                                 std::span<const int> labels);

Tensor grad_input(const Model& model, const ParamVector& params, const Tensor& images,
                  std::span<const int> labels);

/// Gradient with respect to `delta` of <u, sum_i grad_w loss(f_w(x_i + delta_i), y_i)>.
///
/// Evaluated exactly: the forward pass carries the parameter tangent `u`
/// as dual numbers and the reverse pass runs on those duals, so the tangent
/// part of the input gradient is the mixed second derivative contracted with u.
Tensor mixed_grad_delta(const Model& model, const ParamVector& params, const Tensor& images,
                        std::span<const int> labels, const Tensor& delta, const ParamVector& u);

// Penultimate representation: the input of the model's final layer, (batch, feature_dim).
Tensor features(const Model& model, const ParamVector& params, const Tensor& images);

// Gradient with respect to the images of sum_i <cotangent_i, features(x)_i>.
Tensor features_vjp(const Model& model, const ParamVector& params, const Tensor& images, const Tensor& cotangent);

}  // namespace sybilfl
