#include "sybilfl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <fmt/format.h>

#include "dual.hpp"

namespace sybilfl {
namespace {

using detail::Dual;
using detail::value;

template <class T>
struct Trace {
  std::size_t batch = 0;
  // acts[k] is the batch entering layer k; acts.back() leaves the last traced layer.
  std::vector<std::vector<T>> acts;
  std::vector<std::vector<std::uint32_t>> argmax;
};

// ---- layer kernels -------------------------------------------------------

template <class T>
void dense_forward(const LayerSpec& s, const T* w, const T* b, const T* in, T* out, std::size_t batch) {
  for (std::size_t n = 0; n < batch; ++n) {
    const T* x = in + n * s.in;
    T* y = out + n * s.out;
    for (std::size_t o = 0; o < s.out; ++o) {
      const T* row = w + o * s.in;
      T acc = b[o];
      for (std::size_t i = 0; i < s.in; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
  }
}

template <class T>
void dense_backward(const LayerSpec& s, const T* w, const T* in, const T* gout, T* gw, T* gb, T* gin,
                    std::size_t batch) {
  for (std::size_t n = 0; n < batch; ++n) {
    const T* x = in + n * s.in;
    const T* gy = gout + n * s.out;
    for (std::size_t o = 0; o < s.out; ++o) {
      const T g = gy[o];
      if (gw != nullptr) {
        gb[o] += g;
        T* grow = gw + o * s.in;
        for (std::size_t i = 0; i < s.in; ++i) grow[i] += g * x[i];
      }
      if (gin != nullptr) {
        const T* row = w + o * s.in;
        T* gx = gin + n * s.in;
        for (std::size_t i = 0; i < s.in; ++i) gx[i] += row[i] * g;
      }
    }
  }
}

struct ConvDims {
  std::size_t cin, h, w, cout, oh, ow, k, stride;
};

ConvDims conv_dims(const Model& m, std::size_t layer) {
  const auto& s = m.layer(layer);
  const auto& in = m.layer_input_shape(layer);
  const auto& out = m.layer_output_shape(layer);
  return {in[0], in[1], in[2], out[0], out[1], out[2], s.kernel, s.stride};
}

template <class T>
void conv_forward(const ConvDims& d, const T* w, const T* b, const T* in, T* out, std::size_t batch) {
  const std::size_t in_size = d.cin * d.h * d.w;
  const std::size_t out_size = d.cout * d.oh * d.ow;
  for (std::size_t n = 0; n < batch; ++n) {
    const T* x = in + n * in_size;
    T* y = out + n * out_size;
    for (std::size_t co = 0; co < d.cout; ++co) {
      for (std::size_t oy = 0; oy < d.oh; ++oy) {
        for (std::size_t ox = 0; ox < d.ow; ++ox) {
          T acc = b[co];
          for (std::size_t ci = 0; ci < d.cin; ++ci) {
            const T* wk = w + (co * d.cin + ci) * d.k * d.k;
            const T* plane = x + ci * d.h * d.w;
            for (std::size_t ky = 0; ky < d.k; ++ky) {
              const T* src = plane + (oy * d.stride + ky) * d.w + ox * d.stride;
              for (std::size_t kx = 0; kx < d.k; ++kx) acc += wk[ky * d.k + kx] * src[kx];
            }
          }
          y[(co * d.oh + oy) * d.ow + ox] = acc;
        }
      }
    }
  }
}

template <class T>
void conv_backward(const ConvDims& d, const T* w, const T* in, const T* gout, T* gw, T* gb, T* gin,
                   std::size_t batch) {
  const std::size_t in_size = d.cin * d.h * d.w;
  const std::size_t out_size = d.cout * d.oh * d.ow;
  for (std::size_t n = 0; n < batch; ++n) {
    const T* x = in + n * in_size;
    const T* gy = gout + n * out_size;
    T* gx = gin != nullptr ? gin + n * in_size : nullptr;
    for (std::size_t co = 0; co < d.cout; ++co) {
      for (std::size_t oy = 0; oy < d.oh; ++oy) {
        for (std::size_t ox = 0; ox < d.ow; ++ox) {
          const T g = gy[(co * d.oh + oy) * d.ow + ox];
          if (gw != nullptr) gb[co] += g;
          for (std::size_t ci = 0; ci < d.cin; ++ci) {
            const std::size_t wbase = (co * d.cin + ci) * d.k * d.k;
            const std::size_t pbase = ci * d.h * d.w;
            for (std::size_t ky = 0; ky < d.k; ++ky) {
              const std::size_t row = pbase + (oy * d.stride + ky) * d.w + ox * d.stride;
              for (std::size_t kx = 0; kx < d.k; ++kx) {
                if (gw != nullptr) gw[wbase + ky * d.k + kx] += g * x[row + kx];
                if (gx != nullptr) gx[row + kx] += w[wbase + ky * d.k + kx] * g;
              }
            }
          }
        }
      }
    }
  }
}

// Ties resolve to the lowest flat index inside the window (strict comparison in scan order).
template <class T>
void maxpool_forward(const Shape& ins, const Shape& outs, const LayerSpec& s, const T* in, T* out,
                     std::uint32_t* argmax, std::size_t batch) {
  const std::size_t c = ins[0], h = ins[1], w = ins[2], oh = outs[1], ow = outs[2];
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t plane = (n * c + ch) * h * w;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          std::size_t best = plane + oy * s.stride * w + ox * s.stride;
          for (std::size_t ky = 0; ky < s.kernel; ++ky) {
            for (std::size_t kx = 0; kx < s.kernel; ++kx) {
              const std::size_t idx = plane + (oy * s.stride + ky) * w + ox * s.stride + kx;
              if (value(in[idx]) > value(in[best])) best = idx;
            }
          }
          const std::size_t o = ((n * c + ch) * oh + oy) * ow + ox;
          out[o] = in[best];
          argmax[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
}

// ---- whole-network passes ------------------------------------------------

template <class T>
Trace<T> forward(const Model& m, const T* p, std::vector<T> input, std::size_t batch, std::size_t n_layers) {
  Trace<T> tr;
  tr.batch = batch;
  tr.acts.reserve(n_layers + 1);
  tr.acts.push_back(std::move(input));
  tr.argmax.resize(n_layers);
  for (std::size_t k = 0; k < n_layers; ++k) {
    const auto& s = m.layer(k);
    const std::vector<T>& in = tr.acts.back();
    std::vector<T> out(batch * shape_size(m.layer_output_shape(k)));
    switch (s.kind) {
      case LayerKind::Dense:
        dense_forward(s, p + m.weight_offset(k), p + m.bias_offset(k), in.data(), out.data(), batch);
        break;
      case LayerKind::Conv2d:
        conv_forward(conv_dims(m, k), p + m.weight_offset(k), p + m.bias_offset(k), in.data(), out.data(), batch);
        break;
      case LayerKind::MaxPool2d:
        tr.argmax[k].resize(out.size());
        maxpool_forward(m.layer_input_shape(k), m.layer_output_shape(k), s, in.data(), out.data(),
                        tr.argmax[k].data(), batch);
        break;
      case LayerKind::ReLU:
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = value(in[i]) > 0.0 ? in[i] : T(0.0);
        break;
      case LayerKind::Flatten:
        out = in;
        break;
    }
    tr.acts.push_back(std::move(out));
  }
  return tr;
}

// Propagates `grad_out` (cotangent of the last traced activation) back to the
// input. Parameter gradients accumulate into `gparams` when it is non-null.
template <class T>
std::vector<T> backward(const Model& m, const T* p, const Trace<T>& tr, std::vector<T> grad_out, T* gparams,
                        bool want_input) {
  const std::size_t n_layers = tr.acts.size() - 1;
  std::vector<T> g = std::move(grad_out);
  for (std::size_t k = n_layers; k-- > 0;) {
    const auto& s = m.layer(k);
    const bool need_gin = k > 0 || want_input;
    if (!need_gin && !(s.has_params() && gparams != nullptr)) return {};
    std::vector<T> gin(need_gin ? tr.acts[k].size() : 0, T(0.0));
    T* gin_ptr = need_gin ? gin.data() : nullptr;
    switch (s.kind) {
      case LayerKind::Dense:
        dense_backward(s, p + m.weight_offset(k), tr.acts[k].data(), g.data(),
                       gparams != nullptr ? gparams + m.weight_offset(k) : nullptr,
                       gparams != nullptr ? gparams + m.bias_offset(k) : nullptr, gin_ptr, tr.batch);
        break;
      case LayerKind::Conv2d:
        conv_backward(conv_dims(m, k), p + m.weight_offset(k), tr.acts[k].data(), g.data(),
                      gparams != nullptr ? gparams + m.weight_offset(k) : nullptr,
                      gparams != nullptr ? gparams + m.bias_offset(k) : nullptr, gin_ptr, tr.batch);
        break;
      case LayerKind::MaxPool2d:
        if (gin_ptr != nullptr) {
          const auto& am = tr.argmax[k];
          for (std::size_t i = 0; i < g.size(); ++i) gin[am[i]] += g[i];
        }
        break;
      case LayerKind::ReLU:
        if (gin_ptr != nullptr) {
          const auto& in = tr.acts[k];
          for (std::size_t i = 0; i < g.size(); ++i) gin[i] = value(in[i]) > 0.0 ? g[i] : T(0.0);
        }
        break;
      case LayerKind::Flatten:
        if (gin_ptr != nullptr) gin = g;
        break;
    }
    if (!need_gin) return {};
    g = std::move(gin);
  }
  return g;
}

// Summed softmax cross-entropy over the batch; writes softmax - onehot into grad.
template <class T>
T cross_entropy(const std::vector<T>& logits, std::size_t batch, std::size_t classes, std::span<const int> labels,
                std::vector<T>* grad) {
  T total(0.0);
  if (grad != nullptr) grad->assign(logits.size(), T(0.0));
  std::vector<T> e(classes);
  for (std::size_t n = 0; n < batch; ++n) {
    const T* z = logits.data() + n * classes;
    double mx = value(z[0]);
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, value(z[c]));
    T sum(0.0);
    for (std::size_t c = 0; c < classes; ++c) {
      using std::exp;
      e[c] = exp(z[c] - T(mx));
      sum += e[c];
    }
    using std::log;
    const auto y = static_cast<std::size_t>(labels[n]);
    total += log(sum) + T(mx) - z[y];
    if (grad != nullptr) {
      T* gz = grad->data() + n * classes;
      for (std::size_t c = 0; c < classes; ++c) gz[c] = e[c] / sum - T(c == y ? 1.0 : 0.0);
    }
  }
  return total;
}

// ---- validation ----------------------------------------------------------

std::size_t check_batch(const Model& m, const ParamVector& params, const Tensor& images) {
  if (images.rank() < 2 || images.shape()[0] == 0) {
    throw std::invalid_argument(fmt::format("expected a non-empty batch, got shape {}", shape_string(images.shape())));
  }
  const Shape sample(images.shape().begin() + 1, images.shape().end());
  const bool flat_ok = m.input_shape().size() == 1 && shape_size(sample) == m.input_shape()[0];
  if (sample != m.input_shape() && !flat_ok) {
    throw ShapeError(0, fmt::format("input sample shape {} does not match model input {}", shape_string(sample),
                                    shape_string(m.input_shape())));
  }
  if (params.size() != m.param_count()) {
    throw std::invalid_argument(
        fmt::format("parameter vector has {} entries, model needs {}", params.size(), m.param_count()));
  }
  return images.shape()[0];
}

void check_labels(const Model& m, std::span<const int> labels, std::size_t batch) {
  if (labels.size() != batch) {
    throw std::invalid_argument(fmt::format("{} labels for a batch of {}", labels.size(), batch));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= m.num_classes()) {
      throw std::invalid_argument(fmt::format("label {} outside [0, {})", y, m.num_classes()));
    }
  }
}

std::vector<double> as_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

LossResult forward_loss(const Model& model, const ParamVector& params, const Tensor& images,
                        std::span<const int> labels) {
  const std::size_t batch = check_batch(model, params, images);
  check_labels(model, labels, batch);
  auto tr = forward<double>(model, params.data().data(), as_vector(images.data()), batch, model.num_layers());
  const double sum = cross_entropy<double>(tr.acts.back(), batch, model.num_classes(), labels, nullptr);
  return {sum / static_cast<double>(batch), Tensor({batch, model.num_classes()}, std::move(tr.acts.back()))};
}

Tensor logits(const Model& model, const ParamVector& params, const Tensor& images) {
  const std::size_t batch = check_batch(model, params, images);
  auto tr = forward<double>(model, params.data().data(), as_vector(images.data()), batch, model.num_layers());
  return Tensor({batch, model.num_classes()}, std::move(tr.acts.back()));
}

LossAndGrad loss_and_grad_params(const Model& model, const ParamVector& params, const Tensor& images,
                                 std::span<const int> labels) {
  const std::size_t batch = check_batch(model, params, images);
  check_labels(model, labels, batch);
  const double* p = params.data().data();
  auto tr = forward<double>(model, p, as_vector(images.data()), batch, model.num_layers());
  std::vector<double> gz;
  const double sum = cross_entropy<double>(tr.acts.back(), batch, model.num_classes(), labels, &gz);
  ParamVector grad = params.zeros_like();
  backward<double>(model, p, tr, std::move(gz), grad.data().data(), false);
  return {sum, std::move(grad)};
}

ParamVector grad_params(const Model& model, const ParamVector& params, const Tensor& images,
                        std::span<const int> labels) {
  return loss_and_grad_params(model, params, images, labels).grad;
}

Tensor grad_input(const Model& model, const ParamVector& params, const Tensor& images, std::span<const int> labels) {
  const std::size_t batch = check_batch(model, params, images);
  check_labels(model, labels, batch);
  const double* p = params.data().data();
  auto tr = forward<double>(model, p, as_vector(images.data()), batch, model.num_layers());
  std::vector<double> gz;
  cross_entropy<double>(tr.acts.back(), batch, model.num_classes(), labels, &gz);
  return Tensor(images.shape(), backward<double>(model, p, tr, std::move(gz), nullptr, true));
}

Tensor mixed_grad_delta(const Model& model, const ParamVector& params, const Tensor& images,
                        std::span<const int> labels, const Tensor& delta, const ParamVector& u) {
  const std::size_t batch = check_batch(model, params, images);
  check_labels(model, labels, batch);
  if (delta.shape() != images.shape()) {
    throw std::invalid_argument(fmt::format("perturbation shape {} differs from image shape {}",
                                            shape_string(delta.shape()), shape_string(images.shape())));
  }
  if (!u.same_layout(params)) throw std::invalid_argument("cotangent layout differs from parameter layout");

  std::vector<Dual> p(params.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = Dual(params[i], u[i]);
  std::vector<Dual> x(images.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = Dual(images[i] + delta[i]);

  auto tr = forward<Dual>(model, p.data(), std::move(x), batch, model.num_layers());
  std::vector<Dual> gz;
  cross_entropy<Dual>(tr.acts.back(), batch, model.num_classes(), labels, &gz);
  const auto gx = backward<Dual>(model, p.data(), tr, std::move(gz), nullptr, true);

  Tensor out(images.shape());
  for (std::size_t i = 0; i < gx.size(); ++i) out[i] = gx[i].d;
  return out;
}

Tensor features(const Model& model, const ParamVector& params, const Tensor& images) {
  const std::size_t batch = check_batch(model, params, images);
  auto tr = forward<double>(model, params.data().data(), as_vector(images.data()), batch, model.feature_layer());
  return Tensor({batch, model.feature_dim()}, std::move(tr.acts.back()));
}

Tensor features_vjp(const Model& model, const ParamVector& params, const Tensor& images, const Tensor& cotangent) {
  const std::size_t batch = check_batch(model, params, images);
  if (cotangent.shape() != Shape{batch, model.feature_dim()}) {
    throw std::invalid_argument(fmt::format("feature cotangent shape {} should be ({},{})",
                                            shape_string(cotangent.shape()), batch, model.feature_dim()));
  }
  const double* p = params.data().data();
  auto tr = forward<double>(model, p, as_vector(images.data()), batch, model.feature_layer());
  if (model.feature_layer() == 0) return Tensor(images.shape(), as_vector(cotangent.data()));
  return Tensor(images.shape(), backward<double>(model, p, tr, as_vector(cotangent.data()), nullptr, true));
}

}  // namespace sybilfl
