#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "sybilfl/attack.hpp"
#include "sybilfl/autodiff.hpp"
#include "sybilfl/data.hpp"
#include "sybilfl/model.hpp"
#include "sybilfl/tensor.hpp"
#include "sybilfl/training.hpp"

namespace testing_support {

using namespace sybilfl;

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline ParamVector random_params(const Model& model, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  ParamVector p(model.layout());
  for (auto& v : p.data()) v = n(rng);
  return p;
}

inline std::vector<int> random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, static_cast<int>(classes) - 1);
  std::vector<int> out(n);
  for (auto& y : out) y = d(rng);
  return out;
}

inline Shape batch_shape(std::size_t n, const Shape& sample) {
  Shape s{n};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Straight-line evaluation of a dense/relu stack, written without the engine.
inline std::vector<double> naive_fc_logits(const std::vector<std::size_t>& sizes, std::span<const double> params,
                                           std::span<const double> x) {
  std::vector<double> act(x.begin(), x.end());
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t in = sizes[l], out = sizes[l + 1];
    std::vector<double> next(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      double s = 0.0;
      for (std::size_t i = 0; i < in; ++i) s += params[off + o * in + i] * act[i];
      next[o] = s + params[off + in * out + o];
      if (l + 2 < sizes.size()) next[o] = next[o] > 0.0 ? next[o] : 0.0;
    }
    off += in * out + out;
    act = std::move(next);
  }
  return act;
}

inline double naive_ce(std::span<const double> z, int y) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return std::log(s) + m - z[static_cast<std::size_t>(y)];
}

inline double summed_loss(const Model& model, const ParamVector& p, const Tensor& x, std::span<const int> y) {
  return forward_loss(model, p, x, y).loss * static_cast<double>(y.size());
}

// Small conv net exercising every layer kind on an 8x8 input.
inline Model tiny_cnn() {
  return Model({LayerSpec::conv(1, 2, 3), LayerSpec::relu(), LayerSpec::maxpool(2, 2), LayerSpec::flatten(),
                LayerSpec::dense(18, 5), LayerSpec::relu(), LayerSpec::dense(5, 3)},
               {1, 8, 8}, "tiny-cnn");
}

inline LabeledDataset blobs(std::size_t per_class, std::size_t classes, std::size_t side, double noise,
                            std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_classes = classes;
  spec.per_class = per_class;
  spec.image_shape = {1, side, side};
  spec.noise = noise;
  spec.seed = seed;
  return make_synthetic(spec, 0);
}

// A partly trained FC net on 8x8 blobs, its flipped-label target and a class-7 base set.
struct AttackScenario {
  Model model = build_fc(std::vector<std::size_t>{64, 32, 16, 8, 10}, {1, 8, 8});
  LabeledDataset data;
  ParamVector w_r;
  ParamVector w_tar;
  LabeledDataset base;
};

inline AttackScenario make_attack_scenario(std::uint64_t seed, int y_tar = 1, int y_adv = 7) {
  AttackScenario s;
  s.data = blobs(20, 10, 8, 0.25, seed);
  Rng warm = make_rng(seed, Stream::LocalTrain, 0, 0);
  s.w_r = local_train(s.model, s.data, init_params(s.model, seed), TrainParams{3, 32, 0.01, 0.9}, warm);
  AttackConfig cfg;
  cfg.y_tar = y_tar;
  cfg.y_adv = y_adv;
  Rng tr = make_rng(seed, Stream::TargetModel, 0, 0);
  s.w_tar = acquire_target_local(s.model, s.w_r, s.data, cfg, TrainParams{}, tr);
  s.base = select_base(s.data, y_adv);
  return s;
}

}  // namespace testing_support
