#include "sybilfl/training.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "sybilfl/autodiff.hpp"

namespace sybilfl {

std::size_t batches_per_epoch(std::size_t dataset_size, std::size_t batch_size) {
  if (dataset_size == 0) return 0;
  return std::max<std::size_t>(1, dataset_size / batch_size);
}

LocalTrainResult local_train_run(const Model& model, const LabeledDataset& data, const ParamVector& start,
                                 const TrainParams& train, Rng& rng) {
  if (data.empty()) throw std::invalid_argument("local training needs a non-empty dataset");
  if (train.batch_size == 0) throw std::invalid_argument("batch size must be at least 1");

  LocalTrainResult result{start, 0, 0.0};
  ParamVector& w = result.params;
  ParamVector velocity = start.zeros_like();
  const std::size_t batch = std::min(train.batch_size, data.size());
  const std::size_t nb = batches_per_epoch(data.size(), train.batch_size);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  double loss_acc = 0.0;
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < nb; ++b) {
      const std::span<const std::size_t> idx(order.data() + b * batch, batch);
      const auto lg = loss_and_grad_params(model, w, data.images_tensor(idx), data.labels_of(idx));
      const double inv = 1.0 / static_cast<double>(batch);
      auto v = velocity.data();
      auto g = lg.grad.data();
      auto p = w.data();
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = train.momentum * v[i] + g[i] * inv;
        p[i] -= train.lr * v[i];
      }
      loss_acc += lg.loss_sum * inv;
      ++result.steps;
    }
  }
  if (result.steps > 0) result.mean_loss = loss_acc / static_cast<double>(result.steps);
  return result;
}

ParamVector aggregate(std::span<const ParamVector> params, std::span<const double> weights) {
  if (params.empty()) throw std::invalid_argument("aggregate needs at least one parameter vector");
  if (weights.size() != params.size()) {
    throw std::invalid_argument(fmt::format("{} weights for {} parameter vectors", weights.size(), params.size()));
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument(fmt::format("aggregation weight {} is negative", w));
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("aggregation weights sum to zero");
  ParamVector out = params.front().zeros_like();
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != out.size()) {
      throw std::invalid_argument(
          fmt::format("parameter vector {} has {} entries, expected {}", k, params[k].size(), out.size()));
    }
    vec::axpy(weights[k] / total, params[k].data(), out.data());
  }
  return out;
}

ParamVector mean_params(std::span<const ParamVector> params) {
  const std::vector<double> ones(params.size(), 1.0);
  return aggregate(params, ones);
}

}  // namespace sybilfl
