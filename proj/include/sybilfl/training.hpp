#pragma once

#include <span>

#include "sybilfl/data.hpp"
#include "sybilfl/model.hpp"
#include "sybilfl/rng.hpp"
#include "sybilfl/tensor.hpp"

namespace sybilfl {

struct TrainParams {
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  double lr = 0.01;
  double momentum = 0.9;
};

// floor(|D| / B) batches per epoch, except that a dataset smaller than one
// batch trains on a single batch of everything.
std::size_t batches_per_epoch(std::size_t dataset_size, std::size_t batch_size);

struct LocalTrainResult {
  ParamVector params;
  std::size_t steps = 0;
  double mean_loss = 0.0;  // mean over steps of the mini-batch mean loss
};

/// Mini-batch SGD with heavy-ball momentum (buf = mu * buf + g; w -= lr * buf)
/// on freshly shuffled batches each epoch. The step gradient is the batch
/// mean of the summed engine gradient. `start` is left untouched.
LocalTrainResult local_train_run(const Model& model, const LabeledDataset& data, const ParamVector& start,
                                 const TrainParams& train, Rng& rng);

inline ParamVector local_train(const Model& model, const LabeledDataset& data, const ParamVector& start,
                               const TrainParams& train, Rng& rng) {
  return local_train_run(model, data, start, train, rng).params;
}

// Coordinate-wise mean weighted by weights[i] / sum(weights).
ParamVector aggregate(std::span<const ParamVector> params, std::span<const double> weights);

// Unweighted coordinate-wise mean.
ParamVector mean_params(std::span<const ParamVector> params);

}  // namespace sybilfl
