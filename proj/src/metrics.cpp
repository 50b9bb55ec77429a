#include "sybilfl/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "sybilfl/autodiff.hpp"

namespace sybilfl {
namespace {

constexpr std::size_t kEvalChunk = 512;

template <class Fn>
void for_each_chunk(std::size_t n, Fn&& fn) {
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    const std::size_t stop = std::min(n, start + kEvalChunk);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    fn(std::span<const std::size_t>(idx));
  }
}

}  // namespace

std::vector<int> predict(const Model& model, const ParamVector& params, const LabeledDataset& data) {
  std::vector<int> out;
  out.reserve(data.size());
  const std::size_t c = model.num_classes();
  for_each_chunk(data.size(), [&](std::span<const std::size_t> idx) {
    const Tensor z = logits(model, params, data.images_tensor(idx));
    for (std::size_t n = 0; n < idx.size(); ++n) {
      const auto row = z.row(n);
      std::size_t best = 0;
      for (std::size_t k = 1; k < c; ++k)
        if (row[k] > row[best]) best = k;
      out.push_back(static_cast<int>(best));
    }
  });
  return out;
}

TaskAccuracy task_accuracy(std::span<const int> labels, std::span<const int> predictions, int y_tar, int y_adv) {
  if (labels.size() != predictions.size()) {
    throw std::invalid_argument(fmt::format("{} labels but {} predictions", labels.size(), predictions.size()));
  }
  std::size_t target = 0, hit = 0, other = 0, correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == y_tar) {
      ++target;
      if (predictions[i] == y_adv) ++hit;
    } else {
      ++other;
      if (predictions[i] == labels[i]) ++correct;
    }
  }
  TaskAccuracy acc;
  if (other > 0) acc.mta = static_cast<double>(correct) / static_cast<double>(other);
  if (target > 0) acc.tta = static_cast<double>(hit) / static_cast<double>(target);
  return acc;
}

TaskAccuracy evaluate(const Model& model, const ParamVector& params, const LabeledDataset& testset, int y_tar,
                      int y_adv) {
  if (testset.empty()) throw std::invalid_argument("evaluation needs a non-empty test set");
  const auto pred = predict(model, params, testset);
  return task_accuracy(testset.labels, pred, y_tar, y_adv);
}

double overall_accuracy(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.empty()) throw std::invalid_argument("accuracy of an empty set is undefined");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == predictions[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double overall_accuracy(const Model& model, const ParamVector& params, const LabeledDataset& testset) {
  return overall_accuracy(testset.labels, predict(model, params, testset));
}

double adversarial_loss(const Model& model, const ParamVector& params, const LabeledDataset& testset, int y_tar,
                        int y_adv) {
  if (testset.empty()) throw std::invalid_argument("adversarial loss of an empty set is undefined");
  double total = 0.0;
  for_each_chunk(testset.size(), [&](std::span<const std::size_t> idx) {
    auto labels = testset.labels_of(idx);
    for (auto& y : labels)
      if (y == y_tar) y = y_adv;
    total += forward_loss(model, params, testset.images_tensor(idx), labels).loss * static_cast<double>(idx.size());
  });
  return total / static_cast<double>(testset.size());
}

}  // namespace sybilfl
