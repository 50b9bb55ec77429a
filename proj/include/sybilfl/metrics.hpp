#pragma once

#include <optional>
#include <span>
#include <vector>

#include "sybilfl/data.hpp"
#include "sybilfl/model.hpp"

namespace sybilfl {

/// Main-task accuracy over non-target samples and target-task accuracy
/// (share of y_tar samples predicted as y_adv). Absent when the test set
/// holds no samples of the respective kind.
struct TaskAccuracy {
  std::optional<double> mta;
  std::optional<double> tta;
};

struct MetricsRecord {
  std::size_t round = 0;
  std::optional<double> mta;
  std::optional<double> tta;
  std::optional<double> gma;
  double train_loss = 0.0;
  double adv_loss = 0.0;
};

// Argmax of the logits; ties go to the lowest class index.
std::vector<int> predict(const Model& model, const ParamVector& params, const LabeledDataset& data);

TaskAccuracy task_accuracy(std::span<const int> labels, std::span<const int> predictions, int y_tar, int y_adv);

TaskAccuracy evaluate(const Model& model, const ParamVector& params, const LabeledDataset& testset, int y_tar,
                      int y_adv);

double overall_accuracy(std::span<const int> labels, std::span<const int> predictions);
double overall_accuracy(const Model& model, const ParamVector& params, const LabeledDataset& testset);

// Adversarial objective as a per-sample mean: target-class samples scored
// against y_adv, all others against their true label.
double adversarial_loss(const Model& model, const ParamVector& params, const LabeledDataset& testset, int y_tar,
                        int y_adv);

}  // namespace sybilfl
