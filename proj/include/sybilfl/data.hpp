#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sybilfl/tensor.hpp"

namespace sybilfl {

/// Images with class-index labels. Pixels live in one flat row-major
/// buffer, `image_size()` doubles per sample, scaled to [0,1].
struct LabeledDataset {
  Shape image_shape;
  std::size_t num_classes = 10;
  std::vector<double> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::size_t image_size() const { return shape_size(image_shape); }

  std::span<const double> image(std::size_t i) const;
  void push_back(std::span<const double> image, int label);

  LabeledDataset subset(std::span<const std::size_t> indices) const;
  Tensor images_tensor(std::span<const std::size_t> indices) const;
  Tensor images_tensor() const;
  std::vector<int> labels_of(std::span<const std::size_t> indices) const;

  LabeledDataset empty_like() const { return {image_shape, num_classes, {}, {}}; }

  // Throws std::invalid_argument when a structural invariant does not hold.
  void validate() const;

  bool operator==(const LabeledDataset&) const = default;
};

class IdxError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, Truncated, CountMismatch, BadLabel };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Reads an unsigned-byte IDX image file (magic 0x00000803) and label file
// (magic 0x00000801). A rows x cols image file yields samples shaped (1, rows, cols).
LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        std::size_t num_classes = 10);

// Writes pixels as round(255 * p) bytes; single-channel images only.
void write_idx(const LabeledDataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

struct PartitionSpec {
  std::vector<std::vector<std::size_t>> assignments;  // per client, ascending sample indices
  double alpha = 0.0;
  std::uint64_t seed = 0;
};

/// Per-class Dirichlet(alpha) split of sample indices across `num_clients`.
/// Class counts are apportioned by largest remainder so every sample lands
/// on exactly one client.
PartitionSpec dirichlet_partition(std::span<const int> labels, std::size_t num_classes, std::size_t num_clients,
                                  double alpha, std::uint64_t seed);

// Uniform random split into near-equal shards.
PartitionSpec iid_partition(std::size_t num_samples, std::size_t num_clients, std::uint64_t seed);

// Relabels y_tar samples as y_adv; everything else passes through.
LabeledDataset flip_labels(const LabeledDataset& data, int y_tar, int y_adv);

// Samples whose label is y_adv, in original order.
LabeledDataset select_base(const LabeledDataset& data, int y_adv);

struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::size_t per_class = 200;
  Shape image_shape{1, 8, 8};
  double noise = 0.25;
  std::uint64_t seed = 0;
};

// Gaussian class prototypes plus per-sample Gaussian noise, clipped to [0,1].
// Prototypes depend only on spec.seed; `split` selects an independent draw
// of samples around the same prototypes (e.g. 0 = train, 1 = test).
LabeledDataset make_synthetic(const SyntheticSpec& spec, std::uint64_t split = 0);

std::vector<std::size_t> class_histogram(const LabeledDataset& data);

}  // namespace sybilfl
