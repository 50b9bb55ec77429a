#include "sybilfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "sybilfl/rng.hpp"

namespace sybilfl {

std::span<const double> LabeledDataset::image(std::size_t i) const {
  const std::size_t n = image_size();
  return std::span<const double>(pixels).subspan(i * n, n);
}

void LabeledDataset::push_back(std::span<const double> img, int label) {
  if (img.size() != image_size()) {
    throw std::invalid_argument(fmt::format("image has {} pixels, dataset expects {}", img.size(), image_size()));
  }
  pixels.insert(pixels.end(), img.begin(), img.end());
  labels.push_back(label);
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out = empty_like();
  out.pixels.reserve(indices.size() * image_size());
  out.labels.reserve(indices.size());
  for (auto i : indices) out.push_back(image(i), labels.at(i));
  return out;
}

Tensor LabeledDataset::images_tensor(std::span<const std::size_t> indices) const {
  Shape shape{indices.size()};
  shape.insert(shape.end(), image_shape.begin(), image_shape.end());
  std::vector<double> buf;
  buf.reserve(indices.size() * image_size());
  for (auto i : indices) {
    auto img = image(i);
    buf.insert(buf.end(), img.begin(), img.end());
  }
  return Tensor(std::move(shape), std::move(buf));
}

Tensor LabeledDataset::images_tensor() const {
  Shape shape{size()};
  shape.insert(shape.end(), image_shape.begin(), image_shape.end());
  return Tensor(std::move(shape), pixels);
}

std::vector<int> LabeledDataset::labels_of(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

void LabeledDataset::validate() const {
  if (pixels.size() != labels.size() * image_size()) {
    throw std::invalid_argument(
        fmt::format("dataset holds {} pixels for {} labels of size {}", pixels.size(), labels.size(), image_size()));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw std::invalid_argument(fmt::format("label {} outside [0, {})", y, num_classes));
    }
  }
}

namespace {

// Splits `total` into integer counts proportional to `weights` (largest
// remainder, ties to the lowest index); counts always sum to `total`.
std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  const std::size_t n = weights.size();
  std::vector<std::size_t> counts(n, 0);
  std::vector<double> frac(n, 0.0);
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double share = wsum > 0.0 ? static_cast<double>(total) * weights[k] / wsum
                                    : static_cast<double>(total) / static_cast<double>(n);
    counts[k] = static_cast<std::size_t>(std::floor(share));
    frac[k] = share - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < total; i = (i + 1) % n, ++assigned) counts[order[i]] += 1;
  // Floating error can overshoot by one when shares are huge; trim from the back.
  for (std::size_t i = n; assigned > total && i-- > 0;) {
    if (counts[order[i]] > 0) {
      counts[order[i]] -= 1;
      --assigned;
    }
  }
  return counts;
}

}  // namespace

PartitionSpec dirichlet_partition(std::span<const int> labels, std::size_t num_classes, std::size_t num_clients,
                                  double alpha, std::uint64_t seed) {
  if (num_clients == 0) throw std::invalid_argument("dirichlet_partition needs at least one client");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument(fmt::format("dirichlet concentration must be positive, got {}", alpha));
  }
  PartitionSpec spec{std::vector<std::vector<std::size_t>>(num_clients), alpha, seed};
  Rng rng = make_rng(seed, Stream::Partition);
  std::gamma_distribution<double> gamma(alpha, 1.0);

  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw std::invalid_argument(fmt::format("label {} outside [0, {})", y, num_classes));
    }
    by_class[static_cast<std::size_t>(y)].push_back(i);
  }

  std::vector<double> p(num_clients);
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (auto& v : p) v = gamma(rng);
    const auto counts = apportion(members.size(), p);
    std::size_t cursor = 0;
    for (std::size_t k = 0; k < num_clients; ++k) {
      auto& dst = spec.assignments[k];
      dst.insert(dst.end(), members.begin() + static_cast<std::ptrdiff_t>(cursor),
                 members.begin() + static_cast<std::ptrdiff_t>(cursor + counts[k]));
      cursor += counts[k];
    }
  }
  for (auto& a : spec.assignments) std::sort(a.begin(), a.end());
  return spec;
}

PartitionSpec iid_partition(std::size_t num_samples, std::size_t num_clients, std::uint64_t seed) {
  if (num_clients == 0) throw std::invalid_argument("iid_partition needs at least one client");
  PartitionSpec spec{std::vector<std::vector<std::size_t>>(num_clients), std::numeric_limits<double>::infinity(),
                     seed};
  std::vector<std::size_t> order(num_samples);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, Stream::Partition);
  std::shuffle(order.begin(), order.end(), rng);
  const std::vector<double> even(num_clients, 1.0);
  const auto counts = apportion(num_samples, even);
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < num_clients; ++k) {
    auto& dst = spec.assignments[k];
    dst.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
               order.begin() + static_cast<std::ptrdiff_t>(cursor + counts[k]));
    std::sort(dst.begin(), dst.end());
    cursor += counts[k];
  }
  return spec;
}

LabeledDataset flip_labels(const LabeledDataset& data, int y_tar, int y_adv) {
  if (y_tar == y_adv) throw std::invalid_argument(fmt::format("target and adversarial class are both {}", y_tar));
  const auto nc = static_cast<int>(data.num_classes);
  if (y_tar < 0 || y_tar >= nc || y_adv < 0 || y_adv >= nc) {
    throw std::invalid_argument(fmt::format("classes {} and {} must lie in [0, {})", y_tar, y_adv, nc));
  }
  LabeledDataset out = data;
  for (auto& y : out.labels)
    if (y == y_tar) y = y_adv;
  return out;
}

LabeledDataset select_base(const LabeledDataset& data, int y_adv) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.labels[i] == y_adv) keep.push_back(i);
  return data.subset(keep);
}

LabeledDataset make_synthetic(const SyntheticSpec& spec, std::uint64_t split) {
  LabeledDataset out{spec.image_shape, spec.num_classes, {}, {}};
  const std::size_t n = out.image_size();
  Rng proto_rng = make_rng(spec.seed, Stream::Synthetic, 0, 0);
  std::normal_distribution<double> proto_dist(0.5, 0.35);
  std::vector<std::vector<double>> prototypes(spec.num_classes, std::vector<double>(n));
  for (auto& proto : prototypes)
    for (auto& v : proto) v = std::clamp(proto_dist(proto_rng), 0.0, 1.0);

  Rng sample_rng = make_rng(spec.seed, Stream::Synthetic, 1, split);
  std::normal_distribution<double> noise(0.0, 1.0);
  out.pixels.reserve(spec.num_classes * spec.per_class * n);
  std::vector<double> img(n);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t s = 0; s < spec.per_class; ++s) {
      for (std::size_t i = 0; i < n; ++i) {
        const double jitter = spec.noise > 0.0 ? spec.noise * noise(sample_rng) : 0.0;
        img[i] = std::clamp(prototypes[c][i] + jitter, 0.0, 1.0);
      }
      out.push_back(img, static_cast<int>(c));
    }
  }
  return out;
}

std::vector<std::size_t> class_histogram(const LabeledDataset& data) {
  std::vector<std::size_t> hist(data.num_classes, 0);
  for (int y : data.labels) hist.at(static_cast<std::size_t>(y)) += 1;
  return hist;
}

}  // namespace sybilfl
