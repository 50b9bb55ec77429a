#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sybilfl/data.hpp"
#include "sybilfl/model.hpp"
#include "sybilfl/rng.hpp"
#include "sybilfl/tensor.hpp"
#include "sybilfl/training.hpp"

namespace sybilfl {

// How the attacker obtains the model it steers the federation towards.
enum class TargetScheme { OnlineLocal, OnlineGlobal, Offline };
// How sybil training data is crafted.
enum class AttackMethod { GradientMatching, FeatureCollision, LocalMethod };

std::string_view scheme_name(TargetScheme s);
std::string_view method_name(AttackMethod m);
TargetScheme parse_scheme(std::string_view s);
AttackMethod parse_method(std::string_view s);

// Half-open round range [begin, end).
struct RoundWindow {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool contains(std::size_t round) const { return round >= begin && round < end; }
  bool empty() const { return end <= begin; }
};

struct AttackConfig {
  int y_tar = 1;
  int y_adv = 7;
  double m_pct = 40.0;
  std::size_t sybils_per_malicious = 5;
  std::size_t steps = 300;  // poison iterations T
  double poison_lr = 1.0;
  double epsilon = std::numeric_limits<double>::infinity();  // l-inf budget on the perturbation
  std::size_t poison_count = 32;
  TargetScheme scheme = TargetScheme::OnlineGlobal;
  std::size_t offline_rounds = 20;
  RoundWindow window;
  AttackMethod method = AttackMethod::GradientMatching;
  // Aligns the poison gradient with (w_tar - w_r) instead of (w_r - w_tar).
  bool reverse_direction = false;
  // Proximity weight for feature collision; NaN selects 0.25 * (feature_dim / input_dim)^2.
  double fcm_beta = std::numeric_limits<double>::quiet_NaN();
  double sybil_weight = 1.0;  // multiplier on the poison-set size used as aggregation weight

  void validate(std::size_t num_classes) const;
};

// Number of malicious clients N * m%; rejects a non-integral result.
std::size_t malicious_count(std::size_t num_clients, double m_pct);
// Total sybils N * m% * v.
std::size_t sybil_count(std::size_t num_clients, double m_pct, std::size_t v);

/// Crafted sybil data: base samples, their perturbation and the per-step
/// objective trace (T + 1 values, the last one after the final update).
struct PoisonBatch {
  LabeledDataset base;
  Tensor delta;  // (P, ...image shape)
  std::vector<double> trace;

  LabeledDataset poisoned() const;
};

class DegenerateDirection : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- target model acquisition --------------------------------------------

// Fake local training from w_r on the label-flipped copy of the client data.
ParamVector acquire_target_local(const Model& model, const ParamVector& w_r, const LabeledDataset& client,
                                 const AttackConfig& config, const TrainParams& train, Rng& rng);

struct TargetSource {
  const LabeledDataset* data = nullptr;
  StreamKey key;  // stream for this client's fake training
};

// Unweighted mean of every source's local target model.
ParamVector acquire_target_global(const Model& model, const ParamVector& w_r, std::span<const TargetSource> sources,
                                  const AttackConfig& config, const TrainParams& train);

// `rounds` rounds of {fake local training per source; unweighted mean},
// starting from a fresh initialisation drawn with `seed`. The round field of
// each source key is replaced by the pre-training round index.
ParamVector acquire_target_offline(const Model& model, std::span<const TargetSource> sources, std::size_t rounds,
                                   const AttackConfig& config, const TrainParams& train, std::uint64_t seed);

// ---- gradient matching ----------------------------------------------------

struct CosineMatch {
  double loss = 0.0;       // 1 - cos(direction, g)
  std::vector<double> grad;  // d loss / d g
};

// Throws DegenerateDirection when either vector has zero norm.
CosineMatch cosine_matching(std::span<const double> direction, std::span<const double> poison_grad);

// Attack direction w_r - w_tar (or its negation when reverse_direction is set).
ParamVector attack_direction(const ParamVector& w_r, const ParamVector& w_tar, bool reverse);

/// 1 - cos(w_r - w_tar, sum_i grad_w loss(f_{w_r}(x_i + delta_i), y_i)), in [0, 2].
double matching_loss(const Tensor& delta, const ParamVector& w_r, const ParamVector& w_tar, const Model& model,
                     const Tensor& images, std::span<const int> labels, bool reverse = false);

// Gradient of matching_loss with respect to delta.
Tensor matching_loss_grad(const Tensor& delta, const ParamVector& w_r, const ParamVector& w_tar, const Model& model,
                          const Tensor& images, std::span<const int> labels, bool reverse = false);

// Picks min(poison_count, |base|) samples (random subset, original order kept).
LabeledDataset choose_poison_base(const LabeledDataset& base, std::size_t poison_count, Rng& rng);

/// Perturbation descent on matching_loss from delta = 0: T steps of
/// delta -= poison_lr * grad, each followed by the optional epsilon
/// projection and clipping of x + delta to [0,1]. Returns nullopt when the
/// client has no base samples.
std::optional<PoisonBatch> generate_poison(const LabeledDataset& base, const ParamVector& w_r,
                                           const ParamVector& w_tar, const Model& model, const AttackConfig& config,
                                           Rng& rng);

// ---- comparison baselines -------------------------------------------------

double fcm_default_beta(const Model& model);

/// Feature collision: minimise ||phi(x') - phi(t)||^2 + beta ||x' - x_base||^2
/// with forward-backward splitting (gradient step on the feature term,
/// closed-form proximal step on the anchor term). Trace holds the mean
/// feature distance to the target per step.
std::optional<PoisonBatch> fcm_poison(const LabeledDataset& base, std::span<const double> target_image,
                                      const ParamVector& w_r, const Model& model, const AttackConfig& config,
                                      Rng& rng);

// Local-method target: fake training from w_r on the client's target-class
// samples only, relabelled to y_adv. nullopt when the client has none.
std::optional<ParamVector> lm_target(const Model& model, const ParamVector& w_r, const LabeledDataset& client,
                                     const AttackConfig& config, const TrainParams& train, Rng& rng);

std::optional<PoisonBatch> lm_poison(const LabeledDataset& base, const ParamVector& w_r,
                                     const LabeledDataset& client, const Model& model, const AttackConfig& config,
                                     const TrainParams& train, Rng& target_rng, Rng& select_rng);

// ---- persistence ----------------------------------------------------------

// Binary container: "SPB1", u32 rank, u32 dims[rank] (dims[0] = count),
// f64 LE pixels of x + delta, i32 LE labels.
void write_poison_container(const std::filesystem::path& path, const LabeledDataset& images);
LabeledDataset read_poison_container(const std::filesystem::path& path, std::size_t num_classes = 10);

}  // namespace sybilfl
