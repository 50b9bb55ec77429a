#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "sybilfl/attack.hpp"
#include "sybilfl/data.hpp"
#include "sybilfl/metrics.hpp"
#include "sybilfl/model.hpp"
#include "sybilfl/training.hpp"

namespace sybilfl {

enum class Role { Benign, Malicious, Sybil };

struct ClientRecord {
  std::size_t id = 0;
  Role role = Role::Benign;
  LabeledDataset dataset;            // empty for sybils; they receive poison per round
  std::optional<std::size_t> owner;  // malicious client id, sybils only
};

using Roster = std::vector<ClientRecord>;

/// Real clients take ids [0, N) with the first M malicious; each malicious
/// client i owns sybils N + i*v ... N + i*v + v - 1.
Roster build_roster(std::vector<LabeledDataset> client_data, std::size_t num_malicious, std::size_t sybils_each);

// Throws std::invalid_argument when a roster invariant does not hold.
void validate_roster(const Roster& roster);

struct SelectionPolicy {
  double fraction = 1.0;  // 1 = every client every round
};

// Ascending client ids chosen for `round`; uniform without replacement when fraction < 1.
std::vector<std::size_t> select_clients(std::size_t round, const Roster& roster, const SelectionPolicy& policy,
                                        std::uint64_t seed);

struct FederationConfig {
  TrainParams train;
  SelectionPolicy selection;
  std::uint64_t seed = 0;
  int eval_y_tar = 1;
  int eval_y_adv = 7;
};

struct FederationState {
  std::size_t round = 0;
  ParamVector global;
  std::shared_ptr<const Roster> roster;
  std::vector<MetricsRecord> history;
};

// Per-round side output for inspection (poison previews, diagnostics).
struct RoundReport {
  bool attack_active = false;
  std::vector<std::size_t> participants;
  std::vector<std::pair<std::size_t, PoisonBatch>> poisons;  // (malicious id, batch)
};

/// FedAvg over a roster of benign, malicious and sybil clients.
///
/// Every local training draws from a stream keyed by (seed, client id,
/// round), so the result does not depend on the order in which clients run
/// and the attack path never touches benign streams. Malicious clients
/// upload ordinary local training on their clean data; inside the attack
/// window their sybils upload models trained on crafted poison.
class Federation {
 public:
  Federation(Model model, FederationConfig config, std::optional<AttackConfig> attack, LabeledDataset testset);

  const Model& model() const { return model_; }
  const FederationConfig& config() const { return config_; }
  const std::optional<AttackConfig>& attack() const { return attack_; }

  FederationState initial_state(Roster roster, ParamVector w0);

  FederationState run_round(FederationState state, RoundReport* report = nullptr) const;

  // Offline-scheme target, computed once from the roster's malicious clients.
  const std::optional<ParamVector>& offline_target() const { return offline_target_; }

 private:
  std::optional<std::vector<std::pair<std::size_t, PoisonBatch>>> craft_poison(const FederationState& state,
                                                                              std::span<const std::size_t> owners) const;

  Model model_;
  FederationConfig config_;
  std::optional<AttackConfig> attack_;
  LabeledDataset testset_;
  std::optional<ParamVector> offline_target_;
};

}  // namespace sybilfl
