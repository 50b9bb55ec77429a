#include "sybilfl/federation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

namespace sybilfl {

Roster build_roster(std::vector<LabeledDataset> client_data, std::size_t num_malicious, std::size_t sybils_each) {
  const std::size_t n = client_data.size();
  if (num_malicious > n) {
    throw std::invalid_argument(fmt::format("{} malicious clients requested among {}", num_malicious, n));
  }
  Roster roster;
  roster.reserve(n + num_malicious * sybils_each);
  for (std::size_t i = 0; i < n; ++i) {
    roster.push_back({i, i < num_malicious ? Role::Malicious : Role::Benign, std::move(client_data[i]), std::nullopt});
  }
  const LabeledDataset empty = roster.empty() ? LabeledDataset{} : roster.front().dataset.empty_like();
  for (std::size_t m = 0; m < num_malicious; ++m) {
    for (std::size_t s = 0; s < sybils_each; ++s) roster.push_back({n + m * sybils_each + s, Role::Sybil, empty, m});
  }
  return roster;
}

void validate_roster(const Roster& roster) {
  if (roster.empty()) throw std::invalid_argument("roster is empty");
  for (std::size_t i = 0; i < roster.size(); ++i) {
    const auto& rec = roster[i];
    if (rec.id != i) throw std::invalid_argument(fmt::format("roster slot {} holds client id {}", i, rec.id));
    if (rec.role == Role::Sybil) {
      if (!rec.owner || *rec.owner >= roster.size() || roster[*rec.owner].role != Role::Malicious) {
        throw std::invalid_argument(fmt::format("sybil {} does not reference a malicious owner", rec.id));
      }
    } else if (rec.owner) {
      throw std::invalid_argument(fmt::format("non-sybil client {} has an owner", rec.id));
    }
  }
}

std::vector<std::size_t> select_clients(std::size_t round, const Roster& roster, const SelectionPolicy& policy,
                                        std::uint64_t seed) {
  if (roster.empty()) throw std::invalid_argument("cannot select from an empty roster");
  if (!(policy.fraction > 0.0 && policy.fraction <= 1.0)) {
    throw std::invalid_argument(fmt::format("participation fraction {} outside (0, 1]", policy.fraction));
  }
  std::vector<std::size_t> ids(roster.size());
  std::iota(ids.begin(), ids.end(), 0);
  if (policy.fraction == 1.0) return ids;
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(policy.fraction * static_cast<double>(roster.size()) - 1e-9)));
  Rng rng = make_rng(seed, Stream::ClientSelect, 0, round);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

Federation::Federation(Model model, FederationConfig config, std::optional<AttackConfig> attack,
                       LabeledDataset testset)
    : model_(std::move(model)), config_(config), attack_(std::move(attack)), testset_(std::move(testset)) {
  if (attack_) attack_->validate(model_.num_classes());
  if (testset_.empty()) throw std::invalid_argument("federation needs a non-empty test set");
}

FederationState Federation::initial_state(Roster roster, ParamVector w0) {
  validate_roster(roster);
  if (w0.size() != model_.param_count()) {
    throw std::invalid_argument(
        fmt::format("initial model has {} parameters, expected {}", w0.size(), model_.param_count()));
  }
  FederationState state{0, std::move(w0), std::make_shared<const Roster>(std::move(roster)), {}};

  const bool has_sybils = std::any_of(state.roster->begin(), state.roster->end(),
                                      [](const ClientRecord& c) { return c.role == Role::Sybil; });
  if (attack_ && has_sybils && attack_->scheme == TargetScheme::Offline &&
      attack_->method == AttackMethod::GradientMatching) {
    std::vector<TargetSource> sources;
    for (const auto& c : *state.roster) {
      if (c.role == Role::Malicious && !c.dataset.empty()) {
        sources.push_back({&c.dataset, StreamKey{config_.seed, Stream::OfflineTarget, c.id, 0}});
      }
    }
    if (!sources.empty()) {
      const std::uint64_t attacker_seed = make_rng(config_.seed, Stream::OfflineTarget, ~std::uint64_t{0})();
      offline_target_ = acquire_target_offline(model_, sources, attack_->offline_rounds, *attack_, config_.train,
                                               attacker_seed);
    }
  }
  return state;
}

std::optional<std::vector<std::pair<std::size_t, PoisonBatch>>> Federation::craft_poison(
    const FederationState& state, std::span<const std::size_t> owners) const {
  const AttackConfig& cfg = *attack_;
  const Roster& roster = *state.roster;
  const std::size_t r = state.round;
  const ParamVector& w_r = state.global;

  std::optional<ParamVector> shared_target;
  if (cfg.method == AttackMethod::GradientMatching) {
    if (cfg.scheme == TargetScheme::OnlineGlobal) {
      std::vector<TargetSource> sources;
      for (const auto& c : roster) {
        if (c.role == Role::Malicious && !c.dataset.empty()) {
          sources.push_back({&c.dataset, StreamKey{config_.seed, Stream::TargetModel, c.id, r}});
        }
      }
      if (sources.empty()) return std::nullopt;
      shared_target = acquire_target_global(model_, w_r, sources, cfg, config_.train);
    } else if (cfg.scheme == TargetScheme::Offline) {
      if (!offline_target_) return std::nullopt;
      shared_target = offline_target_;
    }
  }

  std::vector<std::pair<std::size_t, PoisonBatch>> out;
  for (std::size_t owner : owners) {
    const LabeledDataset& data = roster[owner].dataset;
    if (data.empty()) continue;
    const LabeledDataset base = select_base(data, cfg.y_adv);
    Rng select_rng = make_rng(config_.seed, Stream::PoisonSelect, owner, r);
    Rng target_rng = make_rng(config_.seed, Stream::TargetModel, owner, r);
    std::optional<PoisonBatch> batch;
    switch (cfg.method) {
      case AttackMethod::GradientMatching: {
        if (base.empty()) break;
        const ParamVector target = shared_target ? *shared_target
                                                 : acquire_target_local(model_, w_r, data, cfg, config_.train,
                                                                        target_rng);
        batch = generate_poison(base, w_r, target, model_, cfg, select_rng);
        break;
      }
      case AttackMethod::LocalMethod:
        batch = lm_poison(base, w_r, data, model_, cfg, config_.train, target_rng, select_rng);
        break;
      case AttackMethod::FeatureCollision: {
        const auto it = std::find(data.labels.begin(), data.labels.end(), cfg.y_tar);
        if (it == data.labels.end()) break;
        const auto t = static_cast<std::size_t>(it - data.labels.begin());
        batch = fcm_poison(base, data.image(t), w_r, model_, cfg, select_rng);
        break;
      }
    }
    if (batch) out.emplace_back(owner, std::move(*batch));
  }
  return out;
}

FederationState Federation::run_round(FederationState state, RoundReport* report) const {
  const Roster& roster = *state.roster;
  const std::size_t r = state.round;
  const auto selected = select_clients(r, roster, config_.selection, config_.seed);

  const bool active = attack_ && attack_->window.contains(r);
  std::map<std::size_t, LabeledDataset> poison_sets;
  if (active) {
    std::vector<std::size_t> owners;
    for (auto id : selected)
      if (roster[id].role == Role::Sybil) owners.push_back(*roster[id].owner);
    std::sort(owners.begin(), owners.end());
    owners.erase(std::unique(owners.begin(), owners.end()), owners.end());
    if (!owners.empty()) {
      auto crafted = craft_poison(state, owners);
      if (crafted) {
        for (auto& [owner, batch] : *crafted) {
          poison_sets.emplace(owner, batch.poisoned());
          if (report != nullptr) report->poisons.emplace_back(owner, std::move(batch));
        }
      }
    }
  }
  if (report != nullptr) {
    report->attack_active = active;
    report->participants.clear();
  }

  std::vector<ParamVector> uploads;
  std::vector<double> weights;
  double loss_acc = 0.0;
  for (auto id : selected) {
    const ClientRecord& client = roster[id];
    const LabeledDataset* data = &client.dataset;
    double weight = static_cast<double>(client.dataset.size());
    if (client.role == Role::Sybil) {
      const auto it = poison_sets.find(*client.owner);
      if (it == poison_sets.end()) continue;
      data = &it->second;
      weight = static_cast<double>(data->size()) * attack_->sybil_weight;
    }
    if (data->empty()) continue;
    Rng rng = make_rng(config_.seed, Stream::LocalTrain, id, r);
    auto result = local_train_run(model_, *data, state.global, config_.train, rng);
    uploads.push_back(std::move(result.params));
    weights.push_back(weight);
    loss_acc += weight * result.mean_loss;
    if (report != nullptr) report->participants.push_back(id);
  }

  MetricsRecord rec;
  rec.round = r;
  if (!uploads.empty()) {
    state.global = aggregate(uploads, weights);
    rec.train_loss = loss_acc / std::accumulate(weights.begin(), weights.end(), 0.0);
  }
  const auto pred = predict(model_, state.global, testset_);
  const auto acc = task_accuracy(testset_.labels, pred, config_.eval_y_tar, config_.eval_y_adv);
  rec.mta = acc.mta;
  rec.tta = acc.tta;
  if (!attack_) rec.gma = overall_accuracy(testset_.labels, pred);
  rec.adv_loss = adversarial_loss(model_, state.global, testset_, config_.eval_y_tar, config_.eval_y_adv);
  state.history.push_back(rec);
  state.round += 1;
  return state;
}

}  // namespace sybilfl
