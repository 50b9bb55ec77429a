#include "sybilfl/attack.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "sybilfl/autodiff.hpp"

namespace sybilfl {

std::string_view scheme_name(TargetScheme s) {
  switch (s) {
    case TargetScheme::OnlineLocal: return "online-local";
    case TargetScheme::OnlineGlobal: return "online-global";
    case TargetScheme::Offline: return "offline";
  }
  return "?";
}

std::string_view method_name(AttackMethod m) {
  switch (m) {
    case AttackMethod::GradientMatching: return "ours";
    case AttackMethod::FeatureCollision: return "fcm";
    case AttackMethod::LocalMethod: return "lm";
  }
  return "?";
}

TargetScheme parse_scheme(std::string_view s) {
  for (auto v : {TargetScheme::OnlineLocal, TargetScheme::OnlineGlobal, TargetScheme::Offline})
    if (scheme_name(v) == s) return v;
  throw std::invalid_argument(fmt::format("unknown target scheme '{}' (online-local, online-global, offline)", s));
}

AttackMethod parse_method(std::string_view s) {
  for (auto v : {AttackMethod::GradientMatching, AttackMethod::FeatureCollision, AttackMethod::LocalMethod})
    if (method_name(v) == s) return v;
  throw std::invalid_argument(fmt::format("unknown attack method '{}' (ours, fcm, lm)", s));
}

void AttackConfig::validate(std::size_t num_classes) const {
  const auto nc = static_cast<int>(num_classes);
  if (y_tar < 0 || y_tar >= nc || y_adv < 0 || y_adv >= nc) {
    throw std::invalid_argument(fmt::format("y_tar {} and y_adv {} must lie in [0, {})", y_tar, y_adv, nc));
  }
  if (y_tar == y_adv) throw std::invalid_argument(fmt::format("y_tar and y_adv are both {}", y_tar));
  if (!(m_pct >= 0.0 && m_pct <= 100.0)) throw std::invalid_argument(fmt::format("m_pct {} outside [0,100]", m_pct));
  if (!(poison_lr > 0.0)) throw std::invalid_argument(fmt::format("poison_lr must be positive, got {}", poison_lr));
  if (!(epsilon > 0.0)) throw std::invalid_argument(fmt::format("epsilon must be positive, got {}", epsilon));
  if (poison_count == 0) throw std::invalid_argument("poison_count must be at least 1");
  if (!(sybil_weight > 0.0)) throw std::invalid_argument("sybil_weight must be positive");
}

std::size_t malicious_count(std::size_t num_clients, double m_pct) {
  if (!(m_pct >= 0.0 && m_pct <= 100.0)) throw std::invalid_argument(fmt::format("m_pct {} outside [0,100]", m_pct));
  const double m = static_cast<double>(num_clients) * m_pct / 100.0;
  const double rounded = std::round(m);
  if (std::abs(m - rounded) > 1e-9) {
    throw std::invalid_argument(fmt::format(
        "{}% of {} clients is {} malicious clients, not a whole number; choose m_pct so N*m%/100 is integral", m_pct,
        num_clients, m));
  }
  return static_cast<std::size_t>(rounded);
}

std::size_t sybil_count(std::size_t num_clients, double m_pct, std::size_t v) {
  return malicious_count(num_clients, m_pct) * v;
}

LabeledDataset PoisonBatch::poisoned() const {
  LabeledDataset out = base;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] += delta[i];
  return out;
}

// ---- target acquisition ----------------------------------------------------

ParamVector acquire_target_local(const Model& model, const ParamVector& w_r, const LabeledDataset& client,
                                 const AttackConfig& config, const TrainParams& train, Rng& rng) {
  if (client.empty()) throw std::invalid_argument("target acquisition needs a client with local data");
  return local_train(model, flip_labels(client, config.y_tar, config.y_adv), w_r, train, rng);
}

ParamVector acquire_target_global(const Model& model, const ParamVector& w_r, std::span<const TargetSource> sources,
                                  const AttackConfig& config, const TrainParams& train) {
  if (sources.empty()) throw std::invalid_argument("global target acquisition needs at least one malicious client");
  std::vector<ParamVector> locals;
  locals.reserve(sources.size());
  for (const auto& src : sources) {
    Rng rng = make_rng(src.key);
    locals.push_back(acquire_target_local(model, w_r, *src.data, config, train, rng));
  }
  return mean_params(locals);
}

ParamVector acquire_target_offline(const Model& model, std::span<const TargetSource> sources, std::size_t rounds,
                                   const AttackConfig& config, const TrainParams& train, std::uint64_t seed) {
  if (sources.empty()) throw std::invalid_argument("offline target acquisition needs at least one malicious client");
  ParamVector w = init_params(model, seed);
  std::vector<ParamVector> locals(sources.size());
  for (std::size_t r = 0; r < rounds; ++r) {
    for (std::size_t i = 0; i < sources.size(); ++i) {
      StreamKey key = sources[i].key;
      key.round = r;
      Rng rng = make_rng(key);
      locals[i] = acquire_target_local(model, w, *sources[i].data, config, train, rng);
    }
    w = mean_params(locals);
  }
  return w;
}

// ---- gradient matching -------------------------------------------------------

CosineMatch cosine_matching(std::span<const double> direction, std::span<const double> poison_grad) {
  if (direction.size() != poison_grad.size()) {
    throw std::invalid_argument(
        fmt::format("direction has {} entries, poison gradient {}", direction.size(), poison_grad.size()));
  }
  const double nd = vec::norm(direction);
  const double ng = vec::norm(poison_grad);
  if (!(nd > 0.0)) {
    throw DegenerateDirection("attack direction has zero norm (global model already equals the target model)");
  }
  if (!(ng > 0.0)) {
    throw DegenerateDirection("poison gradient has zero norm (model saturated on the poison batch)");
  }
  const double cos = vec::dot(direction, poison_grad) / (nd * ng);
  CosineMatch out;
  out.loss = std::clamp(1.0 - cos, 0.0, 2.0);
  out.grad.resize(direction.size());
  const double a = 1.0 / (nd * ng);
  const double b = cos / (ng * ng);
  for (std::size_t i = 0; i < direction.size(); ++i) out.grad[i] = -(direction[i] * a - poison_grad[i] * b);
  return out;
}

ParamVector attack_direction(const ParamVector& w_r, const ParamVector& w_tar, bool reverse) {
  if (!w_r.same_layout(w_tar)) throw std::invalid_argument("global and target models have different layouts");
  ParamVector d = w_r;
  vec::axpy(-1.0, w_tar.data(), d.data());
  if (reverse) vec::scale(-1.0, d.data());
  return d;
}

namespace {

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

struct MatchStep {
  CosineMatch match;
  Tensor grad_delta;
};

MatchStep match_step(const Tensor& delta, const ParamVector& w_r, const ParamVector& direction, const Model& model,
                     const Tensor& images, std::span<const int> labels, bool with_grad) {
  const ParamVector g = grad_params(model, w_r, add(images, delta), labels);
  MatchStep step{cosine_matching(direction.data(), g.data()), {}};
  if (with_grad) {
    const ParamVector u(w_r.layout_ptr(), step.match.grad);
    step.grad_delta = mixed_grad_delta(model, w_r, images, labels, delta, u);
  }
  return step;
}

// Optional l-inf projection of delta, then clipping of x + delta to [0,1].
void project(Tensor& delta, const Tensor& images, double epsilon) {
  const bool bounded = std::isfinite(epsilon);
  for (std::size_t i = 0; i < delta.size(); ++i) {
    double d = delta[i];
    if (bounded) d = std::clamp(d, -epsilon, epsilon);
    delta[i] = std::clamp(images[i] + d, 0.0, 1.0) - images[i];
  }
}

}  // namespace

double matching_loss(const Tensor& delta, const ParamVector& w_r, const ParamVector& w_tar, const Model& model,
                     const Tensor& images, std::span<const int> labels, bool reverse) {
  const ParamVector dir = attack_direction(w_r, w_tar, reverse);
  return match_step(delta, w_r, dir, model, images, labels, false).match.loss;
}

Tensor matching_loss_grad(const Tensor& delta, const ParamVector& w_r, const ParamVector& w_tar, const Model& model,
                          const Tensor& images, std::span<const int> labels, bool reverse) {
  const ParamVector dir = attack_direction(w_r, w_tar, reverse);
  return match_step(delta, w_r, dir, model, images, labels, true).grad_delta;
}

LabeledDataset choose_poison_base(const LabeledDataset& base, std::size_t poison_count, Rng& rng) {
  if (base.size() <= poison_count) return base;
  std::vector<std::size_t> idx(base.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(poison_count);
  std::sort(idx.begin(), idx.end());
  return base.subset(idx);
}

std::optional<PoisonBatch> generate_poison(const LabeledDataset& base, const ParamVector& w_r,
                                           const ParamVector& w_tar, const Model& model, const AttackConfig& config,
                                           Rng& rng) {
  if (base.empty()) return std::nullopt;
  PoisonBatch out;
  out.base = choose_poison_base(base, config.poison_count, rng);
  const Tensor images = out.base.images_tensor();
  const std::span<const int> labels = out.base.labels;
  const ParamVector dir = attack_direction(w_r, w_tar, config.reverse_direction);

  out.delta = Tensor::zeros(images.shape());
  out.trace.reserve(config.steps + 1);
  for (std::size_t t = 0;; ++t) {
    const bool last = t == config.steps;
    MatchStep step = match_step(out.delta, w_r, dir, model, images, labels, !last);
    out.trace.push_back(step.match.loss);
    if (last) break;
    vec::axpy(-config.poison_lr, step.grad_delta.data(), out.delta.data());
    project(out.delta, images, config.epsilon);
  }
  return out;
}

// ---- baselines --------------------------------------------------------------

double fcm_default_beta(const Model& model) {
  const double ratio =
      static_cast<double>(model.feature_dim()) / static_cast<double>(shape_size(model.input_shape()));
  return 0.25 * ratio * ratio;
}

std::optional<PoisonBatch> fcm_poison(const LabeledDataset& base, std::span<const double> target_image,
                                      const ParamVector& w_r, const Model& model, const AttackConfig& config,
                                      Rng& rng) {
  if (base.empty()) return std::nullopt;
  if (target_image.size() != base.image_size()) {
    throw std::invalid_argument(
        fmt::format("target image has {} pixels, base images {}", target_image.size(), base.image_size()));
  }
  PoisonBatch out;
  out.base = choose_poison_base(base, config.poison_count, rng);
  const Tensor anchor = out.base.images_tensor();
  const std::size_t count = out.base.size();

  Shape tshape{1};
  tshape.insert(tshape.end(), base.image_shape.begin(), base.image_shape.end());
  const Tensor target_feat =
      features(model, w_r, Tensor(tshape, std::vector<double>(target_image.begin(), target_image.end())));
  const double beta = std::isnan(config.fcm_beta) ? fcm_default_beta(model) : config.fcm_beta;
  const double lr = config.poison_lr;
  const std::size_t fdim = model.feature_dim();

  out.delta = Tensor::zeros(anchor.shape());
  Tensor x = anchor;
  for (std::size_t t = 0;; ++t) {
    const Tensor phi = features(model, w_r, x);
    Tensor cot({count, fdim});
    double dist = 0.0;
    for (std::size_t n = 0; n < count; ++n) {
      double sq = 0.0;
      for (std::size_t j = 0; j < fdim; ++j) {
        const double diff = phi[n * fdim + j] - target_feat[j];
        cot[n * fdim + j] = 2.0 * diff;
        sq += diff * diff;
      }
      dist += std::sqrt(sq);
    }
    out.trace.push_back(dist / static_cast<double>(count));
    if (t == config.steps) break;

    const Tensor gx = features_vjp(model, w_r, x, cot);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double forward = x[i] - lr * gx[i];
      const double prox = std::isinf(beta) ? anchor[i] : (forward + lr * beta * anchor[i]) / (1.0 + lr * beta);
      out.delta[i] = prox - anchor[i];
    }
    project(out.delta, anchor, config.epsilon);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = anchor[i] + out.delta[i];
  }
  return out;
}

std::optional<ParamVector> lm_target(const Model& model, const ParamVector& w_r, const LabeledDataset& client,
                                     const AttackConfig& config, const TrainParams& train, Rng& rng) {
  LabeledDataset targets = select_base(client, config.y_tar);
  if (targets.empty()) return std::nullopt;
  return local_train(model, flip_labels(targets, config.y_tar, config.y_adv), w_r, train, rng);
}

std::optional<PoisonBatch> lm_poison(const LabeledDataset& base, const ParamVector& w_r,
                                     const LabeledDataset& client, const Model& model, const AttackConfig& config,
                                     const TrainParams& train, Rng& target_rng, Rng& select_rng) {
  if (base.empty()) return std::nullopt;
  const auto target = lm_target(model, w_r, client, config, train, target_rng);
  if (!target) return std::nullopt;
  return generate_poison(base, w_r, *target, model, config, select_rng);
}

// ---- container ----------------------------------------------------------------

namespace {

constexpr std::array<char, 4> kPoisonMagic{'S', 'P', 'B', '1'};

template <class T>
void put_le(std::ofstream& out, T v) {
  std::array<unsigned char, sizeof(T)> raw{};
  std::memcpy(raw.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  out.write(reinterpret_cast<const char*>(raw.data()), raw.size());
}

template <class T>
T get_le(std::ifstream& in, const std::filesystem::path& path) {
  std::array<unsigned char, sizeof(T)> raw{};
  if (!in.read(reinterpret_cast<char*>(raw.data()), raw.size())) {
    throw std::runtime_error(fmt::format("'{}' is truncated", path.string()));
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  T v;
  std::memcpy(&v, raw.data(), sizeof(T));
  return v;
}

}  // namespace

void write_poison_container(const std::filesystem::path& path, const LabeledDataset& images) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out.write(kPoisonMagic.data(), kPoisonMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(images.image_shape.size() + 1));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(images.size()));
  for (auto d : images.image_shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (double p : images.pixels) put_le<double>(out, p);
  for (int y : images.labels) put_le<std::int32_t>(out, y);
  if (!out) throw std::runtime_error(fmt::format("failed writing '{}'", path.string()));
}

LabeledDataset read_poison_container(const std::filesystem::path& path, std::size_t num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kPoisonMagic) throw std::runtime_error(fmt::format("'{}' is not a poison container", path.string()));
  const auto rank = get_le<std::uint32_t>(in, path);
  if (rank == 0) throw std::runtime_error(fmt::format("'{}' has rank 0", path.string()));
  const auto count = get_le<std::uint32_t>(in, path);
  LabeledDataset out;
  out.num_classes = num_classes;
  for (std::uint32_t d = 1; d < rank; ++d) out.image_shape.push_back(get_le<std::uint32_t>(in, path));
  out.pixels.resize(static_cast<std::size_t>(count) * out.image_size());
  for (auto& p : out.pixels) p = get_le<double>(in, path);
  out.labels.resize(count);
  for (auto& y : out.labels) y = get_le<std::int32_t>(in, path);
  out.validate();
  return out;
}

}  // namespace sybilfl
