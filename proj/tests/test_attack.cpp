#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "support.hpp"

using namespace sybilfl;
using namespace testing_support;

namespace {

AttackConfig small_step(std::size_t steps, double lr = 0.01) {
  AttackConfig c;
  c.steps = steps;
  c.poison_lr = lr;
  return c;
}

double fraction_non_increasing(const std::vector<double>& trace) {
  std::size_t ok = 0;
  for (std::size_t t = 1; t < trace.size(); ++t) ok += trace[t] <= trace[t - 1] + 1e-15;
  return static_cast<double>(ok) / static_cast<double>(trace.size() - 1);
}

}  // namespace

TEST(SybilCount, Arithmetic) {
  EXPECT_EQ(sybil_count(50, 40, 5), 100u);
  EXPECT_EQ(sybil_count(37, 0, 5), 0u);
  EXPECT_EQ(sybil_count(10, 10, 3), 3u);
  EXPECT_EQ(malicious_count(50, 40), 20u);
  EXPECT_THROW(malicious_count(10, 15), std::invalid_argument);
  EXPECT_THROW(malicious_count(10, 120), std::invalid_argument);
}

TEST(AttackConfig, Validation) {
  AttackConfig c;
  EXPECT_NO_THROW(c.validate(10));
  c.y_adv = c.y_tar;
  EXPECT_THROW(c.validate(10), std::invalid_argument);
  c = AttackConfig{};
  c.poison_lr = 0;
  EXPECT_THROW(c.validate(10), std::invalid_argument);
  EXPECT_EQ(parse_scheme("offline"), TargetScheme::Offline);
  EXPECT_EQ(parse_method("lm"), AttackMethod::LocalMethod);
  EXPECT_THROW(parse_method("nope"), std::invalid_argument);
}

TEST(CosineMatching, ParallelOrthogonalAntiParallel) {
  const std::vector<double> d{1.0, 2.0, -3.0};
  EXPECT_NEAR(cosine_matching(d, std::vector<double>{2.0, 4.0, -6.0}).loss, 0.0, 1e-10);
  EXPECT_NEAR(cosine_matching(d, std::vector<double>{2.0, -1.0, 0.0}).loss, 1.0, 1e-10);
  EXPECT_NEAR(cosine_matching(d, std::vector<double>{-0.5, -1.0, 1.5}).loss, 2.0, 1e-10);
  EXPECT_THROW(cosine_matching(std::vector<double>(3, 0.0), d), DegenerateDirection);
  EXPECT_THROW(cosine_matching(d, std::vector<double>(3, 0.0)), DegenerateDirection);
}

TEST(CosineMatching, GradientMatchesFiniteDifferences) {
  const auto d = random_tensor({12}, 1, -1, 1);
  const auto g = random_tensor({12}, 2, -1, 1);
  const auto m = cosine_matching(d.data(), g.data());
  const double h = 1e-6;
  for (std::size_t i = 0; i < 12; ++i) {
    Tensor p = g, q = g;
    p[i] += h;
    q[i] -= h;
    const double fd = (cosine_matching(d.data(), p.data()).loss - cosine_matching(d.data(), q.data()).loss) / (2 * h);
    EXPECT_LT(rel_err(m.grad[i], fd, 1e-8), 1e-6);
  }
}

TEST(MatchingLoss, RangeAndScaleInvariance) {
  const auto s = make_attack_scenario(3);
  const auto images = s.base.images_tensor();
  for (std::uint64_t k = 0; k < 5; ++k) {
    const auto delta = random_tensor(images.shape(), 10 + k, -0.3, 0.3);
    const double b = matching_loss(delta, s.w_r, s.w_tar, s.model, images, s.base.labels);
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 2.0);
    for (double c : {1e-3, 0.5, 7.0, 1e3}) {
      ParamVector scaled = s.w_r;
      for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = s.w_r[i] - c * (s.w_r[i] - s.w_tar[i]);
      EXPECT_NEAR(matching_loss(delta, s.w_r, scaled, s.model, images, s.base.labels), b, 1e-10);
    }
  }
  const Tensor zero = Tensor::zeros(images.shape());
  EXPECT_TRUE(std::isfinite(matching_loss(zero, s.w_r, s.w_tar, s.model, images, s.base.labels)));
  EXPECT_THROW(matching_loss(zero, s.w_r, s.w_r, s.model, images, s.base.labels), DegenerateDirection);
}

TEST(MatchingLoss, ReverseFlagFlipsCosine) {
  const auto s = make_attack_scenario(4);
  const auto images = s.base.images_tensor();
  const Tensor zero = Tensor::zeros(images.shape());
  const double fwd = matching_loss(zero, s.w_r, s.w_tar, s.model, images, s.base.labels, false);
  const double rev = matching_loss(zero, s.w_r, s.w_tar, s.model, images, s.base.labels, true);
  EXPECT_NEAR(fwd + rev, 2.0, 1e-12);
}

TEST(MatchingLoss, GradientMatchesFiniteDifferences) {
  const auto s = make_attack_scenario(5);
  LabeledDataset few = s.base;
  few.pixels.resize(3 * few.image_size());
  few.labels.resize(3);
  const auto images = few.images_tensor();
  const auto delta = random_tensor(images.shape(), 6, -0.05, 0.05);
  const auto g = matching_loss_grad(delta, s.w_r, s.w_tar, s.model, images, few.labels);
  const double h = 1e-4;
  double num = 0, den = 0;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    Tensor p = delta, q = delta;
    p[i] += h;
    q[i] -= h;
    const double fd = (matching_loss(p, s.w_r, s.w_tar, s.model, images, few.labels) -
                       matching_loss(q, s.w_r, s.w_tar, s.model, images, few.labels)) /
                      (2 * h);
    num += (g[i] - fd) * (g[i] - fd);
    den += fd * fd;
    EXPECT_LT(rel_err(g[i], fd, 1e-6), 1e-3) << "pixel " << i;
  }
  EXPECT_LT(std::sqrt(num / den), 1e-3);
}

TEST(GeneratePoison, ZeroStepsLeaveImagesUntouched) {
  const auto s = make_attack_scenario(7);
  Rng rng = make_rng(7, Stream::PoisonSelect);
  const auto pb = generate_poison(s.base, s.w_r, s.w_tar, s.model, small_step(0), rng);
  ASSERT_TRUE(pb);
  EXPECT_EQ(pb->poisoned(), pb->base);
  EXPECT_EQ(pb->trace.size(), 1u);
}

TEST(GeneratePoison, BatchIsCappedAtPoisonCount) {
  const auto s = make_attack_scenario(8);
  AttackConfig c = small_step(1);
  c.poison_count = 5;
  Rng rng = make_rng(8, Stream::PoisonSelect);
  EXPECT_EQ(generate_poison(s.base, s.w_r, s.w_tar, s.model, c, rng)->base.size(), 5u);
  c.poison_count = 32;
  EXPECT_EQ(generate_poison(s.base, s.w_r, s.w_tar, s.model, c, rng)->base.size(), s.base.size());
  EXPECT_FALSE(generate_poison(s.base.empty_like(), s.w_r, s.w_tar, s.model, c, rng));
}

TEST(GeneratePoison, SmallStepDescent) {
  const auto s = make_attack_scenario(9);
  Rng rng = make_rng(9, Stream::PoisonSelect);
  const auto pb = generate_poison(s.base, s.w_r, s.w_tar, s.model, small_step(100), rng);
  ASSERT_EQ(pb->trace.size(), 101u);
  EXPECT_LT(pb->trace.back(), pb->trace.front());
  EXPECT_GE(fraction_non_increasing(pb->trace), 0.9);
}

TEST(GeneratePoison, EpsilonAndPixelBoundsHoldAfterEveryStep) {
  const auto s = make_attack_scenario(10);
  AttackConfig c = small_step(0, 1.0);
  c.epsilon = 0.03;
  for (std::size_t t = 1; t <= 6; ++t) {
    c.steps = t;
    Rng rng = make_rng(10, Stream::PoisonSelect);
    const auto pb = generate_poison(s.base, s.w_r, s.w_tar, s.model, c, rng);
    const auto x = pb->poisoned();
    for (std::size_t i = 0; i < pb->delta.size(); ++i) {
      EXPECT_LE(std::abs(pb->delta[i]), c.epsilon + 1e-15);
      EXPECT_GE(x.pixels[i], 0.0);
      EXPECT_LE(x.pixels[i], 1.0);
    }
  }
}

TEST(GeneratePoison, LabelsStayAdversarial) {
  const auto s = make_attack_scenario(11);
  Rng rng = make_rng(11, Stream::PoisonSelect);
  const auto pb = generate_poison(s.base, s.w_r, s.w_tar, s.model, small_step(3, 1.0), rng);
  for (int y : pb->poisoned().labels) EXPECT_EQ(y, 7);
}

TEST(GeneratePoison, OneStepOnPoisonMovesTowardTarget) {
  const auto s = make_attack_scenario(12);
  Rng rng = make_rng(12, Stream::PoisonSelect);
  const auto pb = generate_poison(s.base, s.w_r, s.w_tar, s.model, AttackConfig{}, rng);
  const TrainParams one{1, pb->base.size(), 0.01, 0.0};
  Rng r1 = make_rng(0, Stream::SybilTrain), r2 = make_rng(0, Stream::SybilTrain);
  const auto on_poison = local_train(s.model, pb->poisoned(), s.w_r, one, r1);
  const auto on_base = local_train(s.model, pb->base, s.w_r, one, r2);
  auto alignment = [&](const ParamVector& w) {
    std::vector<double> step(w.size()), want(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      step[i] = w[i] - s.w_r[i];
      want[i] = s.w_tar[i] - s.w_r[i];
    }
    return vec::dot(step, want) / (vec::norm(step) * vec::norm(want));
  };
  EXPECT_GT(alignment(on_poison), alignment(on_base));
  EXPECT_LT(vec::distance(on_poison.data(), s.w_tar.data()), vec::distance(on_base.data(), s.w_tar.data()));
  EXPECT_NEAR(1.0 - alignment(on_poison), pb->trace.back(), 1e-6);
}

TEST(TargetLocal, Composition) {
  const auto s = make_attack_scenario(13);
  AttackConfig c;
  const TrainParams tp{2, 16, 0.01, 0.9};
  Rng a = make_rng(1, Stream::TargetModel), b = make_rng(1, Stream::TargetModel);
  EXPECT_EQ(acquire_target_local(s.model, s.w_r, s.data, c, tp, a),
            local_train(s.model, flip_labels(s.data, 1, 7), s.w_r, tp, b));

  const auto no_target = select_base(s.data, 4);
  Rng e = make_rng(2, Stream::TargetModel), f = make_rng(2, Stream::TargetModel);
  EXPECT_EQ(acquire_target_local(s.model, s.w_r, no_target, c, tp, e), local_train(s.model, no_target, s.w_r, tp, f));

  Rng g = make_rng(3, Stream::TargetModel);
  EXPECT_EQ(acquire_target_local(s.model, s.w_r, s.data, c, TrainParams{0, 16, 0.01, 0.9}, g), s.w_r);
  EXPECT_THROW(acquire_target_local(s.model, s.w_r, s.data.empty_like(), c, tp, g), std::invalid_argument);
}

TEST(TargetGlobal, UnweightedMean) {
  const auto s = make_attack_scenario(14);
  AttackConfig c;
  const TrainParams tp{1, 16, 0.01, 0.9};
  const auto half = select_base(s.data, 1);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < 150; ++i) idx.push_back(i);
  const auto big = s.data.subset(idx);
  const StreamKey k0{1, Stream::TargetModel, 0, 0}, k1{1, Stream::TargetModel, 1, 0};

  const std::vector<TargetSource> one{{&big, k0}};
  Rng r0 = make_rng(k0);
  EXPECT_EQ(acquire_target_global(s.model, s.w_r, one, c, tp), acquire_target_local(s.model, s.w_r, big, c, tp, r0));

  const std::vector<TargetSource> two{{&big, k0}, {&half, k1}};
  Rng a = make_rng(k0), b = make_rng(k1);
  const auto wa = acquire_target_local(s.model, s.w_r, big, c, tp, a);
  const auto wb = acquire_target_local(s.model, s.w_r, half, c, tp, b);
  const auto g = acquire_target_global(s.model, s.w_r, two, c, tp);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], 0.5 * wa[i] + 0.5 * wb[i], 1e-15);

  EXPECT_THROW(acquire_target_global(s.model, s.w_r, std::vector<TargetSource>{}, c, tp), std::invalid_argument);
}

TEST(TargetOffline, FreshInitAndComposition) {
  const auto s = make_attack_scenario(15);
  AttackConfig c;
  const TrainParams tp{1, 16, 0.01, 0.9};
  const StreamKey key{2, Stream::OfflineTarget, 0, 0};
  const std::vector<TargetSource> src{{&s.data, key}};
  EXPECT_EQ(acquire_target_offline(s.model, src, 0, c, tp, 99), init_params(s.model, 99));
  Rng r = make_rng(key);
  EXPECT_EQ(acquire_target_offline(s.model, src, 1, c, tp, 99),
            local_train(s.model, flip_labels(s.data, 1, 7), init_params(s.model, 99), tp, r));
  EXPECT_THROW(acquire_target_offline(s.model, std::vector<TargetSource>{}, 1, c, tp, 99), std::invalid_argument);
}

TEST(Fcm, InfiniteBetaAndZeroStepsKeepBase) {
  const auto s = make_attack_scenario(16);
  AttackConfig c = small_step(5, 0.1);
  c.fcm_beta = std::numeric_limits<double>::infinity();
  Rng rng = make_rng(1, Stream::PoisonSelect);
  const auto target = s.data.image(20);
  auto pb = fcm_poison(s.base, target, s.w_r, s.model, c, rng);
  EXPECT_EQ(pb->poisoned(), pb->base);
  c = small_step(0, 0.1);
  pb = fcm_poison(s.base, target, s.w_r, s.model, c, rng);
  EXPECT_EQ(pb->poisoned(), pb->base);
  EXPECT_GT(fcm_default_beta(s.model), 0.0);
}

TEST(Fcm, FeatureDistanceDescends) {
  const auto s = make_attack_scenario(17);
  AttackConfig c = small_step(60, 0.01);
  Rng rng = make_rng(2, Stream::PoisonSelect);
  const auto pb = fcm_poison(s.base, s.data.image(25), s.w_r, s.model, c, rng);
  EXPECT_LT(pb->trace.back(), pb->trace.front());
  EXPECT_GE(fraction_non_increasing(pb->trace), 0.9);
  for (int y : pb->poisoned().labels) EXPECT_EQ(y, 7);
}

TEST(LocalMethod, TargetOnlyClientMatchesOnlineLocal) {
  const auto s = make_attack_scenario(18);
  AttackConfig c;
  const TrainParams tp{1, 8, 0.01, 0.9};
  const auto only_targets = select_base(s.data, 1);
  Rng a = make_rng(3, Stream::TargetModel), b = make_rng(3, Stream::TargetModel);
  const auto lm = lm_target(s.model, s.w_r, only_targets, c, tp, a);
  ASSERT_TRUE(lm);
  EXPECT_EQ(attack_direction(s.w_r, *lm, false),
            attack_direction(s.w_r, acquire_target_local(s.model, s.w_r, only_targets, c, tp, b), false));
  Rng e = make_rng(4, Stream::TargetModel);
  EXPECT_FALSE(lm_target(s.model, s.w_r, select_base(s.data, 3), c, tp, e));
}

TEST(LocalMethod, ZeroStepsAndDescent) {
  const auto s = make_attack_scenario(19);
  const TrainParams tp{1, 16, 0.01, 0.9};
  Rng t1 = make_rng(5, Stream::TargetModel), p1 = make_rng(5, Stream::PoisonSelect);
  const auto none = lm_poison(s.base, s.w_r, s.data, s.model, small_step(0), tp, t1, p1);
  EXPECT_EQ(none->poisoned(), none->base);
  Rng t2 = make_rng(6, Stream::TargetModel), p2 = make_rng(6, Stream::PoisonSelect);
  const auto pb = lm_poison(s.base, s.w_r, s.data, s.model, small_step(60), tp, t2, p2);
  EXPECT_LT(pb->trace.back(), pb->trace.front());
  EXPECT_GE(fraction_non_increasing(pb->trace), 0.9);
}

TEST(PoisonContainer, RoundTrip) {
  const auto s = make_attack_scenario(20);
  const auto path = std::filesystem::temp_directory_path() / "sybilfl_poison_rt.spb";
  write_poison_container(path, s.base);
  EXPECT_EQ(read_poison_container(path), s.base);
  const auto junk = std::filesystem::temp_directory_path() / "sybilfl_poison_junk.spb";
  {
    std::ofstream out(junk, std::ios::binary);
    out << "nope";
  }
  EXPECT_THROW(read_poison_container(junk), std::runtime_error);
}
