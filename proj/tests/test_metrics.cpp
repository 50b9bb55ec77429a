#include <gtest/gtest.h>

#include <algorithm>

#include "sybilfl/metrics.hpp"
#include "support.hpp"

using namespace sybilfl;
using namespace testing_support;

TEST(TaskAccuracy, FourSampleFixture) {
  const std::vector<int> y{1, 1, 3, 5}, p{7, 1, 3, 5};
  const auto a = task_accuracy(y, p, 1, 7);
  EXPECT_DOUBLE_EQ(*a.tta, 0.5);
  EXPECT_DOUBLE_EQ(*a.mta, 1.0);
}

TEST(TaskAccuracy, ConstantAdversarialPredictor) {
  const std::vector<int> y{1, 1, 1, 2, 7, 0}, p(6, 7);
  const auto a = task_accuracy(y, p, 1, 7);
  EXPECT_DOUBLE_EQ(*a.tta, 1.0);
  EXPECT_DOUBLE_EQ(*a.mta, 1.0 / 3.0);
}

TEST(TaskAccuracy, AbsentWhenNoSamplesOfAKind) {
  const std::vector<int> y{2, 3}, p{2, 0};
  const auto a = task_accuracy(y, p, 1, 7);
  EXPECT_FALSE(a.tta);
  EXPECT_DOUBLE_EQ(*a.mta, 0.5);
  const std::vector<int> only{1, 1};
  EXPECT_FALSE(task_accuracy(only, only, 1, 7).mta);
  EXPECT_THROW(task_accuracy(y, std::vector<int>{1}, 1, 7), std::invalid_argument);
}

TEST(TaskAccuracy, PartitionsTheTestSet) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto y = random_labels(300, 10, seed);
    const auto p = random_labels(300, 10, seed + 100);
    const auto a = task_accuracy(y, p, 1, 7);
    std::size_t n_tar = 0, hit_tar = 0, n_rest = 0, hit_rest = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == 1) {
        ++n_tar;
        hit_tar += p[i] == 7;
      } else {
        ++n_rest;
        hit_rest += p[i] == y[i];
      }
    }
    EXPECT_EQ(n_tar + n_rest, y.size());
    EXPECT_DOUBLE_EQ(*a.tta, static_cast<double>(hit_tar) / static_cast<double>(n_tar));
    EXPECT_DOUBLE_EQ(*a.mta, static_cast<double>(hit_rest) / static_cast<double>(n_rest));
  }
}

TEST(TaskAccuracy, PermutationInvariant) {
  auto y = random_labels(200, 10, 3);
  auto p = random_labels(200, 10, 4);
  const auto a = task_accuracy(y, p, 1, 7);
  std::vector<std::size_t> order(y.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), std::mt19937_64(5));
  std::vector<int> y2, p2;
  for (auto i : order) {
    y2.push_back(y[i]);
    p2.push_back(p[i]);
  }
  const auto b = task_accuracy(y2, p2, 1, 7);
  EXPECT_DOUBLE_EQ(*a.mta, *b.mta);
  EXPECT_DOUBLE_EQ(*a.tta, *b.tta);
}

TEST(Evaluate, PerfectModelOnSeparableData) {
  const Model m = build_fc(std::vector<std::size_t>{3, 3});
  ParamVector p(m.layout());
  for (std::size_t i = 0; i < 3; ++i) p[m.weight_offset(0) + i * 3 + i] = 1.0;
  LabeledDataset d{{3}, 3, {}, {}};
  d.push_back(std::vector<double>{1, 0, 0}, 0);
  d.push_back(std::vector<double>{0, 1, 0}, 1);
  d.push_back(std::vector<double>{0, 0, 1}, 2);
  const auto a = evaluate(m, p, d, 1, 2);
  EXPECT_DOUBLE_EQ(*a.mta, 1.0);
  EXPECT_DOUBLE_EQ(*a.tta, 0.0);
  EXPECT_DOUBLE_EQ(overall_accuracy(m, p, d), 1.0);
}

TEST(Evaluate, RandomModelsSitNearChance) {
  const auto test = blobs(100, 10, 8, 0.6, 1);
  const Model m = build_fc(std::vector<std::size_t>{64, 32, 16, 8, 10}, {1, 8, 8});
  double total = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) total += overall_accuracy(m, init_params(m, seed), test);
  EXPECT_NEAR(total / 10.0, 0.1, 0.05);
}

TEST(Predict, TiesGoToLowestClass) {
  const Model m = build_fc(std::vector<std::size_t>{2, 4});
  const ParamVector zero(m.layout());
  const LabeledDataset d{{2}, 4, {0.3, 0.9}, {2}};
  EXPECT_EQ(predict(m, zero, d), (std::vector<int>{0}));
  ParamVector p(m.layout());
  p[m.bias_offset(0) + 2] = 1.0;
  p[m.bias_offset(0) + 3] = 1.0;
  EXPECT_EQ(predict(m, p, d), (std::vector<int>{2}));
}

TEST(Evaluate, EmptyTestSetThrows) {
  const Model m = build_fc(std::vector<std::size_t>{2, 4});
  const LabeledDataset d{{2}, 4, {}, {}};
  EXPECT_THROW(evaluate(m, ParamVector(m.layout()), d, 1, 2), std::invalid_argument);
  EXPECT_THROW(overall_accuracy(m, ParamVector(m.layout()), d), std::invalid_argument);
}

TEST(AdversarialLoss, ZeroModelIsLogClasses) {
  const Model m = build_fc(std::vector<std::size_t>{64, 10}, {1, 8, 8});
  const auto test = blobs(3, 10, 8, 0.3, 2);
  EXPECT_NEAR(adversarial_loss(m, ParamVector(m.layout()), test, 1, 7), std::log(10.0), 1e-12);
}

TEST(AdversarialLoss, ScoresTargetsAgainstAdversarialLabel) {
  const auto s = make_attack_scenario(3);
  const auto test = blobs(4, 10, 8, 0.25, 9);
  const auto relabeled = flip_labels(test, 1, 7);
  EXPECT_NEAR(adversarial_loss(s.model, s.w_r, test, 1, 7), forward_loss(s.model, s.w_r, relabeled.images_tensor(), relabeled.labels).loss, 1e-12);
}
