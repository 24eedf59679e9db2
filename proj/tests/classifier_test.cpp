// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "llp/classifier.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "llp/datagen.hpp"

namespace llp {
namespace {

Eigen::MatrixXd random_features(std::mt19937_64& rng, int d, int n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd x(d, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < d; ++i) x(i, j) = g(rng);
  return x;
}

// Probe bags with random features, random labels, and matching proportions.
GradientProbe random_probe(std::uint64_t seed, int d, int C, int n_bags, int m) {
  std::mt19937_64 rng(seed);
  GradientProbe probe;
  for (int b = 0; b < n_bags; ++b) {
    std::vector<int> labels(m);
    for (int& l : labels) l = static_cast<int>(rng() % C);
    std::vector<double> p(C, 0.0);
    for (int l : labels) p[l] += 1.0 / m;
    probe.bags.emplace_back(b, random_features(rng, d, m), labels, p);
  }
  return probe;
}

TEST(Softmax, ColumnsMatchDirectFormula) {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd logits = 3.0 * random_features(rng, 4, 6);
  const auto s = softmax_columns(logits);
  for (int j = 0; j < 6; ++j) {
    double z = 0.0;
    for (int c = 0; c < 4; ++c) z += std::exp(logits(c, j));
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(s(c, j), std::exp(logits(c, j)) / z, 1e-14);
  }
}

TEST(Softmax, SaturatesWithoutOverflow) {
  Eigen::MatrixXd logits(2, 1);
  logits << 1000.0, 0.0;
  const auto s = softmax_columns(logits);
  EXPECT_GT(s(0, 0), 1.0 - 1e-9);
  EXPECT_TRUE(s.allFinite());
}

TEST(ClassifierModel, ZeroParametersGiveUniformConfidences) {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd x = random_features(rng, 5, 7);
  for (auto model : {ClassifierModel::softmax_linear(5, 4), ClassifierModel::mlp(5, 4, 8)}) {
    EXPECT_TRUE(model.predict(x).isApprox(Eigen::MatrixXd::Constant(4, 7, 0.25)));
  }
}

TEST(ClassifierModel, PredictColumnsAreDistributions) {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd x = random_features(rng, 6, 9);
  for (auto act : {Activation::kRelu, Activation::kTanh}) {
    auto model = ClassifierModel::mlp(6, 3, 10, act);
    Rng init(4);
    model.initialize(init);
    const auto conf = model.predict(x);
    for (int j = 0; j < 9; ++j) EXPECT_NEAR(conf.col(j).sum(), 1.0, 1e-12);
    EXPECT_GE(conf.minCoeff(), 0.0);
  }
}

TEST(ClassifierModel, LinearLogitsMatchManualProduct) {
  auto model = ClassifierModel::softmax_linear(2, 2);
  Rng init(5);
  model.initialize(init);
  const auto& w = model.parameters();
  Eigen::MatrixXd x(2, 1);
  x << 0.3, -1.2;
  // Column-major W (C x d) followed by b (C).
  const double l0 = w[0] * 0.3 + w[2] * -1.2 + w[4];
  const double l1 = w[1] * 0.3 + w[3] * -1.2 + w[5];
  const auto logits = model.forward(x).logits;
  EXPECT_NEAR(logits(0, 0), l0, 1e-14);
  EXPECT_NEAR(logits(1, 0), l1, 1e-14);
}

TEST(ClassifierModel, RejectsWrongFeatureDimension) {
  const auto model = ClassifierModel::softmax_linear(3, 2);
  EXPECT_THROW(model.predict(Eigen::MatrixXd::Zero(4, 2)), Error);
}

TEST(ProportionLoss, HandValues) {
  ScoreMatrix conf(2, 2);
  conf << 0.6, 0.2,
          0.4, 0.8;
  const std::vector<double> half{0.5, 0.5};
  EXPECT_NEAR(proportion_loss(conf, half), -0.5 * std::log(0.4) - 0.5 * std::log(0.6), 1e-12);
  EXPECT_NEAR(proportion_loss(conf, half), 0.71356, 1e-5);

  ScoreMatrix sure(2, 3);
  sure << 1, 1, 1,
          0, 0, 0;
  EXPECT_NEAR(proportion_loss(sure, std::vector<double>{1.0, 0.0}), 0.0, 1e-15);

  for (int C : {2, 3, 5}) {
    std::vector<double> p(C, 0.0);
    p[0] = 0.6;
    p[C - 1] += 0.4;
    EXPECT_NEAR(proportion_loss(ScoreMatrix::Constant(C, 4, 1.0 / C), p), std::log(C), 1e-12);
  }
}

TEST(ProportionLoss, ClampsZeroMeans) {
  ScoreMatrix conf(2, 1);
  conf << 1.0, 0.0;
  EXPECT_NEAR(proportion_loss(conf, std::vector<double>{0.0, 1.0}), -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, SingleClassIsZeroLoss) {
  std::mt19937_64 rng(6);
  auto model = ClassifierModel::mlp(3, 1, 4);
  Rng init(7);
  model.initialize(init);
  const auto lg = cross_entropy_loss_and_gradient(model, random_features(rng, 3, 5),
                                                  std::vector<int>(5, 0));
  EXPECT_NEAR(lg.loss, 0.0, 1e-15);
  EXPECT_NEAR(lg.gradient.norm(), 0.0, 1e-15);
}

TEST(CrossEntropy, UniformModelLossIsLogC) {
  std::mt19937_64 rng(8);
  const auto model = ClassifierModel::softmax_linear(3, 4);
  const auto lg = cross_entropy_loss_and_gradient(model, random_features(rng, 3, 6),
                                                  std::vector<int>{0, 1, 2, 3, 0, 1});
  EXPECT_NEAR(lg.loss, std::log(4.0), 1e-14);
}

TEST(GradientCheck, LinearBothLosses) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    auto model = ClassifierModel::softmax_linear(4, 3);
    Rng init(s);
    model.initialize(init);
    const auto probe = random_probe(100 + s, 4, 3, 3, 5);
    EXPECT_LT(gradient_check(model, LossKind::kCrossEntropy, probe), 1e-5);
    EXPECT_LT(gradient_check(model, LossKind::kProportion, probe), 1e-5);
  }
}

TEST(GradientCheck, MlpBothLossesBothActivations) {
  for (auto act : {Activation::kTanh, Activation::kRelu}) {
    auto model = ClassifierModel::mlp(4, 3, 6, act);
    Rng init(11);
    model.initialize(init);
    const auto probe = random_probe(200, 4, 3, 3, 5);
    EXPECT_LT(gradient_check(model, LossKind::kCrossEntropy, probe), 1e-4);
    EXPECT_LT(gradient_check(model, LossKind::kProportion, probe), 1e-4);
  }
}

TEST(ProportionGradient, VanishesWhenPredictedProportionsMatch) {
  // Zero weights with bias = log p make every column equal to p.
  auto model = ClassifierModel::softmax_linear(2, 3);
  const std::vector<double> p{0.5, 0.3, 0.2};
  const Eigen::Index bias = 2 * 3;
  for (int c = 0; c < 3; ++c) model.parameters()[bias + c] = std::log(p[c]);
  std::mt19937_64 rng(12);
  const Bag bag(0, random_features(rng, 2, 10), {0, 0, 0, 0, 0, 1, 1, 1, 2, 2}, p);
  const Bag* ptr = &bag;
  const auto lg = proportion_loss_and_gradient(model, std::span(&ptr, 1));
  EXPECT_LT(lg.gradient.cwiseAbs().maxCoeff(), 1e-12);
  GradientProbe probe{{bag}, {}};
  ClassifierModel shifted = model;
  const double h = 1e-5;
  for (Eigen::Index k = 0; k < model.num_parameters(); ++k) {
    shifted.parameters()[k] += h;
    const double up = proportion_loss(shifted.predict(bag.features()), p);
    shifted.parameters()[k] -= 2 * h;
    const double down = proportion_loss(shifted.predict(bag.features()), p);
    shifted.parameters()[k] += h;
    EXPECT_NEAR((up - down) / (2 * h), 0.0, 1e-8);
  }
}

TEST(AdamOptimizer, ZeroLearningRateLeavesParameters) {
  Eigen::VectorXd params = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
  const Eigen::VectorXd before = params;
  AdamOptimizer opt(5, 0.0);
  for (int k = 0; k < 10; ++k) opt.step(params, Eigen::VectorXd::Ones(5));
  EXPECT_EQ(params, before);
}

TEST(AdamOptimizer, FirstStepMovesByLearningRate) {
  Eigen::VectorXd params = Eigen::VectorXd::Zero(3);
  AdamOptimizer opt(3, 0.01);
  Eigen::VectorXd g(3);
  g << 2.0, -0.5, 1e-3;
  opt.step(params, g);
  // With bias correction, step one is lr * g / (|g| + eps).
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(params[k], -0.01 * g[k] / (std::abs(g[k]) + 1e-8), 1e-12);
  }
}

double accuracy(const ClassifierModel& model, const LabeledSet& set) {
  const auto conf = model.predict(set.features);
  int hits = 0;
  for (int j = 0; j < set.size(); ++j) {
    Eigen::Index top;
    conf.col(j).maxCoeff(&top);
    hits += top == set.labels[j];
  }
  return static_cast<double>(hits) / set.size();
}

TEST(TrainCrossEntropy, FitsSeparableBlobs) {
  const auto spec = make_blob_spec(3, 2, 10.0, 1.0, 1);
  const auto pool = generate_blobs(spec, 600, 2);
  const auto data = make_bags(pool, 20, 30, 3);
  std::vector<std::vector<int>> labels;
  for (const auto& b : data.bags) labels.push_back(b.true_labels());
  auto model = ClassifierModel::softmax_linear(2, 3);
  AdamOptimizer opt(model.num_parameters(), 0.05);
  Rng order = make_rng(4, Stream::kBatchOrder);
  for (int e = 0; e < 50; ++e) train_epoch_cross_entropy(model, data.bags, labels, opt, {}, &order);
  EXPECT_GE(accuracy(model, generate_blobs(spec, 1000, 5)), 0.99);
}

TEST(TrainProportionLoss, LearnsFromSmallBags) {
  const auto spec = make_blob_spec(2, 2, 10.0, 1.0, 6);
  const auto pool = generate_blobs(spec, 2000, 7);
  const auto data = make_bags(pool, 4, 200, 8);
  auto model = ClassifierModel::softmax_linear(2, 2);
  AdamOptimizer opt(model.num_parameters(), 0.01);
  Rng order = make_rng(9, Stream::kBatchOrder);
  for (int e = 0; e < 100; ++e) train_epoch_proportion_loss(model, data.bags, opt, {}, &order);
  EXPECT_GE(accuracy(model, generate_blobs(spec, 1000, 10)), 0.9);
}

TEST(TrainCrossEntropy, DeterministicUnderFixedSeeds) {
  const auto spec = make_blob_spec(3, 4, 4.0, 1.0, 11);
  const auto data = make_bags(generate_blobs(spec, 400, 12), 16, 10, 13);
  std::vector<std::vector<int>> labels;
  for (const auto& b : data.bags) labels.push_back(b.true_labels());
  auto run = [&] {
    auto model = ClassifierModel::mlp(4, 3, 8);
    Rng init = make_rng(14, Stream::kModelInit);
    model.initialize(init);
    AdamOptimizer opt(model.num_parameters(), 0.01);
    Rng order = make_rng(14, Stream::kBatchOrder);
    for (int e = 0; e < 5; ++e) train_epoch_cross_entropy(model, data.bags, labels, opt, {2, 10}, &order);
    return model.parameters();
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainCrossEntropy, RejectsMismatchedLabels) {
  const Bag bag(0, Eigen::MatrixXd::Zero(2, 3), {}, {1.0, 0.0});
  auto model = ClassifierModel::softmax_linear(2, 2);
  AdamOptimizer opt(model.num_parameters());
  std::vector<Bag> bags{bag};
  std::vector<std::vector<int>> labels{{0, 0}};
  EXPECT_THROW(train_epoch_cross_entropy(model, bags, labels, opt), Error);
}

}  // namespace
}  // namespace llp
