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

#include "llp/datagen.hpp"

#include <gtest/gtest.h>

#include <set>
#include <vector>

namespace llp {
namespace {

int nearest_center(const BlobSpec& spec, const Eigen::VectorXd& x) {
  Eigen::Index best;
  (spec.class_centers.colwise() - x).colwise().squaredNorm().minCoeff(&best);
  return static_cast<int>(best);
}

TEST(BlobSpec, CentersRespectSeparation) {
  for (int C : {2, 3, 5, 8}) {
    for (int d : {2, 4, 16}) {
      const auto spec = make_blob_spec(C, d, 6.0, 1.0, 10 * C + d);
      for (int a = 0; a < C; ++a)
        for (int b = a + 1; b < C; ++b)
          EXPECT_GE((spec.class_centers.col(a) - spec.class_centers.col(b)).norm(), 6.0 * (1 - 1e-9));
    }
  }
}

TEST(GenerateBlobs, ZeroScaleSitsOnCenters) {
  auto spec = make_blob_spec(3, 4, 5.0, 0.0, 1);
  const auto set = generate_blobs(spec, 30, 2);
  for (int i = 0; i < set.size(); ++i) {
    EXPECT_TRUE(set.features.col(i).isApprox(spec.class_centers.col(set.labels[i])));
  }
}

TEST(GenerateBlobs, WellSeparatedBlobsAreNearestCenterSeparable) {
  const auto spec = make_blob_spec(3, 2, 10.0, 1.0, 3);
  const auto set = generate_blobs(spec, 10000, 4);
  int hits = 0;
  for (int i = 0; i < set.size(); ++i) hits += nearest_center(spec, set.features.col(i)) == set.labels[i];
  EXPECT_GE(hits / 10000.0, 0.999);
}

TEST(GenerateBlobs, BalancedAndDeterministic) {
  const auto spec = make_blob_spec(3, 3, 4.0, 1.0, 5);
  const auto a = generate_blobs(spec, 100, 6);
  const auto b = generate_blobs(spec, 100, 6);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  std::vector<int> counts(3, 0);
  for (int l : a.labels) ++counts[l];
  EXPECT_EQ(counts, (std::vector<int>{34, 33, 33}));
  EXPECT_NE(generate_blobs(spec, 100, 7).labels, a.labels);
}

TEST(SampleSimplex, OnSimplexWithFlatMeans) {
  Rng rng(8);
  std::vector<double> mean(4, 0.0);
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    const auto p = sample_simplex(4, rng);
    double s = 0.0;
    for (int c = 0; c < 4; ++c) {
      EXPECT_GT(p[c], 0.0);
      s += p[c];
      mean[c] += p[c] / n;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  for (double m : mean) EXPECT_NEAR(m, 0.25, 0.01);
}

TEST(MakeBags, WholePoolBagTakesPoolProportions) {
  const auto spec = make_blob_spec(3, 2, 4.0, 1.0, 9);
  const auto pool = generate_blobs(spec, 30, 10);
  const auto data = make_bags(pool, 30, 1, 11);
  ASSERT_EQ(data.bags.size(), 1u);
  for (double p : data.bags[0].proportions()) EXPECT_NEAR(p, 1.0 / 3, 1e-12);
}

TEST(MakeBags, StoredProportionsAreRealized) {
  const auto spec = make_blob_spec(3, 4, 4.0, 1.0, 12);
  const auto pool = generate_blobs(spec, 2000, 13);
  std::vector<std::vector<int>> members;
  const auto data = make_bags(pool, 50, 20, 14, &members);
  data.validate();
  ASSERT_EQ(members.size(), 20u);
  for (std::size_t b = 0; b < data.bags.size(); ++b) {
    const auto& bag = data.bags[b];
    EXPECT_EQ(bag.size(), 50);
    const auto realized = label_proportion(true_label_matrix(bag));
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(bag.proportions()[c], realized[c], 1e-12);
    for (int j = 0; j < bag.size(); ++j) {
      EXPECT_EQ(bag.true_labels()[j], pool.labels[members[b][j]]);
      EXPECT_EQ(bag.features().col(j), pool.features.col(members[b][j]));
    }
  }
}

TEST(MakeBags, DrawsWithoutReplacement) {
  const auto spec = make_blob_spec(3, 2, 4.0, 1.0, 15);
  const auto pool = generate_blobs(spec, 2 * 102400, 16);
  std::vector<std::vector<int>> members;
  const auto data = make_bags(pool, 1024, 100, 17, &members);
  EXPECT_EQ(data.total_instances(), 102400);
  std::set<int> used;
  for (const auto& m : members) used.insert(m.begin(), m.end());
  EXPECT_EQ(used.size(), 102400u);
}

TEST(MakeBags, DeterministicAndRejectsOversizedRequests) {
  const auto spec = make_blob_spec(2, 2, 4.0, 1.0, 18);
  const auto pool = generate_blobs(spec, 100, 19);
  const auto a = make_bags(pool, 10, 5, 20);
  const auto b = make_bags(pool, 10, 5, 20);
  for (int k = 0; k < 5; ++k) EXPECT_EQ(a.bags[k].true_labels(), b.bags[k].true_labels());
  try {
    make_bags(pool, 10, 11, 20);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "pool_exhausted");
  }
  EXPECT_THROW(make_bags(pool, 0, 5, 20), Error);
}

LLPDataset numbered_bags(int n) {
  LLPDataset d{{}, 2, 1, SplitTag::kTrain};
  for (int b = 0; b < n; ++b) d.bags.emplace_back(b, Eigen::MatrixXd::Zero(1, 2), std::vector<int>{}, std::vector<double>{0.5, 0.5});
  return d;
}

TEST(SplitTrainValidation, SizesFollowRatio) {
  auto [train, val] = split_train_validation(numbered_bags(10));
  EXPECT_EQ(train.bags.size(), 7u);
  EXPECT_EQ(val.bags.size(), 3u);
  EXPECT_EQ(val.split, SplitTag::kValidation);
  auto [t2, v2] = split_train_validation(numbered_bags(2));
  EXPECT_EQ(t2.bags.size(), 1u);
  EXPECT_EQ(v2.bags.size(), 1u);
  EXPECT_THROW(split_train_validation(numbered_bags(1)), Error);
}

TEST(SplitTrainValidation, IsAPartition) {
  for (int n = 2; n < 40; ++n) {
    auto [train, val] = split_train_validation(numbered_bags(n));
    std::set<int> ids;
    for (const auto& b : train.bags) ids.insert(b.id());
    for (const auto& b : val.bags) EXPECT_TRUE(ids.insert(b.id()).second);
    EXPECT_EQ(static_cast<int>(ids.size()), n);
    EXPECT_GE(train.bags.size(), 1u);
    EXPECT_GE(val.bags.size(), 1u);
  }
}

}  // namespace
}  // namespace llp
