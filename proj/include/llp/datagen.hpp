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

// Synthetic LLP benchmark construction: Gaussian class blobs, bags whose
// proportions are drawn uniformly from the simplex, and a bag-level
// train/validation split.

#pragma once

#include "llp/domain.hpp"
#include "llp/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace llp {

struct BlobSpec {
  int num_classes = 3;
  int feature_dim = 16;
  Eigen::MatrixXd class_centers;  // d x C, one center per column
  double class_scale = 1.0;
  double separation = 8.0;

  void validate() const {
    if (num_classes < 1 || feature_dim < 1) {
      throw Error("invalid_config", "blob spec needs C >= 1 and d >= 1");
    }
    if (class_centers.rows() != feature_dim || class_centers.cols() != num_classes) {
      throw Error("shape_mismatch", "class centers must be d x C");
    }
    if (class_scale < 0.0) throw Error("invalid_config", "class_scale < 0");
    for (int a = 0; a < num_classes; ++a)
      for (int b = a + 1; b < num_classes; ++b)
        if ((class_centers.col(a) - class_centers.col(b)).norm() <
            separation * (1.0 - 1e-9)) {
          throw Error("invalid_config", "class centers closer than separation");
        }
  }
};

/// Blob spec with random centers at pairwise distance >= `separation`.
/// When C <= d the centers sit on a random orthonormal frame scaled so every
/// pair is exactly `separation` apart; otherwise they are rejection-sampled
/// on a sphere that grows until the constraint holds.
inline BlobSpec make_blob_spec(int num_classes, int feature_dim, double separation,
                               double class_scale, std::uint64_t seed) {
  BlobSpec spec;
  spec.num_classes = num_classes;
  spec.feature_dim = feature_dim;
  spec.class_scale = class_scale;
  spec.separation = separation;
  spec.class_centers = Eigen::MatrixXd::Zero(feature_dim, num_classes);
  if (num_classes < 1 || feature_dim < 1) spec.validate();
  Rng rng = make_rng(seed, Stream::kCenters);
  auto gaussian = [&]() {
    Eigen::VectorXd v(feature_dim);
    for (int k = 0; k < feature_dim; ++k) v[k] = standard_normal(rng);
    return v;
  };
  if (num_classes <= feature_dim) {
    const double radius = separation / std::sqrt(2.0);
    for (int c = 0; c < num_classes; ++c) {
      Eigen::VectorXd v = gaussian();
      for (int prev = 0; prev < c; ++prev) {
        const auto u = spec.class_centers.col(prev) / radius;
        v -= u.dot(v) * u;
      }
      spec.class_centers.col(c) = radius * v.normalized();
    }
  } else {
    double radius = separation;
    for (int attempt = 0;; ++attempt) {
      for (int c = 0; c < num_classes; ++c) {
        spec.class_centers.col(c) = radius * gaussian().normalized();
      }
      bool ok = true;
      for (int a = 0; a < num_classes && ok; ++a)
        for (int b = a + 1; b < num_classes && ok; ++b)
          ok = (spec.class_centers.col(a) - spec.class_centers.col(b)).norm() >=
               separation;
      if (ok) break;
      if (attempt % 16 == 15) radius *= 1.25;
    }
  }
  spec.validate();
  return spec;
}

/// Isotropic Gaussian samples around each center. Classes are balanced
/// exactly (the first n mod C classes get one extra) and the order shuffled.
inline LabeledSet generate_blobs(const BlobSpec& spec, int n_instances,
                                 std::uint64_t seed) {
  spec.validate();
  if (n_instances < spec.num_classes) {
    throw Error("invalid_config", "need at least one instance per class");
  }
  Rng rng = make_rng(seed, Stream::kBlobs);
  LabeledSet out;
  out.labels.resize(static_cast<std::size_t>(n_instances));
  for (int i = 0; i < n_instances; ++i) out.labels[i] = i % spec.num_classes;
  shuffle_in_place(out.labels, rng);
  out.features.resize(spec.feature_dim, n_instances);
  for (int i = 0; i < n_instances; ++i) {
    for (int k = 0; k < spec.feature_dim; ++k) {
      const double noise = standard_normal(rng);
      out.features(k, i) =
          spec.class_centers(k, out.labels[i]) + spec.class_scale * noise;
    }
  }
  return out;
}

/// Flat Dirichlet draw (normalized exponentials).
inline std::vector<double> sample_simplex(int num_classes, Rng& rng) {
  std::vector<double> p(static_cast<std::size_t>(num_classes));
  double sum = 0.0;
  for (double& v : p) {
    double u;
    do {
      u = uniform_unit(rng);
    } while (u <= 0.0);
    v = -std::log(u);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

inline constexpr int kDefaultProportionRetries = 1000;

/// Bags drawn without replacement from `pool`. Each bag draws proportions
/// from the flat Dirichlet, converts them to counts, and takes that many
/// instances of each class; a draw that exceeds the remaining supply is
/// redrawn. A bag that consumes the entire remaining pool takes the
/// remaining class supply as its counts. Stored proportions are the realized
/// count ratios. `members`, when given, receives the pool indices per bag.
inline LLPDataset make_bags(const LabeledSet& pool, int bag_size, int n_bags,
                            std::uint64_t seed,
                            std::vector<std::vector<int>>* members = nullptr,
                            int max_retries = kDefaultProportionRetries) {
  if (bag_size < 1 || n_bags < 1) {
    throw Error("invalid_config", "bag size and bag count must be >= 1");
  }
  if (static_cast<long>(bag_size) * n_bags > pool.size()) {
    throw Error("pool_exhausted", "pool holds " + std::to_string(pool.size()) +
                                      " instances, bags need " +
                                      std::to_string(static_cast<long>(bag_size) * n_bags));
  }
  int num_classes = 0;
  for (int l : pool.labels) num_classes = std::max(num_classes, l + 1);
  Rng rng = make_rng(seed, Stream::kBags);

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(num_classes));
  for (int i = 0; i < pool.size(); ++i) by_class[pool.labels[i]].push_back(i);
  for (auto& v : by_class) shuffle_in_place(v, rng);
  std::vector<std::size_t> next(by_class.size(), 0);

  LLPDataset out;
  out.num_classes = num_classes;
  out.feature_dim = static_cast<int>(pool.features.rows());
  out.split = SplitTag::kTrain;
  if (members != nullptr) members->clear();

  for (int b = 0; b < n_bags; ++b) {
    Counts available(static_cast<std::size_t>(num_classes));
    long remaining = 0;
    for (int c = 0; c < num_classes; ++c) {
      available[c] = static_cast<int>(by_class[c].size() - next[c]);
      remaining += available[c];
    }
    Counts counts;
    if (remaining == bag_size) {
      counts = available;
    } else {
      bool found = false;
      for (int attempt = 0; attempt <= max_retries && !found; ++attempt) {
        counts = round_counts(sample_simplex(num_classes, rng), bag_size);
        found = true;
        for (int c = 0; c < num_classes; ++c) found = found && counts[c] <= available[c];
      }
      if (!found) {
        throw Error("pool_exhausted",
                    "no feasible proportion for bag " + std::to_string(b) +
                        " after " + std::to_string(max_retries) + " retries");
      }
    }
    std::vector<int> chosen;
    chosen.reserve(static_cast<std::size_t>(bag_size));
    for (int c = 0; c < num_classes; ++c) {
      for (int k = 0; k < counts[c]; ++k) chosen.push_back(by_class[c][next[c]++]);
    }
    shuffle_in_place(chosen, rng);

    Eigen::MatrixXd features(out.feature_dim, bag_size);
    std::vector<int> labels(static_cast<std::size_t>(bag_size));
    for (int j = 0; j < bag_size; ++j) {
      features.col(j) = pool.features.col(chosen[j]);
      labels[j] = pool.labels[chosen[j]];
    }
    std::vector<double> proportions(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) {
      proportions[c] = static_cast<double>(counts[c]) / bag_size;
    }
    out.bags.emplace_back(b, std::move(features), std::move(labels),
                          std::move(proportions));
    if (members != nullptr) members->push_back(std::move(chosen));
  }
  return out;
}

/// Bag-level split: the first round(ratio * n) bags (clamped to [1, n-1])
/// become training bags, the rest validation bags.
inline std::pair<LLPDataset, LLPDataset> split_train_validation(
    const LLPDataset& dataset, double ratio = 0.7) {
  const int n = static_cast<int>(dataset.bags.size());
  if (n < 2) throw Error("too_few_bags", "splitting needs at least 2 bags");
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error("invalid_config", "split ratio must lie in (0,1)");
  }
  const int n_train =
      std::clamp(static_cast<int>(std::lround(ratio * n)), 1, n - 1);
  LLPDataset train{{}, dataset.num_classes, dataset.feature_dim, SplitTag::kTrain};
  LLPDataset validation{{}, dataset.num_classes, dataset.feature_dim,
                        SplitTag::kValidation};
  for (int b = 0; b < n; ++b) {
    (b < n_train ? train : validation).bags.push_back(dataset.bags[b]);
  }
  return {std::move(train), std::move(validation)};
}

}  // namespace llp
