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

// Core value types shared across the library: bags, pseudo-label matrices,
// score matrices, and the proportion/count conversions that tie them to the
// per-bag class-count constraints.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace llp {

/// Library error. `code` is a short machine-readable tag surfaced by the CLI.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

/// Real C x m matrix: confidences, unlikelihoods, cumulative losses, costs.
using ScoreMatrix = Eigen::MatrixXd;

/// Per-class instance counts k_c of a bag.
using Counts = std::vector<int>;

inline constexpr double kProportionTolerance = 1e-9;
inline constexpr double kProbabilityTolerance = 1e-6;

/// Class labels are stored 0-based; `kUnknownLabel` marks a held-out label.
inline constexpr int kUnknownLabel = -1;

struct Instance {
  Eigen::VectorXd features;
  std::optional<int> true_label;
};

namespace detail {

inline void check_proportions(std::span<const double> proportions) {
  if (proportions.empty()) {
    throw Error("invalid_proportions", "proportion vector is empty");
  }
  double sum = 0.0;
  for (double p : proportions) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0 + kProportionTolerance) {
      throw Error("invalid_proportions",
                  "proportions must lie in [0,1], got " + std::to_string(p));
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kProportionTolerance) {
    throw Error("invalid_proportions",
                "proportions must sum to 1, got " + std::to_string(sum));
  }
}

}  // namespace detail

/// Largest-remainder conversion of proportions into integer counts summing
/// to m. Leftover units go to the largest fractional parts m*p_c - floor(m*p_c),
/// ties to the lower class index.
inline Counts round_counts(std::span<const double> proportions, int m) {
  detail::check_proportions(proportions);
  if (m < 1) throw Error("invalid_bag_size", "bag size must be >= 1");

  const std::size_t num_classes = proportions.size();
  Counts counts(num_classes);
  std::vector<double> remainder(num_classes);
  int assigned = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double exact = static_cast<double>(m) * proportions[c];
    // Snap values within rounding noise of an integer so that exact
    // multiples of 1/m never lose a unit to floating-point error.
    const double nearest = std::round(exact);
    const double value =
        std::abs(exact - nearest) < 1e-9 * std::max(1.0, exact) ? nearest
                                                                 : exact;
    counts[c] = static_cast<int>(std::floor(value));
    remainder[c] = value - counts[c];
    assigned += counts[c];
  }
  std::vector<std::size_t> order(num_classes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b];
  });
  // The sum of remainders equals m - assigned, itself < num_classes.
  int leftover = m - assigned;
  for (std::size_t k = 0; leftover > 0; k = (k + 1) % num_classes, --leftover) {
    ++counts[order[k]];
  }
  while (leftover < 0) {
    // Only reachable if the proportions overshoot 1 within tolerance.
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    ++leftover;
  }
  return counts;
}

/// 0/1 matrix of shape (classes x bag size). Feasible matrices have exactly
/// one 1 per column and row sums equal to the bag's class counts.
class PseudoLabelMatrix {
 public:
  using Entries = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

  PseudoLabelMatrix() = default;
  PseudoLabelMatrix(int num_classes, int bag_size)
      : entries_(Entries::Zero(num_classes, bag_size)) {}

  explicit PseudoLabelMatrix(Entries entries) : entries_(std::move(entries)) {}

  /// One-hot matrix with column j set at row labels[j].
  static PseudoLabelMatrix from_labels(int num_classes,
                                       std::span<const int> labels) {
    PseudoLabelMatrix y(num_classes, static_cast<int>(labels.size()));
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] < 0 || labels[j] >= num_classes) {
        throw Error("invalid_label", "label out of range: " +
                                         std::to_string(labels[j]));
      }
      y.entries_(labels[j], static_cast<Eigen::Index>(j)) = 1;
    }
    return y;
  }

  int num_classes() const { return static_cast<int>(entries_.rows()); }
  int bag_size() const { return static_cast<int>(entries_.cols()); }

  std::uint8_t operator()(int c, int j) const { return entries_(c, j); }
  void set(int c, int j, bool value) { entries_(c, j) = value ? 1 : 0; }

  const Entries& entries() const { return entries_; }

  Counts row_sums() const {
    Counts sums(num_classes(), 0);
    for (int j = 0; j < bag_size(); ++j)
      for (int c = 0; c < num_classes(); ++c) sums[c] += entries_(c, j);
    return sums;
  }

  std::vector<int> column_sums() const {
    std::vector<int> sums(bag_size(), 0);
    for (int j = 0; j < bag_size(); ++j)
      for (int c = 0; c < num_classes(); ++c) sums[j] += entries_(c, j);
    return sums;
  }

  /// Assigned class per column. Throws unless every column is one-hot.
  std::vector<int> labels() const {
    std::vector<int> out(bag_size(), -1);
    for (int j = 0; j < bag_size(); ++j) {
      int hits = 0;
      for (int c = 0; c < num_classes(); ++c) {
        if (entries_(c, j) != 0) {
          out[j] = c;
          ++hits;
        }
      }
      if (hits != 1) {
        throw Error("not_one_hot", "column " + std::to_string(j) +
                                       " does not hold exactly one label");
      }
    }
    return out;
  }

  /// Frobenius inner product <Y, S> = sum of S over the cells set in Y.
  double inner(const ScoreMatrix& scores) const {
    if (scores.rows() != entries_.rows() || scores.cols() != entries_.cols()) {
      throw Error("shape_mismatch", "score matrix shape differs from labels");
    }
    double total = 0.0;
    for (int j = 0; j < bag_size(); ++j)
      for (int c = 0; c < num_classes(); ++c)
        if (entries_(c, j) != 0) total += scores(c, j);
    return total;
  }

  friend bool operator==(const PseudoLabelMatrix& a,
                         const PseudoLabelMatrix& b) {
    return a.entries_.rows() == b.entries_.rows() &&
           a.entries_.cols() == b.entries_.cols() &&
           a.entries_ == b.entries_;
  }

 private:
  Entries entries_;
};

/// A bag of instances with its label proportions. Features are stored
/// column-wise (d x m); true labels are kept for evaluation only.
class Bag {
 public:
  Bag() = default;

  /// Builds a bag and derives class counts with round_counts.
  Bag(int id, Eigen::MatrixXd features, std::vector<int> true_labels,
      std::vector<double> proportions)
      : id_(id),
        features_(std::move(features)),
        true_labels_(std::move(true_labels)),
        proportions_(std::move(proportions)) {
    if (features_.cols() < 1) throw Error("empty_bag", "bag has no instances");
    if (true_labels_.empty()) {
      true_labels_.assign(static_cast<std::size_t>(features_.cols()),
                          kUnknownLabel);
    }
    if (static_cast<Eigen::Index>(true_labels_.size()) != features_.cols()) {
      throw Error("shape_mismatch", "label count differs from instance count");
    }
    counts_ = round_counts(proportions_, size());
    const int c = num_classes();
    for (int label : true_labels_) {
      if (label != kUnknownLabel && (label < 0 || label >= c)) {
        throw Error("invalid_label",
                    "true label out of range: " + std::to_string(label));
      }
    }
  }

  int id() const { return id_; }
  int size() const { return static_cast<int>(features_.cols()); }
  int num_classes() const { return static_cast<int>(proportions_.size()); }
  int feature_dim() const { return static_cast<int>(features_.rows()); }

  const Eigen::MatrixXd& features() const { return features_; }
  const std::vector<int>& true_labels() const { return true_labels_; }
  const std::vector<double>& proportions() const { return proportions_; }
  const Counts& class_counts() const { return counts_; }

  bool has_true_labels() const {
    return std::none_of(true_labels_.begin(), true_labels_.end(),
                        [](int l) { return l == kUnknownLabel; });
  }

  Instance instance(int j) const {
    Instance out{features_.col(j), std::nullopt};
    if (true_labels_[j] != kUnknownLabel) out.true_label = true_labels_[j];
    return out;
  }

 private:
  int id_ = 0;
  Eigen::MatrixXd features_;
  std::vector<int> true_labels_;
  std::vector<double> proportions_;
  Counts counts_;
};

enum class SplitTag { kTrain, kValidation, kTest };

inline const char* to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kValidation: return "validation";
    case SplitTag::kTest: return "test";
  }
  return "unknown";
}

struct LLPDataset {
  std::vector<Bag> bags;
  int num_classes = 0;
  int feature_dim = 0;
  SplitTag split = SplitTag::kTrain;

  /// Throws if any bag disagrees with the dataset-wide C or d.
  void validate() const {
    for (const Bag& bag : bags) {
      if (bag.num_classes() != num_classes || bag.feature_dim() != feature_dim) {
        throw Error("shape_mismatch",
                    "bag " + std::to_string(bag.id()) +
                        " does not match dataset class count or dimension");
      }
    }
  }

  std::size_t total_instances() const {
    std::size_t n = 0;
    for (const Bag& bag : bags) n += static_cast<std::size_t>(bag.size());
    return n;
  }
};

/// Labeled instances outside any bag (generated pools, test sets).
struct LabeledSet {
  Eigen::MatrixXd features;  // d x n
  std::vector<int> labels;

  int size() const { return static_cast<int>(features.cols()); }
};

/// Row sums divided by the bag size.
inline std::vector<double> label_proportion(const PseudoLabelMatrix& y) {
  if (y.bag_size() < 1) throw Error("empty_bag", "label matrix has no columns");
  const Counts sums = y.row_sums();
  std::vector<double> out(sums.size());
  for (std::size_t c = 0; c < sums.size(); ++c) {
    out[c] = static_cast<double>(sums[c]) / y.bag_size();
  }
  return out;
}

/// True iff every column holds one label and the row sums equal `counts`.
inline bool validate_feasible(const PseudoLabelMatrix& y, const Counts& counts) {
  if (static_cast<int>(counts.size()) != y.num_classes()) {
    throw Error("shape_mismatch", "class-count vector length differs from rows");
  }
  for (int s : y.column_sums())
    if (s != 1) return false;
  for (int j = 0; j < y.bag_size(); ++j)
    for (int c = 0; c < y.num_classes(); ++c)
      if (y(c, j) > 1) return false;
  return y.row_sums() == counts;
}

inline bool validate_feasible(const PseudoLabelMatrix& y, const Bag& bag) {
  if (y.num_classes() != bag.num_classes() || y.bag_size() != bag.size()) {
    throw Error("shape_mismatch", "label matrix shape differs from bag");
  }
  return validate_feasible(y, bag.class_counts());
}

/// Label matrix of the bag's hidden true labels.
inline PseudoLabelMatrix true_label_matrix(const Bag& bag) {
  if (!bag.has_true_labels()) {
    throw Error("missing_labels", "bag " + std::to_string(bag.id()) +
                                      " has unknown true labels");
  }
  return PseudoLabelMatrix::from_labels(bag.num_classes(), bag.true_labels());
}

}  // namespace llp
