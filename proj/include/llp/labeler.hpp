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

// Online pseudo-label decisions. Each bag keeps the running sum of the
// unlikelihood matrices it has observed; the next pseudo labels minimize that
// sum plus a fresh Gaussian perturbation (follow the perturbed leader), or
// the unperturbed sum (Greedy), or only the latest matrix (Naive).

#pragma once

#include "llp/assignment.hpp"
#include "llp/domain.hpp"
#include "llp/rng.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace llp {

enum class Strategy { kFPL, kGreedy, kNaive };
enum class UnlikelihoodVariant { kFull, kSimple };

/// How the perturbation enters the cost. kFixed uses cumulative + eta * Z;
/// kEpochScaled uses cumulative + t * eta * Z, the literal reading where the
/// perturbation sits inside the sum over past epochs.
enum class PerturbationScale { kFixed, kEpochScaled };

struct LabelerConfig {
  double eta = 5.0;
  Strategy strategy = Strategy::kFPL;
  UnlikelihoodVariant unlikelihood = UnlikelihoodVariant::kFull;
  PerturbationScale perturbation_scale = PerturbationScale::kFixed;
  bool audit_regret = false;

  void validate() const {
    if (!(eta >= 0.0) || !std::isfinite(eta)) {
      throw Error("invalid_config", "eta must be a finite nonnegative number");
    }
  }
};

/// Uniformly random feasible labeling: the multiset with k_c copies of each
/// class, shuffled over the columns.
inline PseudoLabelMatrix init_pseudo_labels(const Bag& bag, Rng& rng) {
  std::vector<int> labels;
  labels.reserve(bag.size());
  for (int c = 0; c < bag.num_classes(); ++c) {
    labels.insert(labels.end(), bag.class_counts()[c], c);
  }
  shuffle_in_place(labels, rng);
  return PseudoLabelMatrix::from_labels(bag.num_classes(), labels);
}

namespace detail {

inline void check_confidences(const ScoreMatrix& conf) {
  for (Eigen::Index j = 0; j < conf.cols(); ++j) {
    double sum = 0.0;
    for (Eigen::Index c = 0; c < conf.rows(); ++c) {
      const double v = conf(c, j);
      if (!std::isfinite(v) || v < -kProbabilityTolerance ||
          v > 1.0 + kProbabilityTolerance) {
        throw Error("invalid_confidences",
                    "confidence column " + std::to_string(j) +
                        " has an entry outside [0,1]");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kProbabilityTolerance) {
      throw Error("invalid_confidences", "confidence column " +
                                             std::to_string(j) +
                                             " does not sum to 1");
    }
  }
}

}  // namespace detail

/// Assigned cells score 1 - conf; unassigned cells score the gap between the
/// column's maximum confidence and their own.
inline ScoreMatrix compute_unlikelihood(const ScoreMatrix& conf,
                                        const PseudoLabelMatrix& current) {
  if (conf.rows() != current.num_classes() || conf.cols() != current.bag_size()) {
    throw Error("shape_mismatch", "confidences and labels differ in shape");
  }
  detail::check_confidences(conf);
  ScoreMatrix out(conf.rows(), conf.cols());
  for (Eigen::Index j = 0; j < conf.cols(); ++j) {
    const double top = conf.col(j).maxCoeff();
    for (Eigen::Index c = 0; c < conf.rows(); ++c) {
      const double v = current(static_cast<int>(c), static_cast<int>(j)) != 0
                           ? 1.0 - conf(c, j)
                           : top - conf(c, j);
      out(c, j) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

/// 1 - conf for every cell.
inline ScoreMatrix compute_simple_unlikelihood(const ScoreMatrix& conf) {
  detail::check_confidences(conf);
  return (1.0 - conf.array()).max(0.0).min(1.0).matrix();
}

/// Per-bag decision state.
class BagLabelerState {
 public:
  BagLabelerState() = default;

  /// Starts from `initial` labels. `seed` is the master seed; perturbations
  /// for epoch t are drawn from a stream derived from (seed, bag id, t).
  BagLabelerState(const Bag& bag, PseudoLabelMatrix initial, std::uint64_t seed,
                  bool audit)
      : bag_id_(bag.id()),
        counts_(bag.class_counts()),
        current_(std::move(initial)),
        cumulative_(ScoreMatrix::Zero(bag.num_classes(), bag.size())),
        seed_(seed),
        audit_(audit) {
    if (!validate_feasible(current_, bag)) {
      throw Error("infeasible_labels", "initial labels are infeasible for bag " +
                                           std::to_string(bag.id()));
    }
  }

  /// Random initial labels from the (seed, bag id) stream.
  static BagLabelerState initialize(const Bag& bag, std::uint64_t seed,
                                    bool audit) {
    Rng rng = make_rng(seed, Stream::kInitLabels,
                       {static_cast<std::uint64_t>(bag.id())});
    return BagLabelerState(bag, init_pseudo_labels(bag, rng), seed, audit);
  }

  int bag_id() const { return bag_id_; }
  const Counts& class_counts() const { return counts_; }
  const PseudoLabelMatrix& current_labels() const { return current_; }
  const ScoreMatrix& cumulative_unlikelihood() const { return cumulative_; }
  int epochs_observed() const { return epochs_; }
  bool auditing() const { return audit_; }

  /// Loss matrices observed so far (audit mode only).
  const std::vector<ScoreMatrix>& loss_history() const { return losses_; }
  /// Labels in force when each loss was observed (audit mode only).
  const std::vector<PseudoLabelMatrix>& decision_history() const {
    return decisions_;
  }

  /// Adds `loss` to the running sum and records history when auditing.
  void observe(const ScoreMatrix& loss) {
    if (loss.rows() != cumulative_.rows() || loss.cols() != cumulative_.cols()) {
      throw Error("shape_mismatch", "loss matrix shape differs from bag");
    }
    if (!loss.allFinite()) {
      throw Error("non_finite_costs", "loss matrix contains NaN or infinity");
    }
    cumulative_ += loss;
    ++epochs_;
    if (audit_) {
      losses_.push_back(loss);
      decisions_.push_back(current_);
    }
  }

  /// Gaussian perturbation for the most recently observed epoch.
  ScoreMatrix draw_perturbation() const {
    Rng rng = make_rng(seed_, Stream::kPerturbation,
                       {static_cast<std::uint64_t>(bag_id_),
                        static_cast<std::uint64_t>(epochs_)});
    ScoreMatrix z(cumulative_.rows(), cumulative_.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j)
      for (Eigen::Index c = 0; c < z.rows(); ++c) z(c, j) = standard_normal(rng);
    return z;
  }

  void set_current(PseudoLabelMatrix next) { current_ = std::move(next); }

 private:
  int bag_id_ = 0;
  Counts counts_;
  PseudoLabelMatrix current_;
  ScoreMatrix cumulative_;
  std::uint64_t seed_ = 0;
  bool audit_ = false;
  int epochs_ = 0;
  std::vector<ScoreMatrix> losses_;
  std::vector<PseudoLabelMatrix> decisions_;
};

/// Observes `new_loss`, then picks the minimizer of cumulative + eta * Z.
inline PseudoLabelMatrix fpl_update(BagLabelerState& state,
                                    const ScoreMatrix& new_loss,
                                    const LabelerConfig& cfg) {
  cfg.validate();
  state.observe(new_loss);
  ScoreMatrix costs = state.cumulative_unlikelihood();
  double scale = cfg.eta;
  if (cfg.perturbation_scale == PerturbationScale::kEpochScaled) {
    scale *= state.epochs_observed();
  }
  costs += scale * state.draw_perturbation();
  PseudoLabelMatrix next = solve_assignment({costs, state.class_counts()});
  state.set_current(next);
  return next;
}

/// As fpl_update without the perturbation.
inline PseudoLabelMatrix greedy_update(BagLabelerState& state,
                                       const ScoreMatrix& new_loss) {
  state.observe(new_loss);
  PseudoLabelMatrix next =
      solve_assignment({state.cumulative_unlikelihood(), state.class_counts()});
  state.set_current(next);
  return next;
}

/// Minimizer of the latest loss alone.
inline PseudoLabelMatrix naive_update(const Bag& bag, const ScoreMatrix& new_loss) {
  return solve_assignment({new_loss, bag.class_counts()});
}

/// Naive decision that also keeps the bag state's bookkeeping current.
inline PseudoLabelMatrix naive_update(BagLabelerState& state,
                                      const ScoreMatrix& new_loss) {
  state.observe(new_loss);
  PseudoLabelMatrix next = solve_assignment({new_loss, state.class_counts()});
  state.set_current(next);
  return next;
}

/// Dispatches on cfg.strategy.
inline PseudoLabelMatrix update_labels(BagLabelerState& state,
                                       const ScoreMatrix& new_loss,
                                       const LabelerConfig& cfg) {
  switch (cfg.strategy) {
    case Strategy::kFPL: return fpl_update(state, new_loss, cfg);
    case Strategy::kGreedy: return greedy_update(state, new_loss);
    case Strategy::kNaive: return naive_update(state, new_loss);
  }
  throw Error("invalid_config", "unknown strategy");
}

/// Unlikelihood of the configured variant.
inline ScoreMatrix unlikelihood_for(const ScoreMatrix& conf,
                                    const PseudoLabelMatrix& current,
                                    UnlikelihoodVariant variant) {
  return variant == UnlikelihoodVariant::kFull
             ? compute_unlikelihood(conf, current)
             : compute_simple_unlikelihood(conf);
}

struct RegretReport {
  double online_loss = 0.0;      // sum_t <Y[t], L[t]>
  double hindsight_loss = 0.0;   // min_Y sum_t <Y, L[t]>
  double regret = 0.0;
  PseudoLabelMatrix best_in_hindsight;
};

/// Online loss minus the best fixed labeling in hindsight.
inline RegretReport regret_report(std::span<const PseudoLabelMatrix> decisions,
                                  std::span<const ScoreMatrix> losses,
                                  const Counts& counts) {
  if (decisions.empty() || losses.empty()) {
    throw Error("empty_history", "regret needs at least one epoch");
  }
  if (decisions.size() != losses.size()) {
    throw Error("shape_mismatch", "decision and loss histories differ in length");
  }
  RegretReport report;
  ScoreMatrix total = ScoreMatrix::Zero(losses[0].rows(), losses[0].cols());
  for (std::size_t t = 0; t < losses.size(); ++t) {
    report.online_loss += decisions[t].inner(losses[t]);
    total += losses[t];
  }
  report.best_in_hindsight = solve_assignment({total, counts});
  report.hindsight_loss = report.best_in_hindsight.inner(total);
  report.regret = report.online_loss - report.hindsight_loss;
  return report;
}

inline double measure_regret(std::span<const PseudoLabelMatrix> decisions,
                             std::span<const ScoreMatrix> losses,
                             const Bag& bag) {
  return regret_report(decisions, losses, bag.class_counts()).regret;
}

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::kFPL: return "FPL";
    case Strategy::kGreedy: return "Greedy";
    case Strategy::kNaive: return "Naive";
  }
  return "unknown";
}

}  // namespace llp
