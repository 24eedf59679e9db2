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

// Exact solver for the proportion-constrained labeling problem
//
//   min_Y <Y, costs>  s.t.  every column of Y has one 1,
//                           row c of Y sums to class_counts[c].
//
// The constraint matrix is that of a transportation problem (unit supplies
// per instance, demand k_c per class), so the LP optimum is integral and a
// combinatorial min-cost-flow method recovers it exactly. The solver below
// inserts instances one at a time and routes each along a shortest
// augmenting path. Because the number of classes is small, the residual
// graph is contracted onto class nodes: the arc c -> c' costs the cheapest
// move of an instance currently labeled c over to c'. Each contracted arc is
// backed by a lazily-cleaned min-heap.

#pragma once

#include "llp/domain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <vector>

namespace llp {

struct TransportInstance {
  ScoreMatrix costs;    // C x m
  Counts class_counts;  // row budgets, sum to m
};

inline constexpr double kReducedCostEpsilon = 1e-12;

/// Objective <Y, costs>.
inline double assignment_objective(const PseudoLabelMatrix& y,
                                   const ScoreMatrix& costs) {
  return y.inner(costs);
}

namespace detail {

inline void check_transport(const TransportInstance& inst) {
  const auto num_classes = inst.costs.rows();
  const auto bag_size = inst.costs.cols();
  if (num_classes < 1 || bag_size < 1) {
    throw Error("shape_mismatch", "cost matrix must be non-empty");
  }
  if (static_cast<Eigen::Index>(inst.class_counts.size()) != num_classes) {
    throw Error("shape_mismatch", "class-count length differs from cost rows");
  }
  long total = 0;
  for (int k : inst.class_counts) {
    if (k < 0) throw Error("infeasible_counts", "negative class count");
    total += k;
  }
  if (total != bag_size) {
    throw Error("infeasible_counts",
                "class counts sum to " + std::to_string(total) +
                    " but the bag holds " + std::to_string(bag_size));
  }
  if (!inst.costs.allFinite()) {
    throw Error("non_finite_costs", "cost matrix contains NaN or infinity");
  }
}

struct MoveCandidate {
  double delta;
  int instance;
};

struct MoveCandidateGreater {
  bool operator()(const MoveCandidate& a, const MoveCandidate& b) const {
    if (a.delta != b.delta) return a.delta > b.delta;
    return a.instance > b.instance;
  }
};

using MoveHeap = std::priority_queue<MoveCandidate, std::vector<MoveCandidate>,
                                     MoveCandidateGreater>;

}  // namespace detail

/// Exact minimizer of <Y, costs> over the feasible set. Deterministic: the
/// same input always yields the same matrix (instances are inserted in
/// column order, classes are scanned in index order, and heap ties go to the
/// lower instance index).
inline PseudoLabelMatrix solve_assignment(const TransportInstance& inst) {
  detail::check_transport(inst);
  const int num_classes = static_cast<int>(inst.costs.rows());
  const int bag_size = static_cast<int>(inst.costs.cols());
  const ScoreMatrix& cost = inst.costs;
  const Counts& capacity = inst.class_counts;

  std::vector<int> label(bag_size, -1);
  if (num_classes == 1) {
    std::fill(label.begin(), label.end(), 0);
    return PseudoLabelMatrix::from_labels(1, label);
  }

  std::vector<int> load(num_classes, 0);
  // heaps[c * C + c2]: instances labeled c keyed by cost(c2, j) - cost(c, j).
  std::vector<detail::MoveHeap> heaps(
      static_cast<std::size_t>(num_classes) * num_classes);
  auto heap = [&](int from, int to) -> detail::MoveHeap& {
    return heaps[static_cast<std::size_t>(from) * num_classes + to];
  };
  auto clean_top = [&](int from, int to) -> const detail::MoveCandidate* {
    detail::MoveHeap& h = heap(from, to);
    while (!h.empty() && label[h.top().instance] != from) h.pop();
    return h.empty() ? nullptr : &h.top();
  };
  auto place = [&](int j, int c) {
    label[j] = c;
    for (int to = 0; to < num_classes; ++to) {
      if (to != c) heap(c, to).push({cost(to, j) - cost(c, j), j});
    }
  };

  std::vector<double> dist(num_classes);
  std::vector<int> pred(num_classes);
  std::vector<int> path;
  std::vector<int> movers;

  for (int j = 0; j < bag_size; ++j) {
    for (int c = 0; c < num_classes; ++c) {
      dist[c] = cost(c, j);
      pred[c] = -1;
    }
    // Bellman-Ford over class nodes; arcs may be negative, but the current
    // partial assignment is optimal so there is no negative cycle.
    for (int round = 0; round < num_classes; ++round) {
      bool changed = false;
      for (int from = 0; from < num_classes; ++from) {
        if (load[from] == 0) continue;
        for (int to = 0; to < num_classes; ++to) {
          if (to == from) continue;
          const detail::MoveCandidate* top = clean_top(from, to);
          if (top == nullptr) continue;
          const double candidate = dist[from] + top->delta;
          if (candidate < dist[to] - kReducedCostEpsilon) {
            dist[to] = candidate;
            pred[to] = from;
            changed = true;
          }
        }
      }
      if (!changed) break;
    }

    int target = -1;
    for (int c = 0; c < num_classes; ++c) {
      if (load[c] >= capacity[c]) continue;
      if (target < 0 || dist[c] < dist[target] - kReducedCostEpsilon) {
        target = c;
      }
    }
    if (target < 0) {
      throw Error("internal", "no class with free capacity");
    }

    path.clear();
    for (int c = target; c >= 0; c = pred[c]) {
      path.push_back(c);
      if (static_cast<int>(path.size()) > num_classes) {
        throw Error("internal", "cycle in shortest-path tree");
      }
    }
    // path = [target, ..., root]; collect the instance shifted along each arc
    // before mutating any heap.
    movers.clear();
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
      movers.push_back(clean_top(path[k + 1], path[k])->instance);
    }
    for (std::size_t k = 0; k < movers.size(); ++k) place(movers[k], path[k]);
    place(j, path.back());
    ++load[target];
  }
  return PseudoLabelMatrix::from_labels(num_classes, label);
}

inline constexpr int kBruteForceMaxBagSize = 10;

/// Exhaustive minimizer over every distinct arrangement of the label
/// multiset. Refuses bags larger than `max_bag_size`. Among equal objectives
/// the lexicographically first arrangement wins.
inline PseudoLabelMatrix brute_force_assignment(
    const TransportInstance& inst, int max_bag_size = kBruteForceMaxBagSize) {
  detail::check_transport(inst);
  const int num_classes = static_cast<int>(inst.costs.rows());
  const int bag_size = static_cast<int>(inst.costs.cols());
  if (bag_size > max_bag_size) {
    throw Error("brute_force_cap",
                "brute force refuses bag size " + std::to_string(bag_size) +
                    " (cap " + std::to_string(max_bag_size) + ")");
  }
  std::vector<int> labels;
  labels.reserve(bag_size);
  for (int c = 0; c < num_classes; ++c) {
    labels.insert(labels.end(), inst.class_counts[c], c);
  }
  std::vector<int> best = labels;
  double best_value = std::numeric_limits<double>::infinity();
  do {
    double value = 0.0;
    for (int j = 0; j < bag_size; ++j) value += inst.costs(labels[j], j);
    if (value < best_value) {
      best_value = value;
      best = labels;
    }
  } while (std::next_permutation(labels.begin(), labels.end()));
  return PseudoLabelMatrix::from_labels(num_classes, best);
}

}  // namespace llp
