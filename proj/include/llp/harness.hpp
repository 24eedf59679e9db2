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

// End-to-end experiment driver: benchmark construction, the
// train / score / relabel epoch loop, the proportion-loss baseline,
// validation-based model selection, and bag-size sweeps.

#pragma once

#include "llp/assignment.hpp"
#include "llp/classifier.hpp"
#include "llp/datagen.hpp"
#include "llp/domain.hpp"
#include "llp/labeler.hpp"
#include "llp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace llp {

enum class Method { kFPL, kGreedy, kNaive, kFPLSimple, kPL };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::kFPL: return "FPL";
    case Method::kGreedy: return "Greedy";
    case Method::kNaive: return "Naive";
    case Method::kFPLSimple: return "FPL-Simple";
    case Method::kPL: return "PL";
  }
  return "unknown";
}

inline Method parse_method(const std::string& name) {
  for (Method m : {Method::kFPL, Method::kGreedy, Method::kNaive,
                   Method::kFPLSimple, Method::kPL}) {
    if (name == to_string(m)) return m;
  }
  throw Error("invalid_config", "unknown method: " + name);
}

struct ExperimentConfig {
  Method method = Method::kFPL;

  // Benchmark.
  int num_classes = 3;
  int feature_dim = 16;
  double separation = 8.0;  // minimum center distance, in units of class_scale
  double class_scale = 1.0;
  int bag_size = 1024;
  int n_bags = 100;
  double train_ratio = 0.7;
  double test_fraction = 0.2;  // share of the labeled test set in all data
  double pool_factor = 2.0;    // bag pool size relative to the bag budget

  // Model and training.
  ModelKind model = ModelKind::kMLP;
  int hidden = kDefaultHiddenWidth;
  Activation activation = Activation::kRelu;
  int epochs = 400;
  double learning_rate = 3e-4;
  int batch_bags = 4;
  int max_batch_instances = 0;
  double eta = 5.0;
  PerturbationScale perturbation_scale = PerturbationScale::kFixed;

  std::uint64_t seed = 0;
  std::string output_dir;

  int budget() const { return bag_size * n_bags; }

  /// Full-size protocol: 102400 instances, 400 epochs.
  static ExperimentConfig full_scale() { return ExperimentConfig{}; }

  /// Laptop-size protocol: 10240 instances, 60 epochs.
  static ExperimentConfig desk_scale() {
    ExperimentConfig cfg;
    cfg.separation = 4.0;
    cfg.bag_size = 1024;
    cfg.n_bags = 10;
    cfg.epochs = 60;
    cfg.learning_rate = 3e-3;
    cfg.max_batch_instances = 256;
    return cfg;
  }

  void validate() const {
    if (num_classes < 1 || feature_dim < 1) {
      throw Error("invalid_config", "num_classes and feature_dim must be >= 1");
    }
    if (bag_size < 1 || n_bags < 2) {
      throw Error("invalid_config", "need bag_size >= 1 and n_bags >= 2");
    }
    if (epochs < 1) throw Error("invalid_config", "epochs must be >= 1");
    if (batch_bags < 1) throw Error("invalid_config", "batch_bags must be >= 1");
    if (!(learning_rate >= 0.0)) throw Error("invalid_config", "learning_rate < 0");
    if (!(eta >= 0.0)) throw Error("invalid_config", "eta < 0");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
      throw Error("invalid_config", "test_fraction must lie in (0,1)");
    }
    if (!(pool_factor >= 1.0)) throw Error("invalid_config", "pool_factor < 1");
  }
};

struct Benchmark {
  BlobSpec spec;
  LLPDataset train;
  LLPDataset validation;
  LabeledSet test;
  std::vector<std::vector<int>> members;  // pool indices per bag id
};

/// Blob benchmark fully determined by (cfg data fields, cfg.seed).
inline Benchmark build_benchmark(const ExperimentConfig& cfg) {
  cfg.validate();
  Benchmark out;
  const double scale = cfg.class_scale;
  out.spec = make_blob_spec(cfg.num_classes, cfg.feature_dim,
                            cfg.separation * (scale > 0.0 ? scale : 1.0), scale,
                            derive_seed(cfg.seed, Stream::kCenters));
  const int budget = cfg.budget();
  const int pool_size = static_cast<int>(std::ceil(cfg.pool_factor * budget));
  const LabeledSet pool =
      generate_blobs(out.spec, pool_size, derive_seed(cfg.seed, Stream::kBlobs));
  const LLPDataset bags = make_bags(pool, cfg.bag_size, cfg.n_bags,
                                    derive_seed(cfg.seed, Stream::kBags),
                                    &out.members);
  std::tie(out.train, out.validation) = split_train_validation(bags, cfg.train_ratio);
  const int test_size = std::max(
      cfg.num_classes,
      static_cast<int>(std::lround(budget * cfg.test_fraction / (1.0 - cfg.test_fraction))));
  out.test = generate_blobs(out.spec, test_size,
                            derive_seed(cfg.seed, Stream::kTestSet));
  return out;
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> pseudo_label_accuracy;  // absent for PL or unlabeled bags
  std::optional<double> update_rate;            // absent for PL
  double validation_error = 0.0;
  double test_accuracy = 0.0;
};

struct RunResult {
  ClassifierModel final_model;
  ClassifierModel selected_model;
  int selected_epoch = 0;
  std::vector<EpochRecord> records;
};

/// Mean over bags of (1/C) sum_c |p_c - mean_j conf_{c,j}|.
inline double mean_abs_proportion_error(const ClassifierModel& model,
                                        std::span<const Bag> bags) {
  if (bags.empty()) throw Error("empty_validation", "no validation bags");
  double total = 0.0;
  for (const Bag& bag : bags) {
    if (bag.num_classes() != model.num_classes()) {
      throw Error("shape_mismatch", "bag class count differs from model");
    }
    const Eigen::VectorXd predicted = predict_confidences(model, bag).rowwise().mean();
    double err = 0.0;
    for (int c = 0; c < bag.num_classes(); ++c) {
      err += std::abs(bag.proportions()[c] - predicted[c]);
    }
    total += err / bag.num_classes();
  }
  return total / static_cast<double>(bags.size());
}

/// Index of the largest entry; ties go to the lowest index.
inline int argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& v) {
  int best = 0;
  for (int c = 1; c < v.size(); ++c)
    if (v[c] > v[best]) best = c;
  return best;
}

/// Fraction of instances whose argmax confidence equals the true label.
inline double evaluate_instance_accuracy(const ClassifierModel& model,
                                         const LabeledSet& test) {
  if (test.size() == 0) return 0.0;
  const Eigen::MatrixXd conf = model.predict(test.features);
  int correct = 0;
  for (int i = 0; i < test.size(); ++i) {
    if (argmax_lowest(conf.col(i)) == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / test.size();
}

namespace detail {

inline ClassifierModel initial_model(const ExperimentConfig& cfg, int feature_dim,
                                     int num_classes) {
  ClassifierModel model = cfg.model == ModelKind::kSoftmaxLinear
                              ? ClassifierModel::softmax_linear(feature_dim, num_classes)
                              : ClassifierModel::mlp(feature_dim, num_classes,
                                                     cfg.hidden, cfg.activation);
  Rng rng = make_rng(cfg.seed, Stream::kModelInit);
  model.initialize(rng);
  return model;
}

inline LabelerConfig labeler_config(const ExperimentConfig& cfg) {
  LabelerConfig lc;
  lc.eta = cfg.eta;
  lc.perturbation_scale = cfg.perturbation_scale;
  lc.unlikelihood = cfg.method == Method::kFPLSimple ? UnlikelihoodVariant::kSimple
                                                     : UnlikelihoodVariant::kFull;
  switch (cfg.method) {
    case Method::kGreedy: lc.strategy = Strategy::kGreedy; break;
    case Method::kNaive: lc.strategy = Strategy::kNaive; break;
    default: lc.strategy = Strategy::kFPL; break;
  }
  return lc;
}

inline Error with_context(const Error& e, int epoch, std::optional<int> bag) {
  std::string where = "epoch " + std::to_string(epoch);
  if (bag) where += ", bag " + std::to_string(*bag);
  return Error(e.code(), where + ": " + e.what());
}

}  // namespace detail

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Runs the configured method on a prepared benchmark. Each epoch trains the
/// classifier on the current pseudo labels (or on the proportion loss for
/// PL), scores every training bag with the freshly trained model, and picks
/// the next pseudo labels. The selected model is the epoch checkpoint with
/// the lowest validation proportion error (earliest on ties).
inline RunResult run_llp_training(const ExperimentConfig& cfg, const Benchmark& data,
                                  const EpochCallback& on_epoch = {}) {
  cfg.validate();
  data.train.validate();
  if (data.train.bags.empty()) throw Error("empty_train", "no training bags");
  const int num_classes = data.train.num_classes;
  const std::span<const Bag> train(data.train.bags);

  ClassifierModel model =
      detail::initial_model(cfg, data.train.feature_dim, num_classes);
  AdamOptimizer opt(model.num_parameters(), cfg.learning_rate);
  const TrainOptions train_options{cfg.batch_bags, cfg.max_batch_instances};
  const LabelerConfig labeler = detail::labeler_config(cfg);
  const bool pseudo = cfg.method != Method::kPL;

  std::vector<BagLabelerState> states;
  std::vector<std::vector<int>> labels;
  if (pseudo) {
    states.reserve(train.size());
    for (const Bag& bag : train) {
      states.push_back(BagLabelerState::initialize(bag, cfg.seed, false));
      labels.push_back(states.back().current_labels().labels());
    }
  }
  const bool labeled = std::all_of(train.begin(), train.end(),
                                   [](const Bag& b) { return b.has_true_labels(); });
  const double total_instances = static_cast<double>(data.train.total_instances());

  RunResult result;
  double best_error = std::numeric_limits<double>::infinity();
  std::vector<std::vector<int>> previous;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    if (pseudo) {
      long agree = 0;
      long changed = 0;
      for (std::size_t b = 0; b < train.size(); ++b) {
        for (int j = 0; j < train[b].size(); ++j) {
          if (labeled && labels[b][j] == train[b].true_labels()[j]) ++agree;
          if (!previous.empty() && labels[b][j] != previous[b][j]) ++changed;
        }
      }
      if (labeled) rec.pseudo_label_accuracy = agree / total_instances;
      rec.update_rate = previous.empty() ? 1.0 : changed / total_instances;
    }

    Rng order_rng = make_rng(cfg.seed, Stream::kBatchOrder,
                             {static_cast<std::uint64_t>(epoch)});
    try {
      rec.train_loss =
          pseudo ? train_epoch_cross_entropy(model, train, labels, opt,
                                             train_options, &order_rng)
                 : train_epoch_proportion_loss(model, train, opt, train_options,
                                               &order_rng);
    } catch (const Error& e) {
      throw detail::with_context(e, epoch, std::nullopt);
    }

    if (pseudo) {
      previous = labels;
      for (std::size_t b = 0; b < train.size(); ++b) {
        try {
          const ScoreMatrix conf = predict_confidences(model, train[b]);
          const ScoreMatrix loss = unlikelihood_for(
              conf, states[b].current_labels(), labeler.unlikelihood);
          labels[b] = update_labels(states[b], loss, labeler).labels();
        } catch (const Error& e) {
          throw detail::with_context(e, epoch, train[b].id());
        }
      }
    }

    rec.validation_error =
        data.validation.bags.empty()
            ? 0.0
            : mean_abs_proportion_error(model, data.validation.bags);
    rec.test_accuracy = evaluate_instance_accuracy(model, data.test);
    if (rec.validation_error < best_error) {
      best_error = rec.validation_error;
      result.selected_model = model;
      result.selected_epoch = epoch;
    }
    result.records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.final_model = std::move(model);
  return result;
}

inline RunResult run_llp_training(const ExperimentConfig& cfg,
                                  const EpochCallback& on_epoch = {}) {
  return run_llp_training(cfg, build_benchmark(cfg), on_epoch);
}

struct SweepCell {
  Method method = Method::kFPL;
  int bag_size = 0;
  int n_bags = 0;
  std::uint64_t seed = 0;
  int selected_epoch = 0;
  double selected_test_accuracy = 0.0;
  double final_test_accuracy = 0.0;
  std::vector<EpochRecord> records;
};

struct SweepSummary {
  double mean = 0.0;
  double stddev = 0.0;
  int count = 0;
};

struct SweepResult {
  std::vector<SweepCell> cells;

  /// Mean and sample standard deviation over seeds for one table entry.
  SweepSummary summary(Method method, int bag_size, bool selected = true) const {
    std::vector<double> values;
    for (const SweepCell& c : cells) {
      if (c.method == method && c.bag_size == bag_size) {
        values.push_back(selected ? c.selected_test_accuracy : c.final_test_accuracy);
      }
    }
    SweepSummary s;
    s.count = static_cast<int>(values.size());
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= s.count;
    if (s.count > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - s.mean) * (v - s.mean);
      s.stddev = std::sqrt(ss / (s.count - 1));
    }
    return s;
  }
};

/// n_bags for each bag size under a fixed instance budget.
inline std::vector<int> bags_per_size(int budget, std::span<const int> bag_sizes) {
  std::vector<int> out;
  for (int m : bag_sizes) {
    if (m < 1 || budget % m != 0) {
      throw Error("invalid_config", "budget " + std::to_string(budget) +
                                        " is not divisible by bag size " +
                                        std::to_string(m));
    }
    out.push_back(budget / m);
  }
  return out;
}

/// Every (method, bag size, seed) cell of the grid. Cells are independent and
/// spread over `threads` workers; results do not depend on the worker count.
inline SweepResult sweep_bag_sizes(const ExperimentConfig& base,
                                   std::span<const int> bag_sizes,
                                   std::span<const Method> methods,
                                   std::span<const std::uint64_t> seeds, int budget,
                                   int threads = 1) {
  const std::vector<int> n_bags = bags_per_size(budget, bag_sizes);
  SweepResult result;
  std::vector<ExperimentConfig> configs;
  for (std::size_t s = 0; s < bag_sizes.size(); ++s) {
    for (Method method : methods) {
      for (std::uint64_t seed : seeds) {
        ExperimentConfig cfg = base;
        cfg.method = method;
        cfg.bag_size = bag_sizes[s];
        cfg.n_bags = n_bags[s];
        cfg.seed = seed;
        cfg.validate();
        configs.push_back(cfg);
      }
    }
  }
  result.cells.resize(configs.size());
  auto run_cell = [&](std::size_t k) {
    const ExperimentConfig& cfg = configs[k];
    RunResult run = run_llp_training(cfg);
    SweepCell& cell = result.cells[k];
    cell.method = cfg.method;
    cell.bag_size = cfg.bag_size;
    cell.n_bags = cfg.n_bags;
    cell.seed = cfg.seed;
    cell.selected_epoch = run.selected_epoch;
    cell.selected_test_accuracy = run.records[run.selected_epoch - 1].test_accuracy;
    cell.final_test_accuracy = run.records.back().test_accuracy;
    cell.records = std::move(run.records);
  };
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(configs.size())));
  if (workers == 1) {
    for (std::size_t k = 0; k < configs.size(); ++k) run_cell(k);
    return result;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = static_cast<std::size_t>(w); k < configs.size();
             k += static_cast<std::size_t>(workers)) {
          run_cell(k);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return result;
}

}  // namespace llp
