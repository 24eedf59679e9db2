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

// Small differentiable classifiers with softmax confidence output, trained
// either on per-instance pseudo labels (cross-entropy) or on bag-level label
// proportions (proportion loss). Gradients are written out by hand.
//
// All parameters live in one flat vector so that the optimizer and the
// finite-difference checker can treat every model uniformly. Layouts
// (column-major blocks, in order):
//   SoftmaxLinear: W (C x d), b (C)
//   MLP:           W1 (h x d), b1 (h), W2 (C x h), b2 (C)

#pragma once

#include "llp/domain.hpp"
#include "llp/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace llp {

enum class ModelKind { kSoftmaxLinear, kMLP };
enum class Activation { kRelu, kTanh };

inline constexpr int kDefaultHiddenWidth = 64;
inline constexpr double kLogClamp = 1e-12;

/// Column-wise softmax with max subtraction.
inline Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double top = logits.col(j).maxCoeff();
    out.col(j) = (logits.col(j).array() - top).exp().matrix();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

class ClassifierModel {
 public:
  ClassifierModel() = default;

  /// Zero-initialized linear softmax model.
  static ClassifierModel softmax_linear(int feature_dim, int num_classes) {
    return ClassifierModel(ModelKind::kSoftmaxLinear, feature_dim, 0,
                           num_classes, Activation::kRelu);
  }

  /// Zero-initialized one-hidden-layer network d -> h -> C.
  static ClassifierModel mlp(int feature_dim, int num_classes,
                             int hidden = kDefaultHiddenWidth,
                             Activation activation = Activation::kRelu) {
    if (hidden < 1) throw Error("invalid_config", "hidden width must be >= 1");
    return ClassifierModel(ModelKind::kMLP, feature_dim, hidden, num_classes,
                           activation);
  }

  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
  void initialize(Rng& rng) {
    params_.setZero();
    auto fill = [&](Eigen::Index offset, Eigen::Index count, int fan_in) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (Eigen::Index k = 0; k < count; ++k) {
        params_[offset + k] = scale * (2.0 * uniform_unit(rng) - 1.0);
      }
    };
    if (kind_ == ModelKind::kSoftmaxLinear) {
      fill(0, static_cast<Eigen::Index>(classes_) * input_, input_);
    } else {
      fill(0, static_cast<Eigen::Index>(hidden_) * input_, input_);
      fill(w2_offset(), static_cast<Eigen::Index>(classes_) * hidden_, hidden_);
    }
  }

  ModelKind kind() const { return kind_; }
  Activation activation() const { return activation_; }
  int input_dim() const { return input_; }
  int hidden_dim() const { return hidden_; }
  int num_classes() const { return classes_; }
  Eigen::Index num_parameters() const { return params_.size(); }

  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::VectorXd& parameters() { return params_; }

  struct Forward {
    Eigen::MatrixXd hidden_pre;  // MLP only
    Eigen::MatrixXd hidden;      // MLP only
    Eigen::MatrixXd logits;
  };

  /// Forward pass on column-wise inputs (d x n).
  Forward forward(const Eigen::MatrixXd& x) const {
    if (x.rows() != input_) {
      throw Error("shape_mismatch", "feature dimension " +
                                        std::to_string(x.rows()) +
                                        " differs from model input " +
                                        std::to_string(input_));
    }
    Forward f;
    if (kind_ == ModelKind::kSoftmaxLinear) {
      f.logits = (weights(0, classes_, input_) * x).colwise() +
                 bias(static_cast<Eigen::Index>(classes_) * input_, classes_);
      return f;
    }
    f.hidden_pre = (weights(0, hidden_, input_) * x).colwise() +
                   bias(static_cast<Eigen::Index>(hidden_) * input_, hidden_);
    f.hidden = activation_ == Activation::kRelu
                   ? f.hidden_pre.cwiseMax(0.0).eval()
                   : f.hidden_pre.array().tanh().matrix().eval();
    f.logits = (weights(w2_offset(), classes_, hidden_) * f.hidden).colwise() +
               bias(w2_offset() + static_cast<Eigen::Index>(classes_) * hidden_,
                    classes_);
    return f;
  }

  /// Softmax confidences, C x n.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const {
    return softmax_columns(forward(x).logits);
  }

  /// Gradient of a loss with respect to the parameters given dLoss/dLogits.
  Eigen::VectorXd backward(const Eigen::MatrixXd& x, const Forward& f,
                           const Eigen::MatrixXd& dlogits) const {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
    if (kind_ == ModelKind::kSoftmaxLinear) {
      Eigen::Map<Eigen::MatrixXd>(grad.data(), classes_, input_) =
          dlogits * x.transpose();
      grad.segment(static_cast<Eigen::Index>(classes_) * input_, classes_) =
          dlogits.rowwise().sum();
      return grad;
    }
    const Eigen::Index b1 = static_cast<Eigen::Index>(hidden_) * input_;
    const Eigen::Index w2 = w2_offset();
    const Eigen::Index b2 = w2 + static_cast<Eigen::Index>(classes_) * hidden_;
    Eigen::Map<Eigen::MatrixXd>(grad.data() + w2, classes_, hidden_) =
        dlogits * f.hidden.transpose();
    grad.segment(b2, classes_) = dlogits.rowwise().sum();
    Eigen::MatrixXd dhidden =
        weights(w2, classes_, hidden_).transpose() * dlogits;
    if (activation_ == Activation::kRelu) {
      dhidden.array() *= (f.hidden_pre.array() > 0.0).cast<double>();
    } else {
      dhidden.array() *= 1.0 - f.hidden.array().square();
    }
    Eigen::Map<Eigen::MatrixXd>(grad.data(), hidden_, input_) =
        dhidden * x.transpose();
    grad.segment(b1, hidden_) = dhidden.rowwise().sum();
    return grad;
  }

 private:
  ClassifierModel(ModelKind kind, int input, int hidden, int classes,
                  Activation activation)
      : kind_(kind),
        activation_(activation),
        input_(input),
        hidden_(hidden),
        classes_(classes) {
    if (input < 1 || classes < 1) {
      throw Error("invalid_config", "model needs d >= 1 and C >= 1");
    }
    const Eigen::Index count =
        kind == ModelKind::kSoftmaxLinear
            ? static_cast<Eigen::Index>(classes) * (input + 1)
            : static_cast<Eigen::Index>(hidden) * (input + 1) +
                  static_cast<Eigen::Index>(classes) * (hidden + 1);
    params_ = Eigen::VectorXd::Zero(count);
  }

  Eigen::Index w2_offset() const {
    return static_cast<Eigen::Index>(hidden_) * (input_ + 1);
  }

  Eigen::Map<const Eigen::MatrixXd> weights(Eigen::Index offset, int rows,
                                            int cols) const {
    return {params_.data() + offset, rows, cols};
  }
  Eigen::Map<const Eigen::VectorXd> bias(Eigen::Index offset, int rows) const {
    return {params_.data() + offset, rows};
  }

  ModelKind kind_ = ModelKind::kSoftmaxLinear;
  Activation activation_ = Activation::kRelu;
  int input_ = 0;
  int hidden_ = 0;
  int classes_ = 0;
  Eigen::VectorXd params_;
};

/// Adam with bias correction.
struct AdamOptimizer {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  long step_count = 0;

  AdamOptimizer() = default;
  explicit AdamOptimizer(Eigen::Index num_parameters, double lr = 3e-4)
      : learning_rate(lr),
        first_moment(Eigen::VectorXd::Zero(num_parameters)),
        second_moment(Eigen::VectorXd::Zero(num_parameters)) {}

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    if (first_moment.size() != params.size()) {
      first_moment = Eigen::VectorXd::Zero(params.size());
      second_moment = Eigen::VectorXd::Zero(params.size());
    }
    ++step_count;
    first_moment = beta1 * first_moment + (1.0 - beta1) * grad;
    second_moment = beta2 * second_moment + (1.0 - beta2) * grad.cwiseAbs2();
    if (learning_rate == 0.0) return;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    params.array() -= learning_rate * (first_moment.array() / c1) /
                      ((second_moment.array() / c2).sqrt() + epsilon);
  }
};

/// Confidence matrix (C x m) for the bag's instances.
inline ScoreMatrix predict_confidences(const ClassifierModel& model,
                                       const Bag& bag) {
  return model.predict(bag.features());
}

struct LossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

/// Mean cross-entropy against one-hot labels and its gradient.
inline LossAndGradient cross_entropy_loss_and_gradient(
    const ClassifierModel& model, const Eigen::MatrixXd& x,
    std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != x.cols() || x.cols() == 0) {
    throw Error("shape_mismatch", "label count differs from instance count");
  }
  const auto f = model.forward(x);
  const auto n = static_cast<double>(x.cols());
  Eigen::MatrixXd dlogits(f.logits.rows(), f.logits.cols());
  double total = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double top = f.logits.col(j).maxCoeff();
    const Eigen::ArrayXd shifted = f.logits.col(j).array() - top;
    const Eigen::ArrayXd e = shifted.exp();
    const double z = e.sum();
    total += std::log(z) - shifted[labels[j]];
    dlogits.col(j) = (e / z).matrix();
    dlogits(labels[j], j) -= 1.0;
  }
  dlogits /= n;
  return {total / n, model.backward(x, f, dlogits)};
}

/// -sum_c p_c log(mean_j conf_{c,j}), log argument clamped at 1e-12.
inline double proportion_loss(const ScoreMatrix& conf,
                              std::span<const double> proportions) {
  if (static_cast<Eigen::Index>(proportions.size()) != conf.rows() ||
      conf.cols() == 0) {
    throw Error("shape_mismatch", "proportions differ from confidence rows");
  }
  detail::check_proportions(proportions);
  const Eigen::VectorXd mean = conf.rowwise().mean();
  double loss = 0.0;
  for (Eigen::Index c = 0; c < conf.rows(); ++c) {
    if (proportions[c] == 0.0) continue;
    loss -= proportions[c] * std::log(std::max(mean[c], kLogClamp));
  }
  return loss;
}

/// Proportion loss averaged over `bags` and its gradient.
inline LossAndGradient proportion_loss_and_gradient(const ClassifierModel& model,
                                                    std::span<const Bag* const> bags) {
  if (bags.empty()) throw Error("empty_batch", "no bags in batch");
  LossAndGradient out{0.0, Eigen::VectorXd::Zero(model.num_parameters())};
  for (const Bag* bag : bags) {
    const auto f = model.forward(bag->features());
    const Eigen::MatrixXd conf = softmax_columns(f.logits);
    const auto m = static_cast<double>(conf.cols());
    const Eigen::VectorXd mean = conf.rowwise().mean();
    const auto& p = bag->proportions();
    Eigen::VectorXd g(conf.rows());  // dLoss / dconf_{c,j}, same for every j
    for (Eigen::Index c = 0; c < conf.rows(); ++c) {
      g[c] = (p[c] == 0.0 || mean[c] <= kLogClamp) ? 0.0 : -p[c] / (mean[c] * m);
    }
    out.loss += proportion_loss(conf, p);
    Eigen::MatrixXd dlogits(conf.rows(), conf.cols());
    for (Eigen::Index j = 0; j < conf.cols(); ++j) {
      const double dot = conf.col(j).dot(g);
      dlogits.col(j) = (conf.col(j).array() * (g.array() - dot)).matrix();
    }
    out.gradient += model.backward(bag->features(), f, dlogits);
  }
  const auto nb = static_cast<double>(bags.size());
  out.loss /= nb;
  out.gradient /= nb;
  return out;
}

struct TrainOptions {
  int batch_bags = 4;
  /// Cross-entropy only: split each bag batch into gradient steps of at most
  /// this many instances (0 keeps the whole batch in one step).
  int max_batch_instances = 0;
};

namespace detail {

inline std::vector<int> batch_order(std::size_t n, Rng* rng) {
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  if (rng != nullptr) shuffle_in_place(order, *rng);
  return order;
}

inline void check_loss(double loss, const char* what) {
  if (!std::isfinite(loss)) {
    throw Error("nan_loss", std::string(what) + " loss became non-finite");
  }
}

}  // namespace detail

/// One pass over all instances; batches hold `batch_bags` bags. Returns the
/// mean per-instance cross-entropy seen during the pass.
inline double train_epoch_cross_entropy(
    ClassifierModel& model, std::span<const Bag> bags,
    std::span<const std::vector<int>> labels, AdamOptimizer& opt,
    const TrainOptions& options = {}, Rng* order_rng = nullptr) {
  if (bags.size() != labels.size()) {
    throw Error("shape_mismatch", "one label vector per bag is required");
  }
  if (options.batch_bags < 1) throw Error("invalid_config", "batch_bags < 1");
  const std::vector<int> order = detail::batch_order(bags.size(), order_rng);
  double weighted = 0.0;
  long seen = 0;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(options.batch_bags)) {
    const std::size_t stop =
        std::min(order.size(), start + static_cast<std::size_t>(options.batch_bags));
    Eigen::Index total = 0;
    for (std::size_t k = start; k < stop; ++k) total += bags[order[k]].size();
    Eigen::MatrixXd x(model.input_dim(), total);
    std::vector<int> y;
    y.reserve(static_cast<std::size_t>(total));
    Eigen::Index col = 0;
    for (std::size_t k = start; k < stop; ++k) {
      const Bag& bag = bags[order[k]];
      if (static_cast<int>(labels[order[k]].size()) != bag.size()) {
        throw Error("shape_mismatch", "labels differ from bag size for bag " +
                                          std::to_string(bag.id()));
      }
      x.middleCols(col, bag.size()) = bag.features();
      y.insert(y.end(), labels[order[k]].begin(), labels[order[k]].end());
      col += bag.size();
    }
    const Eigen::Index step =
        options.max_batch_instances > 0 ? options.max_batch_instances : total;
    for (Eigen::Index lo = 0; lo < total; lo += step) {
      const Eigen::Index n = std::min(step, total - lo);
      const Eigen::MatrixXd chunk = x.middleCols(lo, n);
      auto lg = cross_entropy_loss_and_gradient(
          model, chunk, std::span<const int>(y).subspan(lo, n));
      detail::check_loss(lg.loss, "cross-entropy");
      weighted += lg.loss * static_cast<double>(n);
      seen += n;
      opt.step(model.parameters(), lg.gradient);
    }
  }
  if (!model.parameters().allFinite()) {
    throw Error("nan_loss", "parameters became non-finite");
  }
  return seen > 0 ? weighted / static_cast<double>(seen) : 0.0;
}

/// One pass over bags in batches of `batch_bags`; each step averages the
/// per-bag proportion losses of its batch. Returns the mean per-bag loss.
inline double train_epoch_proportion_loss(ClassifierModel& model,
                                          std::span<const Bag> bags,
                                          AdamOptimizer& opt,
                                          const TrainOptions& options = {},
                                          Rng* order_rng = nullptr) {
  if (options.batch_bags < 1) throw Error("invalid_config", "batch_bags < 1");
  const std::vector<int> order = detail::batch_order(bags.size(), order_rng);
  double total = 0.0;
  std::vector<const Bag*> batch;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(options.batch_bags)) {
    const std::size_t stop =
        std::min(order.size(), start + static_cast<std::size_t>(options.batch_bags));
    batch.clear();
    for (std::size_t k = start; k < stop; ++k) batch.push_back(&bags[order[k]]);
    auto lg = proportion_loss_and_gradient(model, batch);
    detail::check_loss(lg.loss, "proportion");
    total += lg.loss * static_cast<double>(batch.size());
    opt.step(model.parameters(), lg.gradient);
  }
  if (!model.parameters().allFinite()) {
    throw Error("nan_loss", "parameters became non-finite");
  }
  return bags.empty() ? 0.0 : total / static_cast<double>(bags.size());
}

enum class LossKind { kCrossEntropy, kProportion };

/// Probe data for gradient_check. Cross-entropy uses `labels[i]` for bag i
/// (or the bag's true labels when `labels` is empty).
struct GradientProbe {
  std::vector<Bag> bags;
  std::vector<std::vector<int>> labels;
};

namespace detail {

inline LossAndGradient probe_loss(const ClassifierModel& model, LossKind kind,
                                  const GradientProbe& probe) {
  if (kind == LossKind::kProportion) {
    std::vector<const Bag*> ptrs;
    for (const Bag& b : probe.bags) ptrs.push_back(&b);
    return proportion_loss_and_gradient(model, ptrs);
  }
  Eigen::Index total = 0;
  for (const Bag& b : probe.bags) total += b.size();
  Eigen::MatrixXd x(model.input_dim(), total);
  std::vector<int> y;
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < probe.bags.size(); ++i) {
    const Bag& b = probe.bags[i];
    x.middleCols(col, b.size()) = b.features();
    col += b.size();
    const auto& l = probe.labels.empty() ? b.true_labels() : probe.labels[i];
    y.insert(y.end(), l.begin(), l.end());
  }
  return cross_entropy_loss_and_gradient(model, x, y);
}

}  // namespace detail

/// Max relative error between the analytic gradient and central differences
/// (step 1e-5) over up to `max_coordinates` coordinates (all when <= 0 or
/// when the model is smaller). Relative error is |a - n| / max(|a|, |n|, 1e-8).
inline double gradient_check(const ClassifierModel& model, LossKind kind,
                             const GradientProbe& probe, int max_coordinates = 0,
                             std::uint64_t seed = 0) {
  constexpr double kStep = 1e-5;
  const Eigen::VectorXd analytic = detail::probe_loss(model, kind, probe).gradient;
  std::vector<int> coords(static_cast<std::size_t>(model.num_parameters()));
  for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = static_cast<int>(k);
  if (max_coordinates > 0 && static_cast<std::size_t>(max_coordinates) < coords.size()) {
    Rng rng = make_rng(seed, Stream::kAudit);
    shuffle_in_place(coords, rng);
    coords.resize(static_cast<std::size_t>(max_coordinates));
  }
  ClassifierModel probe_model = model;
  double worst = 0.0;
  for (int k : coords) {
    const double saved = probe_model.parameters()[k];
    probe_model.parameters()[k] = saved + kStep;
    const double up = detail::probe_loss(probe_model, kind, probe).loss;
    probe_model.parameters()[k] = saved - kStep;
    const double down = detail::probe_loss(probe_model, kind, probe).loss;
    probe_model.parameters()[k] = saved;
    const double numeric = (up - down) / (2.0 * kStep);
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
  }
  return worst;
}

inline const char* to_string(ModelKind k) {
  return k == ModelKind::kSoftmaxLinear ? "softmax_linear" : "mlp";
}

}  // namespace llp
