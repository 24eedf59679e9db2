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

// File formats.
//
// Dataset CSV      bag_id,feature_0,...,feature_{d-1}[,true_label]
//                  one row per instance; true_label is 0-based, -1 = unknown.
// Proportions CSV  bag_id,p_1,...,p_C
// Test CSV         same layout as the dataset CSV; bag_id is ignored.
// Checkpoint       binary, little-endian:
//                    char[8]  "LLPMODEL"
//                    u32      format version (1)
//                    u32      kind (0 = softmax_linear, 1 = mlp)
//                    u32      activation (0 = relu, 1 = tanh)
//                    u32      input_dim, hidden_dim, num_classes
//                    u64      parameter count P
//                    f64[P]   parameters in the flat layout of ClassifierModel
// Epoch records    JSON lines, one object per epoch.

#pragma once

#include "llp/classifier.hpp"
#include "llp/domain.hpp"
#include "llp/harness.hpp"

#include "json.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace llp::io {

using nlohmann::json;

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, int line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("parse_error", "line " + std::to_string(line_no) +
                                   ": not a number: '" + s + "'");
  }
}

inline int parse_int(const std::string& s, int line_no) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error("parse_error", "line " + std::to_string(line_no) +
                                   ": not an integer: '" + s + "'");
  }
  return v;
}

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error("io_error", "cannot write " + path);
  out << std::setprecision(17);
  return out;
}

inline std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error("io_error", "cannot read " + path);
  return in;
}

struct InstanceRows {
  std::vector<int> bag_ids;
  std::vector<int> labels;
  std::vector<std::vector<double>> features;
  int feature_dim = 0;
};

inline InstanceRows read_instance_rows(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("parse_error", "empty dataset file");
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "bag_id") {
    throw Error("parse_error", "dataset header must start with bag_id");
  }
  const bool has_label = header.back() == "true_label";
  InstanceRows rows;
  rows.feature_dim = static_cast<int>(header.size()) - 1 - (has_label ? 1 : 0);
  if (rows.feature_dim < 1) throw Error("parse_error", "dataset has no features");
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error("parse_error", "line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(header.size()) + " columns");
    }
    rows.bag_ids.push_back(parse_int(cells[0], line_no));
    std::vector<double> f(static_cast<std::size_t>(rows.feature_dim));
    for (int k = 0; k < rows.feature_dim; ++k) f[k] = parse_double(cells[1 + k], line_no);
    rows.features.push_back(std::move(f));
    rows.labels.push_back(has_label ? parse_int(cells.back(), line_no) : kUnknownLabel);
  }
  return rows;
}

}  // namespace detail

inline void write_instances_header(std::ostream& out, int feature_dim) {
  out << "bag_id";
  for (int k = 0; k < feature_dim; ++k) out << ",feature_" << k;
  out << ",true_label\n";
}

/// All instances of `bags`, in bag order.
inline void write_dataset_csv(std::ostream& out, std::span<const Bag> bags,
                              int feature_dim) {
  out << std::setprecision(17);
  write_instances_header(out, feature_dim);
  for (const Bag& bag : bags) {
    for (int j = 0; j < bag.size(); ++j) {
      out << bag.id();
      for (int k = 0; k < feature_dim; ++k) out << ',' << bag.features()(k, j);
      out << ',' << bag.true_labels()[j] << '\n';
    }
  }
}

inline void write_proportions_csv(std::ostream& out, std::span<const Bag> bags,
                                  int num_classes) {
  out << std::setprecision(17) << "bag_id";
  for (int c = 1; c <= num_classes; ++c) out << ",p_" << c;
  out << '\n';
  for (const Bag& bag : bags) {
    out << bag.id();
    for (double p : bag.proportions()) out << ',' << p;
    out << '\n';
  }
}

inline void write_labeled_csv(std::ostream& out, const LabeledSet& set) {
  out << std::setprecision(17);
  write_instances_header(out, static_cast<int>(set.features.rows()));
  for (int i = 0; i < set.size(); ++i) {
    out << -1;
    for (Eigen::Index k = 0; k < set.features.rows(); ++k) out << ',' << set.features(k, i);
    out << ',' << set.labels[i] << '\n';
  }
}

/// Bag id -> proportion vector.
inline std::map<int, std::vector<double>> read_proportions_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("parse_error", "empty proportions file");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "bag_id") {
    throw Error("parse_error", "proportions header must be bag_id,p_1,...");
  }
  std::map<int, std::vector<double>> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error("parse_error", "line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(header.size()) + " columns");
    }
    std::vector<double> p(cells.size() - 1);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      p[c - 1] = detail::parse_double(cells[c], line_no);
    }
    out[detail::parse_int(cells[0], line_no)] = std::move(p);
  }
  return out;
}

/// Bags from a dataset CSV and its proportions CSV. Bags appear in order of
/// first occurrence in the dataset file.
inline LLPDataset read_dataset(std::istream& instances, std::istream& proportions,
                               SplitTag split = SplitTag::kTrain) {
  const auto rows = detail::read_instance_rows(instances);
  const auto props = read_proportions_csv(proportions);
  std::vector<int> order;
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < rows.bag_ids.size(); ++i) {
    auto [it, fresh] = members.try_emplace(rows.bag_ids[i]);
    if (fresh) order.push_back(rows.bag_ids[i]);
    it->second.push_back(i);
  }
  LLPDataset out;
  out.feature_dim = rows.feature_dim;
  out.split = split;
  for (int id : order) {
    const auto p = props.find(id);
    if (p == props.end()) {
      throw Error("parse_error", "no proportions for bag " + std::to_string(id));
    }
    const auto& idx = members[id];
    Eigen::MatrixXd f(rows.feature_dim, static_cast<Eigen::Index>(idx.size()));
    std::vector<int> labels;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      for (int d = 0; d < rows.feature_dim; ++d) {
        f(d, static_cast<Eigen::Index>(k)) = rows.features[idx[k]][d];
      }
      labels.push_back(rows.labels[idx[k]]);
    }
    out.bags.emplace_back(id, std::move(f), std::move(labels), p->second);
  }
  out.num_classes = out.bags.empty() ? 0 : out.bags.front().num_classes();
  out.validate();
  return out;
}

inline LabeledSet read_labeled_csv(std::istream& in) {
  const auto rows = detail::read_instance_rows(in);
  LabeledSet out;
  out.features.resize(rows.feature_dim, static_cast<Eigen::Index>(rows.features.size()));
  for (std::size_t i = 0; i < rows.features.size(); ++i) {
    if (rows.labels[i] == kUnknownLabel) {
      throw Error("missing_labels", "test instance " + std::to_string(i) +
                                        " has no true label");
    }
    for (int d = 0; d < rows.feature_dim; ++d) {
      out.features(d, static_cast<Eigen::Index>(i)) = rows.features[i][d];
    }
  }
  out.labels = rows.labels;
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints.

inline constexpr std::array<char, 8> kCheckpointMagic = {'L', 'L', 'P', 'M',
                                                        'O', 'D', 'E', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t k = 0; k < sizeof(T); ++k) {
    out.put(static_cast<char>((bits >> (8 * k)) & 0xff));
  }
}

template <class T>
T get_le(std::istream& in) {
  std::uint64_t bits = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) {
    const int byte = in.get();
    if (byte == std::char_traits<char>::eof()) {
      throw Error("parse_error", "truncated checkpoint");
    }
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(byte)) << (8 * k);
  }
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

}  // namespace detail

inline void save_model(std::ostream& out, const ClassifierModel& model) {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, model.kind() == ModelKind::kMLP ? 1 : 0);
  detail::put_le<std::uint32_t>(out, model.activation() == Activation::kTanh ? 1 : 0);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.input_dim()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.hidden_dim()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.num_classes()));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(model.num_parameters()));
  for (Eigen::Index k = 0; k < model.num_parameters(); ++k) {
    detail::put_le<double>(out, model.parameters()[k]);
  }
  if (!out) throw Error("io_error", "failed to write checkpoint");
}

inline ClassifierModel load_model(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kCheckpointMagic) throw Error("parse_error", "not a model checkpoint");
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error("parse_error", "unsupported checkpoint version " + std::to_string(version));
  }
  const auto kind = detail::get_le<std::uint32_t>(in);
  const auto activation = detail::get_le<std::uint32_t>(in);
  const auto input = static_cast<int>(detail::get_le<std::uint32_t>(in));
  const auto hidden = static_cast<int>(detail::get_le<std::uint32_t>(in));
  const auto classes = static_cast<int>(detail::get_le<std::uint32_t>(in));
  const auto count = detail::get_le<std::uint64_t>(in);
  if (kind > 1 || activation > 1) throw Error("parse_error", "unknown model kind");
  ClassifierModel model =
      kind == 0 ? ClassifierModel::softmax_linear(input, classes)
                : ClassifierModel::mlp(input, classes, hidden,
                                       activation == 1 ? Activation::kTanh
                                                       : Activation::kRelu);
  if (count != static_cast<std::uint64_t>(model.num_parameters())) {
    throw Error("parse_error", "checkpoint parameter count does not match architecture");
  }
  for (Eigen::Index k = 0; k < model.num_parameters(); ++k) {
    model.parameters()[k] = detail::get_le<double>(in);
  }
  return model;
}

inline void save_model(const std::string& path, const ClassifierModel& model) {
  auto out = detail::open_out(path, true);
  save_model(out, model);
}

inline ClassifierModel load_model(const std::string& path) {
  auto in = detail::open_in(path, true);
  return load_model(in);
}

// ---------------------------------------------------------------------------
// JSON.

inline json to_json(const EpochRecord& r) {
  json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["pseudo_label_accuracy"] =
      r.pseudo_label_accuracy ? json(*r.pseudo_label_accuracy) : json(nullptr);
  j["update_rate"] = r.update_rate ? json(*r.update_rate) : json(nullptr);
  j["validation_error"] = r.validation_error;
  j["test_accuracy"] = r.test_accuracy;
  return j;
}

inline EpochRecord epoch_record_from_json(const json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.train_loss = j.at("train_loss").get<double>();
  if (!j.at("pseudo_label_accuracy").is_null()) {
    r.pseudo_label_accuracy = j.at("pseudo_label_accuracy").get<double>();
  }
  if (!j.at("update_rate").is_null()) r.update_rate = j.at("update_rate").get<double>();
  r.validation_error = j.at("validation_error").get<double>();
  r.test_accuracy = j.at("test_accuracy").get<double>();
  return r;
}

inline json to_json(const ExperimentConfig& c) {
  return json{
      {"method", to_string(c.method)},
      {"num_classes", c.num_classes},
      {"feature_dim", c.feature_dim},
      {"separation", c.separation},
      {"class_scale", c.class_scale},
      {"bag_size", c.bag_size},
      {"n_bags", c.n_bags},
      {"train_ratio", c.train_ratio},
      {"test_fraction", c.test_fraction},
      {"pool_factor", c.pool_factor},
      {"model", to_string(c.model)},
      {"hidden", c.hidden},
      {"activation", c.activation == Activation::kTanh ? "tanh" : "relu"},
      {"epochs", c.epochs},
      {"learning_rate", c.learning_rate},
      {"batch_bags", c.batch_bags},
      {"max_batch_instances", c.max_batch_instances},
      {"eta", c.eta},
      {"perturbation_scale",
       c.perturbation_scale == PerturbationScale::kEpochScaled ? "epoch_scaled" : "fixed"},
      {"seed", c.seed},
  };
}

/// Overrides fields of `c` present in `j`; unknown keys are rejected.
inline void apply_json(ExperimentConfig& c, const json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "method") c.method = parse_method(value.get<std::string>());
    else if (key == "num_classes") c.num_classes = value.get<int>();
    else if (key == "feature_dim") c.feature_dim = value.get<int>();
    else if (key == "separation") c.separation = value.get<double>();
    else if (key == "class_scale") c.class_scale = value.get<double>();
    else if (key == "bag_size") c.bag_size = value.get<int>();
    else if (key == "n_bags") c.n_bags = value.get<int>();
    else if (key == "train_ratio") c.train_ratio = value.get<double>();
    else if (key == "test_fraction") c.test_fraction = value.get<double>();
    else if (key == "pool_factor") c.pool_factor = value.get<double>();
    else if (key == "model") {
      const auto s = value.get<std::string>();
      if (s == "mlp") c.model = ModelKind::kMLP;
      else if (s == "softmax_linear") c.model = ModelKind::kSoftmaxLinear;
      else throw Error("invalid_config", "unknown model: " + s);
    } else if (key == "hidden") c.hidden = value.get<int>();
    else if (key == "activation") {
      const auto s = value.get<std::string>();
      if (s == "relu") c.activation = Activation::kRelu;
      else if (s == "tanh") c.activation = Activation::kTanh;
      else throw Error("invalid_config", "unknown activation: " + s);
    } else if (key == "epochs") c.epochs = value.get<int>();
    else if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "batch_bags") c.batch_bags = value.get<int>();
    else if (key == "max_batch_instances") c.max_batch_instances = value.get<int>();
    else if (key == "eta") c.eta = value.get<double>();
    else if (key == "perturbation_scale") {
      const auto s = value.get<std::string>();
      if (s == "fixed") c.perturbation_scale = PerturbationScale::kFixed;
      else if (s == "epoch_scaled") c.perturbation_scale = PerturbationScale::kEpochScaled;
      else throw Error("invalid_config", "unknown perturbation_scale: " + s);
    } else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "output_dir") c.output_dir = value.get<std::string>();
    else throw Error("invalid_config", "unknown config key: " + key);
  }
}

inline json to_json(const BlobSpec& s) {
  json centers = json::array();
  for (int c = 0; c < s.num_classes; ++c) {
    json col = json::array();
    for (int k = 0; k < s.feature_dim; ++k) col.push_back(s.class_centers(k, c));
    centers.push_back(col);
  }
  return json{{"num_classes", s.num_classes}, {"feature_dim", s.feature_dim},
              {"class_scale", s.class_scale}, {"separation", s.separation},
              {"class_centers", centers}};
}

inline json score_matrix_to_json(const ScoreMatrix& m) {
  json rows = json::array();
  for (Eigen::Index c = 0; c < m.rows(); ++c) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(c, j));
    rows.push_back(row);
  }
  return rows;
}

inline json labels_to_json(const PseudoLabelMatrix& y) { return json(y.labels()); }

}  // namespace llp::io
