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

#include "llp/io.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "llp/datagen.hpp"

namespace llp {
namespace {

LLPDataset sample_dataset() {
  const auto spec = make_blob_spec(3, 3, 4.0, 1.0, 1);
  return make_bags(generate_blobs(spec, 200, 2), 7, 6, 3);
}

TEST(DatasetCsv, RoundTripIsExact) {
  const auto data = sample_dataset();
  std::stringstream instances, proportions;
  io::write_dataset_csv(instances, data.bags, data.feature_dim);
  io::write_proportions_csv(proportions, data.bags, data.num_classes);
  const auto back = io::read_dataset(instances, proportions);
  ASSERT_EQ(back.bags.size(), data.bags.size());
  EXPECT_EQ(back.num_classes, 3);
  EXPECT_EQ(back.feature_dim, 3);
  for (std::size_t b = 0; b < data.bags.size(); ++b) {
    EXPECT_EQ(back.bags[b].id(), data.bags[b].id());
    EXPECT_EQ(back.bags[b].features(), data.bags[b].features());
    EXPECT_EQ(back.bags[b].true_labels(), data.bags[b].true_labels());
    EXPECT_EQ(back.bags[b].proportions(), data.bags[b].proportions());
    EXPECT_EQ(back.bags[b].class_counts(), data.bags[b].class_counts());
  }
}

TEST(DatasetCsv, UnlabeledInstancesAndErrors) {
  std::stringstream instances("bag_id,feature_0\n4,0.5\n4,1.5\n");
  std::stringstream proportions("bag_id,p_1,p_2\n4,0.5,0.5\n");
  const auto data = io::read_dataset(instances, proportions);
  ASSERT_EQ(data.bags.size(), 1u);
  EXPECT_FALSE(data.bags[0].has_true_labels());

  std::stringstream missing("bag_id,feature_0\n5,0.5\n");
  std::stringstream props("bag_id,p_1,p_2\n4,0.5,0.5\n");
  EXPECT_THROW(io::read_dataset(missing, props), Error);

  std::stringstream ragged("bag_id,feature_0,feature_1\n4,0.5\n");
  std::stringstream props2("bag_id,p_1,p_2\n4,0.5,0.5\n");
  EXPECT_THROW(io::read_dataset(ragged, props2), Error);

  std::stringstream junk("bag_id,feature_0\n4,abc\n");
  std::stringstream props3("bag_id,p_1,p_2\n4,0.5,0.5\n");
  EXPECT_THROW(io::read_dataset(junk, props3), Error);
}

TEST(LabeledCsv, RoundTripAndRequiresLabels) {
  const auto spec = make_blob_spec(2, 2, 4.0, 1.0, 4);
  const auto set = generate_blobs(spec, 25, 5);
  std::stringstream ss;
  io::write_labeled_csv(ss, set);
  const auto back = io::read_labeled_csv(ss);
  EXPECT_EQ(back.features, set.features);
  EXPECT_EQ(back.labels, set.labels);
  std::stringstream unlabeled("bag_id,feature_0,true_label\n-1,0.5,-1\n");
  EXPECT_THROW(io::read_labeled_csv(unlabeled), Error);
}

TEST(Checkpoint, RoundTripBothKinds) {
  for (auto model : {ClassifierModel::softmax_linear(3, 4), ClassifierModel::mlp(3, 4, 5, Activation::kTanh)}) {
    Rng rng(6);
    model.initialize(rng);
    std::stringstream ss;
    io::save_model(ss, model);
    const auto back = io::load_model(ss);
    EXPECT_EQ(back.kind(), model.kind());
    EXPECT_EQ(back.activation(), model.activation());
    EXPECT_EQ(back.hidden_dim(), model.hidden_dim());
    EXPECT_EQ(back.parameters(), model.parameters());
  }
}

TEST(Checkpoint, HeaderLayoutAndCorruption) {
  const auto model = ClassifierModel::softmax_linear(2, 2);
  std::stringstream ss;
  io::save_model(ss, model);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.size(), 8u + 6 * 4 + 8 + 6 * 8);
  EXPECT_EQ(bytes.substr(0, 8), "LLPMODEL");
  EXPECT_EQ(bytes[8], 1);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(io::load_model(truncated), Error);
  std::string wrong = bytes;
  wrong[0] = 'X';
  std::stringstream bad(wrong);
  EXPECT_THROW(io::load_model(bad), Error);
}

TEST(JsonRecords, EpochRecordRoundTrip) {
  EpochRecord r;
  r.epoch = 3;
  r.train_loss = 0.125;
  r.update_rate = 0.5;
  r.validation_error = 0.01;
  r.test_accuracy = 0.9;
  const auto back = io::epoch_record_from_json(io::to_json(r));
  EXPECT_EQ(back.epoch, 3);
  EXPECT_EQ(back.update_rate, 0.5);
  EXPECT_FALSE(back.pseudo_label_accuracy.has_value());
  EXPECT_TRUE(io::to_json(r)["pseudo_label_accuracy"].is_null());
}

TEST(JsonConfig, RoundTripAndUnknownKeys) {
  ExperimentConfig cfg = ExperimentConfig::desk_scale();
  cfg.method = Method::kFPLSimple;
  cfg.model = ModelKind::kSoftmaxLinear;
  cfg.perturbation_scale = PerturbationScale::kEpochScaled;
  cfg.seed = 42;
  ExperimentConfig back;
  io::apply_json(back, io::to_json(cfg));
  EXPECT_EQ(io::to_json(back), io::to_json(cfg));
  EXPECT_THROW(io::apply_json(back, io::json{{"epochz", 3}}), Error);
  EXPECT_THROW(io::apply_json(back, io::json{{"model", "cnn"}}), Error);
}

}  // namespace
}  // namespace llp
