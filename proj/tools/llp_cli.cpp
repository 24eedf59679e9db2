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

// Command-line front end: generate, train, sweep, evaluate, regret-audit.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "llp/datagen.hpp"
#include "llp/harness.hpp"
#include "llp/io.hpp"
#include "llp/labeler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flags that mirror ExperimentConfig. Only flags given on the command line
// are applied, after the preset and the --config file.
struct ConfigFlags {
  std::string preset = "desk";
  std::string config_path;
  std::string method, model, activation, perturbation_scale;
  int num_classes = 0, feature_dim = 0, bag_size = 0, n_bags = 0, hidden = 0;
  int epochs = 0, batch_bags = 0, max_batch_instances = 0;
  double separation = 0, class_scale = 0, train_ratio = 0, test_fraction = 0;
  double pool_factor = 0, learning_rate = 0, eta = 0;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void add_to(CLI::App& app, bool with_method = true) {
    app.add_option("--preset", preset, "desk or full")->check(CLI::IsMember({"desk", "full"}));
    app.add_option("--config", config_path, "JSON file with config overrides")->check(CLI::ExistingFile);
    auto add = [&](const std::string& flag, const std::string& key, auto& target, const std::string& help) {
      options.emplace_back(key, app.add_option(flag, target, help));
    };
    if (with_method) add("--method", "method", method, "FPL, Greedy, Naive, FPL-Simple or PL");
    add("--num-classes", "num_classes", num_classes, "number of classes");
    add("--feature-dim", "feature_dim", feature_dim, "feature dimension");
    add("--separation", "separation", separation, "minimum center distance in units of class scale");
    add("--class-scale", "class_scale", class_scale, "per-class standard deviation");
    add("--bag-size", "bag_size", bag_size, "instances per bag");
    add("--n-bags", "n_bags", n_bags, "number of bags");
    add("--train-ratio", "train_ratio", train_ratio, "share of bags used for training");
    add("--test-fraction", "test_fraction", test_fraction, "share of the labeled test set");
    add("--pool-factor", "pool_factor", pool_factor, "pool size relative to the bag budget");
    add("--model", "model", model, "mlp or softmax_linear");
    add("--hidden", "hidden", hidden, "hidden width of the mlp");
    add("--activation", "activation", activation, "relu or tanh");
    add("--epochs", "epochs", epochs, "training epochs");
    add("--learning-rate", "learning_rate", learning_rate, "Adam learning rate");
    add("--batch-bags", "batch_bags", batch_bags, "bags per mini-batch");
    add("--max-batch-instances", "max_batch_instances", max_batch_instances,
        "cap on instances per cross-entropy step (0 = no cap)");
    add("--eta", "eta", eta, "perturbation strength");
    add("--perturbation-scale", "perturbation_scale", perturbation_scale, "fixed or epoch_scaled");
  }

  json given() const {
    json j = json::object();
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      const std::string raw = opt->as<std::string>();
      if (key == "method" || key == "model" || key == "activation" || key == "perturbation_scale") {
        j[key] = raw;
      } else if (key == "separation" || key == "class_scale" || key == "train_ratio" ||
                 key == "test_fraction" || key == "pool_factor" || key == "learning_rate" ||
                 key == "eta") {
        j[key] = opt->as<double>();
      } else {
        j[key] = opt->as<int>();
      }
    }
    return j;
  }

  llp::ExperimentConfig resolve() const {
    llp::ExperimentConfig cfg = preset == "full" ? llp::ExperimentConfig::full_scale()
                                                  : llp::ExperimentConfig::desk_scale();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      json file;
      try {
        file = json::parse(in);
      } catch (const json::exception& e) {
        throw llp::Error("parse_error", std::string("config file: ") + e.what());
      }
      llp::io::apply_json(cfg, file);
    }
    llp::io::apply_json(cfg, given());
    return cfg;
  }
};

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::size_t start = 0;
    while (start <= item.size()) {
      const std::size_t comma = item.find(',', start);
      const std::string token = item.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!token.empty()) out.push_back(token);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

std::uint64_t parse_seed(const std::string& s) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw llp::Error("invalid_config", "bad seed: " + s);
}

int parse_positive(const std::string& s) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size() && v > 0) return v;
  } catch (const std::exception&) {
  }
  throw llp::Error("invalid_config", "bad bag size: " + s);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw llp::Error("io_error", "cannot create " + dir + ": " + ec.message());
}

std::ofstream open_file(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw llp::Error("io_error", "cannot open " + path.string() + " for writing");
  return out;
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_file(path);
  out << j.dump(2) << '\n';
}

json ids_of(const llp::LLPDataset& d) {
  json ids = json::array();
  for (const auto& b : d.bags) ids.push_back(b.id());
  return ids;
}

// ---------------------------------------------------------------------------

int run_generate(const ConfigFlags& flags, std::uint64_t seed, const std::string& out_dir) {
  llp::ExperimentConfig cfg = flags.resolve();
  cfg.seed = seed;
  const llp::Benchmark data = llp::build_benchmark(cfg);
  ensure_dir(out_dir);
  const fs::path dir(out_dir);
  std::vector<llp::Bag> all = data.train.bags;
  all.insert(all.end(), data.validation.bags.begin(), data.validation.bags.end());
  {
    auto out = open_file(dir / "instances.csv");
    llp::io::write_dataset_csv(out, all, cfg.feature_dim);
  }
  {
    auto out = open_file(dir / "proportions.csv");
    llp::io::write_proportions_csv(out, all, cfg.num_classes);
  }
  {
    auto out = open_file(dir / "test.csv");
    llp::io::write_labeled_csv(out, data.test);
  }
  json manifest{{"seed", seed},
                {"config", llp::io::to_json(cfg)},
                {"blob_spec", llp::io::to_json(data.spec)},
                {"train_bags", ids_of(data.train)},
                {"validation_bags", ids_of(data.validation)},
                {"bag_members", data.members},
                {"test_size", data.test.size()}};
  write_json(dir / "manifest.json", manifest);
  std::cout << json{{"out", out_dir}, {"bags", all.size()}, {"test_size", data.test.size()}}.dump() << '\n';
  return 0;
}

llp::Benchmark load_benchmark(const std::string& dir, const llp::ExperimentConfig& cfg) {
  const fs::path root(dir);
  std::ifstream instances(root / "instances.csv"), proportions(root / "proportions.csv");
  if (!instances || !proportions) {
    throw llp::Error("io_error", "data directory needs instances.csv and proportions.csv");
  }
  const llp::LLPDataset all = llp::io::read_dataset(instances, proportions);
  llp::Benchmark data;
  std::tie(data.train, data.validation) = llp::split_train_validation(all, cfg.train_ratio);
  std::ifstream test(root / "test.csv");
  if (test) data.test = llp::io::read_labeled_csv(test);
  return data;
}

int run_train(const ConfigFlags& flags, std::uint64_t seed, const std::string& data_dir,
              const std::string& out_dir) {
  llp::ExperimentConfig cfg = flags.resolve();
  cfg.seed = seed;
  cfg.output_dir = out_dir;
  cfg.validate();
  llp::Benchmark data;
  if (data_dir.empty()) {
    data = llp::build_benchmark(cfg);
  } else {
    data = load_benchmark(data_dir, cfg);
  }
  ensure_dir(out_dir);
  const fs::path dir(out_dir);
  auto epochs = open_file(dir / "epochs.jsonl");
  const auto result = llp::run_llp_training(cfg, data, [&](const llp::EpochRecord& r) {
    epochs << llp::io::to_json(r).dump() << '\n';
    epochs.flush();
  });
  llp::io::save_model((dir / "model.bin").string(), result.selected_model);
  llp::io::save_model((dir / "final_model.bin").string(), result.final_model);
  const auto& selected = result.records[result.selected_epoch - 1];
  json summary{{"config", llp::io::to_json(cfg)},
               {"data", data_dir.empty() ? json("generated") : json(data_dir)},
               {"selected_epoch", result.selected_epoch},
               {"selected_validation_error", selected.validation_error},
               {"selected_test_accuracy", selected.test_accuracy},
               {"final_test_accuracy", result.records.back().test_accuracy}};
  write_json(dir / "summary.json", summary);
  std::cout << summary.dump() << '\n';
  return 0;
}

int run_sweep(const ConfigFlags& flags, const std::vector<std::string>& seed_args,
              const std::vector<std::string>& method_args,
              const std::vector<std::string>& size_args, int budget, int threads,
              const std::string& out_dir) {
  const llp::ExperimentConfig base = flags.resolve();
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(seed_args)) seeds.push_back(parse_seed(s));
  if (seeds.empty()) throw llp::Error("invalid_config", "--seeds needs at least one seed");
  std::vector<llp::Method> methods;
  for (const auto& m : split_list(method_args)) methods.push_back(llp::parse_method(m));
  std::vector<int> sizes;
  for (const auto& s : split_list(size_args)) sizes.push_back(parse_positive(s));
  if (budget <= 0) budget = base.budget();
  const auto result = llp::sweep_bag_sizes(base, sizes, methods, seeds, budget, threads);

  ensure_dir(out_dir);
  const fs::path dir(out_dir);
  {
    auto cells = open_file(dir / "cells.jsonl");
    for (const auto& c : result.cells) {
      json records = json::array();
      for (const auto& r : c.records) records.push_back(llp::io::to_json(r));
      cells << json{{"method", llp::to_string(c.method)},
                    {"bag_size", c.bag_size},
                    {"n_bags", c.n_bags},
                    {"seed", c.seed},
                    {"selected_epoch", c.selected_epoch},
                    {"selected_test_accuracy", c.selected_test_accuracy},
                    {"final_test_accuracy", c.final_test_accuracy},
                    {"records", records}}
                   .dump()
            << '\n';
    }
  }
  auto csv = open_file(dir / "results.csv");
  csv << "method,bag_size,n_bags,seeds,selected_mean,selected_std,final_mean,final_std\n";
  json table = json::array();
  const auto n_bags = llp::bags_per_size(budget, sizes);
  for (llp::Method m : methods) {
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      const auto sel = result.summary(m, sizes[k], true);
      const auto fin = result.summary(m, sizes[k], false);
      csv << llp::to_string(m) << ',' << sizes[k] << ',' << n_bags[k] << ',' << sel.count << ','
          << sel.mean << ',' << sel.stddev << ',' << fin.mean << ',' << fin.stddev << '\n';
      table.push_back({{"method", llp::to_string(m)},
                       {"bag_size", sizes[k]},
                       {"n_bags", n_bags[k]},
                       {"seeds", sel.count},
                       {"selected_mean", sel.mean},
                       {"selected_std", sel.stddev},
                       {"final_mean", fin.mean},
                       {"final_std", fin.stddev}});
    }
  }
  json summary{{"config", llp::io::to_json(base)}, {"budget", budget}, {"seeds", seeds}, {"table", table}};
  write_json(dir / "summary.json", summary);
  std::cout << json{{"out", out_dir}, {"table", table}}.dump() << '\n';
  return 0;
}

int run_evaluate(const std::string& model_path, const std::string& test_path) {
  const auto model = llp::io::load_model(model_path);
  std::ifstream in(test_path);
  if (!in) throw llp::Error("io_error", "cannot open " + test_path);
  const auto test = llp::io::read_labeled_csv(in);
  if (test.features.rows() != model.input_dim()) {
    throw llp::Error("shape_mismatch", "test features do not match the model input");
  }
  std::cout << json{{"accuracy", llp::evaluate_instance_accuracy(model, test)},
                    {"instances", test.size()}}
                   .dump()
            << '\n';
  return 0;
}

struct AuditOptions {
  int num_classes = 3;
  int bag_size = 6;
  int epochs = 32;
  int runs = 20;
  double eta = 5.0;
  std::uint64_t seed = 0;
  std::vector<std::string> strategies{"FPL", "Greedy", "Naive"};
  std::string dump_path;
};

// Regret of each strategy on i.i.d. Uniform[0,1] unlikelihoods.
int run_regret_audit(const AuditOptions& o) {
  if (o.num_classes < 1 || o.bag_size < 1 || o.epochs < 1 || o.runs < 1) {
    throw llp::Error("invalid_config", "classes, bag size, epochs and runs must be >= 1");
  }
  std::vector<double> p(static_cast<std::size_t>(o.num_classes), 1.0 / o.num_classes);
  const llp::Bag bag(0, Eigen::MatrixXd::Zero(1, o.bag_size), {}, p);
  json report = json::array();
  json dump = json::array();
  for (const auto& name : split_list(o.strategies)) {
    llp::LabelerConfig cfg;
    cfg.eta = o.eta;
    if (name == "FPL") cfg.strategy = llp::Strategy::kFPL;
    else if (name == "Greedy") cfg.strategy = llp::Strategy::kGreedy;
    else if (name == "Naive") cfg.strategy = llp::Strategy::kNaive;
    else throw llp::Error("invalid_config", "unknown strategy: " + name);
    double mean_regret = 0.0, min_regret = 1e300, max_regret = -1e300;
    for (int r = 0; r < o.runs; ++r) {
      const std::uint64_t run_seed = llp::derive_seed(o.seed, llp::Stream::kAudit, {static_cast<std::uint64_t>(r)});
      llp::Rng loss_rng(run_seed);
      auto state = llp::BagLabelerState::initialize(bag, run_seed, true);
      for (int t = 0; t < o.epochs; ++t) {
        llp::ScoreMatrix L(o.num_classes, o.bag_size);
        for (int j = 0; j < o.bag_size; ++j)
          for (int c = 0; c < o.num_classes; ++c) L(c, j) = llp::uniform_unit(loss_rng);
        llp::update_labels(state, L, cfg);
      }
      const auto rep = llp::regret_report(state.decision_history(), state.loss_history(),
                                          bag.class_counts());
      mean_regret += rep.regret / o.runs;
      min_regret = std::min(min_regret, rep.regret);
      max_regret = std::max(max_regret, rep.regret);
      if (!o.dump_path.empty()) {
        json losses = json::array(), decisions = json::array();
        for (const auto& L : state.loss_history()) losses.push_back(llp::io::score_matrix_to_json(L));
        for (const auto& Y : state.decision_history()) decisions.push_back(llp::io::labels_to_json(Y));
        dump.push_back({{"strategy", name}, {"run", r}, {"losses", losses}, {"decisions", decisions},
                        {"best_in_hindsight", llp::io::labels_to_json(rep.best_in_hindsight)},
                        {"regret", rep.regret}});
      }
    }
    report.push_back({{"strategy", name},
                      {"mean_regret", mean_regret},
                      {"mean_regret_per_epoch", mean_regret / o.epochs},
                      {"min_regret", min_regret},
                      {"max_regret", max_regret}});
  }
  if (!o.dump_path.empty()) write_json(o.dump_path, dump);
  std::cout << json{{"num_classes", o.num_classes}, {"bag_size", o.bag_size}, {"epochs", o.epochs},
                    {"runs", o.runs}, {"eta", o.eta}, {"strategies", report}}
                   .dump()
            << '\n';
  return 0;
}

void print_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning from label proportions with online pseudo-labeling"};
  app.require_subcommand(1);

  ConfigFlags gen_flags, train_flags, sweep_flags;
  std::uint64_t gen_seed = 0, train_seed = 0;
  std::string gen_out, train_out, train_data, sweep_out;

  auto* gen = app.add_subcommand("generate", "write a blob dataset as CSV files");
  gen_flags.add_to(*gen, false);
  gen->add_option("--seed", gen_seed, "master seed")->required();
  gen->add_option("--out", gen_out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train one configuration");
  train_flags.add_to(*train);
  train->add_option("--seed", train_seed, "master seed")->required();
  train->add_option("--data", train_data, "directory written by generate (default: generate in memory)");
  train->add_option("--out", train_out, "output directory")->required();

  std::vector<std::string> sweep_seeds, sweep_methods{"FPL,PL"};
  std::vector<std::string> sweep_sizes{"64,128,256,512,1024,2048"};
  int sweep_budget = 0, sweep_threads = 1;
  auto* sweep = app.add_subcommand("sweep", "methods x bag sizes x seeds grid");
  sweep_flags.add_to(*sweep, false);
  sweep->add_option("--seeds", sweep_seeds, "comma-separated master seeds")->required();
  sweep->add_option("--methods", sweep_methods, "comma-separated methods");
  sweep->add_option("--bag-sizes", sweep_sizes, "comma-separated bag sizes");
  sweep->add_option("--budget", sweep_budget, "total instances per cell (default: bag_size * n_bags)");
  sweep->add_option("--threads", sweep_threads, "worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--out", sweep_out, "output directory")->required();

  std::string eval_model, eval_test;
  auto* evaluate = app.add_subcommand("evaluate", "accuracy of a checkpoint on a labeled CSV");
  evaluate->add_option("--model", eval_model, "checkpoint file")->required();
  evaluate->add_option("--test", eval_test, "labeled instance CSV")->required();

  AuditOptions audit;
  auto* regret = app.add_subcommand("regret-audit", "regret of the label updaters on random losses");
  regret->add_option("--num-classes", audit.num_classes, "number of classes");
  regret->add_option("--bag-size", audit.bag_size, "instances in the bag");
  regret->add_option("--epochs", audit.epochs, "rounds per run");
  regret->add_option("--runs", audit.runs, "independent runs");
  regret->add_option("--eta", audit.eta, "perturbation strength");
  regret->add_option("--seed", audit.seed, "master seed");
  regret->add_option("--strategies", audit.strategies, "comma-separated FPL, Greedy, Naive");
  regret->add_option("--dump", audit.dump_path, "write loss and decision histories as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (gen->parsed()) return run_generate(gen_flags, gen_seed, gen_out);
    if (train->parsed()) return run_train(train_flags, train_seed, train_data, train_out);
    if (sweep->parsed()) {
      return run_sweep(sweep_flags, sweep_seeds, sweep_methods, sweep_sizes, sweep_budget,
                       sweep_threads, sweep_out);
    }
    if (evaluate->parsed()) return run_evaluate(eval_model, eval_test);
    if (regret->parsed()) return run_regret_audit(audit);
  } catch (const llp::Error& e) {
    print_error(e.code(), e.what());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    print_error("invalid_config", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
