// Command-line driver for the simplecl shared library. Everything heavier
// than argument handling goes through the C API in simplecl.h.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "simplecl.h"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot open config file '" << path << "'\n";
    std::exit(2);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

struct Options {
  std::string config_path;
  std::string seeds;       // comma-separated override
  std::string strategies;  // comma-separated override
  std::string metrics;     // for `score`
  std::string out_dir;
};

// Applies --seeds/--strategies/--out on top of the config document so that
// every stage, including aggregation, sees the same experiment definition.
std::string effective_config(const Options& opt) {
  nlohmann::json config = nlohmann::json::parse(read_file(opt.config_path), nullptr, false);
  if (config.is_discarded()) {
    std::cerr << "error: '" << opt.config_path << "' is not valid JSON\n";
    std::exit(2);
  }
  if (!opt.out_dir.empty()) config["output_dir"] = opt.out_dir;
  if (!opt.strategies.empty()) {
    nlohmann::json list = nlohmann::json::array();
    std::stringstream ss(opt.strategies);
    for (std::string item; std::getline(ss, item, ',');) {
      if (!item.empty()) list.push_back(item);
    }
    config["strategies"] = list;
  }
  if (!opt.seeds.empty()) {
    nlohmann::json list = nlohmann::json::array();
    std::stringstream ss(opt.seeds);
    for (std::string item; std::getline(ss, item, ',');) {
      if (!item.empty()) list.push_back(std::stoull(item));
    }
    config["seeds"] = list;
  }
  return config.dump();
}

class Experiment {
 public:
  explicit Experiment(const Options& opt) {
    const std::string config = effective_config(opt);
    scl_status status = scl_experiment_open(config.c_str(), &handle_);
    if (status != SCL_OK) {
      std::cerr << "error (" << scl_status_name(status) << "): "
                << scl_experiment_last_error(handle_) << "\n";
      std::exit(2);
    }
  }
  ~Experiment() { scl_experiment_close(handle_); }
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  int finish(scl_status status) const {
    if (status != SCL_OK) {
      std::cerr << "error (" << scl_status_name(status)
                << "): " << scl_experiment_last_error(handle_) << "\n";
      return 1;
    }
    char* summary = nullptr;
    if (scl_experiment_summary_json(handle_, &summary) == SCL_OK && summary != nullptr) {
      std::cout << summary << "\n";
      scl_string_free(summary);
    }
    return 0;
  }

  scl_experiment* get() const { return handle_; }

 private:
  scl_experiment* handle_ = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simplecl — curriculum-learning workbench for MLM pre-training"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(scl_version()));

  Options opt;
  app.add_option("--config", opt.config_path, "experiment configuration (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--seeds", opt.seeds, "comma-separated seed list override");
  app.add_option("--strategies", opt.strategies, "comma-separated strategy list override");
  app.add_option("--out", opt.out_dir, "output directory override");

  auto* ingest = app.add_subcommand("ingest", "tokenize the corpus, build vocabulary and splits");
  auto* score = app.add_subcommand("score", "compute per-sentence difficulty scores");
  score->add_option("--metrics", opt.metrics,
                    "comma-separated metrics (length,word_rarity,fre,random)");
  auto* plan = app.add_subcommand("plan", "write curriculum plans per strategy");
  auto* train = app.add_subcommand("train", "run training for every (strategy, seed) cell");
  auto* eval = app.add_subcommand("eval", "corpus analytics and checkpoint re-evaluation");
  auto* compare = app.add_subcommand("compare", "paired significance tests");
  auto* report = app.add_subcommand("report", "aggregate manifests into results tables");
  auto* all = app.add_subcommand("all", "full pipeline: ingest through report");

  CLI11_PARSE(app, argc, argv);

  Experiment experiment(opt);
  scl_experiment* h = experiment.get();

  scl_status status = SCL_OK;
  if (ingest->parsed()) {
    status = scl_experiment_ingest(h);
  } else if (score->parsed()) {
    status = scl_experiment_score(h, opt.metrics.empty() ? nullptr : opt.metrics.c_str());
  } else if (plan->parsed()) {
    status = scl_experiment_plan(h, nullptr);
  } else if (train->parsed()) {
    status = scl_experiment_train(h, nullptr, nullptr);
  } else if (eval->parsed()) {
    status = scl_experiment_eval(h);
  } else if (compare->parsed()) {
    status = scl_experiment_compare(h);
  } else if (report->parsed()) {
    status = scl_experiment_report(h);
  } else if (all->parsed()) {
    status = scl_experiment_run_all(h);
  }
  return experiment.finish(status);
}
