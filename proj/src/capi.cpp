#include "simplecl.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "experiment.hpp"

using namespace scl;

struct scl_experiment {
  std::unique_ptr<ExperimentRunner> runner;
  std::string last_error;
};

namespace {

scl_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return SCL_ERR_INVALID_ARGUMENT;
    case ErrorCode::Config: return SCL_ERR_CONFIG;
    case ErrorCode::Io: return SCL_ERR_IO;
    case ErrorCode::Corpus: return SCL_ERR_CORPUS;
    case ErrorCode::State: return SCL_ERR_STATE;
    case ErrorCode::Numeric: return SCL_ERR_NUMERIC;
    case ErrorCode::Internal: return SCL_ERR_INTERNAL;
  }
  return SCL_ERR_INTERNAL;
}

template <typename Fn>
scl_status guarded(scl_experiment* handle, Fn&& fn) {
  if (handle == nullptr) return SCL_ERR_INVALID_ARGUMENT;
  handle->last_error.clear();
  try {
    fn();
    return SCL_OK;
  } catch (const Error& e) {
    handle->last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    handle->last_error = e.what();
    return SCL_ERR_INTERNAL;
  }
}

template <typename Fn>
scl_status guarded_plain(Fn&& fn) {
  try {
    fn();
    return SCL_OK;
  } catch (const Error& e) {
    return status_of(e.code());
  } catch (const std::exception&) {
    return SCL_ERR_INTERNAL;
  }
}

std::vector<std::string> split_csv(const char* csv) {
  std::vector<std::string> out;
  if (csv == nullptr) return out;
  std::string item;
  for (const char* p = csv;; ++p) {
    if (*p == ',' || *p == '\0') {
      if (!item.empty()) out.push_back(item);
      item.clear();
      if (*p == '\0') break;
    } else if (*p != ' ') {
      item += *p;
    }
  }
  return out;
}

char* copy_string(const std::string& s) {
  char* out = new (std::nothrow) char[s.size() + 1];
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* scl_version(void) { return "0.1.0"; }

const char* scl_status_name(scl_status status) {
  switch (status) {
    case SCL_OK: return "ok";
    case SCL_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case SCL_ERR_CONFIG: return "config_error";
    case SCL_ERR_IO: return "io_error";
    case SCL_ERR_CORPUS: return "corpus_error";
    case SCL_ERR_STATE: return "state_error";
    case SCL_ERR_NUMERIC: return "numeric_error";
    case SCL_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

scl_status scl_experiment_open(const char* config_json, scl_experiment** out_handle) {
  if (config_json == nullptr || out_handle == nullptr) return SCL_ERR_INVALID_ARGUMENT;
  *out_handle = nullptr;
  auto handle = std::make_unique<scl_experiment>();
  scl_status status = guarded(handle.get(), [&] {
    ExperimentConfig cfg = ExperimentConfig::from_json_text(config_json);
    handle->runner = std::make_unique<ExperimentRunner>(std::move(cfg));
  });
  if (status != SCL_OK) return status;
  *out_handle = handle.release();
  return SCL_OK;
}

void scl_experiment_close(scl_experiment* handle) { delete handle; }

const char* scl_experiment_last_error(const scl_experiment* handle) {
  return handle == nullptr ? "null experiment handle" : handle->last_error.c_str();
}

scl_status scl_experiment_ingest(scl_experiment* handle) {
  return guarded(handle, [&] { handle->runner->ingest(); });
}

scl_status scl_experiment_score(scl_experiment* handle, const char* metrics) {
  return guarded(handle, [&] {
    std::vector<Metric> parsed;
    for (const std::string& name : split_csv(metrics)) parsed.push_back(parse_metric(name));
    handle->runner->score(parsed);
  });
}

scl_status scl_experiment_plan(scl_experiment* handle, const char* strategies) {
  return guarded(handle, [&] {
    std::vector<Strategy> parsed;
    for (const std::string& name : split_csv(strategies)) parsed.push_back(parse_strategy(name));
    handle->runner->plan(parsed);
  });
}

scl_status scl_experiment_train(scl_experiment* handle, const char* strategies,
                                const char* seeds) {
  return guarded(handle, [&] {
    std::vector<Strategy> parsed_strategies;
    for (const std::string& name : split_csv(strategies)) {
      parsed_strategies.push_back(parse_strategy(name));
    }
    std::vector<std::uint64_t> parsed_seeds;
    for (const std::string& s : split_csv(seeds)) {
      try {
        parsed_seeds.push_back(std::stoull(s));
      } catch (const std::exception&) {
        fail(ErrorCode::InvalidArgument, "seed '" + s + "' is not an integer");
      }
    }
    handle->runner->train(parsed_strategies, parsed_seeds);
  });
}

scl_status scl_experiment_eval(scl_experiment* handle) {
  return guarded(handle, [&] { handle->runner->evaluate(); });
}

scl_status scl_experiment_compare(scl_experiment* handle) {
  return guarded(handle, [&] { handle->runner->compare(); });
}

scl_status scl_experiment_report(scl_experiment* handle) {
  return guarded(handle, [&] { handle->runner->report(); });
}

scl_status scl_experiment_run_all(scl_experiment* handle) {
  return guarded(handle, [&] { handle->runner->run_all(); });
}

scl_status scl_experiment_summary_json(const scl_experiment* handle, char** out_json) {
  if (handle == nullptr || out_json == nullptr) return SCL_ERR_INVALID_ARGUMENT;
  *out_json = nullptr;
  try {
    const std::string text = handle->runner->summary().dump(2);
    *out_json = copy_string(text);
    return *out_json == nullptr ? SCL_ERR_INTERNAL : SCL_OK;
  } catch (const std::exception&) {
    return SCL_ERR_INTERNAL;
  }
}

void scl_string_free(char* s) { delete[] s; }

scl_status scl_competence_at(double step, double c0, double total_steps, int use_c0_offset,
                             double* out_competence) {
  if (out_competence == nullptr) return SCL_ERR_INVALID_ARGUMENT;
  return guarded_plain([&] {
    *out_competence = competence_at(step, c0, total_steps, use_c0_offset != 0);
  });
}

scl_status scl_flesch_reading_ease(const char* sentence_utf8, double* out_score) {
  if (sentence_utf8 == nullptr || out_score == nullptr) return SCL_ERR_INVALID_ARGUMENT;
  return guarded_plain([&] {
    TokenizerConfig tok;
    Tokenized t = tokenize_sentence(sentence_utf8, tok);
    SentenceRecord rec;
    rec.tokens = std::move(t.tokens);
    rec.words = std::move(t.words);
    *out_score = fre_score(rec);
  });
}

scl_status scl_wilcoxon_one_sided(const double* differences, size_t n, int direction_improves,
                                  double* out_p) {
  if (differences == nullptr || out_p == nullptr) return SCL_ERR_INVALID_ARGUMENT;
  return guarded_plain([&] {
    std::vector<double> diffs(differences, differences + n);
    *out_p = wilcoxon_one_sided(diffs,
                                direction_improves != 0 ? Direction::Improves : Direction::Hurts);
  });
}

}  // extern "C"
