#include "experiment.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "model_io.hpp"

namespace scl {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "' for hashing");
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buffer[1 << 14];
  while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
    h = fnv1a64({buffer, static_cast<std::size_t>(in.gcount())}, h);
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, value);
  return buf;
}

namespace {

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) fail(ErrorCode::Io, "failed while writing '" + path.string() + "'");
}

json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::Io, "'" + path.string() + "' is not valid JSON");
  return j;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

std::uint64_t id_vector_hash(const std::vector<std::uint32_t>& ids) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint32_t id : ids) {
    char bytes[4];
    std::memcpy(bytes, &id, 4);
    h = fnv1a64({bytes, 4}, h);
  }
  return h;
}

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

std::string format_double(double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::Config, "experiment config is not valid JSON");
  return from_json(j);
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig cfg;
  cfg.schema_version = get_or(j, "schema_version", 1);
  if (cfg.schema_version != 1) {
    fail(ErrorCode::Config, "unsupported config schema_version " +
                                std::to_string(cfg.schema_version));
  }

  const json corpus = j.value("corpus", json::object());
  cfg.sl_path = get_or<std::string>(corpus, "sl_path", "");
  cfg.el_path = get_or<std::string>(corpus, "el_path", "");
  cfg.max_len = get_or(corpus, "max_len", 128);
  cfg.vocab_cutoff = get_or<std::uint64_t>(corpus, "vocab_cutoff", 2);
  cfg.vocab_cap = get_or<std::size_t>(corpus, "vocab_cap", 16384);
  cfg.rarity_normalizer =
      parse_rarity_normalizer(get_or<std::string>(corpus, "rarity_normalizer", "tokens"));
  if (corpus.contains("split_ratios")) {
    auto r = corpus.at("split_ratios").get<std::vector<double>>();
    if (r.size() != 3) fail(ErrorCode::Config, "split_ratios must have three entries");
    cfg.split_ratios = {r[0], r[1], r[2]};
  }
  cfg.split_seed = get_or<std::uint64_t>(corpus, "split_seed", 13);

  const json model = j.value("model", json::object());
  cfg.model.layers = get_or(model, "layers", 2);
  cfg.model.hidden = get_or(model, "hidden", 128);
  cfg.model.heads = get_or(model, "heads", 2);
  cfg.model.ffn = get_or(model, "ffn", 512);
  cfg.model.dropout = get_or(model, "dropout", 0.1);
  cfg.model.max_len = cfg.max_len;

  const json curriculum = j.value("curriculum", json::object());
  cfg.curriculum.c0 = get_or(curriculum, "c0", 0.05);
  cfg.curriculum.total_steps = get_or(curriculum, "total_steps", 50000.0);
  cfg.curriculum.update_every = get_or<std::uint32_t>(curriculum, "update_every", 5000);
  cfg.curriculum.use_c0_offset = get_or(curriculum, "use_c0_offset", true);

  const json training = j.value("training", json::object());
  cfg.training.batch_size = get_or(training, "batch_size", 8);
  cfg.training.lr = get_or(training, "lr", 1e-4);
  cfg.training.eval_every = get_or<std::uint32_t>(training, "eval_every", 2000);
  cfg.training.patience = get_or(training, "patience", 5);
  cfg.training.min_delta = get_or(training, "min_delta", 1e-3);
  cfg.training.max_steps = get_or<std::uint64_t>(training, "max_steps", 200000);
  cfg.training.reset_moments_between_phases =
      get_or(training, "reset_moments_between_phases", true);

  const json evaluation = j.value("evaluation", json::object());
  cfg.eval_mask_seed = get_or<std::uint64_t>(evaluation, "eval_mask_seed", 4242);
  cfg.histogram_bins = get_or(evaluation, "histogram_bins", 30);

  cfg.difficulty_seed = get_or<std::uint64_t>(j, "difficulty_seed", 777);

  const json stats = j.value("stats", json::object());
  cfg.stats.alpha = get_or(stats, "alpha", 0.05);
  cfg.stats.bootstrap_samples = get_or<std::uint32_t>(stats, "bootstrap_samples", 10000);
  cfg.stats.bootstrap_seed = get_or<std::uint64_t>(stats, "bootstrap_seed", 99);
  if (stats.contains("test_overrides")) {
    for (const auto& [key, value] : stats.at("test_overrides").items()) {
      cfg.test_overrides[key] = parse_test_kind(value.get<std::string>());
    }
  }

  if (j.contains("strategies")) {
    for (const auto& name : j.at("strategies")) {
      cfg.strategies.push_back(parse_strategy(name.get<std::string>()));
    }
  } else {
    cfg.strategies = all_strategies();
  }

  if (j.contains("seeds")) {
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  } else {
    for (std::uint64_t s = 1; s <= 15; ++s) cfg.seeds.push_back(s);
  }

  if (j.contains("comparisons")) {
    std::vector<Comparison> comparisons;
    for (const auto& c : j.at("comparisons")) {
      Comparison cmp;
      cmp.treatment = c.at("treatment").get<std::string>();
      cmp.control = c.at("control").get<std::string>();
      cmp.metric = parse_comparison_metric(c.at("metric").get<std::string>());
      cmp.direction = parse_direction(c.at("direction").get<std::string>());
      cmp.family = get_or<std::string>(c, "family", "default");
      cmp.name = get_or<std::string>(
          c, "name",
          cmp.treatment + " vs " + cmp.control + " [" + comparison_metric_name(cmp.metric) + "]");
      if (c.contains("test")) cmp.test_override = parse_test_kind(c.at("test").get<std::string>());
      comparisons.push_back(std::move(cmp));
    }
    cfg.explicit_comparisons = std::move(comparisons);
  }

  cfg.output_dir = get_or<std::string>(j, "output_dir", "simplecl-out");
  cfg.validate();
  return cfg;
}

json ExperimentConfig::to_json() const {
  json overrides = json::object();
  for (const auto& [key, kind] : test_overrides) overrides[key] = test_kind_name(kind);

  json strategies_json = json::array();
  for (Strategy s : strategies) strategies_json.push_back(strategy_name(s));

  json j = {
      {"schema_version", schema_version},
      {"corpus",
       {{"sl_path", sl_path},
        {"el_path", el_path},
        {"max_len", max_len},
        {"vocab_cutoff", vocab_cutoff},
        {"vocab_cap", vocab_cap},
        {"rarity_normalizer", rarity_normalizer_name(rarity_normalizer)},
        {"split_ratios", split_ratios},
        {"split_seed", split_seed}}},
      {"model",
       {{"layers", model.layers},
        {"hidden", model.hidden},
        {"heads", model.heads},
        {"ffn", model.ffn},
        {"dropout", model.dropout}}},
      {"curriculum",
       {{"c0", curriculum.c0},
        {"total_steps", curriculum.total_steps},
        {"update_every", curriculum.update_every},
        {"use_c0_offset", curriculum.use_c0_offset}}},
      {"training",
       {{"batch_size", training.batch_size},
        {"lr", training.lr},
        {"eval_every", training.eval_every},
        {"patience", training.patience},
        {"min_delta", training.min_delta},
        {"max_steps", training.max_steps},
        {"reset_moments_between_phases", training.reset_moments_between_phases}}},
      {"evaluation", {{"eval_mask_seed", eval_mask_seed}, {"histogram_bins", histogram_bins}}},
      {"difficulty_seed", difficulty_seed},
      {"stats",
       {{"alpha", stats.alpha},
        {"bootstrap_samples", stats.bootstrap_samples},
        {"bootstrap_seed", stats.bootstrap_seed},
        {"test_overrides", overrides}}},
      {"strategies", strategies_json},
      {"seeds", seeds},
      {"output_dir", output_dir},
  };
  if (explicit_comparisons.has_value()) {
    json comparisons = json::array();
    for (const Comparison& c : *explicit_comparisons) {
      json cj = {{"name", c.name},
                 {"treatment", c.treatment},
                 {"control", c.control},
                 {"metric", comparison_metric_name(c.metric)},
                 {"direction", direction_name(c.direction)},
                 {"family", c.family}};
      if (c.test_override.has_value()) cj["test"] = test_kind_name(*c.test_override);
      comparisons.push_back(std::move(cj));
    }
    j["comparisons"] = std::move(comparisons);
  }
  return j;
}

void ExperimentConfig::validate() const {
  if (sl_path.empty() || el_path.empty()) {
    fail(ErrorCode::Config, "corpus.sl_path and corpus.el_path are required");
  }
  if (output_dir.empty()) fail(ErrorCode::Config, "output_dir must not be empty");
  if (strategies.empty()) fail(ErrorCode::Config, "strategy list must not be empty");
  if (seeds.empty()) fail(ErrorCode::Config, "seed list must not be empty");
  {
    std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
    if (unique.size() != seeds.size()) fail(ErrorCode::Config, "duplicate seeds in seed list");
  }
  {
    std::set<Strategy> unique(strategies.begin(), strategies.end());
    if (unique.size() != strategies.size()) {
      fail(ErrorCode::Config, "duplicate strategies in strategy list");
    }
  }
  model.validate_except_vocab();
  if (histogram_bins <= 0) fail(ErrorCode::Config, "histogram_bins must be positive");
  if (!(stats.alpha > 0.0 && stats.alpha < 1.0)) {
    fail(ErrorCode::Config, "stats.alpha must lie in (0, 1)");
  }
  competence_at(0.0, curriculum.c0, curriculum.total_steps, curriculum.use_c0_offset);

  if (explicit_comparisons.has_value()) {
    std::set<std::string> names;
    for (Strategy s : strategies) names.insert(strategy_name(s));
    for (const Comparison& c : *explicit_comparisons) {
      for (const std::string& who : {c.treatment, c.control}) {
        if (!names.contains(who)) {
          fail(ErrorCode::Config,
               "comparison '" + c.name + "' references strategy '" + who +
                   "' which is not in the strategy list");
        }
      }
    }
  }
}

std::vector<Comparison> ExperimentConfig::comparisons() const {
  std::vector<Comparison> out;
  if (explicit_comparisons.has_value()) {
    out = *explicit_comparisons;
  } else {
    std::set<std::string> names;
    for (Strategy s : strategies) names.insert(strategy_name(s));
    for (Comparison& c : default_comparisons()) {
      if (names.contains(c.treatment) && names.contains(c.control)) out.push_back(std::move(c));
    }
  }
  for (Comparison& c : out) {
    const std::string key = c.treatment + ":" + comparison_metric_name(c.metric);
    auto it = test_overrides.find(key);
    if (it != test_overrides.end()) c.test_override = it->second;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

struct ExperimentRunner::Impl {
  ExperimentConfig cfg;
  fs::path out;

  bool corpus_ready = false;
  IngestResult ingest;
  Vocabulary vocab;
  CorpusSplit split;
  std::uint64_t sl_hash = 0, el_hash = 0;
  std::map<Metric, std::vector<DifficultyScore>> scores;

  StageCounts last_train_counts;
  json stage_summary = json::object();

  explicit Impl(ExperimentConfig config) : cfg(std::move(config)), out(cfg.output_dir) {}

  // ---- paths ----
  fs::path corpus_dir() const { return out / "corpus"; }
  fs::path scores_dir() const { return out / "scores"; }
  fs::path plans_dir() const { return out / "plans"; }
  fs::path reports_dir() const { return out / "reports"; }
  fs::path run_dir(Strategy s, std::uint64_t seed) const {
    return out / "runs" / strategy_name(s) / ("seed_" + std::to_string(seed));
  }

  void ensure_corpus() {
    if (corpus_ready) return;
    sl_hash = hash_file(cfg.sl_path);
    el_hash = hash_file(cfg.el_path);
    IngestConfig icfg;
    icfg.tokenizer.max_len = cfg.max_len;
    ingest = ingest_corpus(cfg.sl_path, cfg.el_path, icfg);
    if (ingest.records.empty()) {
      fail(ErrorCode::Corpus, "corpus is empty after ingestion");
    }
    vocab = build_vocab(ingest.records, cfg.vocab_cutoff, cfg.vocab_cap);
    encode_records(ingest.records, vocab);
    split = split_corpus(ingest.records, cfg.split_ratios, cfg.split_seed);
    corpus_ready = true;
  }

  const std::vector<DifficultyScore>& scores_for(Metric metric) {
    ensure_corpus();
    auto it = scores.find(metric);
    if (it != scores.end()) return it->second;
    const Vocabulary* v = metric == Metric::WordRarity ? &vocab : nullptr;
    auto computed = score_corpus(ingest.records, metric, v, cfg.difficulty_seed,
                                 cfg.rarity_normalizer);
    return scores.emplace(metric, std::move(computed)).first->second;
  }

  std::vector<Metric> metrics_needed() const {
    return {Metric::Length, Metric::WordRarity, Metric::FRE, Metric::Random};
  }

  // ---- stage: ingest ----
  void write_corpus_artifacts() {
    ensure_corpus();
    fs::create_directories(corpus_dir());

    std::ostringstream records;
    write_records_tsv(records, ingest.records);
    write_text_file(corpus_dir() / "records.tsv", records.str());

    std::ostringstream vocab_tsv;
    vocab.write_tsv(vocab_tsv);
    write_text_file(corpus_dir() / "vocab.tsv", vocab_tsv.str());

    json split_json = {{"seed", split.seed},
                       {"ratios", cfg.split_ratios},
                       {"train", split.train},
                       {"validation", split.validation},
                       {"test", split.test}};
    write_text_file(corpus_dir() / "split.json", split_json.dump(2) + "\n");

    const CorpusStats stats = scl::corpus_stats(ingest.records);
    json warnings = json::array();
    for (const IngestWarning& w : ingest.warnings) {
      warnings.push_back({{"file", w.file}, {"line", w.line_no}, {"message", w.message}});
    }
    json stats_json = {
        {"classes",
         {{"SL", {{"tokens", stats.sl.tokens}, {"sentences", stats.sl.sentences}}},
          {"EL", {{"tokens", stats.el.tokens}, {"sentences", stats.el.sentences}}}}},
        {"records", ingest.records.size()},
        {"vocab", {{"size", vocab.size()}, {"total_tokens", vocab.total_tokens()},
                   {"raw_types", vocab.raw_type_count()}}},
        {"split",
         {{"train", split.train.size()},
          {"validation", split.validation.size()},
          {"test", split.test.size()}}},
        {"warnings", warnings}};
    write_text_file(corpus_dir() / "stats.json", stats_json.dump(2) + "\n");
    stage_summary["ingest"] = {{"records", ingest.records.size()},
                               {"warnings", ingest.warnings.size()}};
  }

  // ---- stage: score ----
  void write_scores(const std::vector<Metric>& which) {
    ensure_corpus();
    fs::create_directories(scores_dir());
    const auto metrics = which.empty() ? metrics_needed() : which;
    for (Metric metric : metrics) {
      const auto& values = scores_for(metric);
      std::ostringstream tsv;
      for (const DifficultyScore& s : values) {
        tsv << s.sentence_id << '\t' << metric_name(s.metric) << '\t'
            << format_double(s.value, "%.17g") << '\n';
      }
      write_text_file(scores_dir() / (std::string(metric_name(metric)) + ".tsv"), tsv.str());
    }
    stage_summary["score"] = {{"metrics", metrics.size()}};
  }

  // ---- stage: plan ----
  json plan_descriptor(Strategy strategy) {
    ensure_corpus();
    if (is_competence_strategy(strategy)) {
      const Metric metric = competence_metric(strategy);
      CompetencePlan plan =
          make_competence_plan(scores_for(metric), split.train, metric, cfg.curriculum);
      return {{"kind", "competence"},
              {"strategy", strategy_name(strategy)},
              {"metric", metric_name(metric)},
              {"c0", plan.params.c0},
              {"total_steps", plan.params.total_steps},
              {"update_every", plan.params.update_every},
              {"use_c0_offset", plan.params.use_c0_offset},
              {"size", plan.sorted_ids.size()},
              {"order_hash", hex64(id_vector_hash(plan.sorted_ids))},
              {"sorted_ids", plan.sorted_ids}};
    }
    LabelPlan plan = make_label_plan(strategy, ingest.records, split.train);
    json phases = json::array();
    for (const LabelPhase& phase : plan.phases) {
      phases.push_back({{"name", phase.name},
                        {"size", phase.ids.size()},
                        {"ids_hash", hex64(id_vector_hash(phase.ids))},
                        {"ids", phase.ids}});
    }
    return {{"kind", "label"}, {"strategy", strategy_name(strategy)}, {"phases", phases}};
  }

  void write_plans(const std::vector<Strategy>& which) {
    fs::create_directories(plans_dir());
    const auto& list = which.empty() ? cfg.strategies : which;
    for (Strategy strategy : list) {
      json plan = plan_descriptor(strategy);
      write_text_file(plans_dir() / (std::string(strategy_name(strategy)) + ".json"),
                      plan.dump(2) + "\n");
    }
    stage_summary["plan"] = {{"plans", list.size()}};
  }

  // ---- stage: train ----
  json cache_relevant_config(Strategy strategy, std::uint64_t seed) {
    ensure_corpus();
    json j = cfg.to_json();
    j.erase("stats");
    j.erase("output_dir");
    j.erase("strategies");
    j.erase("seeds");
    if (j.contains("comparisons")) j.erase("comparisons");
    j["corpus"].erase("sl_path");
    j["corpus"].erase("el_path");
    j["corpus"]["sl_hash"] = hex64(sl_hash);
    j["corpus"]["el_hash"] = hex64(el_hash);
    j["strategy"] = strategy_name(strategy);
    j["seed"] = seed;
    return j;
  }

  std::string cache_key(Strategy strategy, std::uint64_t seed) {
    return hex64(fnv1a64(cache_relevant_config(strategy, seed).dump()));
  }

  bool cell_cached(Strategy strategy, std::uint64_t seed) {
    const fs::path manifest_path = run_dir(strategy, seed) / "manifest.json";
    if (!fs::exists(manifest_path)) return false;
    std::ifstream in(manifest_path);
    json manifest = json::parse(in, nullptr, false);
    if (manifest.is_discarded()) return false;
    return get_or<std::string>(manifest, "status", "") == "complete" &&
           get_or<std::string>(manifest, "cache_key", "") == cache_key(strategy, seed);
  }

  json run_result_to_json(const RunResult& result) {
    json phases = json::array();
    for (const PhaseStats& phase : result.phases) {
      json trace = json::array();
      for (const EvalPoint& p : phase.trace) trace.push_back({p.step, p.loss});
      phases.push_back({{"name", phase.name},
                        {"steps_run", phase.steps_run},
                        {"updates_to_best", phase.updates_to_best},
                        {"evaluations", phase.evaluations},
                        {"step0_val_loss", phase.step0_val_loss},
                        {"best_val_loss", phase.best_val_loss},
                        {"trace", trace}});
    }
    const PerplexityReport& rep = result.test_report;
    return {{"total_updates", result.total_updates},
            {"work_steps", result.work_steps},
            {"phases", phases},
            {"perplexity",
             {{"overall", rep.overall},
              {"sl", rep.sl},
              {"el", rep.el},
              {"overall_nll", rep.overall_nll},
              {"sl_nll", rep.sl_nll},
              {"el_nll", rep.el_nll},
              {"overall_count", rep.overall_count},
              {"sl_count", rep.sl_count},
              {"el_count", rep.el_count},
              {"eval_mask_seed", rep.eval_mask_seed}}}};
  }

  RunResult run_cell(Strategy strategy, std::uint64_t seed, bool write_artifacts) {
    ensure_corpus();
    ModelConfig model_cfg = cfg.model;
    model_cfg.vocab_size = vocab.size();
    model_cfg.max_len = cfg.max_len;

    Trainer trainer(ingest.records, vocab, cfg.eval_mask_seed);
    auto provider = [&](Metric metric) -> const std::vector<DifficultyScore>& {
      return scores_for(metric);
    };
    MlmModel<float> final_model;
    RunResult result = trainer.run_strategy(strategy, split, provider, model_cfg, cfg.training,
                                            cfg.curriculum, seed, nullptr, &final_model);

    if (write_artifacts) {
      const fs::path dir = run_dir(strategy, seed);
      fs::create_directories(dir);
      save_checkpoint((dir / "checkpoint.bin").string(), final_model, result.total_updates);

      json manifest = {{"schema_version", 1},
                       {"strategy", strategy_name(strategy)},
                       {"seed", seed},
                       {"status", "complete"},
                       {"cache_key", cache_key(strategy, seed)},
                       {"config", cache_relevant_config(strategy, seed)},
                       {"corpus",
                        {{"sl_hash", hex64(sl_hash)},
                         {"el_hash", hex64(el_hash)},
                         {"records", ingest.records.size()},
                         {"vocab_size", vocab.size()},
                         {"train", split.train.size()},
                         {"validation", split.validation.size()},
                         {"test", split.test.size()}}},
                       {"plan", plan_summary(strategy)},
                       {"result", run_result_to_json(result)}};
      write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
    }
    return result;
  }

  json plan_summary(Strategy strategy) {
    json full = plan_descriptor(strategy);
    if (full.contains("sorted_ids")) full.erase("sorted_ids");
    if (full.contains("phases")) {
      for (json& phase : full["phases"]) phase.erase("ids");
    }
    return full;
  }

  StageCounts train_cells(const std::vector<Strategy>& strategies,
                          const std::vector<std::uint64_t>& seeds) {
    const auto& strategy_list = strategies.empty() ? cfg.strategies : strategies;
    const auto& seed_list = seeds.empty() ? cfg.seeds : seeds;
    StageCounts counts;
    for (Strategy strategy : strategy_list) {
      for (std::uint64_t seed : seed_list) {
        if (cell_cached(strategy, seed)) {
          ++counts.skipped;
          continue;
        }
        run_cell(strategy, seed, true);
        ++counts.run;
      }
    }
    last_train_counts = counts;
    stage_summary["train"] = {{"run", counts.run}, {"skipped", counts.skipped}};
    return counts;
  }

  // ---- stage: eval ----
  void write_analytics() {
    ensure_corpus();
    fs::create_directories(reports_dir());

    OverlapMatrix overlap = vocab_overlap(ingest.records);
    json overlap_json = {{"percent",
                          {{"SL", {{"SL", overlap.sl_sl}, {"EL", overlap.sl_el}}},
                           {"EL", {{"SL", overlap.el_sl}, {"EL", overlap.el_el}}}}},
                         {"types", {{"SL", overlap.sl_types}, {"EL", overlap.el_types}}}};
    write_text_file(reports_dir() / "overlap.json", overlap_json.dump(2) + "\n");

    std::ostringstream csv;
    csv << "metric,class,bin_lo,bin_hi,count\n";
    for (Metric metric : {Metric::Length, Metric::WordRarity, Metric::FRE}) {
      std::vector<double> sl_values, el_values;
      const auto& all = scores_for(metric);
      for (std::size_t i = 0; i < all.size(); ++i) {
        const SentenceRecord& rec = ingest.records[i];
        (rec.label == Label::SL ? sl_values : el_values).push_back(all[i].value);
      }
      for (const Histogram& h :
           difficulty_histograms(metric_name(metric), sl_values, el_values,
                                 cfg.histogram_bins)) {
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
          csv << h.metric << ',' << h.cls << ',' << format_double(h.edges[b], "%.12g") << ','
              << format_double(h.edges[b + 1], "%.12g") << ',' << h.counts[b] << '\n';
        }
      }
    }
    write_text_file(reports_dir() / "histograms.csv", csv.str());
    stage_summary["eval"] = {{"analytics", true}};
  }

  // ---- manifests and tables ----
  json load_manifest(Strategy strategy, std::uint64_t seed) {
    const fs::path path = run_dir(strategy, seed) / "manifest.json";
    if (!fs::exists(path)) {
      fail(ErrorCode::State, std::string("missing manifest for (") + strategy_name(strategy) +
                                 ", seed " + std::to_string(seed) +
                                 "); run the train stage first");
    }
    return load_json_file(path);
  }

  std::vector<StrategySummary> summarize() {
    std::vector<StrategySummary> rows;
    for (Strategy strategy : cfg.strategies) {
      StrategySummary row;
      row.strategy = strategy_name(strategy);
      std::vector<double> ppl, sl, el, updates, work;
      for (std::uint64_t seed : cfg.seeds) {
        json manifest = load_manifest(strategy, seed);
        const json& result = manifest.at("result");
        const json& perplexity = result.at("perplexity");
        ppl.push_back(perplexity.at("overall").get<double>());
        sl.push_back(perplexity.at("sl").get<double>());
        el.push_back(perplexity.at("el").get<double>());
        updates.push_back(result.at("total_updates").get<double>());
        work.push_back(result.at("work_steps").get<double>());
      }
      row.n_seeds = static_cast<int>(cfg.seeds.size());
      Aggregate a;
      a = aggregate(ppl); row.ppl_mean = a.mean; row.ppl_std = a.stddev;
      a = aggregate(sl); row.sl_mean = a.mean; row.sl_std = a.stddev;
      a = aggregate(el); row.el_mean = a.mean; row.el_std = a.stddev;
      a = aggregate(updates); row.updates_mean = a.mean; row.updates_std = a.stddev;
      a = aggregate(work); row.work_mean = a.mean; row.work_std = a.stddev;
      rows.push_back(std::move(row));
    }
    return rows;
  }

  void write_results_tables() {
    fs::create_directories(reports_dir());
    const auto rows = summarize();

    std::ostringstream csv;
    csv << "strategy,n_seeds,ppl_mean,ppl_std,sl_ppl_mean,sl_ppl_std,el_ppl_mean,el_ppl_std,"
           "updates_mean,updates_std,work_steps_mean,work_steps_std\n";
    for (const StrategySummary& row : rows) {
      csv << row.strategy << ',' << row.n_seeds;
      for (double v : {row.ppl_mean, row.ppl_std, row.sl_mean, row.sl_std, row.el_mean,
                       row.el_std, row.updates_mean, row.updates_std, row.work_mean,
                       row.work_std}) {
        csv << ',' << format_double(v, "%.12g");
      }
      csv << '\n';
    }
    write_text_file(reports_dir() / "results.csv", csv.str());

    std::ostringstream txt;
    char line[256];
    std::snprintf(line, sizeof(line), "%-16s %-18s %-18s %-18s %-22s %s\n", "Strategy",
                  "Perplexity", "SL Perplexity", "EL Perplexity", "# Updates", "# Work steps");
    txt << line;
    for (const StrategySummary& row : rows) {
      auto cell = [](double mean, double stddev, const char* fmt) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), fmt, mean, stddev);
        return std::string(buf);
      };
      std::snprintf(line, sizeof(line), "%-16s %-18s %-18s %-18s %-22s %s\n",
                    row.strategy.c_str(),
                    cell(row.ppl_mean, row.ppl_std, "%.2f +-%.2f").c_str(),
                    cell(row.sl_mean, row.sl_std, "%.2f +-%.2f").c_str(),
                    cell(row.el_mean, row.el_std, "%.2f +-%.2f").c_str(),
                    cell(row.updates_mean, row.updates_std, "%.0f +-%.0f").c_str(),
                    cell(row.work_mean, row.work_std, "%.0f +-%.0f").c_str());
      txt << line;
    }
    write_text_file(reports_dir() / "results.txt", txt.str());
    stage_summary["report"] = {{"strategies", rows.size()}};
  }

  SignificanceReport compute_significance() {
    std::map<ComparisonMetric, MetricTable> values;
    for (Strategy strategy : cfg.strategies) {
      for (std::uint64_t seed : cfg.seeds) {
        json manifest = load_manifest(strategy, seed);
        const json& perplexity = manifest.at("result").at("perplexity");
        const std::string name = strategy_name(strategy);
        values[ComparisonMetric::PPL][name][seed] = perplexity.at("overall").get<double>();
        values[ComparisonMetric::SL_PPL][name][seed] = perplexity.at("sl").get<double>();
        values[ComparisonMetric::EL_PPL][name][seed] = perplexity.at("el").get<double>();
      }
    }
    return compare_runs(values, cfg.comparisons(), cfg.stats);
  }

  void write_significance() {
    const auto comparisons = cfg.comparisons();
    if (comparisons.empty()) {
      stage_summary["compare"] = {{"comparisons", 0}};
      return;
    }
    fs::create_directories(reports_dir());
    SignificanceReport report = compute_significance();

    json results = json::array();
    for (const ComparisonResult& res : report.results) {
      json r = {{"name", res.comparison.name},
                {"family", res.comparison.family},
                {"metric", comparison_metric_name(res.comparison.metric)},
                {"treatment", res.comparison.treatment},
                {"control", res.comparison.control},
                {"direction", direction_name(res.comparison.direction)},
                {"n_pairs", res.n_pairs},
                {"zeros_dropped", res.zeros_dropped},
                {"inconclusive", res.inconclusive}};
      if (res.inconclusive) {
        r["note"] = res.note;
      } else {
        r["test"] = test_kind_name(res.test);
        r["raw_p"] = res.raw_p;
        r["adjusted_p"] = res.adjusted_p;
        r["significant"] = res.significant;
      }
      results.push_back(std::move(r));
    }
    json report_json = {{"alpha", report.alpha},
                        {"bootstrap_samples", report.bootstrap_samples},
                        {"results", results}};
    write_text_file(reports_dir() / "significance.json", report_json.dump(2) + "\n");

    // Text table in the strategy x metric layout.
    std::vector<std::string> treatments;
    std::map<std::pair<std::string, ComparisonMetric>, const ComparisonResult*> by_cell;
    for (const ComparisonResult& res : report.results) {
      if (std::find(treatments.begin(), treatments.end(), res.comparison.treatment) ==
          treatments.end()) {
        treatments.push_back(res.comparison.treatment);
      }
      by_cell[{res.comparison.treatment, res.comparison.metric}] = &res;
    }
    std::ostringstream txt;
    char line[256];
    std::snprintf(line, sizeof(line), "%-16s %-14s %-14s %-14s\n", "Strategy", "PPL", "SL PPL",
                  "EL PPL");
    txt << line;
    for (const std::string& treatment : treatments) {
      std::string cells[3];
      int i = 0;
      for (ComparisonMetric metric :
           {ComparisonMetric::PPL, ComparisonMetric::SL_PPL, ComparisonMetric::EL_PPL}) {
        auto it = by_cell.find({treatment, metric});
        if (it == by_cell.end()) {
          cells[i++] = "-";
          continue;
        }
        const ComparisonResult& res = *it->second;
        if (res.inconclusive) {
          cells[i++] = "n/a";
          continue;
        }
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.3f (%s)%s", res.adjusted_p, test_kind_name(res.test),
                      res.significant ? " *" : "");
        cells[i++] = buf;
      }
      std::snprintf(line, sizeof(line), "%-16s %-14s %-14s %-14s\n", treatment.c_str(),
                    cells[0].c_str(), cells[1].c_str(), cells[2].c_str());
      txt << line;
    }
    txt << "\n* adjusted p <= " << format_double(report.alpha, "%.3g")
        << " (Holm-Bonferroni within family); (w) Wilcoxon signed-rank, (b) median bootstrap\n";
    write_text_file(reports_dir() / "significance.txt", txt.str());
    stage_summary["compare"] = {{"comparisons", report.results.size()}};
  }

  void write_run_evals() {
    ensure_corpus();
    for (Strategy strategy : cfg.strategies) {
      for (std::uint64_t seed : cfg.seeds) {
        const fs::path dir = run_dir(strategy, seed);
        const fs::path ckpt = dir / "checkpoint.bin";
        if (!fs::exists(ckpt)) continue;
        std::uint64_t step_count = 0;
        MlmModel<float> model = load_checkpoint<float>(ckpt.string(), &step_count);
        PerplexityReport rep = subset_report(model, ingest.records, split.test, vocab,
                                             cfg.eval_mask_seed, cfg.training.batch_size);
        json eval_json = {{"strategy", strategy_name(strategy)},
                          {"seed", seed},
                          {"step_count", step_count},
                          {"perplexity",
                           {{"overall", rep.overall},
                            {"sl", rep.sl},
                            {"el", rep.el},
                            {"overall_count", rep.overall_count},
                            {"sl_count", rep.sl_count},
                            {"el_count", rep.el_count}}}};
        write_text_file(dir / "eval.json", eval_json.dump(2) + "\n");
      }
    }
  }
};

ExperimentRunner::ExperimentRunner(ExperimentConfig cfg)
    : impl_(std::make_unique<Impl>(cfg)), cfg_(std::move(cfg)) {
  cfg_.validate();
}

ExperimentRunner::~ExperimentRunner() = default;

void ExperimentRunner::ingest() { impl_->write_corpus_artifacts(); }

void ExperimentRunner::score(const std::vector<Metric>& metrics) { impl_->write_scores(metrics); }

void ExperimentRunner::plan(const std::vector<Strategy>& strategies) {
  impl_->write_plans(strategies);
}

StageCounts ExperimentRunner::train(const std::vector<Strategy>& strategies,
                                    const std::vector<std::uint64_t>& seeds) {
  return impl_->train_cells(strategies, seeds);
}

void ExperimentRunner::evaluate() {
  impl_->write_analytics();
  impl_->write_run_evals();
}

void ExperimentRunner::compare() { impl_->write_significance(); }

void ExperimentRunner::report() { impl_->write_results_tables(); }

void ExperimentRunner::run_all() {
  ingest();
  score();
  plan();
  train();
  evaluate();
  compare();
  report();
}

nlohmann::json ExperimentRunner::summary() const { return impl_->stage_summary; }

const std::vector<SentenceRecord>& ExperimentRunner::records() {
  impl_->ensure_corpus();
  return impl_->ingest.records;
}

const Vocabulary& ExperimentRunner::vocabulary() {
  impl_->ensure_corpus();
  return impl_->vocab;
}

const CorpusSplit& ExperimentRunner::split() {
  impl_->ensure_corpus();
  return impl_->split;
}

const std::vector<DifficultyScore>& ExperimentRunner::scores_for(Metric metric) {
  return impl_->scores_for(metric);
}

RunResult ExperimentRunner::train_cell(Strategy strategy, std::uint64_t seed) {
  return impl_->run_cell(strategy, seed, false);
}

std::string ExperimentRunner::run_dir(Strategy strategy, std::uint64_t seed) const {
  return impl_->run_dir(strategy, seed).string();
}

std::string ExperimentRunner::reports_dir() const { return impl_->reports_dir().string(); }

std::string ExperimentRunner::corpus_dir() const { return impl_->corpus_dir().string(); }

}  // namespace scl
