#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace scl {

enum class Direction : std::uint8_t {
  Improves,  // treatment expected below control
  Hurts,     // treatment expected above control
};

enum class TestKind : std::uint8_t { Wilcoxon, Bootstrap };

const char* direction_name(Direction d);
Direction parse_direction(std::string_view name);
const char* test_kind_name(TestKind t);  // "w" / "b"
TestKind parse_test_kind(std::string_view name);

// One-sided Wilcoxon signed-rank p-value on paired differences. Zeros are
// dropped; at least five non-zero differences must remain. Exact inclusive
// tail probabilities (enumeration over sign assignments, midranks for ties)
// up to n = 25, then a normal approximation with tie and continuity
// corrections.
double wilcoxon_one_sided(const std::vector<double>& differences, Direction direction);

// One-sided median bootstrap: p = (1 + #{resampled medians that are zero or
// contradict the direction}) / (B + 1).
double bootstrap_median_one_sided(const std::vector<double>& differences,
                                  Direction direction, std::uint32_t samples,
                                  std::uint64_t seed);

// Holm-Bonferroni step-down adjustment; output order matches input order.
std::vector<double> holm_adjust(const std::vector<double>& raw_p);

// z-statistic of a mean-median symmetry check on the differences. Values
// above the alpha=0.05 two-sided normal quantile are treated as asymmetric.
double symmetry_z(const std::vector<double>& differences);
bool looks_symmetric(const std::vector<double>& differences, double alpha = 0.05);

enum class ComparisonMetric : std::uint8_t { PPL, SL_PPL, EL_PPL };
const char* comparison_metric_name(ComparisonMetric m);
ComparisonMetric parse_comparison_metric(std::string_view name);

struct Comparison {
  std::string name;
  ComparisonMetric metric = ComparisonMetric::PPL;
  std::string treatment;
  std::string control;
  Direction direction = Direction::Improves;
  std::string family;
  std::optional<TestKind> test_override;
};

struct ComparisonResult {
  Comparison comparison;
  std::size_t n_pairs = 0;
  std::size_t zeros_dropped = 0;
  bool inconclusive = false;       // e.g. all differences zero
  std::string note;
  TestKind test = TestKind::Wilcoxon;
  double raw_p = 1.0;
  double adjusted_p = 1.0;
  bool significant = false;
};

struct SignificanceReport {
  double alpha = 0.05;
  std::uint32_t bootstrap_samples = 10000;
  std::vector<ComparisonResult> results;
};

// Metric values per (strategy, seed); seeds must agree between treatment and
// control of every comparison.
using MetricTable = std::map<std::string, std::map<std::uint64_t, double>>;

struct CompareOptions {
  double alpha = 0.05;
  std::uint32_t bootstrap_samples = 10000;
  std::uint64_t bootstrap_seed = 0;
};

SignificanceReport compare_runs(
    const std::map<ComparisonMetric, MetricTable>& values,
    const std::vector<Comparison>& comparisons, const CompareOptions& options);

// The default directional-hypothesis families: SL+EL vs EL (baseline family);
// Incremental/Sequential improve and AntiSequential hurts vs SL+EL (label
// family); Length/WordRarity/FRE/Random improve vs SL+EL (competence family),
// each across the three perplexity metrics.
std::vector<Comparison> default_comparisons();

}  // namespace scl
