#include "stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scl {

const char* direction_name(Direction d) {
  return d == Direction::Improves ? "improves" : "hurts";
}

Direction parse_direction(std::string_view name) {
  if (name == "improves") return Direction::Improves;
  if (name == "hurts") return Direction::Hurts;
  fail(ErrorCode::Config, "unknown direction '" + std::string(name) + "'");
}

const char* test_kind_name(TestKind t) { return t == TestKind::Wilcoxon ? "w" : "b"; }

TestKind parse_test_kind(std::string_view name) {
  if (name == "w" || name == "wilcoxon") return TestKind::Wilcoxon;
  if (name == "b" || name == "bootstrap") return TestKind::Bootstrap;
  fail(ErrorCode::Config, "unknown test kind '" + std::string(name) + "'");
}

const char* comparison_metric_name(ComparisonMetric m) {
  switch (m) {
    case ComparisonMetric::PPL: return "PPL";
    case ComparisonMetric::SL_PPL: return "SL_PPL";
    case ComparisonMetric::EL_PPL: return "EL_PPL";
  }
  return "?";
}

ComparisonMetric parse_comparison_metric(std::string_view name) {
  if (name == "PPL") return ComparisonMetric::PPL;
  if (name == "SL_PPL") return ComparisonMetric::SL_PPL;
  if (name == "EL_PPL") return ComparisonMetric::EL_PPL;
  fail(ErrorCode::Config, "unknown comparison metric '" + std::string(name) + "'");
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct RankedDiffs {
  std::vector<double> ranks;   // midranks of |d|, aligned with signs
  std::vector<int> signs;      // +1 / -1
  double w_plus = 0.0;         // sum of ranks with positive difference
  double tie_correction = 0.0; // sum over tie groups of (t^3 - t)
};

RankedDiffs rank_differences(const std::vector<double>& nonzero) {
  const std::size_t n = nonzero.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(nonzero[a]) < std::abs(nonzero[b]);
  });

  RankedDiffs out;
  out.ranks.assign(n, 0.0);
  out.signs.assign(n, 0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && std::abs(nonzero[order[j]]) == std::abs(nonzero[order[i]])) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    const double t = static_cast<double>(j - i);
    if (j - i > 1) out.tie_correction += t * t * t - t;
    for (std::size_t k = i; k < j; ++k) out.ranks[order[k]] = midrank;
    i = j;
  }
  for (std::size_t k = 0; k < n; ++k) {
    out.signs[k] = nonzero[k] > 0.0 ? 1 : -1;
    if (out.signs[k] > 0) out.w_plus += out.ranks[k];
  }
  return out;
}

// Exact null distribution of 2*W+ (doubled so midranks become integers),
// computed by the usual generating-function recursion. Equivalent to
// enumerating all 2^n sign assignments.
std::vector<double> exact_w_plus_counts(const std::vector<double>& ranks) {
  std::vector<std::uint64_t> doubled;
  doubled.reserve(ranks.size());
  std::uint64_t total = 0;
  for (double r : ranks) {
    auto d = static_cast<std::uint64_t>(std::llround(2.0 * r));
    doubled.push_back(d);
    total += d;
  }
  std::vector<double> counts(total + 1, 0.0);
  counts[0] = 1.0;
  std::uint64_t upper = 0;
  for (std::uint64_t d : doubled) {
    upper += d;
    for (std::uint64_t s = upper + 1; s-- > d;) counts[s] += counts[s - d];
  }
  return counts;
}

std::vector<double> drop_zeros(const std::vector<double>& differences, std::size_t* dropped) {
  std::vector<double> nonzero;
  nonzero.reserve(differences.size());
  for (double d : differences) {
    if (d != 0.0) nonzero.push_back(d);
  }
  if (dropped != nullptr) *dropped = differences.size() - nonzero.size();
  return nonzero;
}

}  // namespace

double wilcoxon_one_sided(const std::vector<double>& differences, Direction direction) {
  std::vector<double> nonzero = drop_zeros(differences, nullptr);
  if (nonzero.empty()) {
    fail(ErrorCode::InvalidArgument, "all paired differences are zero; the test is undefined");
  }
  if (nonzero.size() < 5) {
    fail(ErrorCode::InvalidArgument,
         "need at least 5 non-zero differences, have " + std::to_string(nonzero.size()));
  }

  RankedDiffs ranked = rank_differences(nonzero);
  const std::size_t n = nonzero.size();

  // Improvement is evidenced by negative differences, i.e. a small W+.
  const bool lower_tail = direction == Direction::Improves;

  if (n <= 25) {
    const auto counts = exact_w_plus_counts(ranked.ranks);
    const auto w2 = static_cast<std::uint64_t>(std::llround(2.0 * ranked.w_plus));
    double tail = 0.0;
    if (lower_tail) {
      for (std::uint64_t s = 0; s <= w2; ++s) tail += counts[s];
    } else {
      for (std::uint64_t s = w2; s < counts.size(); ++s) tail += counts[s];
    }
    return tail / std::pow(2.0, static_cast<double>(n));
  }

  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - ranked.tie_correction / 48.0;
  const double sd = std::sqrt(var);
  if (lower_tail) {
    return normal_cdf((ranked.w_plus + 0.5 - mean) / sd);
  }
  return 1.0 - normal_cdf((ranked.w_plus - 0.5 - mean) / sd);
}

double bootstrap_median_one_sided(const std::vector<double>& differences,
                                  Direction direction, std::uint32_t samples,
                                  std::uint64_t seed) {
  const std::size_t n = differences.size();
  if (n < 5) {
    fail(ErrorCode::InvalidArgument,
         "need at least 5 paired differences, have " + std::to_string(n));
  }
  if (samples == 0) fail(ErrorCode::Config, "bootstrap sample count must be positive");

  Rng rng(mix_seed({seed, fnv1a64("bootstrap-median")}));
  std::vector<double> resample(n);
  std::uint64_t contradicting = 0;
  for (std::uint32_t b = 0; b < samples; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      resample[i] = differences[static_cast<std::size_t>(rng.bounded(n))];
    }
    std::nth_element(resample.begin(), resample.begin() + n / 2, resample.end());
    double median = resample[n / 2];
    if (n % 2 == 0) {
      double lower = *std::max_element(resample.begin(), resample.begin() + n / 2);
      median = 0.5 * (median + lower);
    }
    const bool contradicts = direction == Direction::Improves ? median >= 0.0 : median <= 0.0;
    if (contradicts) ++contradicting;
  }
  return static_cast<double>(1 + contradicting) / static_cast<double>(samples + 1);
}

std::vector<double> holm_adjust(const std::vector<double>& raw_p) {
  if (raw_p.empty()) fail(ErrorCode::InvalidArgument, "holm adjustment needs a non-empty family");
  for (double p : raw_p) {
    if (!(p >= 0.0 && p <= 1.0)) {
      fail(ErrorCode::InvalidArgument, "p-value outside [0, 1]: " + std::to_string(p));
    }
  }
  const std::size_t m = raw_p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return raw_p[a] < raw_p[b]; });

  std::vector<double> adjusted(m, 0.0);
  double running = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double scaled = std::min(1.0, static_cast<double>(m - i) * raw_p[order[i]]);
    running = std::max(running, scaled);
    adjusted[order[i]] = running;
  }
  return adjusted;
}

double symmetry_z(const std::vector<double>& differences) {
  const std::size_t n = differences.size();
  if (n < 2) return 0.0;
  std::vector<double> sorted = differences;
  std::sort(sorted.begin(), sorted.end());
  double median = sorted[n / 2];
  if (n % 2 == 0) median = 0.5 * (median + sorted[n / 2 - 1]);
  double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  double mad = 0.0;
  for (double d : sorted) mad += std::abs(d - median);
  mad /= static_cast<double>(n);
  const double scale = std::sqrt(3.14159265358979323846 / 2.0) * mad;
  if (scale == 0.0) return 0.0;
  // Mean-median statistic in the style of Miao/Gel/Gastwirth; 0.5708 is the
  // large-sample null variance of sqrt(n) * (mean - median) / scale.
  const double t = std::sqrt(static_cast<double>(n)) * (mean - median) / scale;
  return std::abs(t) / std::sqrt(0.5708);
}

bool looks_symmetric(const std::vector<double>& differences, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::Config, "alpha must lie in (0, 1)");
  // Critical value: the normal quantile at 1 - alpha/2, found by bisection.
  double lo = 0.0, hi = 40.0;
  const double upper_tail = alpha / 2.0;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (1.0 - normal_cdf(mid) > upper_tail) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return symmetry_z(differences) <= 0.5 * (lo + hi);
}

std::vector<Comparison> default_comparisons() {
  std::vector<Comparison> out;
  struct Row {
    const char* treatment;
    const char* control;
    Direction direction;
    const char* family;
  };
  const Row rows[] = {
      {"BaselineSLEL", "BaselineEL", Direction::Improves, "baseline"},
      {"Incremental", "BaselineSLEL", Direction::Improves, "label_cl"},
      {"Sequential", "BaselineSLEL", Direction::Improves, "label_cl"},
      {"AntiSequential", "BaselineSLEL", Direction::Hurts, "label_cl"},
      {"Length", "BaselineSLEL", Direction::Improves, "competence_cl"},
      {"WordRarity", "BaselineSLEL", Direction::Improves, "competence_cl"},
      {"FRE", "BaselineSLEL", Direction::Improves, "competence_cl"},
      {"Random", "BaselineSLEL", Direction::Improves, "competence_cl"},
  };
  for (const Row& row : rows) {
    for (ComparisonMetric metric :
         {ComparisonMetric::PPL, ComparisonMetric::SL_PPL, ComparisonMetric::EL_PPL}) {
      Comparison c;
      c.name = std::string(row.treatment) + " vs " + row.control + " [" +
               comparison_metric_name(metric) + "]";
      c.metric = metric;
      c.treatment = row.treatment;
      c.control = row.control;
      c.direction = row.direction;
      c.family = row.family;
      out.push_back(std::move(c));
    }
  }
  return out;
}

SignificanceReport compare_runs(const std::map<ComparisonMetric, MetricTable>& values,
                                const std::vector<Comparison>& comparisons,
                                const CompareOptions& options) {
  SignificanceReport report;
  report.alpha = options.alpha;
  report.bootstrap_samples = options.bootstrap_samples;

  for (const Comparison& cmp : comparisons) {
    ComparisonResult res;
    res.comparison = cmp;

    auto metric_it = values.find(cmp.metric);
    if (metric_it == values.end()) {
      fail(ErrorCode::InvalidArgument, std::string("no values recorded for metric ") +
                                           comparison_metric_name(cmp.metric));
    }
    const MetricTable& table = metric_it->second;
    auto treat_it = table.find(cmp.treatment);
    auto ctrl_it = table.find(cmp.control);
    if (treat_it == table.end() || ctrl_it == table.end()) {
      fail(ErrorCode::InvalidArgument, "comparison '" + cmp.name + "' references strategy '" +
                                           (treat_it == table.end() ? cmp.treatment : cmp.control) +
                                           "' with no recorded runs");
    }

    std::vector<double> diffs;
    for (const auto& [seed, treat_value] : treat_it->second) {
      auto ctrl_seed = ctrl_it->second.find(seed);
      if (ctrl_seed == ctrl_it->second.end()) {
        fail(ErrorCode::InvalidArgument, "comparison '" + cmp.name + "': control '" + cmp.control +
                                             "' is missing seed " + std::to_string(seed));
      }
      diffs.push_back(treat_value - ctrl_seed->second);
    }
    for (const auto& [seed, ctrl_value] : ctrl_it->second) {
      if (!treat_it->second.contains(seed)) {
        fail(ErrorCode::InvalidArgument, "comparison '" + cmp.name + "': treatment '" +
                                             cmp.treatment + "' is missing seed " +
                                             std::to_string(seed));
      }
    }
    res.n_pairs = diffs.size();

    std::size_t dropped = 0;
    std::vector<double> nonzero = drop_zeros(diffs, &dropped);
    res.zeros_dropped = dropped;

    if (nonzero.empty()) {
      res.inconclusive = true;
      res.note = "all paired differences are zero";
      res.raw_p = 1.0;
      report.results.push_back(std::move(res));
      continue;
    }
    if (nonzero.size() < 5) {
      res.inconclusive = true;
      res.note = "fewer than 5 non-zero differences after dropping zeros";
      res.raw_p = 1.0;
      report.results.push_back(std::move(res));
      continue;
    }

    res.test = cmp.test_override.value_or(looks_symmetric(diffs, options.alpha)
                                              ? TestKind::Wilcoxon
                                              : TestKind::Bootstrap);
    if (res.test == TestKind::Wilcoxon) {
      res.raw_p = wilcoxon_one_sided(diffs, cmp.direction);
    } else {
      const std::uint64_t seed =
          mix_seed({options.bootstrap_seed, fnv1a64(cmp.name)});
      res.raw_p = bootstrap_median_one_sided(diffs, cmp.direction, options.bootstrap_samples, seed);
    }
    report.results.push_back(std::move(res));
  }

  // Holm adjustment within each family over the conclusive comparisons.
  std::map<std::string, std::vector<std::size_t>> families;
  for (std::size_t i = 0; i < report.results.size(); ++i) {
    if (!report.results[i].inconclusive) {
      families[report.results[i].comparison.family].push_back(i);
    }
  }
  for (const auto& [family, members] : families) {
    std::vector<double> raw;
    raw.reserve(members.size());
    for (std::size_t i : members) raw.push_back(report.results[i].raw_p);
    std::vector<double> adjusted = holm_adjust(raw);
    for (std::size_t k = 0; k < members.size(); ++k) {
      ComparisonResult& res = report.results[members[k]];
      res.adjusted_p = adjusted[k];
      res.significant = res.adjusted_p <= options.alpha;
    }
  }
  return report;
}

}  // namespace scl
