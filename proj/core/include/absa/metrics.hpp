#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace absa {

/// An aspect occurrence: sentence index plus inclusive token range.
struct SpanKey {
  std::size_t sentence = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  auto operator<=>(const SpanKey&) const = default;
};

struct PrfScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
};

/// Exact-match span scoring. With no predictions precision is 0 when gold
/// is non-empty; with no gold recall is 0 when predictions exist; both empty
/// scores (1, 1, 1). F1 is 0 whenever P + R == 0.
PrfScores ae_span_f1(std::span<const SpanKey> predicted, std::span<const SpanKey> gold);

/// SpanKeys of the B/I runs of every tag sequence, sentence = list index.
std::vector<SpanKey> collect_spans(const std::vector<std::vector<int>>& tag_sequences);

struct AscScores {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
};

/// Accuracy and unweighted mean of per-class F1. A class with neither gold
/// nor predicted instances contributes F1 = 0.
AscScores asc_scores(std::span<const int> predicted, std::span<const int> gold,
                     std::size_t num_classes = 3);

struct SeedMetrics {
  std::uint64_t seed = 0;
  std::map<std::string, double> values;
};

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single seed
  std::size_t count = 0;
};

struct EpochLoss {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;  // 1-based
  double train = 0.0;
  double validation = 0.0;
};

struct RunReport {
  std::string task;
  std::string dataset;
  std::vector<std::uint64_t> seeds;
  std::vector<EpochLoss> losses;
  std::vector<SeedMetrics> per_seed;
  std::map<std::string, MetricSummary> summary;
};

/// Fills report.seeds and report.summary from the per-seed metrics.
RunReport aggregate_seeds(std::vector<SeedMetrics> per_seed);

/// Rows `seed,task,dataset,metric,value`; summary rows use seed `mean` / `sd`.
void write_metrics_csv(const RunReport& report, std::ostream& out);

}  // namespace absa
