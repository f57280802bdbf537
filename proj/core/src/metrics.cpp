#include "absa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <set>

#include "absa/data.hpp"
#include "absa/error.hpp"

namespace absa {

PrfScores ae_span_f1(std::span<const SpanKey> predicted, std::span<const SpanKey> gold) {
  const std::set<SpanKey> pred_set(predicted.begin(), predicted.end());
  const std::set<SpanKey> gold_set(gold.begin(), gold.end());
  PrfScores s;
  for (const auto& p : pred_set) {
    if (gold_set.contains(p)) ++s.true_positives;
  }
  s.false_positives = pred_set.size() - s.true_positives;
  s.false_negatives = gold_set.size() - s.true_positives;
  const double tp = static_cast<double>(s.true_positives);
  if (pred_set.empty()) {
    s.precision = gold_set.empty() ? 1.0 : 0.0;
  } else {
    s.precision = tp / static_cast<double>(pred_set.size());
  }
  if (gold_set.empty()) {
    s.recall = pred_set.empty() ? 1.0 : 0.0;
  } else {
    s.recall = tp / static_cast<double>(gold_set.size());
  }
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

std::vector<SpanKey> collect_spans(const std::vector<std::vector<int>>& tag_sequences) {
  std::vector<SpanKey> out;
  for (std::size_t i = 0; i < tag_sequences.size(); ++i) {
    for (const auto& s : bio_token_spans(tag_sequences[i])) out.push_back({i, s.first, s.last});
  }
  return out;
}

AscScores asc_scores(std::span<const int> predicted, std::span<const int> gold, std::size_t num_classes) {
  if (predicted.size() != gold.size()) {
    throw ContractError("asc_scores: " + std::to_string(predicted.size()) + " predictions for " +
                        std::to_string(gold.size()) + " gold labels");
  }
  AscScores s;
  std::vector<std::size_t> tp(num_classes, 0), pred_n(num_classes, 0), gold_n(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const int p = predicted[i], g = gold[i];
    if (p < 0 || g < 0 || static_cast<std::size_t>(p) >= num_classes ||
        static_cast<std::size_t>(g) >= num_classes) {
      throw LabelError("asc_scores: label outside [0, " + std::to_string(num_classes) + ")");
    }
    ++pred_n[static_cast<std::size_t>(p)];
    ++gold_n[static_cast<std::size_t>(g)];
    if (p == g) {
      ++correct;
      ++tp[static_cast<std::size_t>(p)];
    }
  }
  s.accuracy = gold.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold.size());
  double total = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double p = pred_n[c] ? static_cast<double>(tp[c]) / static_cast<double>(pred_n[c]) : 0.0;
    const double r = gold_n[c] ? static_cast<double>(tp[c]) / static_cast<double>(gold_n[c]) : 0.0;
    const double f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    s.per_class_f1.push_back(f);
    total += f;
  }
  s.macro_f1 = total / static_cast<double>(num_classes);
  return s;
}

RunReport aggregate_seeds(std::vector<SeedMetrics> per_seed) {
  if (per_seed.empty()) throw ContractError("aggregate_seeds needs at least one seed");
  RunReport report;
  std::map<std::string, std::vector<double>> by_metric;
  for (const auto& s : per_seed) {
    report.seeds.push_back(s.seed);
    for (const auto& [name, v] : s.values) by_metric[name].push_back(v);
  }
  for (const auto& [name, values] : by_metric) {
    MetricSummary m;
    m.count = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    m.mean = sum / static_cast<double>(values.size());
    // Rounding in the sum would otherwise leave a ~1e-16 spread.
    if (std::adjacent_find(values.begin(), values.end(), std::not_equal_to<>()) == values.end()) {
      m.mean = values.front();
    } else if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - m.mean) * (v - m.mean);
      m.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    report.summary[name] = m;
  }
  report.per_seed = std::move(per_seed);
  return report;
}

void write_metrics_csv(const RunReport& report, std::ostream& out) {
  out << "seed,task,dataset,metric,value\n";
  out << std::setprecision(17);
  for (const auto& s : report.per_seed)
    for (const auto& [name, v] : s.values)
      out << s.seed << ',' << report.task << ',' << report.dataset << ',' << name << ',' << v << '\n';
  for (const auto& [name, m] : report.summary) {
    out << "mean," << report.task << ',' << report.dataset << ',' << name << ',' << m.mean << '\n';
    out << "sd," << report.task << ',' << report.dataset << ',' << name << ',' << m.stddev << '\n';
  }
}

}  // namespace absa
