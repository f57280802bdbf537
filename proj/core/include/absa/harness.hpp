#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "absa/checkpoint.hpp"
#include "absa/config.hpp"
#include "absa/data.hpp"
#include "absa/metrics.hpp"
#include "absa/model.hpp"

namespace absa {

/// Examples of one task. Only the vector matching `task` is populated.
struct Dataset {
  Task task = Task::kAe;
  std::vector<AeExample> ae;
  std::vector<AscExample> asc;

  std::size_t size() const { return task == Task::kAe ? ae.size() : asc.size(); }
};

/// `.xml` files go through the SemEval parser, anything else is read as
/// line-delimited JSON records.
Dataset load_dataset(const std::filesystem::path& path, Task task);
void save_dataset(const Dataset& data, const std::filesystem::path& path);

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, std::size_t n, std::uint64_t seed);
Vocabulary build_vocab(const Dataset& data, std::size_t min_count = 1);
std::vector<EncodedExample> encode_dataset(const Dataset& data, const Vocabulary& vocab,
                                           const RunConfig& config);

/// Mean per-example total loss, no gradient recording.
double mean_loss(const AbsaModel& model, const std::vector<EncodedExample>& examples);

// ---------------------------------------------------------------------------
// Training

struct SeedRun {
  std::uint64_t seed = 0;
  AbsaModel model;
  Vocabulary vocab;
  AdamState optimizer;
  std::mt19937_64 rng;
  std::size_t epochs_done = 0;
  std::vector<EpochLoss> losses;
  SeedMetrics metrics;
  Dataset train_part;
  Dataset validation_part;
};

/// One seed: split off the validation set, build the vocabulary, then
/// epochs x batches of Adam on the summed branch losses. Throws
/// NumericError on a non-finite batch loss.
SeedRun train_seed(const RunConfig& config, const Dataset& train, std::uint64_t seed,
                   const Dataset* test = nullptr);

struct TrainResult {
  RunReport report;
  std::vector<Checkpoint> checkpoints;
};

/// All seeds of `config`. When config.out is set, writes config.txt,
/// seed_<s>.ckpt, vocab_seed_<s>.txt, metrics.csv, curves.csv and report.json.
TrainResult train(const RunConfig& config);
TrainResult train(const RunConfig& config, const Dataset& train_data, const Dataset* test_data);

// ---------------------------------------------------------------------------
// Evaluation and analysis

struct EvalResult {
  std::map<std::string, double> metrics;
  std::vector<std::string> predictions;  // one JSON object per example
};

/// Constrained decoding for AE, argmax for ASC. Throws ConfigError when the
/// dataset task differs from the model's.
EvalResult evaluate(const AbsaModel& model, const Vocabulary& vocab, const RunConfig& config,
                    const Dataset& data);
EvalResult evaluate(const Checkpoint& ckpt, const Dataset& data);

struct ProbeOptions {
  std::size_t steps = 300;
  double lr = 0.05;
};

struct ProbeRow {
  std::size_t layer = 0;  // 0 = embedding output
  double score = 0.0;     // span F1 (AE) or accuracy (ASC) on the held-out set
};

/// Fits a fresh linear softmax head on each frozen encoder layer using
/// `fit`, then scores it on `held_out`. Returns L + 1 rows.
std::vector<ProbeRow> probe_layers(const AbsaModel& model, const Vocabulary& vocab,
                                   const RunConfig& config, const Dataset& fit,
                                   const Dataset& held_out, const ProbeOptions& options = {});
/// Re-derives the checkpoint's train/validation split from `train_data`.
std::vector<ProbeRow> probe_layers(const Checkpoint& ckpt, const Dataset& train_data,
                                   const ProbeOptions& options = {});

/// Rows `seed,epoch,split,loss`, train then validation for each epoch.
void emit_curves(const RunReport& report, std::ostream& out);

std::string report_to_json(const RunReport& report);
RunReport report_from_json(const std::string& text);

}  // namespace absa
