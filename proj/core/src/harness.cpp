#include "absa/harness.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "absa/crf.hpp"
#include "absa/error.hpp"
#include "absa/ops.hpp"
#include "absa/optim.hpp"

namespace absa {
namespace {

using nlohmann::json;

double parameter_norm(const std::vector<Tensor>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double v : p.data()) sq += v * v;
  }
  return std::sqrt(sq);
}

std::vector<std::string> ae_words(const AeExample& ex) { return ex.words(); }

std::vector<std::string> asc_words(const AscExample& ex) {
  std::vector<std::string> words = ex.sentence_tokens;
  words.insert(words.end(), ex.aspect_tokens.begin(), ex.aspect_tokens.end());
  return words;
}

void require_task(const Dataset& data, Task task) {
  if (data.task != task) {
    throw ConfigError("model was trained for " + std::string(to_string(task)) + " but the dataset is " +
                      std::string(to_string(data.task)));
  }
}

void write_lines(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

}  // namespace

// ---------------------------------------------------------------------------
// Datasets

Dataset load_dataset(const std::filesystem::path& path, Task task) {
  if (!std::filesystem::exists(path)) throw DataError("dataset not found: " + path.string());
  Dataset data;
  data.task = task;
  const bool xml = path.extension() == ".xml";
  if (task == Task::kAe) {
    data.ae = xml ? parse_semeval_ae(path) : load_ae_jsonl(path);
  } else {
    data.asc = xml ? parse_semeval_asc(path) : load_asc_jsonl(path);
  }
  if (data.size() == 0) throw DataError("dataset " + path.string() + " holds no examples");
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  if (data.task == Task::kAe) {
    save_ae_jsonl(data.ae, path);
  } else {
    save_asc_jsonl(data.asc, path);
  }
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, std::size_t n, std::uint64_t seed) {
  std::pair<Dataset, Dataset> out;
  out.first.task = out.second.task = data.task;
  if (data.task == Task::kAe) {
    std::tie(out.first.ae, out.second.ae) = split_validation(data.ae, n, seed);
  } else {
    std::tie(out.first.asc, out.second.asc) = split_validation(data.asc, n, seed);
  }
  return out;
}

Vocabulary build_vocab(const Dataset& data, std::size_t min_count) {
  std::vector<std::vector<std::string>> corpus;
  if (data.task == Task::kAe) {
    for (const auto& ex : data.ae) corpus.push_back(ae_words(ex));
  } else {
    for (const auto& ex : data.asc) corpus.push_back(asc_words(ex));
  }
  return Vocabulary::build(corpus, min_count);
}

std::vector<EncodedExample> encode_dataset(const Dataset& data, const Vocabulary& vocab,
                                           const RunConfig& config) {
  std::vector<EncodedExample> out;
  out.reserve(data.size());
  if (data.task == Task::kAe) {
    for (const auto& ex : data.ae) out.push_back(encode_ae(ex, vocab, config.encoder));
  } else {
    for (const auto& ex : data.asc) out.push_back(encode_asc(ex, vocab, config.encoder, config.single_segment));
  }
  return out;
}

double mean_loss(const AbsaModel& model, const std::vector<EncodedExample>& examples) {
  if (examples.empty()) return std::numeric_limits<double>::quiet_NaN();
  NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& ex : examples) total += model.loss(ex.seq, ex.target).total.item();
  return total / static_cast<double>(examples.size());
}

// ---------------------------------------------------------------------------
// Training

SeedRun train_seed(const RunConfig& config, const Dataset& train, std::uint64_t seed, const Dataset* test) {
  config.validate();
  auto [train_part, validation_part] = split_dataset(train, config.validation_n, seed);
  Vocabulary vocab = build_vocab(train_part, config.min_count);
  SeedRun run{seed,
              AbsaModel(config.model_spec(vocab.size()), seed),
              vocab,
              AdamState{},
              std::mt19937_64(seed ^ 0x9e3779b97f4a7c15ull),
              0,
              {},
              {},
              std::move(train_part),
              std::move(validation_part)};
  run.metrics.seed = seed;

  const auto train_enc = encode_dataset(run.train_part, run.vocab, config);
  const auto val_enc = encode_dataset(run.validation_part, run.vocab, config);

  auto params = run.model.parameters();
  AdamOptimizer optimizer(params, config.lr);
  ForwardContext ctx{true, &run.rng};

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    BatchIterator batches(train_enc, config.batch_size, seed, epoch, config.encoder.pad_id);
    std::size_t batch_index = 0;
    while (batches.has_next()) {
      const Batch batch = batches.next();
      optimizer.zero_grad();
      auto diagnose = [&](const std::string& what) {
        std::ostringstream msg;
        msg << what << " at epoch " << epoch << ", batch " << batch_index << " (seed " << seed
            << ", parameter norm " << parameter_norm(params) << ")";
        return NumericError(msg.str());
      };
      Tensor loss;
      try {
        std::vector<Tensor> losses;
        losses.reserve(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
          losses.push_back(run.model.loss(batch.sequences[i], batch.targets[i], ctx).total);
        }
        loss = scale(add_n(losses), 1.0 / static_cast<double>(batch.size()));
      } catch (const NumericError& e) {
        throw diagnose(e.what());
      }
      if (!std::isfinite(loss.item())) {
        std::ostringstream what;
        what << "non-finite loss " << loss.item();
        throw diagnose(what.str());
      }
      loss.backward();
      optimizer.step();
      ++batch_index;
    }
    run.epochs_done = epoch;
    run.losses.push_back({seed, epoch, mean_loss(run.model, train_enc), mean_loss(run.model, val_enc)});
  }
  run.optimizer = optimizer.state();

  const std::string score_key = config.task == Task::kAe ? "f1" : "acc";
  auto record = [&](const std::string& prefix, const Dataset& data) {
    if (data.size() == 0) return;
    for (const auto& [key, value] : evaluate(run.model, run.vocab, config, data).metrics) {
      run.metrics.values[prefix + key] = value;
    }
  };
  record("train_", run.train_part);
  record("val_", run.validation_part);
  if (test != nullptr) record("test_", *test);
  if (!run.losses.empty()) {
    run.metrics.values["train_loss"] = run.losses.back().train;
    if (std::isfinite(run.losses.back().validation)) run.metrics.values["val_loss"] = run.losses.back().validation;
  }
  return run;
}

TrainResult train(const RunConfig& config) {
  config.validate();
  if (config.data.empty()) throw ConfigError("no training data given (set data)");
  const Dataset train_data = load_dataset(config.data, config.task);
  std::optional<Dataset> test_data;
  if (!config.test_data.empty()) test_data = load_dataset(config.test_data, config.task);
  return train(config, train_data, test_data ? &*test_data : nullptr);
}

TrainResult train(const RunConfig& config, const Dataset& train_data, const Dataset* test_data) {
  require_task(train_data, config.task);
  if (!config.out.empty()) {
    std::filesystem::create_directories(config.out);
    config.save(config.out / "config.txt");
  }
  TrainResult result;
  std::vector<SeedMetrics> per_seed;
  std::vector<EpochLoss> losses;
  for (std::uint64_t seed : config.seeds) {
    SeedRun run = train_seed(config, train_data, seed, test_data);
    Checkpoint ckpt = make_checkpoint(run.model, run.vocab, config, run.optimizer, run.epochs_done, seed, run.rng);
    if (!config.out.empty()) {
      save_checkpoint(ckpt, config.out / ("seed_" + std::to_string(seed) + ".ckpt"));
      run.vocab.save(config.out / ("vocab_seed_" + std::to_string(seed) + ".txt"));
    }
    per_seed.push_back(run.metrics);
    losses.insert(losses.end(), run.losses.begin(), run.losses.end());
    result.checkpoints.push_back(std::move(ckpt));
  }
  result.report = aggregate_seeds(std::move(per_seed));
  result.report.task = std::string(to_string(config.task));
  result.report.dataset = config.dataset;
  result.report.losses = std::move(losses);

  if (!config.out.empty()) {
    std::ostringstream metrics, curves;
    write_metrics_csv(result.report, metrics);
    emit_curves(result.report, curves);
    write_lines(config.out / "metrics.csv", metrics.str());
    write_lines(config.out / "curves.csv", curves.str());
    write_lines(config.out / "report.json", report_to_json(result.report));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalResult evaluate(const AbsaModel& model, const Vocabulary& vocab, const RunConfig& config, const Dataset& data) {
  require_task(data, model.spec().task);
  EvalResult result;
  if (data.task == Task::kAe) {
    std::vector<std::vector<int>> predicted, gold;
    for (const auto& ex : data.ae) {
      const auto enc = encode_ae(ex, vocab, config.encoder);
      TagSequence tags = model.predict_tags(enc.seq);
      tags.resize(ex.tags.size(), kTagO);  // positions lost to truncation
      json row;
      row["id"] = ex.id;
      json spans = json::array();
      for (const auto& s : bio_decode(tags, ex.tokens)) spans.push_back({s.begin, s.end});
      row["predicted"] = spans;
      std::string letters;
      for (int t : tags) letters += "BIO"[t];
      row["tags"] = letters;
      result.predictions.push_back(row.dump());
      predicted.push_back(std::move(tags));
      gold.push_back(ex.tags);
    }
    const auto pred_spans = collect_spans(predicted);
    const auto gold_spans = collect_spans(gold);
    const PrfScores s = ae_span_f1(pred_spans, gold_spans);
    result.metrics = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
  } else {
    std::vector<int> predicted, gold;
    for (const auto& ex : data.asc) {
      const auto enc = encode_asc(ex, vocab, config.encoder, config.single_segment);
      const int label = model.predict_class(enc.seq);
      json row;
      row["id"] = ex.id;
      row["aspect"] = ex.aspect;
      row["predicted"] = std::string(polarity_name(label));
      row["gold"] = std::string(polarity_name(ex.polarity));
      result.predictions.push_back(row.dump());
      predicted.push_back(label);
      gold.push_back(ex.polarity);
    }
    const AscScores s = asc_scores(predicted, gold);
    result.metrics = {{"acc", s.accuracy}, {"mf1", s.macro_f1}};
  }
  return result;
}

EvalResult evaluate(const Checkpoint& ckpt, const Dataset& data) {
  const RunConfig config = ckpt.config();
  require_task(data, config.task);
  const AbsaModel model = restore_model(ckpt);
  return evaluate(model, ckpt.vocab(), config, data);
}

// ---------------------------------------------------------------------------
// Layer probing

namespace {

struct ProbeFeatures {
  std::vector<std::vector<double>> layer_rows;  // per layer, N x H row-major
  std::vector<int> labels;                       // N
  std::vector<std::size_t> lengths;              // AE: rows per sentence
};

ProbeFeatures probe_features(const AbsaModel& model, const std::vector<EncodedExample>& examples, Task task) {
  NoGradGuard no_grad;
  const std::size_t layers = model.encoder().config().num_layers + 1;
  ProbeFeatures f;
  f.layer_rows.resize(layers);
  for (const auto& ex : examples) {
    const auto hiddens = model.encoder().forward(ex.seq);
    const SequenceView view = SequenceView::of(ex.seq);
    const std::size_t begin = task == Task::kAe ? view.word_begin : 0;
    const std::size_t count = task == Task::kAe ? view.word_count : 1;
    for (std::size_t l = 0; l < layers; ++l) {
      const Tensor rows = slice_rows(hiddens[l], begin, count);
      f.layer_rows[l].insert(f.layer_rows[l].end(), rows.data().begin(), rows.data().end());
    }
    if (task == Task::kAe) {
      f.labels.insert(f.labels.end(), ex.target.tags.begin(), ex.target.tags.end());
      f.lengths.push_back(count);
    } else {
      f.labels.push_back(ex.target.label);
    }
  }
  return f;
}

// Multinomial logistic regression by full-batch Adam from zero weights.
std::pair<Tensor, Tensor> fit_linear(const std::vector<double>& rows, const std::vector<int>& labels,
                                     std::size_t hidden, std::size_t classes, const ProbeOptions& options) {
  const std::size_t n = labels.size();
  Tensor x({n, hidden}, rows);
  std::vector<double> onehot(n * classes, 0.0);
  for (std::size_t i = 0; i < n; ++i) onehot[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  Tensor y({n, classes}, std::move(onehot));
  Tensor w = Tensor::zeros({hidden, classes}, true);
  Tensor b = Tensor::zeros({classes}, true);
  std::vector<Tensor> params{w, b};
  AdamOptimizer opt(params, options.lr);
  for (std::size_t step = 0; step < options.steps; ++step) {
    opt.zero_grad();
    Tensor logits = add_row(matmul(x, w), b);
    Tensor loss = scale(sub(sum(logsumexp(logits, 1)), sum(mul(logits, y))), 1.0 / static_cast<double>(n));
    loss.backward();
    opt.step();
  }
  return {w, b};
}

}  // namespace

std::vector<ProbeRow> probe_layers(const AbsaModel& model, const Vocabulary& vocab, const RunConfig& config,
                                   const Dataset& fit, const Dataset& held_out, const ProbeOptions& options) {
  const Task task = model.spec().task;
  require_task(fit, task);
  require_task(held_out, task);
  const std::size_t hidden = model.encoder().config().hidden_size;
  const std::size_t classes = task == Task::kAe ? kNumBioTags : kNumPolarities;
  const ProbeFeatures train_f = probe_features(model, encode_dataset(fit, vocab, config), task);
  const ProbeFeatures eval_f = probe_features(model, encode_dataset(held_out, vocab, config), task);
  const CrfParams flat = CrfParams::zeros(hidden, kNumBioTags);

  std::vector<ProbeRow> table;
  for (std::size_t l = 0; l < train_f.layer_rows.size(); ++l) {
    const auto [w, b] = fit_linear(train_f.layer_rows[l], train_f.labels, hidden, classes, options);
    NoGradGuard no_grad;
    const std::size_t n = eval_f.labels.size();
    const Tensor logits = add_row(matmul(Tensor({n, hidden}, eval_f.layer_rows[l]), w), b);
    double score = 0.0;
    if (task == Task::kAe) {
      std::vector<std::vector<int>> predicted, gold;
      std::size_t row = 0;
      for (std::size_t len : eval_f.lengths) {
        predicted.push_back(len == 0 ? TagSequence{} : viterbi_decode(slice_rows(logits, row, len), flat, true));
        gold.emplace_back(eval_f.labels.begin() + static_cast<std::ptrdiff_t>(row),
                          eval_f.labels.begin() + static_cast<std::ptrdiff_t>(row + len));
        row += len;
      }
      score = ae_span_f1(collect_spans(predicted), collect_spans(gold)).f1;
    } else {
      std::size_t correct = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = logits.data().subspan(i * classes, classes);
        if (static_cast<int>(argmax(r)) == eval_f.labels[i]) ++correct;
      }
      score = n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
    }
    table.push_back({l, score});
  }
  return table;
}

std::vector<ProbeRow> probe_layers(const Checkpoint& ckpt, const Dataset& train_data, const ProbeOptions& options) {
  const RunConfig config = ckpt.config();
  require_task(train_data, config.task);
  const auto [fit, held_out] = split_dataset(train_data, config.validation_n, ckpt.seed);
  const AbsaModel model = restore_model(ckpt);
  return probe_layers(model, ckpt.vocab(), config, fit, held_out, options);
}

// ---------------------------------------------------------------------------
// Reporting

void emit_curves(const RunReport& report, std::ostream& out) {
  out << "seed,epoch,split,loss\n";
  out << std::setprecision(17);
  for (const auto& e : report.losses) {
    out << e.seed << ',' << e.epoch << ",train," << e.train << '\n';
    out << e.seed << ',' << e.epoch << ",validation," << e.validation << '\n';
  }
}

std::string report_to_json(const RunReport& report) {
  json j;
  j["task"] = report.task;
  j["dataset"] = report.dataset;
  j["seeds"] = report.seeds;
  json losses = json::array();
  for (const auto& e : report.losses) {
    // NaN has no JSON spelling; an empty validation split is stored as null.
    json v = std::isfinite(e.validation) ? json(e.validation) : json(nullptr);
    losses.push_back({{"seed", e.seed}, {"epoch", e.epoch}, {"train", e.train}, {"validation", v}});
  }
  j["losses"] = losses;
  json per_seed = json::array();
  for (const auto& s : report.per_seed) per_seed.push_back({{"seed", s.seed}, {"values", s.values}});
  j["per_seed"] = per_seed;
  return j.dump(2) + "\n";
}

RunReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed run report: ") + e.what());
  }
  try {
    std::vector<SeedMetrics> per_seed;
    for (const auto& s : j.at("per_seed")) {
      per_seed.push_back({s.at("seed").get<std::uint64_t>(), s.at("values").get<std::map<std::string, double>>()});
    }
    RunReport report = aggregate_seeds(std::move(per_seed));
    report.task = j.at("task").get<std::string>();
    report.dataset = j.at("dataset").get<std::string>();
    for (const auto& e : j.at("losses")) {
      const auto& v = e.at("validation");
      report.losses.push_back({e.at("seed").get<std::uint64_t>(), e.at("epoch").get<std::size_t>(),
                               e.at("train").get<double>(),
                               v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>()});
    }
    return report;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed run report: ") + e.what());
  }
}

}  // namespace absa
