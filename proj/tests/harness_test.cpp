#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "absa/checkpoint.hpp"
#include "absa/config.hpp"
#include "absa/error.hpp"
#include "absa/harness.hpp"
#include "absa/ingest.hpp"
#include "absa/synthetic.hpp"
#include "support/oracles.hpp"

namespace absa {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "absa_harness_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_config(Task task) {
  RunConfig c;
  c.task = task;
  c.mode = AggregationMode::kHSum;
  c.epochs = 3;
  c.batch_size = 8;
  c.lr = 1e-3;
  c.seeds = {1, 2, 3};
  c.validation_n = 6;
  c.dataset = "synthetic";
  c.encoder.num_layers = 4;
  c.encoder.hidden_size = 16;
  c.encoder.num_heads = 2;
  c.encoder.ff_size = 32;
  c.encoder.max_len = 48;
  return c;
}

Dataset synthetic(Task task, std::size_t n, std::uint64_t seed) {
  Dataset d;
  d.task = task;
  if (task == Task::kAe) d.ae = synthesize_ae(n, seed);
  else d.asc = synthesize_asc(n, seed);
  return d;
}

// ---------------------------------------------------------------------------
// Config

TEST(Config, TextRoundTrip) {
  auto c = small_config(Task::kAsc);
  c.infer_branch = InferBranch::kDeepest;
  c.single_segment = true;
  c.data = "some/path.jsonl";
  const auto back = RunConfig::from_text(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.task, Task::kAsc);
  EXPECT_EQ(back.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(back.lr, 1e-3);
  EXPECT_EQ(back.encoder.hidden_size, 16u);
}

TEST(Config, Defaults) {
  const RunConfig c;
  EXPECT_EQ(c.epochs, 4u);
  EXPECT_EQ(c.batch_size, 16u);
  EXPECT_EQ(c.lr, 3e-5);
  EXPECT_EQ(c.validation_n, 150u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3, 4, 5, 6, 7, 8, 9}));
}

TEST(Config, DashedKeysCommentsAndErrors) {
  const auto c = RunConfig::from_text("# study\nepochs = 30\ninfer-branch=deepest\n\nseeds = 4,5\n");
  EXPECT_EQ(c.epochs, 30u);
  EXPECT_EQ(c.infer_branch, InferBranch::kDeepest);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_THROW(RunConfig::from_text("colour = red\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_text("epochs 4\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_text("epochs = four\n"), ConfigError);
  RunConfig bad;
  bad.epochs = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad.epochs = 1;
  bad.seeds.clear();
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(parse_seed_list("1,,2"), ConfigError);
}

TEST(Config, EveryKeySettable) {
  const auto text = small_config(Task::kAe).to_text();
  for (const auto& key : RunConfig::keys()) EXPECT_NE(text.find(key + " = "), std::string::npos) << key;
}

// ---------------------------------------------------------------------------
// Shared small training run

class SmallRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    config_ = new RunConfig(small_config(Task::kAe));
    data_ = new Dataset(synthetic(Task::kAe, 24, 5));
    result_ = new TrainResult(train(*config_, *data_, nullptr));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete data_;
    delete config_;
  }
  static RunConfig* config_;
  static Dataset* data_;
  static TrainResult* result_;
};

RunConfig* SmallRun::config_ = nullptr;
Dataset* SmallRun::data_ = nullptr;
TrainResult* SmallRun::result_ = nullptr;

TEST_F(SmallRun, OneCheckpointPerSeed) {
  ASSERT_EQ(result_->checkpoints.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(result_->checkpoints[i].seed, config_->seeds[i]);
    EXPECT_EQ(result_->checkpoints[i].epoch, 3u);
  }
}

TEST_F(SmallRun, CheckpointBytesRoundTrip) {
  const auto& ckpt = result_->checkpoints[0];
  const auto bytes = serialize_checkpoint(ckpt);
  const auto back = deserialize_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(back.rng_state, ckpt.rng_state);
  EXPECT_EQ(back.optimizer.step, ckpt.optimizer.step);
}

TEST_F(SmallRun, RestoredModelForwardIsBitExact) {
  const auto& ckpt = result_->checkpoints[1];
  const auto dir = scratch("restore");
  save_checkpoint(ckpt, dir / "m.ckpt");
  const auto loaded = load_checkpoint(dir / "m.ckpt");
  const AbsaModel a = restore_model(ckpt);
  const AbsaModel b = restore_model(loaded);
  EXPECT_EQ(parameter_fingerprint(a), parameter_fingerprint(b));
  const auto vocab = loaded.vocab();
  for (const auto& ex : encode_dataset(*data_, vocab, *config_)) {
    const auto oa = a.forward(ex.seq), ob = b.forward(ex.seq);
    for (std::size_t i = 0; i < oa.branch_scores.size(); ++i) {
      ASSERT_EQ(oa.branch_scores[i].data().size(), ob.branch_scores[i].data().size());
      for (std::size_t k = 0; k < oa.branch_scores[i].numel(); ++k)
        ASSERT_EQ(oa.branch_scores[i].data()[k], ob.branch_scores[i].data()[k]);
    }
  }
}

TEST_F(SmallRun, EveryParameterStoredOnce) {
  const auto& ckpt = result_->checkpoints[0];
  const AbsaModel model = restore_model(ckpt);
  std::multiset<std::string> stored;
  for (const auto& p : ckpt.parameters) stored.insert(p.name);
  const auto named = model.named_parameters();
  EXPECT_EQ(stored.size(), named.size());
  for (const auto& [name, t] : named) EXPECT_EQ(stored.count(name), 1u) << name;
}

TEST_F(SmallRun, CorruptionIsDetected) {
  const auto bytes = serialize_checkpoint(result_->checkpoints[0]);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    auto bad = bytes;
    bad[rng() % bad.size()] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    EXPECT_THROW(deserialize_checkpoint(bad), DataError);
  }
  auto truncated = bytes;
  truncated.resize(bytes.size() - 9);
  EXPECT_THROW(deserialize_checkpoint(truncated), IntegrityError);
  truncated.resize(6);
  EXPECT_THROW(deserialize_checkpoint(truncated), IntegrityError);
  auto payload = bytes;
  payload[20] ^= 0x40;
  EXPECT_THROW(deserialize_checkpoint(payload), IntegrityError);
  auto version = bytes;
  version[8] = 7;
  EXPECT_THROW(deserialize_checkpoint(version), IncompatibleVersionError);
}

TEST_F(SmallRun, EvaluateDeterministicAndComplete) {
  const auto& ckpt = result_->checkpoints[2];
  const auto first = evaluate(ckpt, *data_);
  const auto second = evaluate(ckpt, *data_);
  EXPECT_EQ(first.metrics, second.metrics);
  EXPECT_EQ(first.predictions, second.predictions);
  EXPECT_EQ(first.predictions.size(), data_->size());
  for (const auto& [k, v] : first.metrics) {
    EXPECT_GE(v, 0.0) << k;
    EXPECT_LE(v, 1.0) << k;
  }
  EXPECT_THROW(evaluate(ckpt, synthetic(Task::kAsc, 5, 1)), ConfigError);
}

TEST_F(SmallRun, ProbeHasOneRowPerLayerAndLeavesModelAlone) {
  const auto& ckpt = result_->checkpoints[0];
  const AbsaModel before = restore_model(ckpt);
  const auto fp = parameter_fingerprint(before);
  const auto rows = probe_layers(ckpt, *data_, ProbeOptions{40, 0.05});
  ASSERT_EQ(rows.size(), config_->encoder.num_layers + 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].layer, i);
    EXPECT_TRUE(std::isfinite(rows[i].score));
  }
  EXPECT_EQ(parameter_fingerprint(restore_model(ckpt)), fp);

  const auto vocab = ckpt.vocab();
  const auto [fit, held] = split_dataset(*data_, config_->validation_n, ckpt.seed);
  probe_layers(before, vocab, *config_, fit, held, ProbeOptions{10, 0.05});
  EXPECT_EQ(parameter_fingerprint(before), fp);
}

TEST_F(SmallRun, CurvesShapeAndValues) {
  std::ostringstream out;
  emit_curves(result_->report, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "seed,epoch,split,loss");
  std::size_t rows = 0, train_rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const auto last = line.rfind(',');
    const double loss = std::stod(line.substr(last + 1));
    if (line.find(",train,") != std::string::npos) {
      ++train_rows;
      EXPECT_TRUE(std::isfinite(loss));
      EXPECT_GE(loss, 0.0);
    }
  }
  EXPECT_EQ(rows, 3u * 3u * 2u);
  EXPECT_EQ(train_rows, 9u);
}

TEST_F(SmallRun, ReportJsonRoundTrip) {
  const auto text = report_to_json(result_->report);
  const auto back = report_from_json(text);
  EXPECT_EQ(report_to_json(back), text);
  ASSERT_EQ(back.losses.size(), result_->report.losses.size());
  for (std::size_t i = 0; i < back.losses.size(); ++i) EXPECT_EQ(back.losses[i].train, result_->report.losses[i].train);
}

TEST_F(SmallRun, SeedAverageEqualsIndependentReruns) {
  std::map<std::string, std::vector<double>> values;
  for (std::uint64_t seed : config_->seeds) {
    const auto run = train_seed(*config_, *data_, seed);
    for (const auto& [k, v] : run.metrics.values) values[k].push_back(v);
    const auto& recorded = result_->report.per_seed[seed - 1];
    EXPECT_EQ(recorded.values, run.metrics.values) << "seed " << seed;
  }
  for (const auto& [k, vs] : values) {
    double sum = 0;
    for (double v : vs) sum += v;
    EXPECT_NEAR(result_->report.summary.at(k).mean, sum / vs.size(), 1e-12) << k;
  }
}

TEST(Training, RerunsWriteIdenticalFiles) {
  auto config = small_config(Task::kAsc);
  config.seeds = {4, 5};
  config.epochs = 2;
  config.out = scratch("rerun");
  const auto data = synthetic(Task::kAsc, 20, 3);
  const std::vector<std::string> files{"config.txt", "metrics.csv", "curves.csv", "report.json",
                                       "seed_4.ckpt", "seed_5.ckpt", "vocab_seed_4.txt"};
  train(config, data, nullptr);
  std::map<std::string, std::string> first;
  for (const auto& f : files) {
    ASSERT_TRUE(fs::exists(config.out / f)) << f;
    first[f] = slurp(config.out / f);
  }
  train(config, data, nullptr);
  for (const auto& f : files) EXPECT_EQ(slurp(config.out / f), first[f]) << f;
}

TEST(Training, DivergenceIsNumericError) {
  auto config = small_config(Task::kAe);
  config.seeds = {1};
  config.lr = 1e300;
  try {
    train(config, synthetic(Task::kAe, 16, 2), nullptr);
    FAIL() << "no error";
  } catch (const NumericError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("epoch"), std::string::npos) << what;
    EXPECT_NE(what.find("batch"), std::string::npos) << what;
    EXPECT_NE(what.find("norm"), std::string::npos) << what;
  }
}

TEST(Training, ValidationTooLargeIsConfigError) {
  auto config = small_config(Task::kAe);
  config.validation_n = 30;
  EXPECT_THROW(train_seed(config, synthetic(Task::kAe, 20, 1), 1), ConfigError);
}

// The overfit run used by the acceptance suite, checked here for the loss
// trend: after the second epoch the training loss should keep falling.
TEST(Training, SyntheticTrainLossMonotoneAfterEpochTwo) {
  RunConfig config;
  config.task = Task::kAe;
  config.mode = AggregationMode::kPSum;
  config.epochs = 30;
  config.lr = 1e-3;
  config.validation_n = 10;
  config.seeds = {1};
  const auto data = load_dataset(fs::path(ABSA_SOURCE_DIR) / "data/synthetic/ae.jsonl", Task::kAe);
  const auto run = train_seed(config, data, 1);
  ASSERT_EQ(run.losses.size(), 30u);
  for (std::size_t e = 2; e < run.losses.size(); ++e)
    EXPECT_LE(run.losses[e].train, run.losses[e - 1].train) << "epoch " << e + 1;
}

// ---------------------------------------------------------------------------
// Synthetic corpus and ingestion

TEST(Synthetic, DeterministicAndWellFormed) {
  const auto a = synthesize_ae(60, 9), b = synthesize_ae(60, 9);
  ASSERT_EQ(a.size(), 60u);
  std::size_t empty = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].text, b[i].text);
    EXPECT_EQ(a[i].tags, b[i].tags);
    EXPECT_TRUE(oracle::bio_valid(a[i].tags));
    EXPECT_EQ(bio_decode(a[i].tags, a[i].tokens), a[i].aspects);
    empty += a[i].aspects.empty();
  }
  EXPECT_GT(empty, 0u);
  EXPECT_NE(synthesize_ae(60, 10)[0].text + synthesize_ae(60, 10)[1].text, a[0].text + a[1].text);

  const auto asc = synthesize_asc(60, 9);
  std::set<int> classes;
  for (const auto& ex : asc) {
    classes.insert(ex.polarity);
    EXPECT_NE(ex.text.find(ex.aspect), std::string::npos);
  }
  EXPECT_EQ(classes, (std::set<int>{kPositive, kNegative, kNeutral}));
}

TEST(Ingest, ReferenceTable) {
  std::map<std::string, std::vector<std::size_t>> table;
  for (const auto& r : reference_counts())
    table[r.dataset + "/" + std::string(to_string(r.task)) + "/" + r.split] = r.expected;
  EXPECT_EQ(table.size(), 8u);
  EXPECT_EQ(table.at("LPT14/ae/train"), (std::vector<std::size_t>{3045, 2358}));
  EXPECT_EQ(table.at("LPT14/ae/test"), (std::vector<std::size_t>{800, 654}));
  EXPECT_EQ(table.at("RST16/ae/train"), (std::vector<std::size_t>{2000, 1743}));
  EXPECT_EQ(table.at("RST16/ae/test"), (std::vector<std::size_t>{676, 622}));
  EXPECT_EQ(table.at("LPT14/asc/train"), (std::vector<std::size_t>{987, 866, 460}));
  EXPECT_EQ(table.at("LPT14/asc/test"), (std::vector<std::size_t>{341, 128, 169}));
  EXPECT_EQ(table.at("RST14/asc/train"), (std::vector<std::size_t>{2164, 805, 633}));
  EXPECT_EQ(table.at("RST14/asc/test"), (std::vector<std::size_t>{728, 196, 196}));
}

TEST(Ingest, MissingAndMismatch) {
  const auto dir = scratch("ingest");
  for (const auto& c : verify_semeval(dir)) EXPECT_EQ(c.status, IngestCheck::Status::kMissing);
  fs::create_directories(dir / "nested");
  fs::copy_file(fs::path(ABSA_TEST_DATA_DIR) / "laptop_2014.xml", dir / "nested/Laptops_Test_Gold.xml");
  std::size_t mismatches = 0;
  for (const auto& c : verify_semeval(dir)) {
    if (c.status != IngestCheck::Status::kMismatch) continue;
    ++mismatches;
    EXPECT_EQ(c.reference.dataset, "LPT14");
    if (c.reference.task == Task::kAe) EXPECT_EQ(c.actual, (std::vector<std::size_t>{4, 7}));
    else EXPECT_EQ(c.actual, (std::vector<std::size_t>{2, 2, 2}));
  }
  EXPECT_EQ(mismatches, 2u);
}

// ---------------------------------------------------------------------------
// Command line

#ifdef ABSA_CLI_PATH
int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + ABSA_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  const std::string d = dir.string();
  EXPECT_EQ(run_cli("synth --task ae --count 20 --seed 3 --out " + d), 0);
  ASSERT_TRUE(fs::exists(dir / "ae.jsonl"));
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("train --task ae --epochs 0 --data " + d + "/ae.jsonl"), 2);
  EXPECT_EQ(run_cli("train --task xx --data " + d + "/ae.jsonl"), 2);
  EXPECT_EQ(run_cli("train --task ae --data " + d + "/missing.jsonl"), 3);
  EXPECT_EQ(run_cli("train --task ae --seeds 1 --lr 1e300 --validation-n 4 --num-layers 4 --hidden-size 8 "
                    "--num-heads 2 --ff-size 16 --data " + d + "/ae.jsonl"),
            4);
  EXPECT_EQ(run_cli("ingest --data " + d), 0);
}

TEST(Cli, ConfigFileWithFlagOverride) {
  const auto dir = scratch("cli_cfg");
  const std::string d = dir.string();
  ASSERT_EQ(run_cli("synth --task asc --count 16 --seed 4 --out " + d), 0);
  {
    std::ofstream(dir / "run.cfg") << "task = asc\nmode = vanilla\nepochs = 5\nseeds = 2\nvalidation_n = 4\n"
                                   << "num_layers = 2\nhidden_size = 8\nnum_heads = 2\nff_size = 16\nlr = 0.001\n";
  }
  ASSERT_EQ(run_cli("train --config " + d + "/run.cfg --epochs 1 --data " + d + "/asc.jsonl --out " + d + "/run"), 0);
  const auto saved = RunConfig::load(dir / "run/config.txt");
  EXPECT_EQ(saved.epochs, 1u);
  EXPECT_EQ(saved.mode, AggregationMode::kVanilla);
  EXPECT_EQ(saved.seeds, (std::vector<std::uint64_t>{2}));
  EXPECT_EQ(run_cli("eval --checkpoint " + d + "/run --data " + d + "/asc.jsonl --out " + d + "/eval"), 0);
  EXPECT_TRUE(fs::exists(dir / "eval/predictions_seed_2.jsonl"));
  EXPECT_EQ(run_cli("eval --checkpoint " + d + "/run --data " + d + "/ae.jsonl"), 3);
  EXPECT_EQ(run_cli("curves --run " + d + "/run --out " + d + "/plots"), 0);
  EXPECT_TRUE(fs::exists(dir / "plots/curves.csv"));
  EXPECT_EQ(run_cli("probe --checkpoint " + d + "/run --data " + d + "/asc.jsonl --steps 5 --out " + d + "/probe"), 0);
}
#endif

}  // namespace
}  // namespace absa
