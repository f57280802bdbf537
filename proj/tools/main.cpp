#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "absa/checkpoint.hpp"
#include "absa/config.hpp"
#include "absa/error.hpp"
#include "absa/harness.hpp"
#include "absa/ingest.hpp"
#include "absa/synthetic.hpp"

namespace fs = std::filesystem;
using namespace absa;

namespace {

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

// Registers one string option per config key. Keys with an underscore also
// accept the underscore spelling.
void add_config_flags(CLI::App& cmd, std::map<std::string, std::string>& values) {
  for (const auto& key : RunConfig::keys()) {
    std::string names = "--" + dashed(key);
    if (dashed(key) != key) names += ",--" + key;
    cmd.add_option(names, values[key], "config key " + key);
  }
}

RunConfig resolve_config(const CLI::App& cmd, const std::string& config_file,
                         const std::map<std::string, std::string>& values) {
  RunConfig config = config_file.empty() ? RunConfig{} : RunConfig::load(config_file);
  for (const auto& key : RunConfig::keys()) {
    if (cmd.count("--" + dashed(key)) > 0) config.set(key, values.at(key));
  }
  config.validate();
  return config;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::vector<fs::path> checkpoint_files(const fs::path& path) {
  if (!fs::is_directory(path)) return {path};
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.path().extension() == ".ckpt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .ckpt files in " + path.string());
  return files;
}

void print_metrics(const std::string& label, const std::map<std::string, double>& metrics) {
  std::cout << label;
  for (const auto& [k, v] : metrics) std::cout << ' ' << k << '=' << std::fixed << std::setprecision(4) << v;
  std::cout << '\n';
}

int run_train(const RunConfig& config) {
  const TrainResult result = train(config);
  for (const auto& s : result.report.per_seed) print_metrics("seed " + std::to_string(s.seed) + ":", s.values);
  std::ostringstream csv;
  write_metrics_csv(result.report, csv);
  if (config.out.empty()) std::cout << csv.str();
  else std::cout << "wrote " << config.out.string() << '\n';
  return 0;
}

int run_eval(const fs::path& ckpt_path, const fs::path& data_path, const fs::path& out,
             const std::string& infer) {
  std::vector<SeedMetrics> per_seed;
  std::string task_name;
  for (const auto& file : checkpoint_files(ckpt_path)) {
    Checkpoint ckpt = load_checkpoint(file);
    if (!infer.empty()) {
      RunConfig config = ckpt.config();
      config.set("infer_branch", infer);
      ckpt.config_text = config.to_text();
    }
    const RunConfig config = ckpt.config();
    task_name = std::string(to_string(config.task));
    const Dataset data = load_dataset(data_path.empty() ? config.test_data : data_path, config.task);
    const EvalResult result = evaluate(ckpt, data);
    print_metrics(file.filename().string() + ":", result.metrics);
    if (!out.empty()) {
      std::string rows;
      for (const auto& r : result.predictions) rows += r + "\n";
      write_file(out / ("predictions_seed_" + std::to_string(ckpt.seed) + ".jsonl"), rows);
    }
    per_seed.push_back({ckpt.seed, result.metrics});
  }
  RunReport report = aggregate_seeds(per_seed);
  report.task = task_name;
  report.dataset = data_path.empty() ? "test" : data_path.stem().string();
  std::ostringstream csv;
  write_metrics_csv(report, csv);
  if (out.empty()) std::cout << csv.str();
  else write_file(out / "eval_metrics.csv", csv.str());
  return 0;
}

int run_probe(const fs::path& ckpt_path, const fs::path& data_path, const fs::path& out,
              const ProbeOptions& options) {
  std::ostringstream csv;
  csv << "seed,layer,score\n" << std::setprecision(6);
  for (const auto& file : checkpoint_files(ckpt_path)) {
    const Checkpoint ckpt = load_checkpoint(file);
    const RunConfig config = ckpt.config();
    const Dataset data = load_dataset(data_path.empty() ? config.data : data_path, config.task);
    for (const auto& row : probe_layers(ckpt, data, options)) {
      csv << ckpt.seed << ',' << row.layer << ',' << row.score << '\n';
    }
  }
  if (out.empty()) std::cout << csv.str();
  else write_file(out / "probe.csv", csv.str());
  return 0;
}

int run_curves(const fs::path& run_dir, const fs::path& out) {
  std::ifstream in(run_dir / "report.json");
  if (!in) throw DataError("no report.json in " + run_dir.string());
  std::stringstream text;
  text << in.rdbuf();
  const RunReport report = report_from_json(text.str());
  std::ostringstream csv;
  emit_curves(report, csv);
  if (out.empty()) std::cout << csv.str();
  else write_file(out / "curves.csv", csv.str());
  return 0;
}

int run_synth(Task task, std::size_t n, std::uint64_t seed, const fs::path& out) {
  Dataset data;
  data.task = task;
  if (task == Task::kAe) data.ae = synthesize_ae(n, seed);
  else data.asc = synthesize_asc(n, seed);
  const fs::path file = (out.empty() ? fs::path(".") : out) / (std::string(to_string(task)) + ".jsonl");
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  save_dataset(data, file);
  std::cout << "wrote " << data.size() << " examples to " << file.string() << '\n';
  return 0;
}

int run_ingest(const fs::path& dir) {
  bool mismatch = false;
  std::size_t present = 0;
  for (const auto& c : verify_semeval(dir)) {
    const auto& ref = c.reference;
    std::cout << std::left << std::setw(6) << ref.dataset << ' ' << std::setw(4) << to_string(ref.task) << ' '
              << std::setw(5) << ref.split << ' ';
    auto join = [](const std::vector<std::size_t>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "/" : "") + std::to_string(v[i]);
      return s;
    };
    switch (c.status) {
      case IngestCheck::Status::kMissing:
        std::cout << "SKIP (file not found)\n";
        continue;
      case IngestCheck::Status::kMatch:
        std::cout << "OK   " << join(c.actual) << '\n';
        break;
      case IngestCheck::Status::kMismatch:
        std::cout << "FAIL " << join(c.actual) << " expected " << join(ref.expected) << '\n';
        mismatch = true;
        break;
    }
    ++present;
  }
  if (present == 0) std::cout << "no SemEval files found under " << dir.string() << '\n';
  if (mismatch) throw DataError("dataset statistics differ from the published counts");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aspect extraction and sentiment classification with multi-layer aggregation heads"};
  app.require_subcommand(1);

  std::map<std::string, std::string> train_values;
  std::string config_file;
  auto* train_cmd = app.add_subcommand("train", "train one model per seed");
  train_cmd->add_option("--config", config_file, "flat key = value config file")->check(CLI::ExistingFile);
  add_config_flags(*train_cmd, train_values);

  std::string checkpoint, data, out, infer;
  auto* eval_cmd = app.add_subcommand("eval", "score checkpoints on a dataset");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file or run directory")->required();
  eval_cmd->add_option("--data", data, "dataset (defaults to the run's test_data)");
  eval_cmd->add_option("--out", out, "directory for predictions and metrics");
  eval_cmd->add_option("--infer-branch,--infer_branch", infer, "mean|deepest");

  ProbeOptions probe_options;
  auto* probe_cmd = app.add_subcommand("probe", "fit a linear probe on every encoder layer");
  probe_cmd->add_option("--checkpoint", checkpoint, "checkpoint file or run directory")->required();
  probe_cmd->add_option("--data", data, "training data the checkpoint was fitted on");
  probe_cmd->add_option("--out", out, "directory for probe.csv");
  probe_cmd->add_option("--steps", probe_options.steps, "optimizer steps per probe");
  probe_cmd->add_option("--probe-lr", probe_options.lr, "probe learning rate");

  std::string run_dir;
  auto* curves_cmd = app.add_subcommand("curves", "per-epoch train/validation losses as CSV");
  curves_cmd->add_option("--run", run_dir, "directory written by train")->required();
  curves_cmd->add_option("--out", out, "directory for curves.csv");

  std::string task = "ae";
  std::size_t count = 50;
  std::uint64_t synth_seed = 1;
  auto* synth_cmd = app.add_subcommand("synth", "generate a templated synthetic corpus");
  synth_cmd->add_option("--task", task, "ae|asc");
  synth_cmd->add_option("-n,--count", count, "number of examples");
  synth_cmd->add_option("--seed", synth_seed, "generator seed");
  synth_cmd->add_option("--out", out, "output directory");

  auto* ingest_cmd = app.add_subcommand("ingest", "check SemEval files against published counts");
  ingest_cmd->add_option("--data", data, "directory holding the SemEval XML files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (*train_cmd) return run_train(resolve_config(*train_cmd, config_file, train_values));
    if (*eval_cmd) return run_eval(checkpoint, data, out, infer);
    if (*probe_cmd) return run_probe(checkpoint, data, out, probe_options);
    if (*curves_cmd) return run_curves(run_dir, out);
    if (*synth_cmd) return run_synth(parse_task(task), count, synth_seed, out);
    if (*ingest_cmd) return run_ingest(data);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
