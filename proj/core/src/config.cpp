#include "absa/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "absa/error.hpp"

namespace absa {
namespace {

std::string normalize_key(std::string_view key) {
  std::string k(key);
  while (!k.empty() && k.front() == '-') k.erase(k.begin());
  std::replace(k.begin(), k.end(), '-', '_');
  return k;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_count(std::string_view key, std::string_view value) {
  std::size_t v = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("key '" + std::string(key) + "': expected a non-negative integer, got '" +
                      std::string(value) + "'");
  }
  return v;
}

double parse_real(std::string_view key, std::string_view value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(std::string(value), &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + std::string(key) + "': expected a number, got '" + std::string(value) + "'");
  }
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("key '" + std::string(key) + "': expected true|false, got '" + std::string(value) + "'");
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = trim(text.substr(start, comma == std::string_view::npos ? text.size() - start : comma - start));
    if (item.empty()) throw ConfigError("empty entry in seed list '" + std::string(text) + "'");
    seeds.push_back(parse_count("seeds", item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return seeds;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k{
      "task",        "mode",      "infer_branch", "data",      "test_data",     "out",
      "dataset",     "epochs",    "batch_size",   "lr",        "seeds",         "validation_n",
      "min_count",   "single_segment", "num_layers", "hidden_size", "num_heads", "ff_size",
      "max_len",     "dropout",   "init_std"};
  return k;
}

void RunConfig::set(std::string_view raw_key, std::string_view raw_value) {
  const std::string key = normalize_key(raw_key);
  const std::string value = trim(raw_value);
  if (key == "task") task = parse_task(value);
  else if (key == "mode") mode = parse_mode(value);
  else if (key == "infer_branch") infer_branch = parse_infer_branch(value);
  else if (key == "data") data = value;
  else if (key == "test_data") test_data = value;
  else if (key == "out") out = value;
  else if (key == "dataset") dataset = value;
  else if (key == "epochs") epochs = parse_count(key, value);
  else if (key == "batch_size") batch_size = parse_count(key, value);
  else if (key == "lr") lr = parse_real(key, value);
  else if (key == "seeds") seeds = parse_seed_list(value);
  else if (key == "validation_n") validation_n = parse_count(key, value);
  else if (key == "min_count") min_count = parse_count(key, value);
  else if (key == "single_segment") single_segment = parse_bool(key, value);
  else if (key == "num_layers") encoder.num_layers = parse_count(key, value);
  else if (key == "hidden_size") encoder.hidden_size = parse_count(key, value);
  else if (key == "num_heads") encoder.num_heads = parse_count(key, value);
  else if (key == "ff_size") encoder.ff_size = parse_count(key, value);
  else if (key == "max_len") encoder.max_len = parse_count(key, value);
  else if (key == "dropout") encoder.dropout = parse_real(key, value);
  else if (key == "init_std") encoder.init_std = parse_real(key, value);
  else throw ConfigError("unknown config key '" + std::string(raw_key) + "'");
}

void RunConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (mode != AggregationMode::kVanilla && encoder.num_layers < kNumBranches) {
    throw ConfigError("psum/hsum need num_layers >= 4");
  }
  EncoderConfig probe = encoder;
  probe.vocab_size = std::max<std::size_t>(probe.vocab_size, kNumSpecialTokens);
  probe.validate();
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "task = " << to_string(task) << '\n';
  os << "mode = " << to_string(mode) << '\n';
  os << "infer_branch = " << to_string(infer_branch) << '\n';
  os << "data = " << data.string() << '\n';
  os << "test_data = " << test_data.string() << '\n';
  os << "out = " << out.string() << '\n';
  os << "dataset = " << dataset << '\n';
  os << "epochs = " << epochs << '\n';
  os << "batch_size = " << batch_size << '\n';
  os << "lr = " << lr << '\n';
  os << "seeds = ";
  for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
  os << '\n';
  os << "validation_n = " << validation_n << '\n';
  os << "min_count = " << min_count << '\n';
  os << "single_segment = " << (single_segment ? "true" : "false") << '\n';
  os << "num_layers = " << encoder.num_layers << '\n';
  os << "hidden_size = " << encoder.hidden_size << '\n';
  os << "num_heads = " << encoder.num_heads << '\n';
  os << "ff_size = " << encoder.ff_size << '\n';
  os << "max_len = " << encoder.max_len << '\n';
  os << "dropout = " << encoder.dropout << '\n';
  os << "init_std = " << encoder.init_std << '\n';
  return os.str();
}

RunConfig RunConfig::from_text(std::string_view text) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const std::string key = trim(std::string_view(line).substr(0, eq));
    // Empty paths are written as blank values.
    if (value.empty() && (key == "data" || key == "test_data" || key == "out")) continue;
    cfg.set(key, value);
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out_file(path);
  if (!out_file) throw ConfigError("cannot write config file " + path.string());
  out_file << to_text();
}

ModelSpec RunConfig::model_spec(std::size_t vocab_size) const {
  ModelSpec spec;
  spec.task = task;
  spec.mode = mode;
  spec.infer = infer_branch;
  spec.encoder = encoder;
  spec.encoder.vocab_size = vocab_size;
  return spec;
}

}  // namespace absa
