#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "absa/encoder.hpp"
#include "absa/heads.hpp"
#include "absa/model.hpp"

namespace absa {

/// Everything that fixes a training run. Persisted as flat `key = value`
/// text; every key can also be set from the command line.
struct RunConfig {
  Task task = Task::kAe;
  AggregationMode mode = AggregationMode::kPSum;
  InferBranch infer_branch = InferBranch::kMean;
  std::filesystem::path data;
  std::filesystem::path test_data;
  std::filesystem::path out;
  std::string dataset = "custom";
  std::size_t epochs = 4;
  std::size_t batch_size = 16;
  double lr = 3e-5;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::size_t validation_n = 150;
  std::size_t min_count = 1;
  bool single_segment = false;
  EncoderConfig encoder;

  /// Sets one key; accepts `-` or `_` as word separator. Throws ConfigError.
  void set(std::string_view key, std::string_view value);
  void validate() const;

  std::string to_text() const;
  static RunConfig from_text(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  ModelSpec model_spec(std::size_t vocab_size) const;

  static const std::vector<std::string>& keys();
};

std::vector<std::uint64_t> parse_seed_list(std::string_view text);

}  // namespace absa
