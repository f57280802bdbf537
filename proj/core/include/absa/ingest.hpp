#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "absa/heads.hpp"

namespace absa {

/// Published statistics for one SemEval file: sentences and aspects for AE,
/// positive / negative / neutral counts for ASC.
struct ReferenceCounts {
  std::string dataset;  // LPT14, RST14, RST16
  std::string split;    // train, test
  Task task = Task::kAe;
  std::vector<std::string> file_names;  // accepted spellings of the file
  std::vector<std::size_t> expected;
};

const std::vector<ReferenceCounts>& reference_counts();

struct IngestCheck {
  enum class Status { kMatch, kMismatch, kMissing };

  ReferenceCounts reference;
  std::filesystem::path file;  // empty when missing
  std::vector<std::size_t> actual;
  Status status = Status::kMissing;
};

/// Counts as the loaders see them: {sentences, aspects} or {pos, neg, neu}.
std::vector<std::size_t> count_ae(const std::filesystem::path& path);
std::vector<std::size_t> count_asc(const std::filesystem::path& path);

/// Looks for every reference file under `dir` (searched recursively) and
/// compares its counts. Missing files are reported, not treated as errors.
std::vector<IngestCheck> verify_semeval(const std::filesystem::path& dir);

}  // namespace absa
