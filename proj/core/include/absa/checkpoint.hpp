#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "absa/config.hpp"
#include "absa/encoder.hpp"
#include "absa/model.hpp"
#include "absa/optim.hpp"

namespace absa {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// A trained model with everything needed to resume or evaluate it.
///
/// On disk: 8-byte magic, u32 version, u64 payload length, payload, u32
/// CRC-32 of the payload. All integers and doubles are little-endian.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_text;
  std::vector<std::string> vocabulary;
  std::vector<NamedArray> parameters;
  AdamState optimizer;
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;
  std::string rng_state;

  RunConfig config() const { return RunConfig::from_text(config_text); }
  Vocabulary vocab() const;
};

Checkpoint make_checkpoint(const AbsaModel& model, const Vocabulary& vocab, const RunConfig& config,
                           const AdamState& optimizer, std::uint64_t epoch, std::uint64_t seed,
                           const std::mt19937_64& rng);

/// Model rebuilt from the config snapshot with every parameter overwritten
/// by name. Throws DataError on missing, duplicate or misshapen entries.
AbsaModel restore_model(const Checkpoint& ckpt);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a over all parameter names, shapes and value bits.
std::uint64_t parameter_fingerprint(const AbsaModel& model);

}  // namespace absa
