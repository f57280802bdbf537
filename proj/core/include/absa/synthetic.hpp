#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "absa/data.hpp"

namespace absa {

/// Templated review sentences whose aspect terms come from a fixed lexicon,
/// so the gold spans are known exactly. Some sentences carry no aspect.
std::vector<AeExample> synthesize_ae(std::size_t n, std::uint64_t seed);

/// One example per (sentence, aspect) pair; the polarity follows the
/// opinion word attached to that aspect.
std::vector<AscExample> synthesize_asc(std::size_t n, std::uint64_t seed);

}  // namespace absa
