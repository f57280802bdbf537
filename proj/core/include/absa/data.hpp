#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "absa/encoder.hpp"
#include "absa/error.hpp"
#include "absa/model.hpp"

namespace absa {

/// Half-open character range [begin, end) in a sentence.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  auto operator<=>(const CharSpan&) const = default;
};

/// Inclusive token range [first, last].
struct TokenSpan {
  std::size_t first = 0;
  std::size_t last = 0;
  auto operator<=>(const TokenSpan&) const = default;
};

enum Polarity : int { kPositive = 0, kNegative = 1, kNeutral = 2 };

std::string_view polarity_name(int polarity);
int parse_polarity(std::string_view s);  // throws DataError

struct AeExample {
  std::string id;
  std::string text;
  std::vector<Token> tokens;
  std::vector<CharSpan> aspects;  // distinct annotated target spans
  std::vector<int> tags;          // BIO over tokens

  std::vector<std::string> words() const;
};

struct AscExample {
  std::string id;
  std::string text;
  std::vector<std::string> sentence_tokens;
  std::string aspect;
  std::vector<std::string> aspect_tokens;
  int polarity = kPositive;
};

/// AE example with tags derived from `aspects` (which must not overlap).
AeExample make_ae_example(std::string id, std::string text, std::vector<CharSpan> aspects);

// ---------------------------------------------------------------------------
// SemEval ingestion. Both the 2014 (aspectTerms) and 2016 (Opinions) schemas
// are recognized per sentence.

std::vector<AeExample> parse_semeval_ae(const std::filesystem::path& path);
std::vector<AeExample> parse_semeval_ae_xml(std::string_view xml, std::string_view source = "<xml>");
std::vector<AscExample> parse_semeval_asc(const std::filesystem::path& path);
std::vector<AscExample> parse_semeval_asc_xml(std::string_view xml, std::string_view source = "<xml>");

// ---------------------------------------------------------------------------
// BIO alignment

/// First token overlapping each aspect gets B, the rest I. Spans cutting
/// through a token are widened to whole tokens with a warning.
std::vector<int> bio_encode(std::span<const Token> tokens, std::span<const CharSpan> aspects);
/// Char spans of the B/I runs in `tags`. A stray I opens a new span.
std::vector<CharSpan> bio_decode(std::span<const int> tags, std::span<const Token> tokens);
/// Token ranges of the B/I runs in `tags`.
std::vector<TokenSpan> bio_token_spans(std::span<const int> tags);

// ---------------------------------------------------------------------------
// Splitting and batching

/// Seeded disjoint split into (train', validation) of sizes |train| - n and n.
/// Both parts keep the original relative order.
template <class T>
std::pair<std::vector<T>, std::vector<T>> split_validation(const std::vector<T>& train, std::size_t n,
                                                           std::uint64_t seed) {
  if (n >= train.size()) {
    throw ConfigError("validation size " + std::to_string(n) + " must be smaller than the " +
                      std::to_string(train.size()) + " training examples");
  }
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<char> in_validation(train.size(), 0);
  for (std::size_t i = 0; i < n; ++i) in_validation[order[i]] = 1;
  std::pair<std::vector<T>, std::vector<T>> out;
  for (std::size_t i = 0; i < train.size(); ++i) {
    (in_validation[i] ? out.second : out.first).push_back(train[i]);
  }
  return out;
}

struct EncodedExample {
  TokenizedSequence seq;
  Target target;
};

EncodedExample encode_ae(const AeExample& ex, const Vocabulary& vocab, const EncoderConfig& config);
/// [CLS] sentence [SEP] aspect [SEP], or [CLS] sentence aspect [SEP] with
/// single_segment.
EncodedExample encode_asc(const AscExample& ex, const Vocabulary& vocab, const EncoderConfig& config,
                          bool single_segment = false);

struct Batch {
  std::vector<std::size_t> indices;  // positions in the source example list
  std::vector<TokenizedSequence> sequences;  // padded to max_length
  std::vector<Target> targets;
  std::size_t max_length = 0;

  std::size_t size() const { return indices.size(); }
};

/// Batches over a per-epoch shuffle keyed by (seed, epoch). The last batch
/// may be short.
class BatchIterator {
 public:
  BatchIterator(std::span<const EncodedExample> examples, std::size_t batch_size, std::uint64_t seed,
                std::uint64_t epoch, int pad_id = kPadId);

  bool has_next() const { return cursor_ < order_.size(); }
  Batch next();
  std::size_t num_batches() const;

 private:
  std::span<const EncodedExample> examples_;
  std::size_t batch_size_;
  int pad_id_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

std::vector<Batch> make_batches(std::span<const EncodedExample> examples, std::size_t batch_size,
                                std::uint64_t seed, std::uint64_t epoch, int pad_id = kPadId);

// ---------------------------------------------------------------------------
// Line-delimited JSON records

void save_ae_jsonl(std::span<const AeExample> examples, const std::filesystem::path& path);
std::vector<AeExample> load_ae_jsonl(const std::filesystem::path& path);
void save_asc_jsonl(std::span<const AscExample> examples, const std::filesystem::path& path);
std::vector<AscExample> load_asc_jsonl(const std::filesystem::path& path);

}  // namespace absa
