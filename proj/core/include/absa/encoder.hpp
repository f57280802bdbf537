#pragma once

#include <cstddef>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "absa/tensor.hpp"

namespace absa {

// ---------------------------------------------------------------------------
// Tokenization and vocabulary

struct Token {
  std::string text;
  std::size_t begin = 0;  // byte offset into the sentence
  std::size_t end = 0;    // one past the last byte
};

/// Splits on whitespace; runs of letters/digits (and any non-ASCII byte) form
/// one token, every other printable character is a token of its own.
std::vector<Token> tokenize(std::string_view text);

std::string to_lower(std::string_view s);

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr std::size_t kNumSpecialTokens = 4;

class Vocabulary {
 public:
  Vocabulary();

  /// Lowercased tokens seen at least `min_count` times, most frequent first
  /// (ties alphabetical), after the four reserved entries.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus,
                          std::size_t min_count = 1);

  /// Tokens in id order; the first four must be the reserved entries.
  static Vocabulary from_tokens(std::vector<std::string> tokens);
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int id(std::string_view token) const;  // kUnkId when absent
  const std::string& token(int id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  void add(std::string token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// ---------------------------------------------------------------------------
// Encoded sequences

struct EncoderConfig {
  std::size_t num_layers = 6;
  std::size_t hidden_size = 64;
  std::size_t num_heads = 4;
  std::size_t ff_size = 256;
  std::size_t vocab_size = 0;
  std::size_t max_len = 128;
  int pad_id = kPadId;
  int unk_id = kUnkId;
  int cls_id = kClsId;
  int sep_id = kSepId;
  double layer_norm_eps = 1e-12;
  double dropout = 0.0;
  double init_std = 0.02;

  void validate() const;
};

struct TokenizedSequence {
  std::vector<int> ids;
  std::vector<int> mask;      // 1 for real positions, 0 for padding
  std::vector<int> segments;  // 0 for the first segment, 1 for the second
  std::vector<std::string> tokens;  // original strings, specials excluded
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // char span per token
  bool truncated = false;

  std::size_t length() const { return ids.size(); }
};

/// [CLS] tokens [SEP]. Tokens beyond max_len - 2 are dropped and
/// `truncated` is set.
TokenizedSequence encode_sequence(std::span<const Token> tokens, const Vocabulary& vocab,
                                  const EncoderConfig& config);
TokenizedSequence encode_sequence(std::span<const std::string> tokens, const Vocabulary& vocab,
                                  const EncoderConfig& config);

/// [CLS] first [SEP] second [SEP] with segment ids 0 / 1. The first segment
/// is trimmed before the second when over length.
TokenizedSequence encode_pair(std::span<const std::string> first,
                              std::span<const std::string> second, const Vocabulary& vocab,
                              const EncoderConfig& config);

/// Token strings for the non-special ids of `seq`.
std::vector<std::string> decode_sequence(const TokenizedSequence& seq, const Vocabulary& vocab);

/// Right-pads to `length` with pad_id and zero mask.
TokenizedSequence pad_sequence(const TokenizedSequence& seq, std::size_t length, int pad_id);

// ---------------------------------------------------------------------------
// Transformer

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training with dropout
};

/// Post-norm BERT block: LN(x + Attn(x)), then LN(h + FFN(h)).
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(const EncoderConfig& config, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, std::span<const int> key_mask,
                 const ForwardContext& ctx = {}) const;

  // Per-head attention probabilities [T x T] for inspection.
  std::vector<Tensor> attention_weights(const Tensor& x, std::span<const int> key_mask) const;

  void collect(const std::string& prefix, NamedParams& out) const;

  // Ablation hooks. `identity` passes the input through unchanged;
  // `ablate_sublayers` zeroes the attention and feed-forward outputs.
  bool identity = false;
  bool ablate_sublayers = false;

 private:
  Tensor attention(const Tensor& x, std::span<const int> key_mask, const ForwardContext& ctx,
                   std::vector<Tensor>* probs) const;

  std::size_t hidden_ = 0;
  std::size_t heads_ = 0;
  double eps_ = 1e-12;
  double dropout_ = 0.0;
  Tensor wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
  Tensor ln1_gamma_, ln1_beta_;
  Tensor w1_, b1_, w2_, b2_;
  Tensor ln2_gamma_, ln2_beta_;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& config, std::mt19937_64& rng);

  /// L + 1 hidden states of shape [T x H]: the embedding output, then one
  /// per layer. Padding positions are excluded from attention.
  std::vector<Tensor> forward(const TokenizedSequence& seq, const ForwardContext& ctx = {}) const;

  const EncoderConfig& config() const { return config_; }
  std::vector<TransformerLayer>& layers() { return layers_; }
  const std::vector<TransformerLayer>& layers() const { return layers_; }
  void collect(const std::string& prefix, NamedParams& out) const;

 private:
  EncoderConfig config_;
  Tensor token_embedding_, position_embedding_, segment_embedding_;
  Tensor emb_ln_gamma_, emb_ln_beta_;
  std::vector<TransformerLayer> layers_;
};

}  // namespace absa
