#include "absa/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>

#include "absa/error.hpp"
#include "absa/ops.hpp"

namespace absa {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (is_word_byte(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
      out.push_back({std::string(text.substr(i, j - i)), i, j});
      i = j;
    } else {
      out.push_back({std::string(1, text[i]), i, i + 1});
      ++i;
    }
  }
  return out;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  add("[PAD]");
  add("[UNK]");
  add("[CLS]");
  add("[SEP]");
}

void Vocabulary::add(std::string token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus,
                             std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& sentence : corpus)
    for (const auto& tok : sentence) {
      ++counts[to_lower(tok)];
      ++total;
    }
  if (total == 0) throw IngestionError("cannot build a vocabulary from an empty corpus");

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts)
    if (n >= min_count) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (auto& [tok, n] : kept)
    if (!v.contains(tok)) v.add(tok);
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kNumSpecialTokens || tokens[kPadId] != "[PAD]" || tokens[kUnkId] != "[UNK]" ||
      tokens[kClsId] != "[CLS]" || tokens[kSepId] != "[SEP]") {
    throw DataError("vocabulary lacks the reserved [PAD] [UNK] [CLS] [SEP] header");
  }
  Vocabulary v;
  v.tokens_.clear();
  v.index_.clear();
  for (auto& t : tokens) {
    if (v.index_.contains(t)) throw DataError("vocabulary repeats token '" + t + "'");
    v.add(std::move(t));
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary file " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(to_lower(token));
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw VocabError("token id " + std::to_string(id) + " outside vocabulary of " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

// ---------------------------------------------------------------------------

void EncoderConfig::validate() const {
  if (hidden_size == 0 || num_heads == 0 || hidden_size % num_heads != 0) {
    throw ConfigError("hidden_size " + std::to_string(hidden_size) + " must be divisible by num_heads " +
                      std::to_string(num_heads));
  }
  if (max_len < 3) throw ConfigError("max_len must be at least 3");
  if (vocab_size < kNumSpecialTokens) throw ConfigError("vocab_size must cover the reserved tokens");
  if (ff_size == 0) throw ConfigError("ff_size must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

TokenizedSequence encode_sequence(std::span<const Token> tokens, const Vocabulary& vocab,
                                  const EncoderConfig& config) {
  std::vector<std::string> words;
  words.reserve(tokens.size());
  for (const auto& t : tokens) words.push_back(t.text);
  auto seq = encode_sequence(words, vocab, config);
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) seq.spans[i] = {tokens[i].begin, tokens[i].end};
  return seq;
}

TokenizedSequence encode_sequence(std::span<const std::string> tokens, const Vocabulary& vocab,
                                  const EncoderConfig& config) {
  TokenizedSequence seq;
  const std::size_t room = config.max_len - 2;
  const std::size_t n = std::min(tokens.size(), room);
  seq.truncated = tokens.size() > room;
  seq.ids.push_back(config.cls_id);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    seq.ids.push_back(vocab.id(tokens[i]));
    seq.tokens.push_back(tokens[i]);
    seq.spans.emplace_back(offset, offset + tokens[i].size());
    offset += tokens[i].size() + 1;
  }
  seq.ids.push_back(config.sep_id);
  seq.mask.assign(seq.ids.size(), 1);
  seq.segments.assign(seq.ids.size(), 0);
  return seq;
}

TokenizedSequence encode_pair(std::span<const std::string> first,
                              std::span<const std::string> second, const Vocabulary& vocab,
                              const EncoderConfig& config) {
  const std::size_t room = config.max_len - 3;
  std::size_t n_second = std::min(second.size(), room);
  std::size_t n_first = std::min(first.size(), room - n_second);
  TokenizedSequence seq;
  seq.truncated = n_first < first.size() || n_second < second.size();
  seq.ids.push_back(config.cls_id);
  seq.segments.push_back(0);
  for (std::size_t i = 0; i < n_first; ++i) {
    seq.ids.push_back(vocab.id(first[i]));
    seq.segments.push_back(0);
    seq.tokens.push_back(first[i]);
  }
  seq.ids.push_back(config.sep_id);
  seq.segments.push_back(0);
  for (std::size_t i = 0; i < n_second; ++i) {
    seq.ids.push_back(vocab.id(second[i]));
    seq.segments.push_back(1);
    seq.tokens.push_back(second[i]);
  }
  seq.ids.push_back(config.sep_id);
  seq.segments.push_back(1);
  seq.mask.assign(seq.ids.size(), 1);
  seq.spans.assign(seq.tokens.size(), {0, 0});
  return seq;
}

std::vector<std::string> decode_sequence(const TokenizedSequence& seq, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    const int id = seq.ids[i];
    if (!seq.mask.empty() && seq.mask[i] == 0) continue;
    if (id == kPadId || id == kClsId || id == kSepId) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

TokenizedSequence pad_sequence(const TokenizedSequence& seq, std::size_t length, int pad_id) {
  if (length < seq.length()) {
    throw ContractError("pad_sequence: target length " + std::to_string(length) +
                        " shorter than sequence " + std::to_string(seq.length()));
  }
  TokenizedSequence out = seq;
  out.ids.resize(length, pad_id);
  out.mask.resize(length, 0);
  out.segments.resize(length, 0);
  return out;
}

// ---------------------------------------------------------------------------

TransformerLayer::TransformerLayer(const EncoderConfig& config, std::mt19937_64& rng)
    : hidden_(config.hidden_size),
      heads_(config.num_heads),
      eps_(config.layer_norm_eps),
      dropout_(config.dropout) {
  const auto h = config.hidden_size, f = config.ff_size;
  const double sd = config.init_std;
  wq_ = Tensor::randn({h, h}, sd, rng, true);
  bq_ = Tensor::zeros({h}, true);
  wk_ = Tensor::randn({h, h}, sd, rng, true);
  bk_ = Tensor::zeros({h}, true);
  wv_ = Tensor::randn({h, h}, sd, rng, true);
  bv_ = Tensor::zeros({h}, true);
  wo_ = Tensor::randn({h, h}, sd, rng, true);
  bo_ = Tensor::zeros({h}, true);
  ln1_gamma_ = Tensor::ones({h}, true);
  ln1_beta_ = Tensor::zeros({h}, true);
  w1_ = Tensor::randn({h, f}, sd, rng, true);
  b1_ = Tensor::zeros({f}, true);
  w2_ = Tensor::randn({f, h}, sd, rng, true);
  b2_ = Tensor::zeros({h}, true);
  ln2_gamma_ = Tensor::ones({h}, true);
  ln2_beta_ = Tensor::zeros({h}, true);
}

Tensor TransformerLayer::attention(const Tensor& x, std::span<const int> key_mask,
                                   const ForwardContext& ctx, std::vector<Tensor>* probs) const {
  const std::size_t d = hidden_ / heads_;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const Tensor q = add_row(matmul(x, wq_), bq_);
  const Tensor k = add_row(matmul(x, wk_), bk_);
  const Tensor v = add_row(matmul(x, wv_), bv_);
  std::vector<Tensor> contexts;
  contexts.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const Tensor qh = slice_cols(q, h * d, d);
    const Tensor kh = slice_cols(k, h * d, d);
    const Tensor vh = slice_cols(v, h * d, d);
    Tensor p = masked_softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt_d), key_mask);
    if (probs) probs->push_back(p);
    if (ctx.training && dropout_ > 0.0) p = dropout(p, dropout_, *ctx.rng);
    contexts.push_back(matmul(p, vh));
  }
  return add_row(matmul(concat_cols(contexts), wo_), bo_);
}

Tensor TransformerLayer::forward(const Tensor& x, std::span<const int> key_mask,
                                 const ForwardContext& ctx) const {
  if (identity) return x;
  if (x.rank() != 2 || x.dim(1) != hidden_) {
    throw DimensionError("transformer layer expects [T x " + std::to_string(hidden_) + "], got " +
                         shape_str(x.shape()));
  }
  Tensor attn = attention(x, key_mask, ctx, nullptr);
  if (ablate_sublayers) attn = scale(attn, 0.0);
  if (ctx.training && dropout_ > 0.0) attn = dropout(attn, dropout_, *ctx.rng);
  const Tensor h = layer_norm(add(x, attn), ln1_gamma_, ln1_beta_, eps_);
  Tensor ff = add_row(matmul(gelu(add_row(matmul(h, w1_), b1_)), w2_), b2_);
  if (ablate_sublayers) ff = scale(ff, 0.0);
  if (ctx.training && dropout_ > 0.0) ff = dropout(ff, dropout_, *ctx.rng);
  return layer_norm(add(h, ff), ln2_gamma_, ln2_beta_, eps_);
}

std::vector<Tensor> TransformerLayer::attention_weights(const Tensor& x,
                                                        std::span<const int> key_mask) const {
  std::vector<Tensor> probs;
  attention(x, key_mask, {}, &probs);
  return probs;
}

void TransformerLayer::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + "attn.wq", wq_);
  out.emplace_back(prefix + "attn.bq", bq_);
  out.emplace_back(prefix + "attn.wk", wk_);
  out.emplace_back(prefix + "attn.bk", bk_);
  out.emplace_back(prefix + "attn.wv", wv_);
  out.emplace_back(prefix + "attn.bv", bv_);
  out.emplace_back(prefix + "attn.wo", wo_);
  out.emplace_back(prefix + "attn.bo", bo_);
  out.emplace_back(prefix + "ln1.gamma", ln1_gamma_);
  out.emplace_back(prefix + "ln1.beta", ln1_beta_);
  out.emplace_back(prefix + "ffn.w1", w1_);
  out.emplace_back(prefix + "ffn.b1", b1_);
  out.emplace_back(prefix + "ffn.w2", w2_);
  out.emplace_back(prefix + "ffn.b2", b2_);
  out.emplace_back(prefix + "ln2.gamma", ln2_gamma_);
  out.emplace_back(prefix + "ln2.beta", ln2_beta_);
}

// ---------------------------------------------------------------------------

Encoder::Encoder(const EncoderConfig& config, std::mt19937_64& rng) : config_(config) {
  config_.validate();
  const auto h = config.hidden_size;
  token_embedding_ = Tensor::randn({config.vocab_size, h}, config.init_std, rng, true);
  position_embedding_ = Tensor::randn({config.max_len, h}, config.init_std, rng, true);
  segment_embedding_ = Tensor::randn({2, h}, config.init_std, rng, true);
  emb_ln_gamma_ = Tensor::ones({h}, true);
  emb_ln_beta_ = Tensor::zeros({h}, true);
  layers_.reserve(config.num_layers);
  for (std::size_t i = 0; i < config.num_layers; ++i) layers_.emplace_back(config, rng);
}

std::vector<Tensor> Encoder::forward(const TokenizedSequence& seq, const ForwardContext& ctx) const {
  const std::size_t t = seq.length();
  if (t == 0 || t > config_.max_len) {
    throw DimensionError("sequence length " + std::to_string(t) + " outside [1, " +
                         std::to_string(config_.max_len) + "]");
  }
  if (seq.mask.size() != t) throw DimensionError("attention mask length differs from ids");
  for (int id : seq.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw VocabError("token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(config_.vocab_size));
    }
  }
  std::vector<int> positions(t);
  for (std::size_t i = 0; i < t; ++i) positions[i] = static_cast<int>(i);
  std::vector<int> segments = seq.segments;
  segments.resize(t, 0);

  Tensor x = add(add(embedding_lookup(token_embedding_, seq.ids),
                     embedding_lookup(position_embedding_, positions)),
                 embedding_lookup(segment_embedding_, segments));
  x = layer_norm(x, emb_ln_gamma_, emb_ln_beta_, config_.layer_norm_eps);
  if (ctx.training && config_.dropout > 0.0) x = dropout(x, config_.dropout, *ctx.rng);

  std::vector<Tensor> hiddens;
  hiddens.reserve(layers_.size() + 1);
  hiddens.push_back(x);
  for (const auto& layer : layers_) hiddens.push_back(layer.forward(hiddens.back(), seq.mask, ctx));
  return hiddens;
}

void Encoder::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + "embeddings.token", token_embedding_);
  out.emplace_back(prefix + "embeddings.position", position_embedding_);
  out.emplace_back(prefix + "embeddings.segment", segment_embedding_);
  out.emplace_back(prefix + "embeddings.ln.gamma", emb_ln_gamma_);
  out.emplace_back(prefix + "embeddings.ln.beta", emb_ln_beta_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].collect(prefix + "layer" + std::to_string(i) + ".", out);
  }
}

}  // namespace absa
