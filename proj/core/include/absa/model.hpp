#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "absa/encoder.hpp"
#include "absa/heads.hpp"

namespace absa {

struct ModelSpec {
  Task task = Task::kAe;
  AggregationMode mode = AggregationMode::kPSum;
  InferBranch infer = InferBranch::kMean;
  EncoderConfig encoder;
};

/// Gold annotation for one sequence: BIO tags (AE) or a polarity (ASC).
struct Target {
  std::vector<int> tags;
  int label = -1;
};

/// Encoder plus either one head on the last layer (vanilla) or four
/// aggregation branches over the last four layers.
class AbsaModel {
 public:
  struct Output {
    std::vector<Tensor> hiddens;        // L + 1 encoder states
    std::vector<Tensor> branch_scores;  // 1 (vanilla) or 4 entries
  };
  struct Loss {
    Tensor total;
    std::vector<Tensor> branches;
  };

  AbsaModel(const ModelSpec& spec, std::uint64_t seed);

  Output forward(const TokenizedSequence& seq, const ForwardContext& ctx = {}) const;
  /// Heads applied to externally supplied encoder states.
  std::vector<Tensor> head_scores(std::span<const Tensor> hiddens, const SequenceView& view,
                                  const ForwardContext& ctx = {}) const;

  Loss loss(const TokenizedSequence& seq, const Target& target, const ForwardContext& ctx = {}) const;

  TagSequence predict_tags(const TokenizedSequence& seq) const;
  int predict_class(const TokenizedSequence& seq) const;

  const ModelSpec& spec() const { return spec_; }
  void set_infer_branch(InferBranch infer) { spec_.infer = infer; }
  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  BranchSet& branches() { return branches_; }
  const BranchSet& branches() const { return branches_; }
  Head& vanilla_head() { return vanilla_head_; }
  const Head& vanilla_head() const { return vanilla_head_; }
  std::span<const Head> active_heads() const;

  NamedParams named_parameters() const;
  std::vector<Tensor> parameters() const;

 private:
  ModelSpec spec_;
  Encoder encoder_;
  Head vanilla_head_;
  BranchSet branches_;
};

}  // namespace absa
