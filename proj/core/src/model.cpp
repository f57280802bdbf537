#include "absa/model.hpp"

#include <random>

#include "absa/error.hpp"

namespace absa {

AbsaModel::AbsaModel(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.encoder.validate();
  if (spec_.mode != AggregationMode::kVanilla && spec_.encoder.num_layers < kNumBranches) {
    throw ConfigError("psum/hsum need an encoder of at least 4 layers, got " +
                      std::to_string(spec_.encoder.num_layers));
  }
  std::mt19937_64 rng(seed);
  encoder_ = Encoder(spec_.encoder, rng);
  if (spec_.mode == AggregationMode::kVanilla) {
    vanilla_head_ = Head(spec_.task, spec_.encoder.hidden_size, spec_.encoder.init_std, rng);
  } else {
    branches_ = BranchSet(spec_.task, spec_.encoder, rng);
  }
}

std::span<const Head> AbsaModel::active_heads() const {
  if (spec_.mode == AggregationMode::kVanilla) return {&vanilla_head_, 1};
  return branches_.heads;
}

std::vector<Tensor> AbsaModel::head_scores(std::span<const Tensor> hiddens, const SequenceView& view,
                                           const ForwardContext& ctx) const {
  switch (spec_.mode) {
    case AggregationMode::kVanilla:
      return {vanilla_head_.scores(hiddens.back(), view)};
    case AggregationMode::kPSum:
      return psum_forward(last_four(hiddens), branches_, view, ctx);
    case AggregationMode::kHSum:
      return hsum_forward(last_four(hiddens), branches_, view, ctx);
  }
  return {};
}

AbsaModel::Output AbsaModel::forward(const TokenizedSequence& seq, const ForwardContext& ctx) const {
  Output out;
  out.hiddens = encoder_.forward(seq, ctx);
  out.branch_scores = head_scores(out.hiddens, SequenceView::of(seq), ctx);
  return out;
}

AbsaModel::Loss AbsaModel::loss(const TokenizedSequence& seq, const Target& target,
                                const ForwardContext& ctx) const {
  const auto out = forward(seq, ctx);
  const auto heads = active_heads();
  Loss loss;
  for (std::size_t i = 0; i < out.branch_scores.size(); ++i) {
    if (spec_.task == Task::kAe) {
      loss.branches.push_back(branch_loss_ae(out.branch_scores[i], target.tags, heads[i].crf()));
    } else {
      loss.branches.push_back(branch_loss_asc(out.branch_scores[i], target.label));
    }
  }
  loss.total = total_loss(loss.branches);
  return loss;
}

TagSequence AbsaModel::predict_tags(const TokenizedSequence& seq) const {
  if (spec_.task != Task::kAe) throw ConfigError("predict_tags on an ASC model");
  NoGradGuard guard;
  const auto out = forward(seq);
  return predict_ae(out.branch_scores, active_heads(), spec_.infer);
}

int AbsaModel::predict_class(const TokenizedSequence& seq) const {
  if (spec_.task != Task::kAsc) throw ConfigError("predict_class on an AE model");
  NoGradGuard guard;
  const auto out = forward(seq);
  return predict_asc(out.branch_scores, spec_.infer);
}

NamedParams AbsaModel::named_parameters() const {
  NamedParams out;
  encoder_.collect("encoder.", out);
  if (spec_.mode == AggregationMode::kVanilla) {
    vanilla_head_.collect("head.", out);
  } else {
    branches_.collect("", out);
  }
  return out;
}

std::vector<Tensor> AbsaModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

}  // namespace absa
