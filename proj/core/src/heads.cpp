#include "absa/heads.hpp"

#include "absa/error.hpp"
#include "absa/ops.hpp"

namespace absa {

std::string_view to_string(Task task) { return task == Task::kAe ? "ae" : "asc"; }

std::string_view to_string(AggregationMode mode) {
  switch (mode) {
    case AggregationMode::kVanilla: return "vanilla";
    case AggregationMode::kPSum: return "psum";
    case AggregationMode::kHSum: return "hsum";
  }
  return "?";
}

std::string_view to_string(InferBranch infer) {
  return infer == InferBranch::kMean ? "mean" : "deepest";
}

Task parse_task(std::string_view s) {
  if (s == "ae" || s == "AE") return Task::kAe;
  if (s == "asc" || s == "ASC") return Task::kAsc;
  throw ConfigError("unknown task '" + std::string(s) + "' (expected ae|asc)");
}

AggregationMode parse_mode(std::string_view s) {
  if (s == "vanilla") return AggregationMode::kVanilla;
  if (s == "psum") return AggregationMode::kPSum;
  if (s == "hsum") return AggregationMode::kHSum;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected vanilla|psum|hsum)");
}

InferBranch parse_infer_branch(std::string_view s) {
  if (s == "mean") return InferBranch::kMean;
  if (s == "deepest") return InferBranch::kDeepest;
  throw ConfigError("unknown infer_branch '" + std::string(s) + "' (expected mean|deepest)");
}

SequenceView SequenceView::of(const TokenizedSequence& seq) {
  return {seq.mask, 1, seq.tokens.size()};
}

void ClassifierParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + "cls.weight", weight);
  out.emplace_back(prefix + "cls.bias", bias);
}

Head::Head(Task task, std::size_t hidden, double init_std, std::mt19937_64& rng) : task_(task) {
  if (task == Task::kAe) {
    crf_ = CrfParams::zeros(hidden, kNumBioTags);
    crf_.emission_proj = Tensor::randn({hidden, kNumBioTags}, init_std, rng, true);
  } else {
    classifier_.weight = Tensor::randn({hidden, kNumPolarities}, init_std, rng, true);
    classifier_.bias = Tensor::zeros({kNumPolarities}, true);
  }
}

Tensor Head::scores(const Tensor& hidden, const SequenceView& view) const {
  if (task_ == Task::kAe) {
    if (view.word_count == 0) throw ContractError("AE head needs at least one word position");
    return crf_emissions(slice_rows(hidden, view.word_begin, view.word_count), crf_);
  }
  const Tensor logits = add_row(matmul(slice_rows(hidden, 0, 1), classifier_.weight), classifier_.bias);
  return reshape(logits, {logits.dim(1)});
}

void Head::collect(const std::string& prefix, NamedParams& out) const {
  if (task_ == Task::kAe) {
    crf_.collect(prefix, out);
  } else {
    classifier_.collect(prefix, out);
  }
}

BranchSet::BranchSet(Task task, const EncoderConfig& config, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < kNumBranches; ++i) {
    layers[i] = TransformerLayer(config, rng);
    heads[i] = Head(task, config.hidden_size, config.init_std, rng);
  }
}

void BranchSet::collect(const std::string& prefix, NamedParams& out) const {
  for (std::size_t i = 0; i < kNumBranches; ++i) {
    const std::string p = prefix + "branch" + std::to_string(i) + ".";
    layers[i].collect(p + "layer.", out);
    heads[i].collect(p, out);
  }
}

std::vector<Tensor> last_four(std::span<const Tensor> hiddens) {
  if (hiddens.size() < kNumBranches) {
    throw ContractError("aggregation needs at least 4 hidden states, got " +
                        std::to_string(hiddens.size()));
  }
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < kNumBranches; ++i) out.push_back(hiddens[hiddens.size() - 1 - i]);
  return out;
}

namespace {

void check_branch_inputs(std::span<const Tensor> hiddens) {
  if (hiddens.size() != kNumBranches) {
    throw ContractError("aggregation expects exactly 4 hidden states, got " +
                        std::to_string(hiddens.size()));
  }
  for (const auto& h : hiddens) {
    if (h.shape() != hiddens[0].shape()) {
      throw DimensionError("branch hidden states differ in shape: " + shape_str(h.shape()) + " vs " +
                           shape_str(hiddens[0].shape()));
    }
  }
}

std::vector<Tensor> apply_heads(const std::vector<Tensor>& features, const BranchSet& branches,
                                const SequenceView& view) {
  std::vector<Tensor> out;
  out.reserve(kNumBranches);
  for (std::size_t i = 0; i < kNumBranches; ++i) out.push_back(branches.heads[i].scores(features[i], view));
  return out;
}

}  // namespace

std::vector<Tensor> psum_features(std::span<const Tensor> hiddens, const BranchSet& branches,
                                  const SequenceView& view, const ForwardContext& ctx) {
  check_branch_inputs(hiddens);
  std::vector<Tensor> out;
  out.reserve(kNumBranches);
  for (std::size_t i = 0; i < kNumBranches; ++i) {
    out.push_back(branches.layers[i].forward(hiddens[i], view.key_mask, ctx));
  }
  return out;
}

std::vector<Tensor> hsum_features(std::span<const Tensor> hiddens, const BranchSet& branches,
                                  const SequenceView& view, const ForwardContext& ctx) {
  check_branch_inputs(hiddens);
  std::vector<Tensor> out;
  out.reserve(kNumBranches);
  out.push_back(branches.layers[0].forward(hiddens[0], view.key_mask, ctx));
  for (std::size_t i = 1; i < kNumBranches; ++i) {
    out.push_back(add(branches.layers[i].forward(hiddens[i], view.key_mask, ctx), out.back()));
  }
  return out;
}

std::vector<Tensor> psum_forward(std::span<const Tensor> hiddens, const BranchSet& branches,
                                 const SequenceView& view, const ForwardContext& ctx) {
  return apply_heads(psum_features(hiddens, branches, view, ctx), branches, view);
}

std::vector<Tensor> hsum_forward(std::span<const Tensor> hiddens, const BranchSet& branches,
                                 const SequenceView& view, const ForwardContext& ctx) {
  return apply_heads(hsum_features(hiddens, branches, view, ctx), branches, view);
}

Tensor branch_loss_ae(const Tensor& emissions, std::span<const int> gold, const CrfParams& crf) {
  return crf_nll(emissions, gold, crf);
}

Tensor branch_loss_asc(const Tensor& logits, int gold_class) {
  if (gold_class < 0) throw LabelError("negative class index " + std::to_string(gold_class));
  return cross_entropy(logits, static_cast<std::size_t>(gold_class));
}

Tensor total_loss(std::span<const Tensor> branch_losses) {
  for (const auto& l : branch_losses) {
    if (l.numel() != 1) throw ContractError("branch loss must be scalar, got " + shape_str(l.shape()));
  }
  return add_n(branch_losses);
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

namespace {

Tensor mean_of(std::span<const Tensor> parts) {
  std::vector<double> acc(parts[0].numel(), 0.0);
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape()) {
      throw DimensionError("cannot average branch scores of shapes " + shape_str(p.shape()) +
                           " and " + shape_str(parts[0].shape()));
    }
    const auto d = p.data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += d[i];
  }
  for (auto& v : acc) v /= static_cast<double>(parts.size());
  return Tensor(parts[0].shape(), std::move(acc));
}

}  // namespace

TagSequence predict_ae(std::span<const Tensor> branch_emissions, std::span<const Head> heads,
                       InferBranch infer, bool constrain_bio) {
  if (branch_emissions.empty() || branch_emissions.size() != heads.size()) {
    throw ContractError("predict_ae: " + std::to_string(branch_emissions.size()) +
                        " score tensors for " + std::to_string(heads.size()) + " heads");
  }
  const std::size_t n = infer == InferBranch::kDeepest ? 1 : branch_emissions.size();
  const auto used = branch_emissions.first(n);
  std::vector<Tensor> transitions, starts, ends;
  for (std::size_t i = 0; i < n; ++i) {
    transitions.push_back(heads[i].crf().transition);
    starts.push_back(heads[i].crf().start);
    ends.push_back(heads[i].crf().end);
  }
  CrfParams combined;
  combined.transition = mean_of(transitions);
  combined.start = mean_of(starts);
  combined.end = mean_of(ends);
  return viterbi_decode(mean_of(used), combined, constrain_bio);
}

int predict_asc(std::span<const Tensor> branch_logits, InferBranch infer) {
  if (branch_logits.empty()) throw ContractError("predict_asc: no branch logits");
  const std::size_t n = infer == InferBranch::kDeepest ? 1 : branch_logits.size();
  const Tensor avg = mean_of(branch_logits.first(n));
  return static_cast<int>(argmax(avg.data()));
}

}  // namespace absa
