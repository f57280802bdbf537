#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "absa/crf.hpp"
#include "absa/encoder.hpp"
#include "absa/tensor.hpp"

namespace absa {

enum class Task { kAe, kAsc };
enum class AggregationMode { kVanilla, kPSum, kHSum };
enum class InferBranch { kMean, kDeepest };

inline constexpr std::size_t kNumBranches = 4;
inline constexpr std::size_t kNumPolarities = 3;

std::string_view to_string(Task task);
std::string_view to_string(AggregationMode mode);
std::string_view to_string(InferBranch infer);
Task parse_task(std::string_view s);
AggregationMode parse_mode(std::string_view s);
InferBranch parse_infer_branch(std::string_view s);

/// Where a head reads from in a [T x H] hidden matrix.
struct SequenceView {
  std::span<const int> key_mask;
  std::size_t word_begin = 1;  // first non-special position
  std::size_t word_count = 0;  // AE tag count

  static SequenceView of(const TokenizedSequence& seq);
};

struct ClassifierParams {
  Tensor weight;  // [H x C]
  Tensor bias;    // [C]

  void collect(const std::string& prefix, NamedParams& out) const;
};

/// A task head: CRF emissions for AE, [CLS] logits for ASC.
class Head {
 public:
  Head() = default;
  Head(Task task, std::size_t hidden, double init_std, std::mt19937_64& rng);

  /// AE: [word_count x 3] emissions. ASC: [3] logits from position 0.
  Tensor scores(const Tensor& hidden, const SequenceView& view) const;

  Task task() const { return task_; }
  CrfParams& crf() { return crf_; }
  const CrfParams& crf() const { return crf_; }
  ClassifierParams& classifier() { return classifier_; }
  const ClassifierParams& classifier() const { return classifier_; }
  void collect(const std::string& prefix, NamedParams& out) const;

 private:
  Task task_ = Task::kAe;
  CrfParams crf_;
  ClassifierParams classifier_;
};

/// Four extra transformer layers with one head each. Branch 0 reads the
/// deepest encoder layer, branch 3 the fourth from the top.
struct BranchSet {
  std::array<TransformerLayer, kNumBranches> layers;
  std::array<Head, kNumBranches> heads;

  BranchSet() = default;
  BranchSet(Task task, const EncoderConfig& config, std::mt19937_64& rng);
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// The four hiddens consumed by the branches, deepest first.
std::vector<Tensor> last_four(std::span<const Tensor> hiddens);

/// Branch features: extra_layer_i(hidden_i), no cross-branch dataflow.
std::vector<Tensor> psum_features(std::span<const Tensor> hiddens, const BranchSet& branches,
                                  const SequenceView& view, const ForwardContext& ctx = {});
/// Top-down: p0 = extra_layer_0(h0); p_i = extra_layer_i(h_i) + p_(i-1).
std::vector<Tensor> hsum_features(std::span<const Tensor> hiddens, const BranchSet& branches,
                                  const SequenceView& view, const ForwardContext& ctx = {});

std::vector<Tensor> psum_forward(std::span<const Tensor> hiddens, const BranchSet& branches,
                                 const SequenceView& view, const ForwardContext& ctx = {});
std::vector<Tensor> hsum_forward(std::span<const Tensor> hiddens, const BranchSet& branches,
                                 const SequenceView& view, const ForwardContext& ctx = {});

Tensor branch_loss_ae(const Tensor& emissions, std::span<const int> gold, const CrfParams& crf);
Tensor branch_loss_asc(const Tensor& logits, int gold_class);

/// Unweighted left-to-right sum of the branch losses.
Tensor total_loss(std::span<const Tensor> branch_losses);

/// Mean of the branch score tensors (or branch 0 alone), then constrained
/// Viterbi. CRF transition and boundary scores are averaged the same way.
TagSequence predict_ae(std::span<const Tensor> branch_emissions, std::span<const Head> heads,
                       InferBranch infer, bool constrain_bio = true);
/// Mean (or deepest) logits, argmax with ties toward the lower class.
int predict_asc(std::span<const Tensor> branch_logits, InferBranch infer);

std::size_t argmax(std::span<const double> values);

}  // namespace absa
