#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "absa/encoder.hpp"
#include "absa/tensor.hpp"

namespace absa {

enum Tag : int { kTagB = 0, kTagI = 1, kTagO = 2 };
inline constexpr std::size_t kNumBioTags = 3;

using TagSequence = std::vector<int>;

/// True when no I opens the sequence or follows an O.
bool is_bio_valid(std::span<const int> tags);

/// Linear-chain CRF parameters over K tags.
///
/// transition[i, j] scores tag i followed by tag j; start and end score the
/// first and last tag; emission_proj and emission_bias map hidden states to
/// per-tag scores.
struct CrfParams {
  Tensor transition;     // [K x K]
  Tensor start;          // [K]
  Tensor end;            // [K]
  Tensor emission_proj;  // [H x K]
  Tensor emission_bias;  // [K]

  static CrfParams zeros(std::size_t hidden, std::size_t num_tags = kNumBioTags);
  static CrfParams random(std::size_t hidden, std::size_t num_tags, double stddev,
                          std::mt19937_64& rng);

  std::size_t num_tags() const { return transition.dim(0); }
  void validate() const;
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// Per-position tag scores [T x K] from hidden states [T x H].
Tensor crf_emissions(const Tensor& hidden, const CrfParams& params);

/// Log-domain score of one tag path:
/// start[y1] + sum_t e[t, yt] + sum_{t>1} transition[y(t-1), yt] + end[yT].
Tensor crf_sequence_score(const Tensor& emissions, std::span<const int> tags,
                          const CrfParams& params);

/// log Z via the forward recursion. Gradients are the forward-backward
/// marginals.
Tensor crf_log_partition(const Tensor& emissions, const CrfParams& params);

/// log Z - score(gold): the negative log-likelihood of the gold path.
Tensor crf_nll(const Tensor& emissions, std::span<const int> gold, const CrfParams& params);

/// Best-scoring path by max-product recursion. With constrain_bio (K == 3)
/// the transitions O->I and start->I are forbidden. Ties resolve toward the
/// lower tag index.
TagSequence viterbi_decode(const Tensor& emissions, const CrfParams& params, bool constrain_bio);

}  // namespace absa
