#include "absa/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "absa/error.hpp"
#include "absa/ops.hpp"

namespace absa {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double z = 0.0;
  for (double x : v) z += std::exp(x - mx);
  return mx + std::log(z);
}

void check_emissions(const Tensor& emissions, const CrfParams& params) {
  params.validate();
  if (emissions.rank() != 2 || emissions.dim(1) != params.num_tags()) {
    throw DimensionError("CRF emissions " + shape_str(emissions.shape()) + " do not match " +
                         std::to_string(params.num_tags()) + " tags");
  }
  if (emissions.dim(0) == 0) throw ContractError("CRF requires at least one position");
}

}  // namespace

bool is_bio_valid(std::span<const int> tags) {
  int prev = kTagO;
  for (int t : tags) {
    if (t < kTagB || t > kTagO) return false;
    if (t == kTagI && prev == kTagO) return false;
    prev = t;
  }
  return true;
}

CrfParams CrfParams::zeros(std::size_t hidden, std::size_t num_tags) {
  return {Tensor::zeros({num_tags, num_tags}, true), Tensor::zeros({num_tags}, true),
          Tensor::zeros({num_tags}, true), Tensor::zeros({hidden, num_tags}, true),
          Tensor::zeros({num_tags}, true)};
}

CrfParams CrfParams::random(std::size_t hidden, std::size_t num_tags, double stddev,
                            std::mt19937_64& rng) {
  return {Tensor::randn({num_tags, num_tags}, stddev, rng, true),
          Tensor::randn({num_tags}, stddev, rng, true), Tensor::randn({num_tags}, stddev, rng, true),
          Tensor::randn({hidden, num_tags}, stddev, rng, true), Tensor::zeros({num_tags}, true)};
}

void CrfParams::validate() const {
  if (transition.rank() != 2 || transition.dim(0) != transition.dim(1)) {
    throw DimensionError("CRF transition must be square, got " + shape_str(transition.shape()));
  }
  const std::size_t k = transition.dim(0);
  if (start.shape() != Shape{k} || end.shape() != Shape{k}) {
    throw DimensionError("CRF boundary scores must have shape [" + std::to_string(k) + "]");
  }
  for (const Tensor* t : {&transition, &start, &end, &emission_proj, &emission_bias}) {
    if (!t->defined()) continue;
    for (double v : t->data()) {
      if (!std::isfinite(v)) throw NumericError("CRF parameters contain a non-finite value");
    }
  }
}

void CrfParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + "crf.transition", transition);
  out.emplace_back(prefix + "crf.start", start);
  out.emplace_back(prefix + "crf.end", end);
  out.emplace_back(prefix + "crf.emission_proj", emission_proj);
  out.emplace_back(prefix + "crf.emission_bias", emission_bias);
}

Tensor crf_emissions(const Tensor& hidden, const CrfParams& params) {
  return add_row(matmul(hidden, params.emission_proj), params.emission_bias);
}

Tensor crf_sequence_score(const Tensor& emissions, std::span<const int> tags,
                          const CrfParams& params) {
  check_emissions(emissions, params);
  const std::size_t t_len = emissions.dim(0), k = params.num_tags();
  if (tags.size() != t_len) {
    throw DimensionError("tag sequence length " + std::to_string(tags.size()) +
                         " differs from emission length " + std::to_string(t_len));
  }
  for (int y : tags) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw LabelError("tag " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    }
  }
  std::vector<std::size_t> y(tags.begin(), tags.end());
  const auto e = emissions.data(), tr = params.transition.data();
  double score = params.start.at(y[0]) + params.end.at(y[t_len - 1]);
  for (std::size_t t = 0; t < t_len; ++t) score += e[t * k + y[t]];
  for (std::size_t t = 1; t < t_len; ++t) score += tr[y[t - 1] * k + y[t]];

  return Tensor::make_result(
      {}, {score}, {emissions, params.transition, params.start, params.end},
      [k, y = std::move(y)](detail::Node& self) {
        const double g = self.grad[0];
        auto grad_of = [&self](std::size_t i) -> double* {
          auto& p = *self.parents[i];
          return p.requires_grad ? p.grad_buffer().data() : nullptr;
        };
        if (double* ge = grad_of(0))
          for (std::size_t t = 0; t < y.size(); ++t) ge[t * k + y[t]] += g;
        if (double* gt = grad_of(1))
          for (std::size_t t = 1; t < y.size(); ++t) gt[y[t - 1] * k + y[t]] += g;
        if (double* gs = grad_of(2)) gs[y.front()] += g;
        if (double* gend = grad_of(3)) gend[y.back()] += g;
      });
}

Tensor crf_log_partition(const Tensor& emissions, const CrfParams& params) {
  check_emissions(emissions, params);
  const std::size_t t_len = emissions.dim(0), k = params.num_tags();
  const auto e = emissions.data(), tr = params.transition.data();
  const auto st = params.start.data(), en = params.end.data();

  std::vector<double> alpha(t_len * k);
  std::vector<double> buf(k);
  for (std::size_t j = 0; j < k; ++j) alpha[j] = st[j] + e[j];
  for (std::size_t t = 1; t < t_len; ++t)
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < k; ++i) buf[i] = alpha[(t - 1) * k + i] + tr[i * k + j];
      alpha[t * k + j] = log_sum_exp(buf) + e[t * k + j];
    }
  for (std::size_t j = 0; j < k; ++j) buf[j] = alpha[(t_len - 1) * k + j] + en[j];
  const double log_z = log_sum_exp(buf);

  return Tensor::make_result(
      {}, {log_z}, {emissions, params.transition, params.start, params.end},
      [t_len, k, log_z, alpha = std::move(alpha)](detail::Node& self) {
        const auto& e = self.parents[0]->data;
        const auto& tr = self.parents[1]->data;
        const auto& en = self.parents[3]->data;
        auto grad_of = [&self](std::size_t i) -> double* {
          auto& p = *self.parents[i];
          return p.requires_grad ? p.grad_buffer().data() : nullptr;
        };
        // beta[t, i]: log-sum of scores of all completions after position t.
        std::vector<double> beta(t_len * k);
        std::vector<double> buf(k);
        for (std::size_t i = 0; i < k; ++i) beta[(t_len - 1) * k + i] = en[i];
        for (std::size_t t = t_len - 1; t-- > 0;)
          for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j)
              buf[j] = tr[i * k + j] + e[(t + 1) * k + j] + beta[(t + 1) * k + j];
            beta[t * k + i] = log_sum_exp(buf);
          }
        const double g = self.grad[0];
        double* ge = grad_of(0);
        double* gt = grad_of(1);
        double* gs = grad_of(2);
        double* gend = grad_of(3);
        for (std::size_t t = 0; t < t_len; ++t)
          for (std::size_t j = 0; j < k; ++j) {
            const double marginal = std::exp(alpha[t * k + j] + beta[t * k + j] - log_z);
            if (ge) ge[t * k + j] += g * marginal;
            if (t == 0 && gs) gs[j] += g * marginal;
            if (t == t_len - 1 && gend) gend[j] += g * marginal;
          }
        if (gt) {
          for (std::size_t t = 1; t < t_len; ++t)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const double pair = alpha[(t - 1) * k + i] + tr[i * k + j] + e[t * k + j] +
                                    beta[t * k + j] - log_z;
                gt[i * k + j] += g * std::exp(pair);
              }
        }
      });
}

Tensor crf_nll(const Tensor& emissions, std::span<const int> gold, const CrfParams& params) {
  return sub(crf_log_partition(emissions, params), crf_sequence_score(emissions, gold, params));
}

TagSequence viterbi_decode(const Tensor& emissions, const CrfParams& params, bool constrain_bio) {
  check_emissions(emissions, params);
  const std::size_t t_len = emissions.dim(0), k = params.num_tags();
  const bool bio = constrain_bio && k == kNumBioTags;
  const auto e = emissions.data();
  std::vector<double> tr(params.transition.data().begin(), params.transition.data().end());
  std::vector<double> st(params.start.data().begin(), params.start.data().end());
  const auto en = params.end.data();
  if (bio) {
    tr[kTagO * k + kTagI] = kNegInf;
    st[kTagI] = kNegInf;
  }

  std::vector<double> score(k);
  std::vector<double> next(k);
  std::vector<std::size_t> backptr(t_len * k, 0);
  for (std::size_t j = 0; j < k; ++j) score[j] = st[j] + e[j];
  for (std::size_t t = 1; t < t_len; ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      double best = kNegInf;
      std::size_t arg = 0;
      for (std::size_t i = 0; i < k; ++i) {
        const double s = score[i] + tr[i * k + j];
        if (s > best) {
          best = s;
          arg = i;
        }
      }
      next[j] = best + e[t * k + j];
      backptr[t * k + j] = arg;
    }
    std::swap(score, next);
  }
  double best = kNegInf;
  std::size_t last = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const double s = score[j] + en[j];
    if (s > best) {
      best = s;
      last = j;
    }
  }
  TagSequence path(t_len);
  path[t_len - 1] = static_cast<int>(last);
  for (std::size_t t = t_len - 1; t > 0; --t) {
    last = backptr[t * k + last];
    path[t - 1] = static_cast<int>(last);
  }
  return path;
}

}  // namespace absa
