#pragma once

// Independent reference implementations used only by tests. None of these
// call into the library code they are checking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "absa/tensor.hpp"

namespace absa::oracle {

inline std::vector<double> matmul(std::span<const double> a, std::span<const double> b, std::size_t m,
                                  std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

inline double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

/// Every length-t sequence over k labels, in lexicographic order.
inline std::vector<std::vector<int>> all_sequences(std::size_t t, std::size_t k) {
  std::size_t total = 1;
  for (std::size_t i = 0; i < t; ++i) total *= k;
  std::vector<std::vector<int>> out(total, std::vector<int>(t));
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rest = idx;
    for (std::size_t pos = t; pos-- > 0;) {
      out[idx][pos] = static_cast<int>(rest % k);
      rest /= k;
    }
  }
  return out;
}

/// Linear-chain path score summed term by term from raw buffers.
inline double path_score(std::span<const double> emissions, std::span<const double> transition,
                         std::span<const double> start, std::span<const double> end, std::size_t k,
                         const std::vector<int>& y) {
  double s = start[y.front()] + end[y.back()];
  for (std::size_t t = 0; t < y.size(); ++t) s += emissions[t * k + y[t]];
  for (std::size_t t = 1; t < y.size(); ++t) s += transition[y[t - 1] * k + y[t]];
  return s;
}

struct Enumeration {
  double log_z = 0.0;
  std::vector<int> best;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<double> scores;  // aligned with all_sequences(t, k)
};

inline Enumeration enumerate_crf(std::span<const double> emissions, std::span<const double> transition,
                                 std::span<const double> start, std::span<const double> end, std::size_t t,
                                 std::size_t k) {
  Enumeration e;
  for (const auto& y : all_sequences(t, k)) {
    const double s = path_score(emissions, transition, start, end, k, y);
    e.scores.push_back(s);
    if (s > e.best_score) {
      e.best_score = s;
      e.best = y;
    }
  }
  e.log_z = log_sum_exp(e.scores);
  return e;
}

/// |a - n| / max(|a|, |n|, 1e-6)
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

struct GradCheck {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

/// Compares backward() against central differences on up to `per_tensor`
/// random coordinates of every tensor in `params`. `loss` must rebuild the
/// graph from the current parameter values on each call.
inline GradCheck gradient_check(const std::function<Tensor()>& loss, const std::vector<Tensor>& params,
                                std::size_t per_tensor, std::uint64_t seed, double h = 1e-5) {
  for (auto p : params) p.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) {
    analytic.emplace_back(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.back().begin());
  }
  std::mt19937_64 rng(seed);
  GradCheck result;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    std::vector<std::size_t> coords(p.numel());
    for (std::size_t c = 0; c < coords.size(); ++c) coords[c] = c;
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(std::min(per_tensor, coords.size()));
    for (std::size_t c : coords) {
      auto data = p.mutable_data();
      const double orig = data[c];
      data[c] = orig + h;
      const double up = loss().item();
      data[c] = orig - h;
      const double down = loss().item();
      data[c] = orig;
      const double numeric = (up - down) / (2.0 * h);
      result.max_relative_error = std::max(result.max_relative_error, relative_error(analytic[i][c], numeric));
      ++result.coordinates;
    }
  }
  return result;
}

/// Naive BIO validity: no I at the start, no I right after O.
inline bool bio_valid(std::span<const int> tags) {
  for (std::size_t t = 0; t < tags.size(); ++t) {
    if (tags[t] != 1) continue;
    if (t == 0 || tags[t - 1] == 2) return false;
  }
  return true;
}

}  // namespace absa::oracle
