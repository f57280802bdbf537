#include "absa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "absa/error.hpp"

namespace absa {
namespace {

using detail::Node;

// Gradient buffer of parent i, or nullptr when it does not take gradients.
double* parent_grad(Node& n, std::size_t i) {
  auto& p = *n.parents[i];
  return p.requires_grad ? p.grad_buffer().data() : nullptr;
}

const std::vector<double>& parent_data(const Node& n, std::size_t i) { return n.parents[i]->data; }

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " invalid for shape " + shape_str(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// C[m,n] += A[m,k] * B[k,n], all row-major.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& ad = parent_data(self, 0);
    const auto& bd = parent_data(self, 1);
    const double* g = self.grad.data();
    if (double* ga = parent_grad(self, 0)) {
      // dA = G * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bd[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (double* gb = parent_grad(self, 1)) {
      // dB = A^T * G
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = ad[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  const auto d = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = d[i * n + j];
  return Tensor::make_result({n, m}, std::move(out), {a}, [m, n](Node& self) {
    double* ga = parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    double* ga = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (double* g = parent_grad(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& ad = parent_data(self, 0);
    const auto& bd = parent_data(self, 1);
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bd[i];
    if (double* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * ad[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    double* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  require_rank(a, 2, "add_row");
  require_rank(bias, 1, "add_row bias");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (bias.dim(0) != n) {
    throw DimensionError("add_row: bias " + shape_str(bias.shape()) + " does not fit " +
                         shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bd[j];
  return Tensor::make_result(a.shape(), std::move(out), {a, bias}, [m, n](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
    if (double* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
  });
}

Tensor add_n(std::span<const Tensor> terms) {
  if (terms.empty()) throw ContractError("add_n: no terms");
  Tensor acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make_result({}, {s}, {a}, [](Node& self) {
    double* g = parent_grad(self, 0);
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) s += ad[i] * bd[i];
  return Tensor::make_result({}, {s}, {a, b}, [](Node& self) {
    const auto& ad = parent_data(self, 0);
    const auto& bd = parent_data(self, 1);
    const double g0 = self.grad[0];
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < ad.size(); ++i) g[i] += g0 * bd[i];
    if (double* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < ad.size(); ++i) g[i] += g0 * ad[i];
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto s = split_axis(x.shape(), axis);
  const auto xd = x.data();
  for (double v : xd)
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.n * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.n; ++k) mx = std::max(mx, xd[base + k * s.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) {
        const double e = std::exp(xd[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < s.n; ++k) out[base + k * s.inner] /= z;
    }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [s](Node& self) {
    double* g = parent_grad(self, 0);
    const auto& y = self.data;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.n * s.inner + i;
        double inner = 0.0;
        for (std::size_t k = 0; k < s.n; ++k) {
          const auto idx = base + k * s.inner;
          inner += self.grad[idx] * y[idx];
        }
        for (std::size_t k = 0; k < s.n; ++k) {
          const auto idx = base + k * s.inner;
          g[idx] += y[idx] * (self.grad[idx] - inner);
        }
      }
  });
}

Tensor masked_softmax_rows(const Tensor& x, std::span<const int> key_mask) {
  require_rank(x, 2, "masked_softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (key_mask.size() != n) {
    throw DimensionError("masked_softmax_rows: mask length " + std::to_string(key_mask.size()) +
                         " vs " + std::to_string(n) + " columns");
  }
  if (std::none_of(key_mask.begin(), key_mask.end(), [](int v) { return v != 0; })) {
    throw ContractError("masked_softmax_rows: every key is masked");
  }
  std::vector<int> mask(key_mask.begin(), key_mask.end());
  const auto xd = x.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (mask[j]) mx = std::max(mx, xd[i * n + j]);
    if (!std::isfinite(mx)) throw NumericError("masked_softmax_rows: non-finite input");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (mask[j]) {
        out[i * n + j] = std::exp(xd[i * n + j] - mx);
        z += out[i * n + j];
      }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [m, n](Node& self) {
    double* g = parent_grad(self, 0);
    const auto& y = self.data;
    for (std::size_t i = 0; i < m; ++i) {
      double inner = 0.0;
      for (std::size_t j = 0; j < n; ++j) inner += self.grad[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[i * n + j] * (self.grad[i * n + j] - inner);
    }
  });
}

Tensor logsumexp(const Tensor& x, std::size_t axis) {
  const auto s = split_axis(x.shape(), axis);
  if (s.n == 0) throw DimensionError("logsumexp over an empty axis");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto xd = x.data();
  std::vector<double> out(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.n * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.n; ++k) mx = std::max(mx, xd[base + k * s.inner]);
      if (!std::isfinite(mx)) {
        out[o * s.inner + i] = mx;
        continue;
      }
      double z = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) z += std::exp(xd[base + k * s.inner] - mx);
      out[o * s.inner + i] = mx + std::log(z);
    }
  return Tensor::make_result(std::move(out_shape), std::move(out), {x}, [s](Node& self) {
    double* g = parent_grad(self, 0);
    const auto& xd = parent_data(self, 0);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const double lse = self.data[o * s.inner + i];
        const double go = self.grad[o * s.inner + i];
        const std::size_t base = o * s.n * s.inner + i;
        for (std::size_t k = 0; k < s.n; ++k) {
          const auto idx = base + k * s.inner;
          g[idx] += go * std::exp(xd[idx] - lse);
        }
      }
  });
}

Tensor cross_entropy(const Tensor& logits, std::size_t cls) {
  require_rank(logits, 1, "cross_entropy");
  const std::size_t c = logits.dim(0);
  if (cls >= c) {
    throw LabelError("cross_entropy: class " + std::to_string(cls) + " outside [0, " +
                     std::to_string(c) + ")");
  }
  const auto xd = logits.data();
  const double mx = *std::max_element(xd.begin(), xd.end());
  double z = 0.0;
  for (double v : xd) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  return Tensor::make_result({}, {lse - xd[cls]}, {logits}, [cls, lse](Node& self) {
    double* g = parent_grad(self, 0);
    const auto& xd = parent_data(self, 0);
    const double go = self.grad[0];
    for (std::size_t k = 0; k < xd.size(); ++k) {
      g[k] += go * (std::exp(xd[k] - lse) - (k == cls ? 1.0 : 0.0));
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm on a scalar");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  if (gamma.numel() != n || beta.numel() != n) {
    throw DimensionError("layer_norm: gamma/beta " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " vs input " + shape_str(x.shape()));
  }
  const auto xd = x.data(), gd = gamma.data(), bd = beta.data();
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (row[j] - mean) * inv_std[r];
      out[r * n + j] = xhat[r * n + j] * gd[j] + bd[j];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& gd = parent_data(self, 1);
        double* gx = parent_grad(self, 0);
        double* gg = parent_grad(self, 1);
        double* gb = parent_grad(self, 2);
        const double nd = static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* go = self.grad.data() + r * n;
          const double* xh = xhat.data() + r * n;
          if (gg)
            for (std::size_t j = 0; j < n; ++j) gg[j] += go[j] * xh[j];
          if (gb)
            for (std::size_t j = 0; j < n; ++j) gb[j] += go[j];
          if (gx) {
            double sum_d = 0.0, sum_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = go[j] * gd[j];
              sum_d += d;
              sum_dx += d * xh[j];
            }
            for (std::size_t j = 0; j < n; ++j) {
              const double d = go[j] * gd[j];
              gx[r * n + j] += inv_std[r] * (d - sum_d / nd - xh[j] * sum_dx / nd);
            }
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    out[i] = 0.5 * xd[i] * (1.0 + std::erf(xd[i] / std::numbers::sqrt2));
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    double* g = parent_grad(self, 0);
    const auto& xd = parent_data(self, 0);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < xd.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(xd[i] / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * xd[i] * xd[i]);
      g[i] += self.grad[i] * (cdf + xd[i] * pdf);
    }
  });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw ContractError("dropout probability must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<double> factor(x.numel());
  for (auto& f : factor) f = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  return mul(x, Tensor(x.shape(), std::move(factor)));
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  require_rank(table, 2, "embedding_lookup");
  const std::size_t v = table.dim(0), h = table.dim(1);
  std::vector<int> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * h);
  const auto td = table.data();
  for (std::size_t t = 0; t < idx.size(); ++t) {
    if (idx[t] < 0 || static_cast<std::size_t>(idx[t]) >= v) {
      throw VocabError("embedding_lookup: id " + std::to_string(idx[t]) + " outside table of " +
                       std::to_string(v) + " rows");
    }
    std::copy_n(td.data() + static_cast<std::size_t>(idx[t]) * h, h, out.data() + t * h);
  }
  const std::size_t count = idx.size();
  return Tensor::make_result({count, h}, std::move(out), {table},
                             [h, idx = std::move(idx)](Node& self) {
                               double* g = parent_grad(self, 0);
                               for (std::size_t t = 0; t < idx.size(); ++t) {
                                 double* row = g + static_cast<std::size_t>(idx[t]) * h;
                                 for (std::size_t j = 0; j < h; ++j) row[j] += self.grad[t * h + j];
                               }
                             });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank(x, 2, "slice_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (begin + count > m) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                          x.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
  return Tensor::make_result({count, n}, std::move(out), {x}, [begin, n](Node& self) {
    double* g = parent_grad(self, 0) + begin * n;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (begin + count > n) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + shape_str(x.shape()));
  }
  std::vector<double> out(m * count);
  const auto xd = x.data();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(xd.data() + i * n + begin, count, out.data() + i * count);
  return Tensor::make_result({m, count}, std::move(out), {x}, [m, n, begin, count](Node& self) {
    double* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * n + begin + j] += self.grad[i * count + j];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pd = parts[k].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pd.data() + i * widths[k], widths[k], out.data() + i * total + offset);
    offset += widths[k];
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return Tensor::make_result({m, total}, std::move(out), std::move(inputs),
                             [m, total, widths = std::move(widths)](Node& self) {
                               std::size_t offset = 0;
                               for (std::size_t k = 0; k < widths.size(); ++k) {
                                 if (double* g = parent_grad(self, k)) {
                                   for (std::size_t i = 0; i < m; ++i)
                                     for (std::size_t j = 0; j < widths[k]; ++j)
                                       g[i * widths[k] + j] += self.grad[i * total + offset + j];
                                 }
                                 offset += widths[k];
                               }
                             });
}

}  // namespace absa
