#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mpfl/diff/tensor.hpp"

namespace mpfl::diff {

namespace detail {

inline void require_shape(bool ok, const char* op, const Shape& a, const Shape& b) {
  if (!ok) {
    throw Error(ErrorKind::Shape, std::string(op) + ": incompatible shapes " + to_string(a) +
                                      " and " + to_string(b));
  }
}

inline std::vector<double>* grad_of(Node& self, std::size_t parent) {
  Node& p = *self.parents[parent];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

// C[m x n] += A[m x k] * B[k x n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
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

// C[m x n] += A[m x k] * B[n x k]^T
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * n + j] += s;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return make_result(a.shape(), std::move(out), {&a}, [df](Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < ga->size(); ++i) {
      (*ga)[i] += self.grad[i] * df(x[i], self.value[i]);
    }
  });
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_shape(a.cols() == b.rows(), "matmul", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  return detail::make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](detail::Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* ga = detail::grad_of(self, 0)) {
      detail::gemm_nt(self.grad.data(), bv.data(), ga->data(), m, n, k);
    }
    if (auto* gb = detail::grad_of(self, 1)) {
      detail::gemm_tn(av.data(), self.grad.data(), gb->data(), m, k, n);
    }
  });
}

// a * b^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  detail::require_shape(a.cols() == b.cols(), "matmul_nt", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nt(a.values().data(), b.values().data(), out.data(), m, k, n);
  return detail::make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](detail::Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* ga = detail::grad_of(self, 0)) {
      detail::gemm_nn(self.grad.data(), bv.data(), ga->data(), m, n, k);
    }
    if (auto* gb = detail::grad_of(self, 1)) {
      detail::gemm_tn(self.grad.data(), av.data(), gb->data(), m, n, k);
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return detail::make_result({c, r}, std::move(out), {&a}, [r, c](detail::Node& self) {
    auto* ga = detail::grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += self.grad[j * r + i];
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_shape(a.shape() == b.shape(), "add", a.shape(), b.shape());
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return detail::make_result(a.shape(), std::move(out), {&a, &b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* g = detail::grad_of(self, p)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_shape(a.shape() == b.shape(), "sub", a.shape(), b.shape());
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return detail::make_result(a.shape(), std::move(out), {&a, &b}, [](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = detail::grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

// a[m x n] + row[1 x n] on every row.
inline Tensor add_row(const Tensor& a, const Tensor& row) {
  detail::require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row", a.shape(),
                        row.shape());
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto rv = row.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += rv[j];
  return detail::make_result(a.shape(), std::move(out), {&a, &row}, [m, n](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = detail::grad_of(self, 1)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[j] += self.grad[i * n + j];
    }
  });
}

// a[m x n] * row[1 x n] elementwise on every row.
inline Tensor mul_row(const Tensor& a, const Tensor& row) {
  detail::require_shape(row.rows() == 1 && row.cols() == a.cols(), "mul_row", a.shape(),
                        row.shape());
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto rv = row.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= rv[j];
  return detail::make_result(a.shape(), std::move(out), {&a, &row}, [m, n](detail::Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& rv = self.parents[1]->value;
    if (auto* g = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += self.grad[i * n + j] * rv[j];
    }
    if (auto* g = detail::grad_of(self, 1)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[j] += self.grad[i * n + j] * av[i * n + j];
    }
  });
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  detail::require_shape(a.shape() == b.shape(), "hadamard", a.shape(), b.shape());
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return detail::make_result(a.shape(), std::move(out), {&a, &b}, [](detail::Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* g = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (auto* g = detail::grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  return detail::unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

// factor * a + offset, elementwise.
inline Tensor affine(const Tensor& a, double factor, double offset) {
  return detail::unary(
      a, [=](double x) { return factor * x + offset; }, [=](double, double) { return factor; });
}

// a * s for a 1x1 tensor s.
inline Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  detail::require_shape(s.size() == 1, "mul_scalar", a.shape(), s.shape());
  const double sv = s.values()[0];
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= sv;
  return detail::make_result(a.shape(), std::move(out), {&a, &s}, [](detail::Node& self) {
    const auto& av = self.parents[0]->value;
    const double sv = self.parents[1]->value[0];
    if (auto* g = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * sv;
    }
    if (auto* g = detail::grad_of(self, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < av.size(); ++i) acc += self.grad[i] * av[i];
      (*g)[0] += acc;
    }
  });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error(ErrorKind::Shape, "concat_cols of nothing");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    detail::require_shape(p.rows() == m, "concat_cols", parts[0].shape(), p.shape());
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::vector<std::size_t> widths;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    const auto pv = p.values();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * n + off + j] = pv[i * w + j];
    off += w;
    widths.push_back(w);
  }
  return detail::make_result({m, n}, std::move(out), parts, [m, n, widths](detail::Node& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      const std::size_t w = widths[p];
      if (auto* g = detail::grad_of(self, p)) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) (*g)[i * w + j] += self.grad[i * n + off + j];
      }
      off += w;
    }
  });
}

inline Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  detail::require_shape(start + count <= a.cols(), "slice_cols", a.shape(), {1, start + count});
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * count);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = av[i * n + start + j];
  return detail::make_result({m, count}, std::move(out), {&a},
                             [m, n, start, count](detail::Node& self) {
                               auto* g = detail::grad_of(self, 0);
                               if (!g) return;
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < count; ++j)
                                   (*g)[i * n + start + j] += self.grad[i * count + j];
                             });
}

inline Tensor gather_rows(const Tensor& a, std::vector<std::size_t> rows) {
  const std::size_t n = a.cols();
  std::vector<double> out(rows.size() * n);
  const auto av = a.values();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= a.rows()) {
      throw Error(ErrorKind::Shape, "gather_rows: row " + std::to_string(rows[r]) +
                                        " out of range for " + to_string(a.shape()));
    }
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(rows[r] * n), n, out.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  const std::size_t count = rows.size();
  return detail::make_result({count, n}, std::move(out), {&a},
                             [n, rows = std::move(rows)](detail::Node& self) {
                               auto* g = detail::grad_of(self, 0);
                               if (!g) return;
                               for (std::size_t r = 0; r < rows.size(); ++r)
                                 for (std::size_t j = 0; j < n; ++j)
                                   (*g)[rows[r] * n + j] += self.grad[r * n + j];
                             });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

// Shannon entropy of each row, [m x n] -> [m x 1], with 0 log 0 = 0.
inline Tensor entropy_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double x = av[i * n + j];
      if (x > 0.0) out[i] -= x * std::log(x);
    }
  return detail::make_result({m, 1}, std::move(out), {&a}, [m, n](detail::Node& self) {
    auto* g = detail::grad_of(self, 0);
    if (!g) return;
    const auto& av = self.parents[0]->value;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double x = av[i * n + j];
        if (x > 0.0) (*g)[i * n + j] -= self.grad[i] * (std::log(x) + 1.0);
      }
  });
}

// Sets entries where mask is nonzero to -inf; their gradient is zero.
inline Tensor masked_fill_neg_inf(const Tensor& a, const std::vector<char>& mask) {
  detail::require_shape(mask.size() == a.size(), "masked_fill", a.shape(), {1, mask.size()});
  std::vector<double> out(a.values().begin(), a.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i]) out[i] = -std::numeric_limits<double>::infinity();
  }
  return detail::make_result(a.shape(), std::move(out), {&a}, [mask](detail::Node& self) {
    auto* g = detail::grad_of(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < g->size(); ++i) {
      if (!mask[i]) (*g)[i] += self.grad[i];
    }
  });
}

// Row-wise softmax. Entries equal to -inf get exactly zero probability; a row
// with no finite entry means there is no feasible action.
inline Tensor softmax_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, av[i * n + j]);
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw Error(ErrorKind::NoFeasibleAction,
                  "softmax row " + std::to_string(i) + " is fully masked");
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double x = av[i * n + j];
      const double e = x == -std::numeric_limits<double>::infinity() ? 0.0 : std::exp(x - mx);
      out[i * n + j] = e;
      sum += e;
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= sum;
  }
  return detail::make_result(a.shape(), std::move(out), {&a}, [m, n](detail::Node& self) {
    auto* g = detail::grad_of(self, 0);
    if (!g) return;
    const auto& y = self.value;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += y[i * n + j] * self.grad[i * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        (*g)[i * n + j] += y[i * n + j] * (self.grad[i * n + j] - dot);
      }
    }
  });
}

inline constexpr double kLayerNormEps = 1e-5;

// Per-row standardization without the affine part.
inline Tensor layer_norm_rows(const Tensor& a, double eps = kLayerNormEps) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  std::vector<double> inv_std(m);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += av[i * n + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = av[i * n + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = (av[i * n + j] - mean) * inv_std[i];
  }
  return detail::make_result(a.shape(), std::move(out), {&a},
                             [m, n, inv_std = std::move(inv_std)](detail::Node& self) {
                               auto* g = detail::grad_of(self, 0);
                               if (!g) return;
                               const auto& y = self.value;
                               const double inv_n = 1.0 / static_cast<double>(n);
                               for (std::size_t i = 0; i < m; ++i) {
                                 double mean_dy = 0.0, mean_dy_y = 0.0;
                                 for (std::size_t j = 0; j < n; ++j) {
                                   mean_dy += self.grad[i * n + j];
                                   mean_dy_y += self.grad[i * n + j] * y[i * n + j];
                                 }
                                 mean_dy *= inv_n;
                                 mean_dy_y *= inv_n;
                                 for (std::size_t j = 0; j < n; ++j) {
                                   (*g)[i * n + j] += inv_std[i] * (self.grad[i * n + j] - mean_dy -
                                                                    y[i * n + j] * mean_dy_y);
                                 }
                               }
                             });
}

// a[1 x m], b[1 x n] -> a^T b [m x n]
inline Tensor outer(const Tensor& a, const Tensor& b) {
  detail::require_shape(a.rows() == 1 && b.rows() == 1, "outer", a.shape(), b.shape());
  const std::size_t m = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i] * bv[j];
  return detail::make_result({m, n}, std::move(out), {&a, &b}, [m, n](detail::Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* g = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += self.grad[i * n + j] * bv[j];
        (*g)[i] += acc;
      }
    }
    if (auto* g = detail::grad_of(self, 1)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[j] += self.grad[i * n + j] * av[i];
    }
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return detail::make_result({1, 1}, {s}, {&a}, [](detail::Node& self) {
    auto* g = detail::grad_of(self, 0);
    if (!g) return;
    for (auto& v : *g) v += self.grad[0];
  });
}

inline Tensor frobenius_sq(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return detail::make_result({1, 1}, {s}, {&a}, [](detail::Node& self) {
    auto* g = detail::grad_of(self, 0);
    if (!g) return;
    const auto& av = self.parents[0]->value;
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += 2.0 * av[i] * self.grad[0];
  });
}

// Column means, [m x n] -> [1 x n].
inline Tensor mean_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(n, 0.0);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j];
  for (auto& v : out) v /= static_cast<double>(m);
  return detail::make_result({1, n}, std::move(out), {&a}, [m, n](detail::Node& self) {
    auto* g = detail::grad_of(self, 0);
    if (!g) return;
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += self.grad[j] * inv;
  });
}

inline Tensor element(const Tensor& a, std::size_t r, std::size_t c) {
  if (r >= a.rows() || c >= a.cols()) {
    throw Error(ErrorKind::Shape, "element index out of range for " + to_string(a.shape()));
  }
  const std::size_t idx = r * a.cols() + c;
  return detail::make_result({1, 1}, {a.values()[idx]}, {&a}, [idx](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0)) (*g)[idx] += self.grad[0];
  });
}

// Sparse attention pattern in CSR form: row i attends to index[offsets[i] ..
// offsets[i+1]), kept in ascending index order.
struct AttentionGraph {
  std::size_t nodes = 0;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> index;

  std::size_t edges() const { return index.size(); }
};

// Multi-head attention restricted to an AttentionGraph. q, k, v are [N x d]
// with heads laid out as consecutive column blocks of width d / heads. bias,
// when defined, is [edges x heads] and is added to the scaled scores.
inline Tensor graph_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                              const AttentionGraph& graph, std::size_t heads,
                              const Tensor& bias = Tensor()) {
  const std::size_t n = graph.nodes, d = q.cols();
  detail::require_shape(q.shape() == k.shape() && q.shape() == v.shape() && q.rows() == n,
                        "graph_attention", q.shape(), k.shape());
  if (heads == 0 || d % heads != 0) {
    throw Error(ErrorKind::Config, "embedding width must be divisible by the head count");
  }
  const std::size_t e = graph.edges();
  const bool has_bias = bias.defined();
  if (has_bias) {
    detail::require_shape(bias.rows() == e && bias.cols() == heads, "graph_attention bias",
                          bias.shape(), {e, heads});
  }
  const std::size_t dk = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<double> out(n * d, 0.0);
  std::vector<double> weights(e * heads);
  const auto qv = q.values(), kv = k.values(), vv = v.values();
  const std::span<const double> bv = has_bias ? bias.values() : std::span<const double>();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = graph.offsets[i], hi = graph.offsets[i + 1];
    if (lo == hi) {
      throw Error(ErrorKind::Config, "node " + std::to_string(i) + " attends to nothing");
    }
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * dk;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t s = lo; s < hi; ++s) {
        const std::size_t j = graph.index[s];
        double dot = 0.0;
        for (std::size_t c = 0; c < dk; ++c) dot += qv[i * d + c0 + c] * kv[j * d + c0 + c];
        double score = dot * inv_sqrt;
        if (has_bias) score += bv[s * heads + h];
        weights[s * heads + h] = score;
        mx = std::max(mx, score);
      }
      double total = 0.0;
      for (std::size_t s = lo; s < hi; ++s) {
        const double w = std::exp(weights[s * heads + h] - mx);
        weights[s * heads + h] = w;
        total += w;
      }
      for (std::size_t s = lo; s < hi; ++s) {
        const double a = weights[s * heads + h] / total;
        weights[s * heads + h] = a;
        const std::size_t j = graph.index[s];
        for (std::size_t c = 0; c < dk; ++c) out[i * d + c0 + c] += a * vv[j * d + c0 + c];
      }
    }
  }
  std::vector<Tensor> inputs = {q, k, v};
  if (has_bias) inputs.push_back(bias);
  return detail::make_result(
      {n, d}, std::move(out), inputs,
      [graph, heads, n, d, dk, inv_sqrt, has_bias, weights = std::move(weights)](detail::Node& self) {
        const auto& qv = self.parents[0]->value;
        const auto& kv = self.parents[1]->value;
        const auto& vv = self.parents[2]->value;
        auto* gq = detail::grad_of(self, 0);
        auto* gk = detail::grad_of(self, 1);
        auto* gv = detail::grad_of(self, 2);
        auto* gb = has_bias ? detail::grad_of(self, 3) : nullptr;
        std::vector<double> dscore;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t lo = graph.offsets[i], hi = graph.offsets[i + 1];
          dscore.assign(hi - lo, 0.0);
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * dk;
            const double* go = self.grad.data() + i * d + c0;
            double dot = 0.0;
            for (std::size_t s = lo; s < hi; ++s) {
              const std::size_t j = graph.index[s];
              const double a = weights[s * heads + h];
              double da = 0.0;
              for (std::size_t c = 0; c < dk; ++c) {
                da += go[c] * vv[j * d + c0 + c];
                if (gv) (*gv)[j * d + c0 + c] += a * go[c];
              }
              dscore[s - lo] = da;
              dot += a * da;
            }
            for (std::size_t s = lo; s < hi; ++s) {
              const std::size_t j = graph.index[s];
              const double ds = weights[s * heads + h] * (dscore[s - lo] - dot);
              if (gb) (*gb)[s * heads + h] += ds;
              const double dsc = ds * inv_sqrt;
              for (std::size_t c = 0; c < dk; ++c) {
                if (gq) (*gq)[i * d + c0 + c] += dsc * kv[j * d + c0 + c];
                if (gk) (*gk)[j * d + c0 + c] += dsc * qv[i * d + c0 + c];
              }
            }
          }
        }
      });
}

}  // namespace mpfl::diff
