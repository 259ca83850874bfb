#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mpfl/diff/ops.hpp"
#include "mpfl/rng.hpp"

namespace mpfl::diff {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  bool passed = false;
  // Location of the worst element.
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

inline constexpr double kGradCheckEps = 1e-5;
inline constexpr double kGradCheckTolerance = 1e-4;
// Relative errors use max(|analytic|, |numeric|, floor) as denominator, so
// gradients below the floor are judged on absolute error floor * tolerance.
inline constexpr double kGradCheckFloor = 1e-5;

inline double relative_error(double analytic, double numeric, double floor = kGradCheckFloor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares backward() gradients of a scalar function against central finite
// differences for every element of every input. `f` must rebuild the graph
// from the current input values each call.
inline GradCheckResult check_gradients(const std::string& name, std::vector<Tensor> inputs,
                                       const std::function<Tensor()>& f,
                                       double eps = kGradCheckEps,
                                       double tolerance = kGradCheckTolerance) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  backward(f());
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    if (t.grad().empty()) {
      analytic.emplace_back(t.size(), 0.0);
    } else {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    }
  }
  GradCheckResult out;
  out.name = name;
  NoGradGuard guard;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto v = inputs[k].mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + eps;
      const double up = f().item();
      v[i] = saved - eps;
      const double down = f().item();
      v[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(analytic[k][i], numeric);
      if (err > out.max_rel_error || out.checked == 0) {
        out.max_rel_error = err;
        out.worst_input = k;
        out.worst_index = i;
        out.worst_analytic = analytic[k][i];
        out.worst_numeric = numeric;
      }
      ++out.checked;
    }
  }
  out.passed = out.max_rel_error <= tolerance;
  return out;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape.size());
  for (auto& x : v) x = u(rng);
  return Tensor::from(shape, std::move(v), true);
}

// Projects a tensor to a scalar with fixed random weights so the check covers
// the full vector-Jacobian product.
inline Tensor project(const Tensor& t, const Tensor& weights) {
  return sum(hadamard(t, weights));
}

// Finite-difference checks for every primitive in ops.hpp.
inline std::vector<GradCheckResult> primitive_gradchecks(std::uint64_t seed = 7) {
  Rng rng(derive_seed(seed, "gradcheck"));
  std::vector<GradCheckResult> out;
  auto run_unary = [&](const std::string& name, Shape in_shape,
                       const std::function<Tensor(const Tensor&)>& op, double lo = -1.0,
                       double hi = 1.0) {
    Tensor a = random_tensor(in_shape, rng, lo, hi);
    const Shape out_shape = [&] {
      NoGradGuard g;
      return op(a).shape();
    }();
    const Tensor w = random_tensor(out_shape, rng).detach();
    out.push_back(check_gradients(name, {a}, [&] { return project(op(a), w); }));
  };
  auto run_binary = [&](const std::string& name, Shape sa, Shape sb,
                        const std::function<Tensor(const Tensor&, const Tensor&)>& op) {
    Tensor a = random_tensor(sa, rng);
    Tensor b = random_tensor(sb, rng);
    const Shape out_shape = [&] {
      NoGradGuard g;
      return op(a, b).shape();
    }();
    const Tensor w = random_tensor(out_shape, rng).detach();
    out.push_back(check_gradients(name, {a, b}, [&] { return project(op(a, b), w); }));
  };

  run_binary("matmul", {3, 4}, {4, 5}, [](auto& a, auto& b) { return matmul(a, b); });
  run_binary("matmul_nt", {3, 4}, {5, 4}, [](auto& a, auto& b) { return matmul_nt(a, b); });
  run_unary("transpose", {3, 4}, [](auto& a) { return transpose(a); });
  run_binary("add", {3, 4}, {3, 4}, [](auto& a, auto& b) { return add(a, b); });
  run_binary("sub", {3, 4}, {3, 4}, [](auto& a, auto& b) { return sub(a, b); });
  run_binary("add_row", {3, 4}, {1, 4}, [](auto& a, auto& b) { return add_row(a, b); });
  run_binary("mul_row", {3, 4}, {1, 4}, [](auto& a, auto& b) { return mul_row(a, b); });
  run_binary("hadamard", {3, 4}, {3, 4}, [](auto& a, auto& b) { return hadamard(a, b); });
  run_unary("scale", {3, 4}, [](auto& a) { return scale(a, -2.5); });
  run_unary("affine", {3, 4}, [](auto& a) { return affine(a, 0.5, 3.0); });
  run_binary("mul_scalar", {3, 4}, {1, 1}, [](auto& a, auto& b) { return mul_scalar(a, b); });
  run_binary("concat_cols", {3, 2}, {3, 3},
             [](auto& a, auto& b) { return concat_cols({a, b}); });
  run_unary("slice_cols", {3, 5}, [](auto& a) { return slice_cols(a, 1, 3); });
  run_unary("gather_rows", {4, 3}, [](auto& a) { return gather_rows(a, {2, 0, 2}); });
  run_unary("relu", {3, 4}, [](auto& a) { return relu(a); }, 0.1, 1.0);
  run_unary("relu_negative", {3, 4}, [](auto& a) { return relu(a); }, -1.0, -0.1);
  run_unary("tanh", {3, 4}, [](auto& a) { return tanh(a); });
  run_unary("sigmoid", {3, 4}, [](auto& a) { return sigmoid(a); });
  run_unary("exp", {3, 4}, [](auto& a) { return exp(a); });
  run_unary("log", {3, 4}, [](auto& a) { return log(a); }, 0.2, 2.0);
  run_unary("softmax_rows", {3, 5}, [](auto& a) { return softmax_rows(a); });
  run_unary("softmax_masked", {3, 5}, [](auto& a) {
    std::vector<char> mask(15, 0);
    mask[1] = mask[7] = mask[8] = mask[14] = 1;
    return softmax_rows(masked_fill_neg_inf(a, mask));
  });
  run_unary("layer_norm_rows", {3, 6}, [](auto& a) { return layer_norm_rows(a); });
  run_binary("outer", {1, 3}, {1, 4}, [](auto& a, auto& b) { return outer(a, b); });
  run_unary("sum", {3, 4}, [](auto& a) { return sum(a); });
  run_unary("frobenius_sq", {3, 4}, [](auto& a) { return frobenius_sq(a); });
  run_unary("mean_rows", {3, 4}, [](auto& a) { return mean_rows(a); });
  run_unary("element", {3, 4}, [](auto& a) { return element(a, 2, 1); });
  run_unary("entropy_rows", {3, 4}, [](auto& a) { return entropy_rows(softmax_rows(a)); });

  {
    // 5 nodes, 2 heads of width 2, ragged neighbourhoods.
    AttentionGraph g;
    g.nodes = 5;
    g.offsets = {0, 2, 5, 6, 9, 12};
    g.index = {0, 3, 0, 1, 2, 2, 1, 3, 4, 0, 2, 4};
    Tensor q = random_tensor({5, 4}, rng);
    Tensor k = random_tensor({5, 4}, rng);
    Tensor v = random_tensor({5, 4}, rng);
    Tensor b = random_tensor({g.edges(), 2}, rng);
    const Tensor w = random_tensor({5, 4}, rng).detach();
    out.push_back(check_gradients("graph_attention", {q, k, v, b},
                                  [&] { return project(graph_attention(q, k, v, g, 2, b), w); }));
  }
  return out;
}

}  // namespace mpfl::diff
