#pragma once

#include "mpfl/diff/ops.hpp"

namespace mpfl::diff {

// Gate blocks are laid out [reset | update | candidate] along the columns.
struct GruParams {
  Tensor w_input;   // [d_in x 3d]
  Tensor w_hidden;  // [d x 3d]
  Tensor b_input;   // [1 x 3d]
  Tensor b_hidden;  // [1 x 3d]

  std::size_t hidden_size() const { return w_hidden.rows(); }
  std::size_t input_size() const { return w_input.rows(); }
};

//   r  = sigmoid(x Wir + bir + h Whr + bhr)
//   z  = sigmoid(x Wiz + biz + h Whz + bhz)
//   n  = tanh(x Win + bin + r * (h Whn + bhn))
//   h' = (1 - z) * n + z * h
inline Tensor gru_cell(const Tensor& h_prev, const Tensor& x, const GruParams& p) {
  const std::size_t d = p.hidden_size();
  if (p.w_hidden.cols() != 3 * d || p.w_input.cols() != 3 * d || p.b_input.cols() != 3 * d ||
      p.b_hidden.cols() != 3 * d || h_prev.cols() != d || x.cols() != p.input_size()) {
    throw Error(ErrorKind::Shape, "gru_cell: inconsistent parameter or input shapes");
  }
  const Tensor gx = add_row(matmul(x, p.w_input), p.b_input);
  const Tensor gh = add_row(matmul(h_prev, p.w_hidden), p.b_hidden);
  const Tensor r = sigmoid(add(slice_cols(gx, 0, d), slice_cols(gh, 0, d)));
  const Tensor z = sigmoid(add(slice_cols(gx, d, d), slice_cols(gh, d, d)));
  const Tensor n = tanh(add(slice_cols(gx, 2 * d, d), hadamard(r, slice_cols(gh, 2 * d, d))));
  return add(hadamard(affine(z, -1.0, 1.0), n), hadamard(z, h_prev));
}

}  // namespace mpfl::diff
