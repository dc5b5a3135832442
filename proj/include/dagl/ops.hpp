#pragma once

#include <cstdint>
#include <vector>

#include "dagl/tape.hpp"

namespace dagl {

/// Row-major boolean matrix selecting softmax participants.
struct Mask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;

  static Mask all(std::size_t rows, std::size_t cols, bool on = true);
  /// Entries where `t` is strictly positive.
  static Mask positive(const Tensor& t);

  bool operator()(std::size_t r, std::size_t c) const { return bits[r * cols + c] != 0; }
  std::size_t row_count(std::size_t r) const;
};

// Plain tensor kernels. These do no recording and back the Var ops below.
namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// aᵀ · b
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// Im2col for a 3x3 window with zero padding 1: [C*9 x H*W].
Tensor im2col3x3(const Tensor& x);
/// Adjoint of im2col3x3.
Tensor col2im3x3(const Tensor& cols, std::size_t channels, std::size_t h, std::size_t w);
Tensor masked_softmax_rows(const Tensor& x, const Mask& mask);

}  // namespace kernels

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Elementwise product of equal shapes.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real s);
/// x + b where b has shape [1].
Var add_scalar(const Var& x, const Var& b);
Var reshape(const Var& x, Shape shape);
Var sum(const Var& x);
/// Σ x², returned as a [1] tensor.
Var squared_norm(const Var& x);

Var matmul(const Var& a, const Var& b);
/// a · bᵀ
Var matmul_nt(const Var& a, const Var& b);
/// p · pᵀ, symmetric by construction.
Var gram(const Var& p);

/// x: [C_in x H x W], w: [C_out x C_in], b: [C_out].
Var conv1x1(const Var& x, const Var& w, const Var& b);
/// x: [C_in x H x W], w: [C_out x C_in x 3 x 3], b: [C_out]. Zero padding 1.
Var conv3x3(const Var& x, const Var& w, const Var& b);

/// Subgradient at 0 is 0.
Var relu(const Var& x);
Var leaky_relu(const Var& x, Real slope);

/// Per-row softmax over entries selected by `mask`; other entries are exactly 0
/// and rows with an empty mask are all 0.
Var masked_softmax_rows(const Var& x, const Mask& mask);

/// [R x S] -> [R], mean of each row.
Var row_mean(const Var& m);
/// out_ij = m_ij - t_i for m: [R x S], t: [R].
Var sub_rows(const Var& m, const Var& t);

/// Concatenate [C_k x H x W] maps along channels.
Var concat_channels(const std::vector<Var>& parts);

}  // namespace dagl
