#include "dagl/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace dagl {

namespace {

using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.raw(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.raw(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MatMap as_matrix(Tensor& t) { return as_matrix(t, t.dim(0), t.numel() / t.dim(0)); }
ConstMatMap as_matrix(const Tensor& t) { return as_matrix(t, t.dim(0), t.numel() / t.dim(0)); }

void require_rank(const Tensor& t, std::size_t r, const char* what) {
  if (t.rank() != r)
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(r) + ", got " +
                         shape_string(t.shape()));
}

Node& input(Node& self, std::size_t i) { return *self.inputs[i]; }

void accumulate(Node& in, const Tensor& g) {
  if (!in.requires_grad) return;
  auto dst = in.grad_buffer().data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <class F>
Tensor map_values(const Tensor& x, F f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
  return out;
}

}  // namespace

Mask Mask::all(std::size_t rows, std::size_t cols, bool on) {
  return Mask{rows, cols, std::vector<std::uint8_t>(rows * cols, on ? 1 : 0)};
}

Mask Mask::positive(const Tensor& t) {
  require_rank(t, 2, "Mask::positive");
  Mask m{t.dim(0), t.dim(1), std::vector<std::uint8_t>(t.numel())};
  for (std::size_t i = 0; i < t.numel(); ++i) m.bits[i] = t[i] > Real(0) ? 1 : 0;
  return m;
}

std::size_t Mask::row_count(std::size_t r) const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < cols; ++c) n += bits[r * cols + c];
  return n;
}

namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  Tensor out({a.dim(0), b.dim(1)});
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  if (a.dim(1) != b.dim(1))
    throw DimensionError("matmul_nt: inner dimensions differ " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()) + "^T");
  Tensor out({a.dim(0), b.dim(0)});
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(b).transpose();
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_tn");
  require_rank(b, 2, "matmul_tn");
  if (a.dim(0) != b.dim(0))
    throw DimensionError("matmul_tn: inner dimensions differ " + shape_string(a.shape()) +
                         "^T x " + shape_string(b.shape()));
  Tensor out({a.dim(1), b.dim(1)});
  as_matrix(out).noalias() = as_matrix(a).transpose() * as_matrix(b);
  return out;
}

Tensor im2col3x3(const Tensor& x) {
  require_rank(x, 3, "im2col3x3");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor cols({c * 9, h * w});
  Real* out = cols.raw();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t k = 0; k < 9; ++k) {
      const long dy = static_cast<long>(k / 3) - 1;
      const long dx = static_cast<long>(k % 3) - 1;
      Real* row = out + (ch * 9 + k) * h * w;
      for (std::size_t y = 0; y < h; ++y) {
        const long sy = static_cast<long>(y) + dy;
        for (std::size_t xx = 0; xx < w; ++xx) {
          const long sx = static_cast<long>(xx) + dx;
          row[y * w + xx] = (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w))
                                ? Real(0)
                                : x.at(ch, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
        }
      }
    }
  }
  return cols;
}

Tensor col2im3x3(const Tensor& cols, std::size_t c, std::size_t h, std::size_t w) {
  Tensor x({c, h, w});
  const Real* in = cols.raw();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t k = 0; k < 9; ++k) {
      const long dy = static_cast<long>(k / 3) - 1;
      const long dx = static_cast<long>(k % 3) - 1;
      const Real* row = in + (ch * 9 + k) * h * w;
      for (std::size_t y = 0; y < h; ++y) {
        const long sy = static_cast<long>(y) + dy;
        if (sy < 0 || sy >= static_cast<long>(h)) continue;
        for (std::size_t xx = 0; xx < w; ++xx) {
          const long sx = static_cast<long>(xx) + dx;
          if (sx < 0 || sx >= static_cast<long>(w)) continue;
          x.at(ch, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)) += row[y * w + xx];
        }
      }
    }
  }
  return x;
}

Tensor masked_softmax_rows(const Tensor& x, const Mask& mask) {
  require_rank(x, 2, "masked_softmax_rows");
  if (mask.rows != x.dim(0) || mask.cols != x.dim(1))
    throw DimensionError("masked_softmax_rows: mask shape differs from " + shape_string(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = x.raw() + r * cols;
    Real* o = out.raw() + r * cols;
    const std::uint8_t* m = mask.bits.data() + r * cols;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (m[c]) mx = std::max(mx, in[c]);
    if (!std::isfinite(mx)) continue;  // empty row stays zero
    Real total = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!m[c]) continue;
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return out;
}

}  // namespace kernels

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    accumulate(input(self, 0), self.grad);
    accumulate(input(self, 1), self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    accumulate(input(self, 0), self.grad);
    Node& rhs = input(self, 1);
    if (!rhs.requires_grad) return;
    auto g = rhs.grad_buffer().data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& l = input(self, 0);
    Node& r = input(self, 1);
    if (l.requires_grad) {
      auto g = l.grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * r.value[i];
    }
    if (r.requires_grad) {
      auto g = r.grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * l.value[i];
    }
  });
}

Var scale(const Var& a, Real s) {
  Tensor out = map_values(a.value(), [s](Real v) { return v * s; });
  return make_result(std::move(out), {a}, [s](Node& self) {
    Node& in = input(self, 0);
    auto g = in.grad_buffer().data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var add_scalar(const Var& x, const Var& b) {
  if (b.value().numel() != 1 || b.value().rank() != 1)
    throw DimensionError("add_scalar: bias must have shape [1], got " + shape_string(b.shape()));
  const Real bv = b.value()[0];
  Tensor out = map_values(x.value(), [bv](Real v) { return v + bv; });
  return make_result(std::move(out), {x, b}, [](Node& self) {
    accumulate(input(self, 0), self.grad);
    Node& bias = input(self, 1);
    if (!bias.requires_grad) return;
    Real total = 0;
    for (Real g : self.grad.data()) total += g;
    bias.grad_buffer()[0] += total;
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& in = input(self, 0);
    auto g = in.grad_buffer().data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var sum(const Var& x) {
  Real total = 0;
  for (Real v : x.value().data()) total += v;
  return make_result(Tensor::scalar(total), {x}, [](Node& self) {
    Node& in = input(self, 0);
    const Real g0 = self.grad[0];
    for (Real& g : in.grad_buffer().data()) g += g0;
  });
}

Var squared_norm(const Var& x) {
  Real total = 0;
  for (Real v : x.value().data()) total += v * v;
  return make_result(Tensor::scalar(total), {x}, [](Node& self) {
    Node& in = input(self, 0);
    const Real g0 = self.grad[0];
    auto g = in.grad_buffer().data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2 * g0 * in.value[i];
  });
}

Var matmul(const Var& a, const Var& b) {
  Tensor out = kernels::matmul(a.value(), b.value());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& l = input(self, 0);
    Node& r = input(self, 1);
    auto g = as_matrix(std::as_const(self.grad));
    if (l.requires_grad) as_matrix(l.grad_buffer()).noalias() += g * as_matrix(std::as_const(r.value)).transpose();
    if (r.requires_grad) as_matrix(r.grad_buffer()).noalias() += as_matrix(std::as_const(l.value)).transpose() * g;
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Tensor out = kernels::matmul_nt(a.value(), b.value());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& l = input(self, 0);
    Node& r = input(self, 1);
    auto g = as_matrix(std::as_const(self.grad));
    if (l.requires_grad) as_matrix(l.grad_buffer()).noalias() += g * as_matrix(std::as_const(r.value));
    if (r.requires_grad) as_matrix(r.grad_buffer()).noalias() += g.transpose() * as_matrix(std::as_const(l.value));
  });
}

namespace {

// Every entry is one dot product with the same lane layout and reduction
// order, so M is exactly symmetric and identical rows give identical entries.
// A blocked GEMM sums edge tiles in a different order, which breaks both.
constexpr std::size_t kLanes = 8;

// A x B tile of dot products. Each entry sees the same lane-wise fma chain and
// the same final reduction whatever the tile size.
template <std::size_t A, std::size_t B>
void gram_tile(const Real* rows, std::size_t i0, std::size_t j0, std::size_t dp, Real (&out)[A][B]) {
  Real acc[A][B][kLanes] = {};
  for (std::size_t k = 0; k < dp; k += kLanes)
    for (std::size_t r = 0; r < A; ++r)
      for (std::size_t c = 0; c < B; ++c)
        for (std::size_t l = 0; l < kLanes; ++l)
          acc[r][c][l] = std::fma(rows[(i0 + r) * dp + k + l], rows[(j0 + c) * dp + k + l], acc[r][c][l]);
  for (std::size_t r = 0; r < A; ++r)
    for (std::size_t c = 0; c < B; ++c) {
      const Real* q = acc[r][c];
      out[r][c] = ((q[0] + q[4]) + (q[1] + q[5])) + ((q[2] + q[6]) + (q[3] + q[7]));
    }
}

void gram_into(const Tensor& p, Tensor& out) {
  constexpr std::size_t kRows = 4, kCols = 4;
  const std::size_t n = p.dim(0), d = p.dim(1), dp = (d + kLanes - 1) / kLanes * kLanes;
  RealBuffer rows(n * dp, Real{0});
  for (std::size_t i = 0; i < n; ++i) std::copy_n(p.raw() + i * d, d, rows.data() + i * dp);
  const Real* base = rows.data();
  auto put = [&](std::size_t i, std::size_t j, Real v) { out.at(i, j) = out.at(j, i) = v; };
  // Full tiles strictly below the diagonal band, then single entries for the rest.
  std::size_t i = 0;
  for (; i + kRows <= n; i += kRows) {
    std::size_t j = 0;
    for (; j + kCols <= i; j += kCols) {
      Real t[kRows][kCols];
      gram_tile<kRows, kCols>(base, i, j, dp, t);
      for (std::size_t r = 0; r < kRows; ++r)
        for (std::size_t c = 0; c < kCols; ++c) put(i + r, j + c, t[r][c]);
    }
    for (std::size_t r = 0; r < kRows; ++r)
      for (std::size_t jj = j; jj <= i + r; ++jj) {
        Real t[1][1];
        gram_tile<1, 1>(base, i + r, jj, dp, t);
        put(i + r, jj, t[0][0]);
      }
  }
  for (; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      Real t[1][1];
      gram_tile<1, 1>(base, i, j, dp, t);
      put(i, j, t[0][0]);
    }
}

}  // namespace

Var gram(const Var& p) {
  const Tensor& pv = p.value();
  require_rank(pv, 2, "gram");
  const std::size_t n = pv.dim(0);
  Tensor out({n, n});
  gram_into(pv, out);
  return make_result(std::move(out), {p}, [](Node& self) {
    Node& in = input(self, 0);
    auto g = as_matrix(std::as_const(self.grad));
    Mat sym = g + g.transpose();
    as_matrix(in.grad_buffer()).noalias() += sym * as_matrix(std::as_const(in.value));
  });
}

Var conv1x1(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank(xv, 3, "conv1x1 input");
  require_rank(wv, 2, "conv1x1 weight");
  const std::size_t cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2), cout = wv.dim(0);
  if (wv.dim(1) != cin)
    throw DimensionError("conv1x1: weight " + shape_string(wv.shape()) + " does not take " +
                         std::to_string(cin) + " input channels");
  if (b.value().shape() != Shape{cout})
    throw DimensionError("conv1x1: bias shape " + shape_string(b.shape()) + " != [" + std::to_string(cout) + "]");
  const std::size_t hw = h * wd;
  Tensor out({cout, h, wd});
  auto o = as_matrix(out, cout, hw);
  o.noalias() = as_matrix(wv) * as_matrix(xv, cin, hw);
  for (std::size_t c = 0; c < cout; ++c) o.row(static_cast<Eigen::Index>(c)).array() += b.value()[c];
  return make_result(std::move(out), {x, w, b}, [cin, cout, hw](Node& self) {
    Node& xn = input(self, 0);
    Node& wn = input(self, 1);
    Node& bn = input(self, 2);
    auto g = as_matrix(std::as_const(self.grad), cout, hw);
    if (xn.requires_grad) as_matrix(xn.grad_buffer(), cin, hw).noalias() += as_matrix(std::as_const(wn.value)).transpose() * g;
    if (wn.requires_grad) as_matrix(wn.grad_buffer()).noalias() += g * as_matrix(std::as_const(xn.value), cin, hw).transpose();
    if (bn.requires_grad) {
      auto& gb = bn.grad_buffer();
      for (std::size_t c = 0; c < cout; ++c) gb[c] += g.row(static_cast<Eigen::Index>(c)).sum();
    }
  });
}

Var conv3x3(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank(xv, 3, "conv3x3 input");
  require_rank(wv, 4, "conv3x3 weight");
  const std::size_t cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2), cout = wv.dim(0);
  if (wv.dim(1) != cin || wv.dim(2) != 3 || wv.dim(3) != 3)
    throw DimensionError("conv3x3: weight " + shape_string(wv.shape()) + " incompatible with input " +
                         shape_string(xv.shape()));
  if (b.value().shape() != Shape{cout})
    throw DimensionError("conv3x3: bias shape " + shape_string(b.shape()) + " != [" + std::to_string(cout) + "]");
  const std::size_t hw = h * wd;
  Tensor cols = kernels::im2col3x3(xv);
  Tensor out({cout, h, wd});
  auto o = as_matrix(out, cout, hw);
  o.noalias() = as_matrix(wv, cout, cin * 9) * as_matrix(std::as_const(cols));
  for (std::size_t c = 0; c < cout; ++c) o.row(static_cast<Eigen::Index>(c)).array() += b.value()[c];
  return make_result(std::move(out), {x, w, b}, [cin, cout, h, wd](Node& self) {
    Node& xn = input(self, 0);
    Node& wn = input(self, 1);
    Node& bn = input(self, 2);
    const std::size_t hw = h * wd;
    auto g = as_matrix(std::as_const(self.grad), cout, hw);
    if (wn.requires_grad) {
      Tensor cols = kernels::im2col3x3(xn.value);
      as_matrix(wn.grad_buffer(), cout, cin * 9).noalias() += g * as_matrix(std::as_const(cols)).transpose();
    }
    if (xn.requires_grad) {
      Tensor dcols({cin * 9, hw});
      as_matrix(dcols).noalias() = as_matrix(std::as_const(wn.value), cout, cin * 9).transpose() * g;
      accumulate(xn, kernels::col2im3x3(dcols, cin, h, wd));
    }
    if (bn.requires_grad) {
      auto& gb = bn.grad_buffer();
      for (std::size_t c = 0; c < cout; ++c) gb[c] += g.row(static_cast<Eigen::Index>(c)).sum();
    }
  });
}

Var relu(const Var& x) { return leaky_relu(x, Real(0)); }

Var leaky_relu(const Var& x, Real slope) {
  if (x.tape()) x.tape()->note_kink_arguments(x.value());
  Tensor out = map_values(x.value(), [slope](Real v) { return v > 0 ? v : slope * v; });
  return make_result(std::move(out), {x}, [slope](Node& self) {
    Node& in = input(self, 0);
    auto g = in.grad_buffer().data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += in.value[i] > 0 ? self.grad[i] : slope * self.grad[i];
  });
}

Var masked_softmax_rows(const Var& x, const Mask& mask) {
  Tensor out = kernels::masked_softmax_rows(x.value(), mask);
  return make_result(std::move(out), {x}, [mask](Node& self) {
    Node& in = input(self, 0);
    const std::size_t rows = self.value.dim(0), cols = self.value.dim(1);
    auto& g = in.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* y = self.value.raw() + r * cols;
      const Real* gy = self.grad.raw() + r * cols;
      Real dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += y[c] * gy[c];
      Real* gx = g.raw() + r * cols;
      for (std::size_t c = 0; c < cols; ++c)
        if (mask(r, c)) gx[c] += y[c] * (gy[c] - dot);
    }
  });
}

Var row_mean(const Var& m) {
  const Tensor& mv = m.value();
  require_rank(mv, 2, "row_mean");
  const std::size_t rows = mv.dim(0), cols = mv.dim(1);
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    Real total = 0;
    for (std::size_t c = 0; c < cols; ++c) total += mv.at(r, c);
    out[r] = total / static_cast<Real>(cols);
  }
  return make_result(std::move(out), {m}, [rows, cols](Node& self) {
    Node& in = input(self, 0);
    auto& g = in.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const Real gr = self.grad[r] / static_cast<Real>(cols);
      for (std::size_t c = 0; c < cols; ++c) g.at(r, c) += gr;
    }
  });
}

Var sub_rows(const Var& m, const Var& t) {
  const Tensor& mv = m.value();
  require_rank(mv, 2, "sub_rows");
  const std::size_t rows = mv.dim(0), cols = mv.dim(1);
  if (t.value().shape() != Shape{rows})
    throw DimensionError("sub_rows: row offsets " + shape_string(t.shape()) + " vs matrix " + shape_string(mv.shape()));
  Tensor out = mv;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) -= t.value()[r];
  return make_result(std::move(out), {m, t}, [rows, cols](Node& self) {
    accumulate(input(self, 0), self.grad);
    Node& tn = input(self, 1);
    if (!tn.requires_grad) return;
    auto& g = tn.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      Real total = 0;
      for (std::size_t c = 0; c < cols; ++c) total += self.grad.at(r, c);
      g[r] -= total;
    }
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("concat_channels: nothing to concatenate");
  const Tensor& first = parts.front().value();
  require_rank(first, 3, "concat_channels");
  const std::size_t h = first.dim(1), w = first.dim(2);
  std::size_t channels = 0;
  for (const auto& p : parts) {
    require_rank(p.value(), 3, "concat_channels");
    if (p.dim(1) != h || p.dim(2) != w)
      throw DimensionError("concat_channels: spatial size mismatch " + shape_string(p.shape()));
    channels += p.dim(0);
  }
  Tensor out({channels, h, w});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.raw() + offset);
    offset += p.value().numel();
  }
  return make_result(std::move(out), parts, [](Node& self) {
    std::size_t offset = 0;
    for (auto& in : self.inputs) {
      const std::size_t n = in->value.numel();
      if (in->requires_grad) {
        auto g = in->grad_buffer().data();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

}  // namespace dagl
