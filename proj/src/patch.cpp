#include "dagl/patch.hpp"

#include <string>

namespace dagl {

namespace {

std::vector<std::size_t> axis_origins(std::size_t map, std::size_t patch, std::size_t stride) {
  std::vector<std::size_t> out;
  for (std::size_t o = 0; o + patch <= map; o += stride) out.push_back(o);
  if (out.back() + patch != map) out.push_back(map - patch);
  return out;
}

void require_map(const Tensor& f, const PatchGeometry& g) {
  if (f.rank() != 3 || f.dim(0) != g.channels || f.dim(1) != g.map_h || f.dim(2) != g.map_w)
    throw DimensionError("feature map " + shape_string(f.shape()) + " does not match patch geometry [" +
                         std::to_string(g.channels) + "x" + std::to_string(g.map_h) + "x" +
                         std::to_string(g.map_w) + "]");
}

}  // namespace

void PatchGeometry::validate() const {
  if (patch_w == 0 || patch_h == 0 || stride == 0 || map_w == 0 || map_h == 0 || channels == 0)
    throw DimensionError("patch geometry has a zero extent");
  if (patch_w > map_w || patch_h > map_h)
    throw DimensionError("patch " + std::to_string(patch_h) + "x" + std::to_string(patch_w) +
                         " larger than map " + std::to_string(map_h) + "x" + std::to_string(map_w));
  // Consecutive origins further apart than the patch leave pixels no patch covers.
  auto covers = [this](std::size_t map, std::size_t patch) {
    const auto o = axis_origins(map, patch, stride);
    for (std::size_t i = 1; i < o.size(); ++i)
      if (o[i] - o[i - 1] > patch) return false;
    return true;
  };
  if (!covers(map_w, patch_w) || !covers(map_h, patch_h))
    throw DimensionError("stride " + std::to_string(stride) + " leaves pixels of a " + std::to_string(map_h) + "x" +
                         std::to_string(map_w) + " map outside every " + std::to_string(patch_h) + "x" +
                         std::to_string(patch_w) + " patch");
}

std::vector<std::size_t> PatchGeometry::origins_x() const {
  validate();
  return axis_origins(map_w, patch_w, stride);
}

std::vector<std::size_t> PatchGeometry::origins_y() const {
  validate();
  return axis_origins(map_h, patch_h, stride);
}

PatchGeometry PatchGeometry::for_map(std::size_t c, std::size_t h, std::size_t w) const {
  PatchGeometry g = *this;
  g.channels = c;
  g.map_h = h;
  g.map_w = w;
  g.validate();
  return g;
}

Tensor coverage_counts(const PatchGeometry& g) {
  Tensor counts({g.map_h, g.map_w});
  for (auto oy : g.origins_y())
    for (auto ox : g.origins_x())
      for (std::size_t y = 0; y < g.patch_h; ++y)
        for (std::size_t x = 0; x < g.patch_w; ++x) counts.at(oy + y, ox + x) += 1;
  return counts;
}

namespace kernels {

Tensor unfold(const Tensor& f, const PatchGeometry& g) {
  require_map(f, g);
  const auto ys = g.origins_y();
  const auto xs = g.origins_x();
  Tensor out({ys.size() * xs.size(), g.patch_length()});
  Real* dst = out.raw();
  for (auto oy : ys)
    for (auto ox : xs)
      for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t y = 0; y < g.patch_h; ++y) {
          const Real* src = f.raw() + (c * g.map_h + oy + y) * g.map_w + ox;
          for (std::size_t x = 0; x < g.patch_w; ++x) *dst++ = src[x];
        }
  return out;
}

Tensor fold_sum(const Tensor& patches, const PatchGeometry& g) {
  const auto ys = g.origins_y();
  const auto xs = g.origins_x();
  if (patches.rank() != 2 || patches.dim(0) != ys.size() * xs.size() || patches.dim(1) != g.patch_length())
    throw DimensionError("patch matrix " + shape_string(patches.shape()) + " does not match geometry");
  Tensor out({g.channels, g.map_h, g.map_w});
  const Real* src = patches.raw();
  for (auto oy : ys)
    for (auto ox : xs)
      for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t y = 0; y < g.patch_h; ++y) {
          Real* dst = out.raw() + (c * g.map_h + oy + y) * g.map_w + ox;
          for (std::size_t x = 0; x < g.patch_w; ++x) dst[x] += *src++;
        }
  return out;
}

}  // namespace kernels

PatchSet unfold(const Var& f, const PatchGeometry& g) {
  Tensor out = kernels::unfold(f.value(), g);
  Var v = make_result(std::move(out), {f}, [g](Node& self) {
    Node& in = *self.inputs[0];
    Tensor back = kernels::fold_sum(self.grad, g);
    auto dst = in.grad_buffer().data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += back[i];
  });
  return PatchSet{g, std::move(v)};
}

Var fold(const PatchSet& ps) {
  const PatchGeometry& g = ps.geometry;
  const Tensor counts = coverage_counts(g);
  Tensor out = kernels::fold_sum(ps.patches.value(), g);
  const std::size_t hw = g.map_h * g.map_w;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t i = 0; i < hw; ++i) out[c * hw + i] /= counts[i];
  return make_result(std::move(out), {ps.patches}, [g, counts, hw](Node& self) {
    Node& in = *self.inputs[0];
    Tensor scaled = self.grad;
    for (std::size_t c = 0; c < g.channels; ++c)
      for (std::size_t i = 0; i < hw; ++i) scaled[c * hw + i] /= counts[i];
    Tensor back = kernels::unfold(scaled, g);
    auto dst = in.grad_buffer().data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += back[i];
  });
}

}  // namespace dagl
