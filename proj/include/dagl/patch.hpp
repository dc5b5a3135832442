#pragma once

#include <vector>

#include "dagl/ops.hpp"

namespace dagl {

/// Where overlapping patches sit on a feature map. Origins run 0, s, 2s, ...
/// per axis; if the last one stops short of the border an extra origin at
/// (map - patch) is appended, so patches never read out of bounds and every
/// pixel is covered at least once.
struct PatchGeometry {
  std::size_t patch_w = 7;
  std::size_t patch_h = 7;
  std::size_t stride = 3;
  std::size_t map_w = 0;
  std::size_t map_h = 0;
  std::size_t channels = 0;

  /// Throws DimensionError on zero extents, a patch larger than the map, or a
  /// stride that leaves some pixel outside every patch.
  void validate() const;

  std::vector<std::size_t> origins_x() const;
  std::vector<std::size_t> origins_y() const;
  std::size_t grid_w() const { return origins_x().size(); }
  std::size_t grid_h() const { return origins_y().size(); }
  std::size_t count() const { return grid_w() * grid_h(); }
  std::size_t patch_length() const { return channels * patch_h * patch_w; }

  /// Same patch layout applied to a C x H x W map.
  PatchGeometry for_map(std::size_t c, std::size_t h, std::size_t w) const;

  friend bool operator==(const PatchGeometry&, const PatchGeometry&) = default;
};

/// N flattened patches in raster order of origins. Each row is laid out
/// channel-major, then patch row, then patch column.
struct PatchSet {
  PatchGeometry geometry;
  Var patches;  // [N x C*patch_h*patch_w]

  std::size_t count() const { return patches.dim(0); }
};

/// Integer number of patches covering each pixel, as an [H x W] tensor.
Tensor coverage_counts(const PatchGeometry& g);

PatchSet unfold(const Var& f, const PatchGeometry& g);
/// Overlap-averaging inverse of unfold.
Var fold(const PatchSet& ps);

namespace kernels {
Tensor unfold(const Tensor& f, const PatchGeometry& g);
/// Scatter-add of patch rows back onto the map (no averaging).
Tensor fold_sum(const Tensor& patches, const PatchGeometry& g);
}  // namespace kernels

}  // namespace dagl
