#pragma once

#include <string>
#include <vector>

#include "dagl/graph_attention.hpp"
#include "dagl/image_io.hpp"

namespace dagl {

/// Per-image min-max normalization of a 2-D tensor to a gray image. A
/// constant input maps to all zeros.
Image heatmap(const Tensor& m);

/// Neighbor counts laid out on the grid_h x grid_w patch-origin grid,
/// min-max normalized.
Image neighbor_count_map(const GraphState& state);

struct RankedNeighbor {
  std::size_t index;
  std::size_t origin_y;
  std::size_t origin_x;
  double attention;
  double similarity;
};

/// The `k` connected patches with the largest attention weight for `query`,
/// highest first. Throws ContractError when `query` is out of range.
std::vector<RankedNeighbor> top_neighbors(const GraphState& state, std::size_t query, std::size_t k);

}  // namespace dagl
