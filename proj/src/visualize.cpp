#include "dagl/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dagl {

Image heatmap(const Tensor& m) {
  if (m.rank() != 2) throw DimensionError("heatmap: expected a matrix, got " + shape_string(m.shape()));
  const auto [lo, hi] = std::minmax_element(m.data().begin(), m.data().end());
  const double min = *lo, range = static_cast<double>(*hi) - *lo;
  Image img{m.dim(1), m.dim(0), 1, std::vector<std::uint8_t>(m.numel(), 0)};
  if (range > 0)
    for (std::size_t i = 0; i < m.numel(); ++i)
      img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (m[i] - min) / range));
  return img;
}

Image neighbor_count_map(const GraphState& state) {
  const std::size_t gh = state.geometry.grid_h(), gw = state.geometry.grid_w();
  if (state.neighbor_count.size() != gh * gw)
    throw ContractError("neighbor_count_map: counts do not match the patch grid");
  Tensor grid({gh, gw});
  for (std::size_t i = 0; i < grid.numel(); ++i) grid[i] = static_cast<Real>(state.neighbor_count[i]);
  return heatmap(grid);
}

std::vector<RankedNeighbor> top_neighbors(const GraphState& state, std::size_t query, std::size_t k) {
  if (!state.attention.defined()) throw ContractError("top_neighbors: graph matrices were not kept");
  const std::size_t n = state.attention.dim(0);
  if (query >= n)
    throw ContractError("query index " + std::to_string(query) + " out of range (0.." + std::to_string(n - 1) + ")");
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < n; ++j)
    if (state.attention.at(query, j) > 0) order.push_back(j);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return state.attention.at(query, a) > state.attention.at(query, b);
  });
  if (order.size() > k) order.resize(k);

  const auto ys = state.geometry.origins_y();
  const auto xs = state.geometry.origins_x();
  std::vector<RankedNeighbor> out;
  for (auto j : order)
    out.push_back({j, ys[j / xs.size()], xs[j % xs.size()], static_cast<double>(state.attention.at(query, j)),
                   static_cast<double>(state.similarity.at(query, j))});
  return out;
}

}  // namespace dagl
