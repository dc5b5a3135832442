#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dagl/patch.hpp"

namespace dagl {

/// Which aggregation variant a graph module runs.
enum class AblationMode {
  Full,           // dynamic threshold + graph attention
  NoThreshold,    // fully connected softmax over raw similarities
  NoAttention,    // dynamic threshold, uniform weights over neighbors
  PixelNonLocal,  // 1x1 patches, stride 1, fully connected
};

std::string_view to_string(AblationMode mode);
/// Accepts FULL, NO_THD, NO_GAT, PIXEL_NL.
AblationMode parse_ablation_mode(std::string_view text);
bool uses_threshold(AblationMode mode);

/// Weight and bias of a convolution or linear map.
struct ConvParams {
  Var w;
  Var b;
};

/// One head. psi1/psi2 map a flattened edge patch to a scalar: w is
/// [1 x C*ph*pw], b is [1]. They are left undefined in modes without a
/// threshold.
struct GfamParams {
  ConvParams edge;
  ConvParams node;
  ConvParams psi1;
  ConvParams psi2;
};

/// Diagnostic snapshot of one head's graph. Matrices are only filled when
/// requested; neighbor counts are always filled.
struct GraphState {
  PatchGeometry geometry;
  Tensor similarity;                // M, N x N
  std::optional<Tensor> threshold;  // T, N (absent without dynamic threshold)
  std::optional<Tensor> gamma;
  std::optional<Tensor> beta;
  Tensor adjacency;                 // A, N x N
  Tensor attention;                 // alpha, N x N
  std::vector<std::size_t> neighbor_count;
};

struct Threshold {
  Var t;
  Var gamma;
  Var beta;
};

struct GfamResult {
  Var out;
  GraphState state;
};

/// edge = unfold(f_edge(f_in)), node = unfold(f_node(f_in)).
std::pair<PatchSet, PatchSet> embed(const Var& f_in, const GfamParams& params, const PatchGeometry& g);

/// M = P Pᵀ over flattened edge patches.
Var similarity(const PatchSet& edge);

/// T_i = gamma_i * mean_k(M_ik) + beta_i with gamma = psi1(p'_i), beta = psi2(p'_i).
Threshold dynamic_threshold(const Var& m, const PatchSet& edge, const GfamParams& params);

/// A_ij = max(M_ij - T_i, 0). A_ij == 0 means "not connected".
Var adjacency(const Var& m, const Var& t);

/// Softmax of A over each row's strictly positive entries.
Var attention(const Var& a);

/// Row i = sum_j alpha_ij * node_j; all-zero alpha rows give all-zero rows.
PatchSet aggregate(const Var& alpha, const PatchSet& node);

/// f_out = f_in + fold(aggregate(...)). `g` supplies patch size and stride;
/// map extents come from f_in. PixelNonLocal ignores the patch size in `g`.
GfamResult gfam_forward(const Var& f_in, const GfamParams& params, const PatchGeometry& g,
                        AblationMode mode, bool keep_matrices = false);

/// f_merge(concat_k head_k(f_in)). If `states` is given, one GraphState per
/// head is appended to it.
Var mgfam_forward(const Var& f_in, std::span<const GfamParams> heads, const ConvParams& merge,
                  const PatchGeometry& g, AblationMode mode, std::vector<GraphState>* states = nullptr,
                  bool keep_matrices = false);

}  // namespace dagl
