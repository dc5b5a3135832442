#include "dagl/graph_attention.hpp"

#include <string>

namespace dagl {

std::string_view to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::Full: return "FULL";
    case AblationMode::NoThreshold: return "NO_THD";
    case AblationMode::NoAttention: return "NO_GAT";
    case AblationMode::PixelNonLocal: return "PIXEL_NL";
  }
  return "?";
}

AblationMode parse_ablation_mode(std::string_view text) {
  for (auto m : {AblationMode::Full, AblationMode::NoThreshold, AblationMode::NoAttention,
                 AblationMode::PixelNonLocal})
    if (text == to_string(m)) return m;
  throw ConfigError("unknown ablation mode '" + std::string(text) + "' (FULL, NO_THD, NO_GAT, PIXEL_NL)");
}

bool uses_threshold(AblationMode mode) {
  return mode == AblationMode::Full || mode == AblationMode::NoAttention;
}

std::pair<PatchSet, PatchSet> embed(const Var& f_in, const GfamParams& params, const PatchGeometry& g) {
  const PatchGeometry geom = g.for_map(params.edge.w.dim(0), f_in.dim(1), f_in.dim(2));
  Var e = conv1x1(f_in, params.edge.w, params.edge.b);
  Var n = conv1x1(f_in, params.node.w, params.node.b);
  return {unfold(e, geom), unfold(n, geom)};
}

Var similarity(const PatchSet& edge) { return gram(edge.patches); }

Threshold dynamic_threshold(const Var& m, const PatchSet& edge, const GfamParams& params) {
  const std::size_t n = edge.count();
  if (m.value().rank() != 2 || m.dim(0) != n)
    throw DimensionError("dynamic_threshold: similarity " + shape_string(m.shape()) + " for " +
                         std::to_string(n) + " patches");
  if (!params.psi1.w.defined() || !params.psi2.w.defined())
    throw ConfigError("dynamic_threshold: psi parameters missing");
  Var gamma = add_scalar(reshape(matmul_nt(edge.patches, params.psi1.w), {n}), params.psi1.b);
  Var beta = add_scalar(reshape(matmul_nt(edge.patches, params.psi2.w), {n}), params.psi2.b);
  Var t = add(mul(gamma, row_mean(m)), beta);
  return {t, gamma, beta};
}

Var adjacency(const Var& m, const Var& t) { return relu(sub_rows(m, t)); }

Var attention(const Var& a) { return masked_softmax_rows(a, Mask::positive(a.value())); }

PatchSet aggregate(const Var& alpha, const PatchSet& node) {
  if (alpha.value().rank() != 2 || alpha.dim(0) != alpha.dim(1) || alpha.dim(1) != node.count())
    throw DimensionError("aggregate: attention " + shape_string(alpha.shape()) + " for " +
                         std::to_string(node.count()) + " node patches");
  return PatchSet{node.geometry, matmul(alpha, node.patches)};
}

namespace {

std::vector<std::size_t> row_counts(const Mask& mask) {
  std::vector<std::size_t> out(mask.rows);
  for (std::size_t r = 0; r < mask.rows; ++r) out[r] = mask.row_count(r);
  return out;
}

Tensor uniform_rows(const Mask& mask) {
  Tensor out({mask.rows, mask.cols});
  for (std::size_t r = 0; r < mask.rows; ++r) {
    const std::size_t k = mask.row_count(r);
    if (k == 0) continue;
    for (std::size_t c = 0; c < mask.cols; ++c)
      if (mask(r, c)) out.at(r, c) = Real(1) / static_cast<Real>(k);
  }
  return out;
}

}  // namespace

GfamResult gfam_forward(const Var& f_in, const GfamParams& params, const PatchGeometry& g,
                        AblationMode mode, bool keep_matrices) {
  if (f_in.value().rank() != 3) throw DimensionError("gfam_forward: input must be C x H x W");
  PatchGeometry layout = g;
  if (mode == AblationMode::PixelNonLocal) {
    layout.patch_w = layout.patch_h = layout.stride = 1;
  }
  auto [edge, node] = embed(f_in, params, layout);
  Var m = similarity(edge);
  const std::size_t n = edge.count();

  GfamResult result;
  result.state.geometry = edge.geometry;
  Var alpha;
  Var a;
  if (uses_threshold(mode)) {
    Threshold th = dynamic_threshold(m, edge, params);
    a = adjacency(m, th.t);
    const Mask mask = Mask::positive(a.value());
    result.state.neighbor_count = row_counts(mask);
    alpha = mode == AblationMode::Full ? masked_softmax_rows(a, mask) : constant(uniform_rows(mask));
    if (keep_matrices) {
      result.state.threshold = th.t.value();
      result.state.gamma = th.gamma.value();
      result.state.beta = th.beta.value();
    }
  } else {
    a = m;
    alpha = masked_softmax_rows(m, Mask::all(n, n));
    result.state.neighbor_count.assign(n, n);
  }
  if (keep_matrices) {
    result.state.similarity = m.value();
    result.state.adjacency = a.value();
    result.state.attention = alpha.value();
  }

  PatchSet updated = aggregate(alpha, node);
  result.out = add(f_in, fold(updated));
  return result;
}

Var mgfam_forward(const Var& f_in, std::span<const GfamParams> heads, const ConvParams& merge,
                  const PatchGeometry& g, AblationMode mode, std::vector<GraphState>* states,
                  bool keep_matrices) {
  if (heads.empty()) throw ConfigError("mgfam_forward: at least one head is required");
  std::vector<Var> outs;
  outs.reserve(heads.size());
  for (const auto& head : heads) {
    GfamResult r = gfam_forward(f_in, head, g, mode, keep_matrices);
    outs.push_back(std::move(r.out));
    if (states) states->push_back(std::move(r.state));
  }
  return conv1x1(concat_channels(outs), merge.w, merge.b);
}

}  // namespace dagl
