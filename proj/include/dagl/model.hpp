#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dagl/graph_attention.hpp"

namespace dagl {

enum class ColorMode { Gray, Rgb };

std::string_view to_string(ColorMode c);
ColorMode parse_color_mode(std::string_view text);

/// Architecture hyperparameters. Defaults are the desk-scale model.
struct ModelConfig {
  std::size_t channels = 16;
  std::size_t rb_per_stage = 4;
  std::size_t heads = 4;
  std::size_t stages = 3;
  PatchGeometry patch{7, 7, 3, 0, 0, 0};  // map extents filled per input
  AblationMode mode = AblationMode::Full;
  ColorMode color = ColorMode::Gray;

  std::size_t image_channels() const { return color == ColorMode::Gray ? 1 : 3; }
  /// Smallest spatial extent an input may have.
  std::size_t min_extent() const;
  void validate() const;
};

struct ResidualBlockParams {
  ConvParams conv1;
  ConvParams conv2;
};

struct StageParams {
  std::vector<ResidualBlockParams> blocks;
  std::vector<GfamParams> heads;  // empty when the model has no graph stages
  ConvParams merge;
};

/// Every weight of one network as Vars, ready for a forward pass.
struct DaglParams {
  ConvParams head;
  std::vector<StageParams> stages;
  ConvParams tail;
};

/// Per-stage, per-head graph diagnostics collected during a forward pass.
struct ForwardTrace {
  bool keep_first_stage_matrices = false;
  std::vector<std::vector<GraphState>> stages;
};

/// All parameters at zero except psi1 biases, which start at 1 (gamma = 1,
/// beta = 0). Names look like "stage0.gfam.h1.edge.w".
ParameterList create_parameters(const ModelConfig& cfg);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for conv weights and biases;
/// psi weights stay at zero with gamma = 1, beta = 0.
void init_parameters(ParameterList& params, const ModelConfig& cfg, std::uint64_t seed);

/// Watches every parameter on `tape`, or wraps them as constants when tape is null.
DaglParams bind_parameters(ParameterList& params, const ModelConfig& cfg, Tape* tape);

/// x + conv2(relu(conv1(x)))
Var rb_forward(const Var& x, const ResidualBlockParams& p);

/// head conv, then per stage: residual blocks and a multi-head graph module,
/// then tail conv plus the input image. With zero stages one group of
/// residual blocks runs and no graph module is used. Output is not clamped.
Var dagl_forward(const Var& img, const DaglParams& params, const ModelConfig& cfg,
                 ForwardTrace* trace = nullptr);

/// Number of trainable scalars for `cfg`, counted from layer shapes.
std::size_t param_count(const ModelConfig& cfg);

/// Convenience: parameters plus config, forward without a tape.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  ParameterList& params() { return params_; }
  const ParameterList& params() const { return params_; }

  void init(std::uint64_t seed) { init_parameters(params_, cfg_, seed); }
  Tensor infer(const Tensor& img, ForwardTrace* trace = nullptr);

 private:
  ModelConfig cfg_;
  ParameterList params_;
};

/// Named tensors plus the config text they were saved with.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::string config_text;
};

/// Layout: "DAGL1\n", u32 tensor count, then per tensor u32 name length,
/// UTF-8 name, u32 rank, u32 extents, f64 values; then u32 config length and
/// the config text. All integers and floats little-endian.
void save_checkpoint(const std::filesystem::path& path, const ParameterList& params,
                     const std::string& config_text);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint tensors into `params`; names and shapes must match exactly.
void assign_parameters(ParameterList& params, const Checkpoint& ckpt);

}  // namespace dagl
