#include "dagl/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace dagl {

std::string_view to_string(ColorMode c) { return c == ColorMode::Gray ? "gray" : "rgb"; }

ColorMode parse_color_mode(std::string_view text) {
  if (text == "gray") return ColorMode::Gray;
  if (text == "rgb") return ColorMode::Rgb;
  throw ConfigError("unknown color mode '" + std::string(text) + "' (gray, rgb)");
}

std::size_t ModelConfig::min_extent() const {
  if (stages == 0 || mode == AblationMode::PixelNonLocal) return 1;
  return std::max(patch.patch_w, patch.patch_h);
}

void ModelConfig::validate() const {
  if (channels == 0) throw ConfigError("channels must be positive");
  if (rb_per_stage == 0) throw ConfigError("rb_per_stage must be positive");
  if (heads == 0) throw ConfigError("heads must be positive");
  if (patch.patch_w == 0 || patch.patch_h == 0 || patch.stride == 0)
    throw ConfigError("patch_w, patch_h and stride must be positive");
  if (patch.stride > std::min(patch.patch_w, patch.patch_h))
    throw ConfigError("stride " + std::to_string(patch.stride) + " exceeds the patch and would leave pixels uncovered");
}

namespace {

std::string stage_prefix(std::size_t s) { return "stage" + std::to_string(s) + "."; }

std::size_t block_groups(const ModelConfig& cfg) { return std::max<std::size_t>(cfg.stages, 1); }

void add_conv3(ParameterList& list, const std::string& name, std::size_t cout, std::size_t cin) {
  list.add(name + ".w", Tensor::zeros({cout, cin, 3, 3}));
  list.add(name + ".b", Tensor::zeros({cout}));
}

void add_conv1(ParameterList& list, const std::string& name, std::size_t cout, std::size_t cin) {
  list.add(name + ".w", Tensor::zeros({cout, cin}));
  list.add(name + ".b", Tensor::zeros({cout}));
}

std::string head_prefix(std::size_t s, std::size_t k) {
  return stage_prefix(s) + "gfam.h" + std::to_string(k) + ".";
}

}  // namespace

ParameterList create_parameters(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.channels;
  const std::size_t d = c * cfg.patch.patch_w * cfg.patch.patch_h;
  ParameterList list;
  add_conv3(list, "head", c, cfg.image_channels());
  for (std::size_t s = 0; s < block_groups(cfg); ++s) {
    for (std::size_t r = 0; r < cfg.rb_per_stage; ++r) {
      const std::string rb = stage_prefix(s) + "rb" + std::to_string(r);
      add_conv3(list, rb + ".conv1", c, c);
      add_conv3(list, rb + ".conv2", c, c);
    }
    if (cfg.stages == 0) continue;
    for (std::size_t k = 0; k < cfg.heads; ++k) {
      const std::string h = head_prefix(s, k);
      add_conv1(list, h + "edge", c, c);
      add_conv1(list, h + "node", c, c);
      if (uses_threshold(cfg.mode)) {
        list.add(h + "psi1.w", Tensor::zeros({1, d}));
        list.add(h + "psi1.b", Tensor::full({1}, 1));
        list.add(h + "psi2.w", Tensor::zeros({1, d}));
        list.add(h + "psi2.b", Tensor::zeros({1}));
      }
    }
    add_conv1(list, stage_prefix(s) + "merge", c, cfg.heads * c);
  }
  add_conv3(list, "tail", cfg.image_channels(), c);
  return list;
}

void init_parameters(ParameterList& params, const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto fill = [&](const std::string& base) {
    Parameter& w = params.get(base + ".w");
    Parameter& b = params.get(base + ".b");
    const std::size_t fan_in = w.value.numel() / w.value.dim(0);
    const Real bound = Real(1) / std::sqrt(static_cast<Real>(fan_in));
    std::uniform_real_distribution<Real> dist(-bound, bound);
    for (Real& v : w.value.data()) v = dist(rng);
    for (Real& v : b.value.data()) v = dist(rng);
  };
  fill("head");
  for (std::size_t s = 0; s < block_groups(cfg); ++s) {
    for (std::size_t r = 0; r < cfg.rb_per_stage; ++r) {
      const std::string rb = stage_prefix(s) + "rb" + std::to_string(r);
      fill(rb + ".conv1");
      fill(rb + ".conv2");
    }
    if (cfg.stages == 0) continue;
    for (std::size_t k = 0; k < cfg.heads; ++k) {
      fill(head_prefix(s, k) + "edge");
      fill(head_prefix(s, k) + "node");
    }
    fill(stage_prefix(s) + "merge");
  }
  fill("tail");
}

DaglParams bind_parameters(ParameterList& params, const ModelConfig& cfg, Tape* tape) {
  auto var = [&](const std::string& name) {
    Parameter& p = params.get(name);
    return tape ? tape->watch(p) : constant(p.value);
  };
  auto conv = [&](const std::string& base) { return ConvParams{var(base + ".w"), var(base + ".b")}; };

  DaglParams out;
  out.head = conv("head");
  for (std::size_t s = 0; s < block_groups(cfg); ++s) {
    StageParams stage;
    for (std::size_t r = 0; r < cfg.rb_per_stage; ++r) {
      const std::string rb = stage_prefix(s) + "rb" + std::to_string(r);
      stage.blocks.push_back({conv(rb + ".conv1"), conv(rb + ".conv2")});
    }
    if (cfg.stages > 0) {
      for (std::size_t k = 0; k < cfg.heads; ++k) {
        const std::string h = head_prefix(s, k);
        GfamParams gp;
        gp.edge = conv(h + "edge");
        gp.node = conv(h + "node");
        if (uses_threshold(cfg.mode)) {
          gp.psi1 = conv(h + "psi1");
          gp.psi2 = conv(h + "psi2");
        }
        stage.heads.push_back(std::move(gp));
      }
      stage.merge = conv(stage_prefix(s) + "merge");
    }
    out.stages.push_back(std::move(stage));
  }
  out.tail = conv("tail");
  return out;
}

Var rb_forward(const Var& x, const ResidualBlockParams& p) {
  return add(x, conv3x3(relu(conv3x3(x, p.conv1.w, p.conv1.b)), p.conv2.w, p.conv2.b));
}

Var dagl_forward(const Var& img, const DaglParams& params, const ModelConfig& cfg, ForwardTrace* trace) {
  const Tensor& iv = img.value();
  if (iv.rank() != 3 || iv.dim(0) != cfg.image_channels())
    throw DimensionError("dagl_forward: expected " + std::to_string(cfg.image_channels()) +
                         " x H x W image, got " + shape_string(iv.shape()));
  const std::size_t min = cfg.min_extent();
  if (iv.dim(1) < min || iv.dim(2) < min)
    throw ContractError("image " + std::to_string(iv.dim(1)) + "x" + std::to_string(iv.dim(2)) +
                        " is smaller than the minimum " + std::to_string(min) + "x" + std::to_string(min));

  Var x = conv3x3(img, params.head.w, params.head.b);
  for (std::size_t s = 0; s < params.stages.size(); ++s) {
    const StageParams& stage = params.stages[s];
    for (const auto& rb : stage.blocks) x = rb_forward(x, rb);
    if (stage.heads.empty()) continue;
    std::vector<GraphState>* states = nullptr;
    if (trace) states = &trace->stages.emplace_back();
    const bool keep = trace && trace->keep_first_stage_matrices && s == 0;
    x = mgfam_forward(x, stage.heads, stage.merge, cfg.patch, cfg.mode, states, keep);
  }
  return add(img, conv3x3(x, params.tail.w, params.tail.b));
}

std::size_t param_count(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.channels;
  const std::size_t ci = cfg.image_channels();
  const std::size_t conv3 = c * c * 9 + c;
  const std::size_t conv1 = c * c + c;
  const std::size_t psi = uses_threshold(cfg.mode) ? 2 * (c * cfg.patch.patch_w * cfg.patch.patch_h + 1) : 0;
  std::size_t total = (ci * c * 9 + c) + (c * ci * 9 + ci);
  total += block_groups(cfg) * cfg.rb_per_stage * 2 * conv3;
  if (cfg.stages > 0) total += cfg.stages * (cfg.heads * (2 * conv1 + psi) + (cfg.heads * c * c + c));
  return total;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)), params_(create_parameters(cfg_)) {}

Tensor Model::infer(const Tensor& img, ForwardTrace* trace) {
  DaglParams bound = bind_parameters(params_, cfg_, nullptr);
  return dagl_forward(constant(img), bound, cfg_, trace).value();
}

// --- checkpoint -----------------------------------------------------------

namespace {

constexpr char kMagic[] = "DAGL1\n";
constexpr std::size_t kMagicLen = 6;

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

void put_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw ContractError(std::string("checkpoint: ") + what + " exceeds u32");
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterList& params,
                     const std::string& config_text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic, kMagicLen);
  put_u32(os, to_u32(params.size(), "tensor count"));
  for (const auto& p : params) {
    put_u32(os, to_u32(p.name.size(), "name length"));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(os, to_u32(p.value.rank(), "rank"));
    for (auto e : p.value.shape()) put_u32(os, to_u32(e, "extent"));
    for (Real v : p.value.data()) put_f64(os, static_cast<double>(v));
  }
  put_u32(os, to_u32(config_text.size(), "config length"));
  os.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  Reader r(buf.str());
  if (r.text(kMagicLen) != std::string(kMagic, kMagicLen)) throw std::runtime_error("not a DAGL1 checkpoint");
  Checkpoint ck;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.text(r.u32());
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& e : shape) e = r.u32();
    const std::size_t n = shape_numel(shape);
    r.need(n * 8);
    std::vector<Real> data(n);
    for (auto& v : data) v = static_cast<Real>(r.f64());
    ck.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  ck.config_text = r.text(r.u32());
  if (!r.at_end()) throw std::runtime_error("trailing bytes after checkpoint config");
  return ck;
}

void assign_parameters(ParameterList& params, const Checkpoint& ckpt) {
  if (ckpt.tensors.size() != params.size())
    throw ConfigError("checkpoint has " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                      std::to_string(params.size()));
  for (const auto& [name, value] : ckpt.tensors) {
    Parameter& p = params.get(name);
    if (p.value.shape() != value.shape())
      throw ConfigError("checkpoint tensor " + name + " has shape " + shape_string(value.shape()) +
                        ", model expects " + shape_string(p.value.shape()));
    p.value = value;
  }
}

}  // namespace dagl
