#include "dagl/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <ostream>

#include "dagl/image_io.hpp"
#include "dagl/metrics.hpp"
#include "dagl/visualize.hpp"

namespace dagl {

namespace fs = std::filesystem;

namespace {

std::vector<Tensor> load_images(const fs::path& dir, ColorMode color) {
  std::vector<Tensor> out;
  const std::size_t want = color == ColorMode::Gray ? 1 : 3;
  for (const auto& p : list_images(dir)) {
    Image img = read_pnm(p);
    if (img.channels != want)
      throw ConfigError(p.string() + " has " + std::to_string(img.channels) + " channel(s), config color is " +
                        std::string(to_string(color)));
    out.push_back(image_to_tensor(img));
  }
  return out;
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw UsageError(std::string(what) + " not found: " + p.string());
}

Tensor clamp01(Tensor t) {
  for (Real& v : t.data()) v = std::clamp(v, Real(0), Real(1));
  return t;
}

std::string ssim_text(const Tensor& a, const Tensor& b) {
  if (a.dim(1) < 11 || a.dim(2) < 11) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", ssim(a, b));
  return buf;
}

struct Flags {
  std::string config, data, ckpt, input, output, prefix;
  std::optional<double> sigma;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::size_t query_index = 0;
  std::size_t top_k = 8;
};

int cmd_train(const Flags& f, std::ostream& out) {
  RunConfig cfg = load_config(f.config);
  if (f.seed) cfg.train.seed = *f.seed;
  Dataset data = load_dataset(f.data, cfg.model.color);
  Model model(cfg.model);
  model.init(cfg.train.seed);

  std::ofstream log(f.ckpt + ".log", std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write log " + f.ckpt + ".log");
  log << "epoch\tlr\tmean_loss\tval_psnr\n";
  out << "epoch\tlr\tmean_loss\tval_psnr\n";

  struct Tee : std::streambuf {
    std::streambuf* a;
    std::streambuf* b;
    int overflow(int c) override {
      if (c == EOF) return 0;
      a->sputc(static_cast<char>(c));
      b->sputc(static_cast<char>(c));
      return c;
    }
    int sync() override { return a->pubsync() | b->pubsync(); }
  } tee;
  tee.a = log.rdbuf();
  tee.b = out.rdbuf();
  std::ostream both(&tee);

  TrainResult r = train(model, data.train, data.val, cfg.train, &both);
  save_checkpoint(f.ckpt, model.params(), to_config_text(cfg));
  out << "initial_loss\t" << r.initial_loss << "\nfinal_loss\t" << r.final_loss << "\nval_psnr_noisy\t"
      << format_db(r.val_psnr_noisy) << "\nval_psnr_restored\t" << format_db(r.val_psnr_final) << '\n';
  return kExitOk;
}

int cmd_denoise(const Flags& f, std::ostream& out) {
  require_file(f.ckpt, "checkpoint");
  require_file(f.input, "input image");
  Model model = load_model(f.ckpt);
  const std::size_t min = model.config().min_extent();
  Image img = read_pnm(f.input);
  if (img.width < min || img.height < min)
    throw ContractError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        " is smaller than the minimum " + std::to_string(min) + "x" + std::to_string(min));
  if (img.channels != model.config().image_channels())
    throw ConfigError("image has " + std::to_string(img.channels) + " channel(s), model expects " +
                      std::to_string(model.config().image_channels()));
  Tensor clean = image_to_tensor(img);
  Tensor input = clean;
  if (f.sigma) {
    std::mt19937_64 rng(f.seed.value_or(1));
    input = awgn(clean, *f.sigma / 255.0, rng);
  }
  Tensor restored = clamp01(model.infer(input));
  write_pnm(f.output, tensor_to_image(restored));
  if (f.sigma) {
    out << "noisy\tpsnr\t" << format_db(psnr(input, clean)) << "\tssim\t" << ssim_text(input, clean) << '\n';
    out << "restored\tpsnr\t" << format_db(psnr(restored, clean)) << "\tssim\t" << ssim_text(restored, clean)
        << '\n';
  }
  return kExitOk;
}

int cmd_ablate(const Flags& f, std::ostream& out) {
  RunConfig base = load_config(f.config);
  if (f.seed) base.train.seed = *f.seed;
  Dataset data = load_dataset(f.data, base.model.color);
  const auto& val_images = data.val.empty() ? data.train : data.val;

  out << "mode\tval_psnr\tneighbors_mean\tneighbors_std\n";
  for (auto mode : {AblationMode::Full, AblationMode::NoThreshold, AblationMode::NoAttention,
                    AblationMode::PixelNonLocal}) {
    RunConfig cfg = base;
    cfg.model.mode = mode;
    Model model(cfg.model);
    model.init(cfg.train.seed);
    TrainResult r = train(model, data.train, data.val, cfg.train, nullptr);
    ForwardTrace trace;
    const auto pairs = make_validation_pairs({val_images.front()}, cfg.train);
    model.infer(pairs.front().noisy, &trace);
    const auto [mean, sd] = neighbor_stats(trace);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s\t%s\t%.4f\t%.4f", std::string(to_string(mode)).c_str(),
                  format_db(r.val_psnr_final).c_str(), mean, sd);
    out << buf << '\n';
  }
  return kExitOk;
}

int cmd_visualize(const Flags& f, std::ostream& out) {
  require_file(f.ckpt, "checkpoint");
  require_file(f.input, "input image");
  Model model = load_model(f.ckpt);
  if (model.config().stages == 0) throw ConfigError("model has no graph stages to visualize");
  Tensor img = image_to_tensor(read_pnm(f.input));
  ForwardTrace trace;
  trace.keep_first_stage_matrices = true;
  model.infer(img, &trace);

  const auto& heads = trace.stages.front();
  const std::size_t n = heads.front().neighbor_count.size();
  if (f.query_index >= n)
    throw UsageError("query index " + std::to_string(f.query_index) + " out of range (0.." +
                     std::to_string(n - 1) + ")");

  std::ofstream listing(f.prefix + "_neighbors.txt", std::ios::trunc);
  if (!listing) throw std::runtime_error("cannot write " + f.prefix + "_neighbors.txt");
  listing << "head\trank\tindex\torigin_y\torigin_x\tattention\tsimilarity\n";
  for (std::size_t k = 0; k < heads.size(); ++k) {
    const GraphState& s = heads[k];
    const std::string base = f.prefix + "_head" + std::to_string(k);
    write_pnm(base + "_similarity.pgm", heatmap(s.similarity));
    write_pnm(base + "_adjacency.pgm", heatmap(s.adjacency));
    write_pnm(base + "_neighbor_count.pgm", neighbor_count_map(s));
    const auto top = top_neighbors(s, f.query_index, f.top_k);
    for (std::size_t r = 0; r < top.size(); ++r)
      listing << k << '\t' << r << '\t' << top[r].index << '\t' << top[r].origin_y << '\t' << top[r].origin_x
              << '\t' << top[r].attention << '\t' << top[r].similarity << '\n';
  }
  out << "patches\t" << n << "\nheads\t" << heads.size() << '\n';
  return kExitOk;
}

}  // namespace

Dataset load_dataset(const fs::path& dir, ColorMode color) {
  if (!fs::is_directory(dir)) throw UsageError("data directory not found: " + dir.string());
  Dataset d;
  d.train = load_images(dir, color);
  if (d.train.empty()) throw ConfigError("no .pgm/.ppm images in " + dir.string());
  if (fs::is_directory(dir / "val")) d.val = load_images(dir / "val", color);
  return d;
}

Model load_model(const fs::path& ckpt) {
  Checkpoint c = load_checkpoint(ckpt);
  RunConfig cfg = parse_config(c.config_text);
  Model model(cfg.model);
  assign_parameters(model.params(), c);
  return model;
}

std::pair<double, double> neighbor_stats(const ForwardTrace& trace) {
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (const auto& stage : trace.stages)
    for (const auto& head : stage)
      for (auto c : head.neighbor_count) {
        sum += static_cast<double>(c);
        sq += static_cast<double>(c) * static_cast<double>(c);
        ++n;
      }
  if (n == 0) return {0, 0};
  const double mean = sum / static_cast<double>(n);
  return {mean, std::sqrt(std::max(0.0, sq / static_cast<double>(n) - mean * mean))};
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Patch graph attention denoiser"};
  app.require_subcommand(1);
  Flags f;

  auto* train_cmd = app.add_subcommand("train", "Train on AWGN-corrupted crops and write a checkpoint");
  train_cmd->add_option("--config", f.config, "key=value config file")->required();
  train_cmd->add_option("--data", f.data, "directory of .pgm/.ppm training images")->required();
  train_cmd->add_option("--ckpt", f.ckpt, "output checkpoint path")->required();

  auto* denoise_cmd = app.add_subcommand("denoise", "Restore an image with a trained checkpoint");
  denoise_cmd->add_option("--ckpt", f.ckpt, "checkpoint")->required();
  denoise_cmd->add_option("input", f.input, "input .pgm/.ppm")->required();
  denoise_cmd->add_option("output", f.output, "restored output path")->required();
  denoise_cmd->add_option("--sigma", f.sigma, "degrade the input with AWGN of this 8-bit level first");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and compare FULL, NO_THD, NO_GAT, PIXEL_NL");
  ablate_cmd->add_option("--config", f.config, "key=value config file")->required();
  ablate_cmd->add_option("--data", f.data, "directory of training images")->required();

  auto* vis_cmd = app.add_subcommand("visualize", "Write graph heatmaps for the first stage");
  vis_cmd->add_option("--ckpt", f.ckpt, "checkpoint")->required();
  vis_cmd->add_option("input", f.input, "input .pgm/.ppm")->required();
  vis_cmd->add_option("prefix", f.prefix, "output file prefix")->required();
  vis_cmd->add_option("--query-index", f.query_index, "patch whose neighbors are listed");
  vis_cmd->add_option("--top-k", f.top_k, "neighbors listed per head");

  for (auto* sub : {train_cmd, denoise_cmd, ablate_cmd, vis_cmd}) {
    sub->add_option("--seed", f.seed, "random seed");
    sub->add_flag("--deterministic", f.deterministic, "single-threaded deterministic execution (always on)");
  }

  std::vector<const char*> argv;
  argv.push_back("dagl");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(f, out);
    if (denoise_cmd->parsed()) return cmd_denoise(f, out);
    if (ablate_cmd->parsed()) return cmd_ablate(f, out);
    return cmd_visualize(f, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace dagl
