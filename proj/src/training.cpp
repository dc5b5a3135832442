#include "dagl/training.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "dagl/metrics.hpp"

namespace dagl {

void TrainConfig::validate(const ModelConfig& model) const {
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (batch == 0) throw ConfigError("batch must be at least 1");
  if (halve_every == 0) throw ConfigError("halve_every must be positive");
  if (iters_per_epoch == 0) throw ConfigError("iters_per_epoch must be positive");
  if (!(sigma >= 0)) throw ConfigError("sigma must be non-negative");
  if (crop < model.min_extent())
    throw ConfigError("crop " + std::to_string(crop) + " is smaller than the patch size " +
                      std::to_string(model.min_extent()));
}

Var l2_loss(const Var& pred, const Var& target, std::size_t batch) {
  if (batch == 0) throw ContractError("l2_loss: batch must be positive");
  return scale(squared_norm(sub(target, pred)), Real(1) / static_cast<Real>(batch));
}

Tensor awgn(const Tensor& img, double sigma, std::mt19937_64& rng) {
  if (!(sigma >= 0)) throw ContractError("awgn: sigma must be non-negative");
  Tensor out = img;
  if (sigma == 0) return out;
  std::normal_distribution<double> noise(0.0, sigma);
  for (Real& v : out.data()) v += static_cast<Real>(noise(rng));
  return out;
}

static Tensor crop_at(const Tensor& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  const std::size_t c = img.dim(0);
  Tensor out({c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(ch, y, x) = img.at(ch, y0 + y, x0 + x);
  return out;
}

Tensor random_crop(const Tensor& img, std::size_t crop_size, std::mt19937_64& rng) {
  if (img.dim(1) < crop_size || img.dim(2) < crop_size)
    throw ContractError("random_crop: image " + shape_string(img.shape()) + " smaller than crop " +
                        std::to_string(crop_size));
  std::uniform_int_distribution<std::size_t> dy(0, img.dim(1) - crop_size);
  std::uniform_int_distribution<std::size_t> dx(0, img.dim(2) - crop_size);
  const std::size_t y0 = dy(rng);
  const std::size_t x0 = dx(rng);
  return crop_at(img, y0, x0, crop_size, crop_size);
}

Tensor center_crop(const Tensor& img, std::size_t crop_size) {
  const std::size_t h = std::min(crop_size, img.dim(1));
  const std::size_t w = std::min(crop_size, img.dim(2));
  return crop_at(img, (img.dim(1) - h) / 2, (img.dim(2) - w) / 2, h, w);
}

void adam_step(ParameterList& params, AdamState& state, double lr, const AdamHyper& hyper) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Tensor::zeros(p.value.shape()));
      state.v.push_back(Tensor::zeros(p.value.shape()));
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: optimizer state does not match parameters");
  ++state.step;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  std::size_t k = 0;
  for (auto& p : params) {
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    ++k;
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double g = p.grad[i];
      m[i] = static_cast<Real>(hyper.beta1 * m[i] + (1 - hyper.beta1) * g);
      v[i] = static_cast<Real>(hyper.beta2 * v[i] + (1 - hyper.beta2) * g * g);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= static_cast<Real>(lr * mhat / (std::sqrt(vhat) + hyper.eps));
    }
  }
}

double clip_grad_norm(ParameterList& params, double max_norm) {
  double sq = 0;
  for (const auto& p : params)
    for (Real g : p.grad.data()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const Real s = static_cast<Real>(max_norm / norm);
    for (auto& p : params)
      for (Real& g : p.grad.data()) g *= s;
  }
  return norm;
}

double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.lr * std::pow(0.5, static_cast<double>(epoch / cfg.halve_every));
}

double batch_loss(Model& model, const std::vector<SamplePair>& pairs) {
  double total = 0;
  for (const auto& p : pairs) {
    Var pred = constant(model.infer(p.noisy));
    total += l2_loss(pred, constant(p.clean), pairs.size()).value()[0];
  }
  return total;
}

static Tensor clamp01(Tensor t) {
  for (Real& v : t.data()) v = std::clamp(v, Real(0), Real(1));
  return t;
}

double mean_restored_psnr(Model& model, const std::vector<SamplePair>& pairs) {
  MetricReport report;
  for (const auto& p : pairs) report.add(psnr(clamp01(model.infer(p.noisy)), p.clean), 0);
  return report.mean_psnr();
}

std::vector<SamplePair> make_validation_pairs(const std::vector<Tensor>& images, const TrainConfig& cfg) {
  std::mt19937_64 rng(cfg.seed ^ 0x5eed0fa1u);
  std::vector<SamplePair> out;
  for (const auto& img : images) {
    Tensor clean = center_crop(img, cfg.crop);
    Tensor noisy = awgn(clean, cfg.sigma / 255.0, rng);
    out.push_back({std::move(clean), std::move(noisy)});
  }
  return out;
}

namespace {

SamplePair draw_pair(const std::vector<Tensor>& images, const TrainConfig& cfg, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, images.size() - 1);
  Tensor clean = random_crop(images[pick(rng)], cfg.crop, rng);
  Tensor noisy = awgn(clean, cfg.sigma / 255.0, rng);
  return {std::move(clean), std::move(noisy)};
}

}  // namespace

std::string format_log_line(const EpochLog& e) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu\t%.6g\t%.6f\t%s", e.epoch, e.lr, e.mean_loss, format_db(e.val_psnr).c_str());
  return buf;
}

TrainResult train(Model& model, const std::vector<Tensor>& train_images, const std::vector<Tensor>& val_images,
                  const TrainConfig& cfg, std::ostream* log) {
  if (train_images.empty()) throw ConfigError("training set is empty");
  cfg.validate(model.config());
  for (const auto& img : train_images)
    if (img.dim(1) < cfg.crop || img.dim(2) < cfg.crop)
      throw ConfigError("training image " + shape_string(img.shape()) + " smaller than crop " + std::to_string(cfg.crop));

  const ModelConfig& mcfg = model.config();
  ParameterList& params = model.params();
  std::mt19937_64 rng(cfg.seed);
  std::mt19937_64 probe_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

  std::vector<SamplePair> probe;
  for (std::size_t b = 0; b < cfg.batch; ++b) probe.push_back(draw_pair(train_images, cfg, probe_rng));
  const auto val = make_validation_pairs(val_images.empty() ? train_images : val_images, cfg);

  TrainResult result;
  result.initial_loss = batch_loss(model, probe);
  {
    MetricReport noisy;
    for (const auto& p : val) noisy.add(psnr(p.noisy, p.clean), 0);
    result.val_psnr_noisy = noisy.mean_psnr();
  }

  AdamState adam;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    double epoch_loss = 0;
    for (std::size_t it = 0; it < cfg.iters_per_epoch; ++it) {
      params.zero_grad();
      double loss_total = 0;
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        SamplePair pair = draw_pair(train_images, cfg, rng);
        Tape tape;
        DaglParams bound = bind_parameters(params, mcfg, &tape);
        Var pred = dagl_forward(constant(pair.noisy), bound, mcfg);
        Var loss = l2_loss(pred, constant(pair.clean), cfg.batch);
        tape.backward(loss);
        loss_total += loss.value()[0];
      }
      if (!std::isfinite(loss_total))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", iteration " +
                           std::to_string(it));
      if (cfg.grad_clip) clip_grad_norm(params, 1.0);
      adam_step(params, adam, lr);
      result.iteration_loss.push_back(loss_total);
      epoch_loss += loss_total;
    }
    EpochLog entry{epoch, lr, epoch_loss / static_cast<double>(cfg.iters_per_epoch), mean_restored_psnr(model, val)};
    result.epochs.push_back(entry);
    if (log) *log << format_log_line(entry) << '\n' << std::flush;
  }
  result.final_loss = batch_loss(model, probe);
  result.val_psnr_final = mean_restored_psnr(model, val);
  return result;
}

}  // namespace dagl
