#pragma once

#include <string>
#include <vector>

#include "dagl/tensor.hpp"

namespace dagl {

/// PSNR in dB. Returns +infinity when the images are identical.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, averaged over valid window positions. Accepts [H x W],
/// [1 x H x W] or [3 x H x W]; RGB is evaluated on BT.601 luma.
double ssim(const Tensor& a, const Tensor& b, double peak = 1.0);

/// [C x H x W] -> [H x W]. Gray passes through, RGB becomes BT.601 luma.
Tensor luminance(const Tensor& img);

/// "inf" for infinite values, fixed 4 decimals otherwise.
std::string format_db(double v);

struct MetricReport {
  std::vector<double> psnr;
  std::vector<double> ssim;

  void add(double p, double s) {
    psnr.push_back(p);
    ssim.push_back(s);
  }
  double mean_psnr() const;
  double mean_ssim() const;
};

}  // namespace dagl
