#pragma once

#include <string>
#include <vector>

#include "saldrn/data.hpp"
#include "saldrn/model.hpp"
#include "saldrn/tensor.hpp"

namespace saldrn {

/// 10 log10(1 / MSE) over all pixels and channels; +inf for identical inputs.
double psnr(const Tensor<float>& a, const Tensor<float>& b);
/// Mean local SSIM of the channel-mean images, 11 x 11 Gaussian window
/// (sigma 1.5) over valid positions, C1 = 0.01^2 and C2 = 0.03^2.
double ssim(const Tensor<float>& a, const Tensor<float>& b);

struct EvalRow {
  double scale = 1;
  int n_images = 0;
  double psnr_model = 0;
  double ssim_model = 0;
  double psnr_bicubic = 0;
  double ssim_bicubic = 0;
};

/// For each scale: HR crop of round(r floor(H / r)) pixels from the top-left,
/// bicubic LR of floor(H / r), and scores of the model and of bicubic
/// upsampling against the crop. Infinite PSNRs are left out of the mean
/// (the mean is +inf when every image is identical).
std::vector<EvalRow> evaluate(const SrModel<float>& model, const DatasetIndex& index, const std::vector<double>& scales,
                              int tile = 128);

std::string eval_csv(const std::vector<EvalRow>& rows);

}  // namespace saldrn
