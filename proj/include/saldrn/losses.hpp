#pragma once

#include <span>
#include <vector>

#include "saldrn/autograd.hpp"

namespace saldrn {

/// Unnormalised path scores gamma (u_j - s)(s - l_j) for paths j = 0..K,
/// with intervals (0, theta_1), (theta_j, theta_{j+1}) and theta_{K+1} = 1.
std::vector<double> path_scores(double s, std::span<const double> thresholds, double gamma);
/// softmax(path_scores).
std::vector<double> path_weights(double s, std::span<const double> thresholds, double gamma);

/// sum_k sum_n beta[n][k] / N * mean |sr_k[n] - hr[n]|. beta is constant.
template <typename T>
Var<T> sr_loss(std::span<const Var<T>> sr_list, const Tensor<T>& hr, const std::vector<std::vector<double>>& beta);

/// Per-pixel channel-mean squared error, N x 1 x H x W.
Tensor<float> squared_error(const Tensor<float>& sr, const Tensor<float>& hr);
/// Mean filter over kernel x kernel windows with reflect-101 borders.
Tensor<float> box_filter(const Tensor<float>& x, int kernel);
/// Rank equalisation over every value of the tensor: v -> ceil(F(v) bins) / bins
/// with F the empirical CDF. Constant input maps to zeros.
Tensor<float> equalize(const Tensor<float>& x, int bins);
/// Difficulty target: squared error at HR, bicubic-resized to out_h x out_w,
/// mean filtered, then equalised jointly over the batch.
Tensor<float> error_map(const Tensor<float>& sr, const Tensor<float>& hr, int out_h, int out_w, int kernel,
                        int bins);

/// Kolmogorov-Smirnov distance of the sample to Uniform(0, 1).
double ks_uniform(std::span<const float> values);

template <typename T>
Var<T> saliency_loss(const Var<T>& pred, const Tensor<T>& gt) {
  return binary_cross_entropy(pred, gt);
}

template <typename T>
Var<T> difficulty_loss(const Var<T>& pred, const Tensor<T>& err) {
  return mean_abs_diff(pred, err);
}

/// L_SR + lambda1 L_sal + lambda2 L_diff; `sal` may be null.
template <typename T>
Var<T> total_loss(const Var<T>& sr, const Var<T>& sal, const Var<T>& diff, double lambda1, double lambda2);

inline double total_loss(double sr, double sal, double diff, double lambda1, double lambda2) {
  return sr + lambda1 * sal + lambda2 * diff;
}

}  // namespace saldrn
