#include "saldrn/losses.hpp"

#include <algorithm>
#include <cmath>

#include "saldrn/image.hpp"

namespace saldrn {

std::vector<double> path_scores(double s, std::span<const double> thresholds, double gamma) {
  const int K = static_cast<int>(thresholds.size());
  std::vector<double> scores(K + 1);
  for (int j = 0; j <= K; ++j) {
    const double l = j == 0 ? 0.0 : thresholds[j - 1];
    const double u = j == K ? 1.0 : thresholds[j];
    scores[j] = gamma * (u - s) * (s - l);
  }
  return scores;
}

std::vector<double> path_weights(double s, std::span<const double> thresholds, double gamma) {
  std::vector<double> w = path_scores(s, thresholds, gamma);
  const double mx = *std::max_element(w.begin(), w.end());
  double sum = 0;
  for (double& v : w) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : w) v /= sum;
  return w;
}

template <typename T>
Var<T> sr_loss(std::span<const Var<T>> sr_list, const Tensor<T>& hr, const std::vector<std::vector<double>>& beta) {
  const int N = hr.n();
  if (static_cast<int>(beta.size()) != N) throw ContractViolation("sr_loss: one weight vector per sample");
  std::vector<Var<T>> terms;
  std::vector<T> ones;
  for (std::size_t k = 0; k < sr_list.size(); ++k) {
    if (sr_list[k]->value.shape() != hr.shape()) throw ContractViolation("sr_loss: SR and HR dims differ");
    std::vector<T> w(N);
    for (int n = 0; n < N; ++n) {
      if (beta[n].size() != sr_list.size()) throw ContractViolation("sr_loss: one weight per path");
      w[n] = static_cast<T>(beta[n][k] / N);
    }
    terms.push_back(weighted_l1<T>(sr_list[k], hr, w));
    ones.push_back(T(1));
  }
  return weighted_sum<T>(terms, ones);
}

Tensor<float> squared_error(const Tensor<float>& sr, const Tensor<float>& hr) {
  if (sr.shape() != hr.shape()) throw ContractViolation("error map: SR and HR dims differ");
  Tensor<float> out({sr.n(), 1, sr.h(), sr.w()});
  const std::size_t P = sr.shape().plane();
  for (int n = 0; n < sr.n(); ++n) {
    float* dst = out.plane(n, 0);
    for (std::size_t i = 0; i < P; ++i) {
      double s = 0;
      for (int c = 0; c < sr.c(); ++c) {
        const double d = static_cast<double>(sr.plane(n, c)[i]) - hr.plane(n, c)[i];
        s += d * d;
      }
      dst[i] = static_cast<float>(s / sr.c());
    }
  }
  return out;
}

Tensor<float> box_filter(const Tensor<float>& x, int kernel) {
  const int rad = kernel / 2;
  const int H = x.h(), W = x.w();
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
  };
  Tensor<float> out(x.shape());
  std::vector<double> tmp(static_cast<std::size_t>(H) * W);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const float* src = x.plane(n, c);
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          double s = 0;
          for (int d = -rad; d <= rad; ++d) s += src[static_cast<std::size_t>(y) * W + reflect(xx + d, W)];
          tmp[static_cast<std::size_t>(y) * W + xx] = s;
        }
      float* dst = out.plane(n, c);
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          double s = 0;
          for (int d = -rad; d <= rad; ++d) s += tmp[static_cast<std::size_t>(reflect(y + d, H)) * W + xx];
          dst[static_cast<std::size_t>(y) * W + xx] = static_cast<float>(s / (kernel * kernel));
        }
    }
  return out;
}

Tensor<float> equalize(const Tensor<float>& x, int bins) {
  Tensor<float> out(x.shape());
  if (x.empty()) return out;
  std::vector<float> sorted = x.vec();
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) return out;
  const double N = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const auto rank = std::upper_bound(sorted.begin(), sorted.end(), x[i]) - sorted.begin();
    const double F = static_cast<double>(rank) / N;
    out[i] = static_cast<float>(std::ceil(F * bins - 1e-9) / bins);
  }
  return out;
}

Tensor<float> error_map(const Tensor<float>& sr, const Tensor<float>& hr, int out_h, int out_w, int kernel, int bins) {
  Tensor<float> err = squared_error(sr, hr);
  if (err.h() != out_h || err.w() != out_w) {
    err = resize_bicubic(err, out_h, out_w);
    for (float& v : err.vec()) v = std::max(v, 0.0f);
  }
  return equalize(box_filter(err, kernel), bins);
}

double ks_uniform(std::span<const float> values) {
  std::vector<float> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = std::clamp(static_cast<double>(v[i]), 0.0, 1.0);
    // Empirical CDF just below and at x; ties share the upper value.
    const std::size_t last = std::upper_bound(v.begin(), v.end(), v[i]) - v.begin();
    d = std::max({d, std::abs(static_cast<double>(last) / n - x), std::abs(x - static_cast<double>(i) / n)});
  }
  return d;
}

template <typename T>
Var<T> total_loss(const Var<T>& sr, const Var<T>& sal, const Var<T>& diff, double lambda1, double lambda2) {
  std::vector<Var<T>> terms{sr, diff};
  std::vector<T> coeffs{T(1), static_cast<T>(lambda2)};
  if (sal) {
    terms.push_back(sal);
    coeffs.push_back(static_cast<T>(lambda1));
  }
  return weighted_sum<T>(terms, coeffs);
}

template Var<float> sr_loss<float>(std::span<const Var<float>>, const Tensor<float>&,
                                   const std::vector<std::vector<double>>&);
template Var<double> sr_loss<double>(std::span<const Var<double>>, const Tensor<double>&,
                                     const std::vector<std::vector<double>>&);
template Var<float> total_loss<float>(const Var<float>&, const Var<float>&, const Var<float>&, double, double);
template Var<double> total_loss<double>(const Var<double>&, const Var<double>&, const Var<double>&, double, double);

}  // namespace saldrn
