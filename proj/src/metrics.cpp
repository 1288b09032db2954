#include "saldrn/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "saldrn/errors.hpp"
#include "saldrn/image.hpp"
#include "saldrn/inference.hpp"

namespace saldrn {
namespace {

std::vector<double> channel_mean(const Tensor<float>& t) {
  std::vector<double> out(t.shape().plane(), 0.0);
  for (int c = 0; c < t.c(); ++c) {
    const float* p = t.plane(0, c);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += p[i];
  }
  for (double& v : out) v /= t.c();
  return out;
}

std::vector<double> gaussian_window() {
  std::vector<double> g(11);
  double sum = 0;
  for (int i = 0; i < 11; ++i) {
    g[i] = std::exp(-((i - 5) * (i - 5)) / (2 * 1.5 * 1.5));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

/// Valid-mode separable filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < k; ++i) s += g[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < k; ++i) s += g[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

void check_pair(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape()) throw ContractViolation("metric inputs differ in shape");
  if (a.empty()) throw ContractViolation("metric of empty images");
}

double finite_mean(const std::vector<double>& v) {
  double s = 0;
  int n = 0;
  for (double x : v)
    if (std::isfinite(x)) {
      s += x;
      ++n;
    }
  return n ? s / n : std::numeric_limits<double>::infinity();
}

}  // namespace

double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  check_pair(a, b);
  double se = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  if (se == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(a.numel()) / se);
}

double ssim(const Tensor<float>& a, const Tensor<float>& b) {
  check_pair(a, b);
  const int h = a.h(), w = a.w();
  if (h < 11 || w < 11) throw ContractViolation("SSIM needs images of at least 11 x 11");
  if (a.n() != 1) throw ContractViolation("SSIM expects a single image");
  const auto x = channel_mean(a), y = channel_mean(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto g = gaussian_window();
  const auto mx = filter_valid(x, h, w, g), my = filter_valid(y, h, w, g);
  const auto sxx = filter_valid(xx, h, w, g), syy = filter_valid(yy, h, w, g), sxy = filter_valid(xy, h, w, g);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

std::vector<EvalRow> evaluate(const SrModel<float>& model, const DatasetIndex& index, const std::vector<double>& scales,
                              int tile) {
  if (index.size() == 0) throw EmptyDataset("evaluation split " + index.root_path + " holds no images");
  for (double r : scales) check_inference_scale(r);
  std::vector<EvalRow> rows;
  for (double r : scales) {
    std::vector<double> pm, sm, pb, sb;
    for (std::size_t i = 0; i < index.size(); ++i) {
      const Tensor<float> img = read_image(index.path(i));
      const int lr_h = static_cast<int>(std::floor(img.h() / r));
      const int lr_w = static_cast<int>(std::floor(img.w() / r));
      const int hr_h = scaled_dim(r, lr_h), hr_w = scaled_dim(r, lr_w);
      const Tensor<float> hr = crop(img, 0, 0, hr_h, hr_w);
      Tensor<float> lr = hr;
      if (lr_h != hr_h || lr_w != hr_w) {
        lr = resize_bicubic(hr, lr_h, lr_w);
        for (float& v : lr.vec()) v = std::clamp(v, 0.0f, 1.0f);
      }
      const Tensor<float> sr = super_resolve(model, lr, r, tile).sr;
      Tensor<float> bic = lr;
      if (lr_h != hr_h || lr_w != hr_w) {
        bic = resize_bicubic(lr, hr_h, hr_w);
        for (float& v : bic.vec()) v = std::clamp(v, 0.0f, 1.0f);
      }
      pm.push_back(psnr(sr, hr));
      sm.push_back(ssim(sr, hr));
      pb.push_back(psnr(bic, hr));
      sb.push_back(ssim(bic, hr));
    }
    EvalRow row;
    row.scale = r;
    row.n_images = static_cast<int>(index.size());
    row.psnr_model = finite_mean(pm);
    row.ssim_model = finite_mean(sm);
    row.psnr_bicubic = finite_mean(pb);
    row.ssim_bicubic = finite_mean(sb);
    rows.push_back(row);
  }
  return rows;
}

std::string eval_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "scale,n_images,psnr_model,ssim_model,psnr_bicubic,ssim_bicubic\n";
  for (const auto& r : rows) {
    os << r.scale << ',' << r.n_images << ',' << r.psnr_model << ',' << r.ssim_model << ',' << r.psnr_bicubic << ','
       << r.ssim_bicubic << '\n';
  }
  return os.str();
}

}  // namespace saldrn
