#include "saldrn/lsum.hpp"

#include <algorithm>
#include <cmath>

namespace saldrn {

std::vector<double> default_frequencies() {
  std::vector<double> f(32);
  for (int i = 1; i <= 32; ++i) f[i - 1] = 2.0 * std::exp(static_cast<double>(i));
  return f;
}

std::vector<double> scale_encoding(double r, std::span<const double> freqs) {
  std::vector<double> ladder = freqs.empty() ? default_frequencies() : std::vector<double>(freqs.begin(), freqs.end());
  if (ladder.size() != 32) throw ConfigError("scale encoding needs 32 frequencies");
  std::vector<double> phi(64);
  for (int i = 0; i < 32; ++i) {
    phi[2 * i] = std::sin(ladder[i] * r);
    phi[2 * i + 1] = std::cos(ladder[i] * r);
  }
  return phi;
}

AxisTable axis_table(int out, int src) {
  AxisTable t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  for (int i = 0; i < out; ++i) {
    const double u = (i + 0.5) * src / out - 0.5;
    const double fl = std::floor(u);
    const int base = static_cast<int>(fl);
    t.lo[i] = std::clamp(base, 0, src - 1);
    t.hi[i] = std::clamp(base + 1, 0, src - 1);
    t.frac[i] = u - fl;
  }
  return t;
}

AxisTable slice_table(const AxisTable& table, int begin, int end, int shift) {
  AxisTable t;
  for (int i = begin; i < end; ++i) {
    t.lo.push_back(table.lo[i] - shift);
    t.hi.push_back(table.hi[i] - shift);
    t.frac.push_back(table.frac[i]);
  }
  return t;
}

void check_upsample_scale(double r) {
  if (!(r >= 1.0 && r <= 8.0)) throw InvalidScale("upsampling scale must lie in [1, 8]");
}

template <typename T>
Lsum<T>::Lsum(ParamStore<T>& store, int channels, const LsumConfig& config) : c_(channels), config_(config) {
  const int q = channels / 4;
  g1_ = make_conv(store, "lsum.cfeb.g1", 3 * q, 3 * channels, 3, 1, 3);
  g2_ = make_conv(store, "lsum.cfeb.g2", 2 * q, 2 * channels, 3, 1, 2);
  g3_ = make_conv(store, "lsum.cfeb.g3", q, channels, 3);
  const int hidden = channels / 2;
  const int fan_in = 64 + channels;
  sapa_w_scale_ = store.add("lsum.sapa.fc1.weight_scale", {hidden, 64, 1, 1}, fan_in);
  sapa_w_feat_ = store.add("lsum.sapa.fc1.weight_feat", {hidden, channels, 1, 1}, fan_in);
  sapa_b1_ = store.add("lsum.sapa.fc1.bias", {1, hidden, 1, 1});
  sapa_fc2_ = make_conv(store, "lsum.sapa.fc2", hidden, channels, 1);
  rec1_ = make_conv(store, "lsum.recon.conv1", channels, q, 3);
  rec2_ = make_conv(store, "lsum.recon.conv2", q, 3, 1);
}

template <typename T>
FeaturePyramid<T> Lsum<T>::cfeb(const Var<T>& x) const {
  if (x->value.c() != c_) throw ContractViolation("CFEB input channel count mismatch");
  const int q = c_ / 4;
  FeaturePyramid<T> p;
  p.levels[0] = slice_channels(x, 0, q);
  Var<T> l2 = pixel_shuffle(g1_(slice_channels(x, q, 3 * q)), 2);
  p.levels[1] = slice_channels(l2, 0, q);
  Var<T> l3 = pixel_shuffle(g2_(slice_channels(l2, q, 2 * q)), 2);
  p.levels[2] = slice_channels(l3, 0, q);
  p.levels[3] = pixel_shuffle(g3_(slice_channels(l3, q, q)), 2);
  return p;
}

template <typename T>
Var<T> Lsum<T>::sapa_alpha(const Var<T>& concat, double r) const {
  const std::vector<double> phi = scale_encoding(r, config_.freqs);
  Tensor<T> phi_t({1, 64, 1, 1});
  for (int i = 0; i < 64; ++i) phi_t[i] = static_cast<T>(phi[i]);
  // The scale half of the first layer is shared by every query: fold it into the bias.
  Var<T> bias = conv2d(constant(std::move(phi_t)), sapa_w_scale_, sapa_b1_, ConvSpec{});
  Var<T> hidden = leaky_relu(conv2d(concat, sapa_w_feat_, bias, ConvSpec{}), T(0.05));
  Var<T> alpha = sapa_fc2_(hidden);
  return config_.sigmoid_alpha ? sigmoid(alpha) : alpha;
}

template <typename T>
Var<T> Lsum<T>::sapa(const Var<T>& concat, double r) const {
  return mul(concat, sapa_alpha(concat, r));
}

template <typename T>
Var<T> Lsum<T>::query_features(const FeaturePyramid<T>& pyr, const std::array<AxisTable, 4>& rows,
                               const std::array<AxisTable, 4>& cols, double r) const {
  std::array<Var<T>, 4> h;
  for (int t = 0; t < 4; ++t) h[t] = bilinear_gather(pyr.levels[t], rows[t], cols[t]);
  return sapa(concat_channels<T>(h), r);
}

template <typename T>
std::array<Var<T>, 4> Lsum<T>::query_levels(const FeaturePyramid<T>& pyr, int lr_h, int lr_w, double r) const {
  const int hout = scaled_dim(r, lr_h), wout = scaled_dim(r, lr_w);
  std::array<Var<T>, 4> h;
  for (int t = 0; t < 4; ++t) {
    const int f = 1 << t;
    h[t] = bilinear_gather(pyr.levels[t], axis_table(hout, f * lr_h), axis_table(wout, f * lr_w));
  }
  return h;
}

template <typename T>
Var<T> Lsum<T>::upsample(const Var<T>& features, double r) const {
  check_upsample_scale(r);
  const int H = features->value.h(), W = features->value.w();
  const int hout = scaled_dim(r, H), wout = scaled_dim(r, W);
  std::array<AxisTable, 4> rows, cols;
  for (int t = 0; t < 4; ++t) {
    rows[t] = axis_table(hout, (1 << t) * H);
    cols[t] = axis_table(wout, (1 << t) * W);
  }
  return query_features(cfeb(features), rows, cols, r);
}

template <typename T>
Var<T> Lsum<T>::reconstruct(const Var<T>& hr_features) const {
  return rec2_(relu(rec1_(hr_features)));
}

template <typename T>
Tensor<T> Lsum<T>::forward_tiled(const Tensor<T>& features, double r, int tile) const {
  check_upsample_scale(r);
  if (features.n() != 1) throw ContractViolation("tiled upsampling expects a single feature map");
  if (tile < 1) throw ContractViolation("tile size must be positive");
  NoGradGuard no_grad;
  const int H = features.h(), W = features.w();
  const int hout = scaled_dim(r, H), wout = scaled_dim(r, W);
  std::array<AxisTable, 4> rows, cols;
  for (int t = 0; t < 4; ++t) {
    rows[t] = axis_table(hout, (1 << t) * H);
    cols[t] = axis_table(wout, (1 << t) * W);
  }
  // Cut borders invalidate up to ~2 LR pixels of deeper pyramid levels.
  constexpr int kMargin = 3;
  auto lr_range = [&](const std::array<AxisTable, 4>& tab, int b, int e, int dim) {
    int lo = dim, hi = 0;
    for (int t = 0; t < 4; ++t) {
      const int f = 1 << t;
      lo = std::min(lo, tab[t].lo[b] / f);
      hi = std::max(hi, tab[t].hi[e - 1] / f + 1);
    }
    return std::pair<int, int>(std::max(0, lo - kMargin), std::min(dim, hi + kMargin));
  };

  Tensor<T> out({1, 3, hout, wout});
  for (int i0 = 0; i0 < hout; i0 += tile) {
    const int i1 = std::min(hout, i0 + tile);
    const int ei0 = std::max(0, i0 - 1), ei1 = std::min(hout, i1 + 1);
    const auto [ly0, ly1] = lr_range(rows, ei0, ei1, H);
    for (int j0 = 0; j0 < wout; j0 += tile) {
      const int j1 = std::min(wout, j0 + tile);
      const int ej0 = std::max(0, j0 - 1), ej1 = std::min(wout, j1 + 1);
      const auto [lx0, lx1] = lr_range(cols, ej0, ej1, W);
      FeaturePyramid<T> pyr = cfeb(constant(crop(features, ly0, lx0, ly1 - ly0, lx1 - lx0)));
      std::array<AxisTable, 4> tr, tc;
      for (int t = 0; t < 4; ++t) {
        const int f = 1 << t;
        tr[t] = slice_table(rows[t], ei0, ei1, f * ly0);
        tc[t] = slice_table(cols[t], ej0, ej1, f * lx0);
      }
      Var<T> block = reconstruct(query_features(pyr, tr, tc, r));
      for (int c = 0; c < 3; ++c)
        for (int i = i0; i < i1; ++i)
          std::copy_n(block->value.plane(0, c) + static_cast<std::size_t>(i - ei0) * (ej1 - ej0) + (j0 - ej0), j1 - j0,
                      out.plane(0, c) + static_cast<std::size_t>(i) * wout + j0);
    }
  }
  return out;
}

template <typename T>
std::size_t Lsum<T>::cfeb_param_count(int c) {
  const int q = c / 4;
  return conv_params(3 * q, 3 * c, 3, 3) + conv_params(2 * q, 2 * c, 3, 2) + conv_params(q, c, 3);
}

template <typename T>
std::size_t Lsum<T>::sapa_param_count(int c) {
  return static_cast<std::size_t>(c / 2) * (64 + c) + c / 2 + conv_params(c / 2, c, 1);
}

template <typename T>
std::size_t Lsum<T>::reconstruct_param_count(int c) {
  return conv_params(c, c / 4, 3) + conv_params(c / 4, 3, 1);
}

template <typename T>
std::size_t Lsum<T>::param_count(int c) {
  return cfeb_param_count(c) + sapa_param_count(c) + reconstruct_param_count(c);
}

template <typename T>
double Lsum<T>::cfeb_macs(int c, int h, int w) {
  const double q = c / 4;
  const double hw = static_cast<double>(h) * w;
  return 3.0 * c * hw * q * 9 + 2.0 * c * 4 * hw * q * 9 + 1.0 * c * 16 * hw * q * 9;
}

template <typename T>
double Lsum<T>::sapa_macs(int c, int hout, int wout) {
  const double p = static_cast<double>(hout) * wout;
  return 64.0 * (c / 2) + p * (static_cast<double>(c) * (c / 2) * 2);
}

template <typename T>
double Lsum<T>::reconstruct_macs(int c, int hout, int wout) {
  const double p = static_cast<double>(hout) * wout;
  return p * (9.0 * c * (c / 4) + 3.0 * (c / 4));
}

template class Lsum<float>;
template class Lsum<double>;

}  // namespace saldrn
