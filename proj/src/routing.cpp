#include "saldrn/routing.hpp"

#include <algorithm>
#include <map>

namespace saldrn {

namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

std::vector<int> axis_offsets(int dim, int patch, int overlap) {
  const int stride = patch - overlap;
  if (stride <= 0) throw ContractViolation("patch overlap must be smaller than the patch size");
  std::vector<int> offs;
  if (dim <= patch) return {0};
  for (int o = 0;; o += stride) {
    if (o + patch >= dim) {
      offs.push_back(dim - patch);
      break;
    }
    offs.push_back(o);
  }
  return offs;
}

PatchGrid make_grid(int h, int w, int patch, int overlap) {
  if (patch < 1 || overlap < 0 || overlap >= patch) throw ContractViolation("invalid patch size/overlap");
  PatchGrid g;
  g.patch_size = patch;
  g.overlap = overlap;
  g.src_h = h;
  g.src_w = w;
  g.pad_h = std::max(0, patch - h);
  g.pad_w = std::max(0, patch - w);
  g.ys = axis_offsets(h + g.pad_h, patch, overlap);
  g.xs = axis_offsets(w + g.pad_w, patch, overlap);
  return g;
}

template <typename T>
Tensor<T> extract_patches(const Tensor<T>& image, const PatchGrid& g) {
  if (image.n() != 1 || image.h() != g.src_h || image.w() != g.src_w) {
    throw ContractViolation("image does not match the patch grid");
  }
  const int p = g.patch_size;
  Tensor<T> out({static_cast<int>(g.size()), image.c(), p, p});
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto [y0, x0] = g.offset(i);
    for (int c = 0; c < image.c(); ++c) {
      const T* src = image.plane(0, c);
      T* dst = out.plane(static_cast<int>(i), c);
      for (int y = 0; y < p; ++y) {
        const int sy = reflect101(y0 + y, g.src_h);
        for (int x = 0; x < p; ++x) dst[y * p + x] = src[static_cast<std::size_t>(sy) * g.src_w + reflect101(x0 + x, g.src_w)];
      }
    }
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, PatchGrid> decompose(const Tensor<T>& image, int patch, int overlap) {
  PatchGrid g = make_grid(image.h(), image.w(), patch, overlap);
  return {extract_patches(image, g), std::move(g)};
}

template <typename T>
Tensor<T> recombine(const Tensor<T>& patches, const PatchGrid& g) {
  const int p = g.patch_size;
  if (static_cast<std::size_t>(patches.n()) != g.size()) {
    throw ContractViolation("patch count does not match the grid");
  }
  if (patches.h() != p || patches.w() != p) throw ContractViolation("patch size does not match the grid");
  const int H = g.src_h + g.pad_h, W = g.src_w + g.pad_w;
  const int C = patches.c();
  std::vector<double> sum(static_cast<std::size_t>(C) * H * W, 0.0);
  std::vector<int> count(static_cast<std::size_t>(H) * W, 0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto [y0, x0] = g.offset(i);
    for (int y = 0; y < p; ++y)
      for (int x = 0; x < p; ++x) ++count[static_cast<std::size_t>(y0 + y) * W + x0 + x];
    for (int c = 0; c < C; ++c) {
      const T* src = patches.plane(static_cast<int>(i), c);
      double* dst = sum.data() + static_cast<std::size_t>(c) * H * W;
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x) dst[static_cast<std::size_t>(y0 + y) * W + x0 + x] += src[y * p + x];
    }
  }
  Tensor<T> out({1, C, g.src_h, g.src_w});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < g.src_h; ++y)
      for (int x = 0; x < g.src_w; ++x) {
        const std::size_t at = static_cast<std::size_t>(y) * W + x;
        out.at(0, c, y, x) = static_cast<T>(sum[static_cast<std::size_t>(c) * H * W + at] / count[at]);
      }
  return out;
}

int select_path(double s, std::span<const double> thresholds) {
  int k = 0;
  for (double t : thresholds) {
    if (s <= t) break;
    ++k;
  }
  return k;
}

template <typename T>
Cca<T>::Cca(ParamStore<T>& store, const std::string& name, int channels) {
  fc1_ = make_conv(store, name + ".fc1", channels, hidden(channels), 1);
  fc2_ = make_conv(store, name + ".fc2", hidden(channels), channels, 1);
}

template <typename T>
Var<T> Cca<T>::attention(const Var<T>& x) const {
  return sigmoid(fc2_(relu(fc1_(channel_contrast(x)))));
}

template <typename T>
std::size_t Cca<T>::param_count(int c) {
  return conv_params(c, hidden(c), 1) + conv_params(hidden(c), c, 1);
}

template <typename T>
Imdb<T>::Imdb(ParamStore<T>& store, const std::string& name, int channels) : c_(channels) {
  const int q = channels / 4;
  c1_ = make_conv(store, name + ".c1", channels, channels, 3);
  c2_ = make_conv(store, name + ".c2", 3 * q, channels, 3);
  c3_ = make_conv(store, name + ".c3", 3 * q, channels, 3);
  c4_ = make_conv(store, name + ".c4", 3 * q, q, 3);
  cca_ = Cca<T>(store, name + ".cca", channels);
  out_ = make_conv(store, name + ".out", channels, channels, 1);
}

template <typename T>
Var<T> Imdb<T>::operator()(const Var<T>& x) const {
  constexpr T slope = T(0.05);
  const int q = c_ / 4;
  Var<T> a = leaky_relu(c1_(x), slope);
  Var<T> r1 = slice_channels(a, 0, q);
  Var<T> b = leaky_relu(c2_(slice_channels(a, q, 3 * q)), slope);
  Var<T> r2 = slice_channels(b, 0, q);
  Var<T> c = leaky_relu(c3_(slice_channels(b, q, 3 * q)), slope);
  Var<T> r3 = slice_channels(c, 0, q);
  Var<T> r4 = c4_(slice_channels(c, q, 3 * q));
  const Var<T> parts[] = {r1, r2, r3, r4};
  return add(out_(cca_(concat_channels<T>(parts))), x);
}

template <typename T>
std::size_t Imdb<T>::param_count(int c) {
  const int q = c / 4;
  return conv_params(c, c, 3) + 2 * conv_params(3 * q, c, 3) + conv_params(3 * q, q, 3) + Cca<T>::param_count(c) +
         conv_params(c, c, 1);
}

template <typename T>
double Imdb<T>::macs_per_pixel(int c) {
  const double q = c / 4;
  return 9.0 * c * c + 2 * 9.0 * 3 * q * c + 9.0 * 3 * q * q + static_cast<double>(c) * c;
}

template <typename T>
Fru<T>::Fru(ParamStore<T>& store, const std::string& name, int channels, int depth) {
  entry_ = make_conv(store, name + ".entry", 2 * channels, channels, 1);
  for (int d = 0; d < depth; ++d) blocks_.emplace_back(store, name + ".imdb" + std::to_string(d), channels);
  fuse_ = make_conv(store, name + ".fuse", depth * channels, channels, 1);
  tail_ = make_conv(store, name + ".tail", channels, channels, 3);
}

template <typename T>
Var<T> Fru<T>::operator()(const Var<T>& x, const Var<T>& shallow) const {
  if (x->value.shape() != shallow->value.shape()) throw ContractViolation("FRU input and shallow features differ in shape");
  const Var<T> in[] = {x, shallow};
  Var<T> h0 = entry_(concat_channels<T>(in));
  std::vector<Var<T>> outs;
  Var<T> h = h0;
  for (const auto& block : blocks_) {
    h = block(h);
    outs.push_back(h);
  }
  return add(tail_(leaky_relu(fuse_(concat_channels<T>(outs)), T(0.05))), h0);
}

template <typename T>
std::size_t Fru<T>::param_count(int c, int depth) {
  return conv_params(2 * c, c, 1) + depth * Imdb<T>::param_count(c) + conv_params(depth * c, c, 1) +
         conv_params(c, c, 3);
}

template <typename T>
double Fru<T>::macs_per_pixel(int c, int depth) {
  // CCA statistics act on 1 x 1 maps; their MLP is counted per patch, not per pixel.
  return 2.0 * c * c + depth * Imdb<T>::macs_per_pixel(c) + static_cast<double>(depth) * c * c + 9.0 * c * c;
}

template <typename T>
RoutingNet<T>::RoutingNet(ParamStore<T>& store, const RoutingConfig& config) : config_(config) {
  shallow_ = make_conv(store, "shallow", 3, config.C, 3);
  if (config.share_params) {
    frus_.emplace_back(store, "fru", config.C, config.D);
  } else {
    for (int k = 0; k < config.K; ++k)
      frus_.emplace_back(store, "fru" + std::to_string(k), config.C, config.depth(k));
  }
}

template <typename T>
Var<T> RoutingNet<T>::shallow(const Var<T>& patch) const {
  if (patch->value.c() != 3) throw ContractViolation("routing expects 3-channel patches");
  return shallow_(patch);
}

template <typename T>
Var<T> RoutingNet<T>::fru(int k, const Var<T>& x, const Var<T>& shallow) const {
  return frus_[config_.share_params ? 0 : k](x, shallow);
}

template <typename T>
Var<T> RoutingNet<T>::run_path(const Var<T>& patch, int depth) const {
  Var<T> s = shallow(patch);
  Var<T> x = s;
  for (int k = 0; k < depth; ++k) x = fru(k, x, s);
  return x;
}

template <typename T>
std::vector<Var<T>> RoutingNet<T>::all_paths(const Var<T>& patch) const {
  Var<T> s = shallow(patch);
  std::vector<Var<T>> out{s};
  for (int k = 0; k < config_.K; ++k) out.push_back(fru(k, out.back(), s));
  return out;
}

template <typename T>
std::vector<Var<T>> RoutingNet<T>::drm_forward(const Var<T>& patch, const Tensor<T>& sal_patch, DrmMode mode) const {
  if (mode == DrmMode::AllPaths) return all_paths(patch);
  const int N = patch->value.n();
  if (sal_patch.n() != N) throw ContractViolation("one saliency patch per image patch");
  std::map<int, std::vector<int>> groups;
  const std::size_t plane = sal_patch.shape().sample();
  for (int n = 0; n < N; ++n) {
    double s = 0;
    for (std::size_t i = 0; i < plane; ++i) s += sal_patch[n * plane + i];
    groups[select_path(s / static_cast<double>(plane), config_.thresholds)].push_back(n);
  }
  const Shape ps = patch->value.shape();
  Tensor<T> out({N, config_.C, ps.h, ps.w});
  for (const auto& [depth, members] : groups) {
    Tensor<T> sub({static_cast<int>(members.size()), ps.c, ps.h, ps.w});
    for (std::size_t i = 0; i < members.size(); ++i)
      std::copy_n(patch->value.plane(members[i], 0), ps.sample(), sub.plane(static_cast<int>(i), 0));
    Var<T> f = run_path(constant(std::move(sub)), depth);
    for (std::size_t i = 0; i < members.size(); ++i)
      std::copy_n(f->value.plane(static_cast<int>(i), 0), out.shape().sample(), out.plane(members[i], 0));
  }
  return {constant(std::move(out))};
}

template <typename T>
std::size_t RoutingNet<T>::shallow_param_count(const RoutingConfig& c) {
  return conv_params(3, c.C, 3);
}

template <typename T>
std::size_t RoutingNet<T>::fru_param_count(const RoutingConfig& c) {
  if (c.share_params) return Fru<T>::param_count(c.C, c.D);
  std::size_t n = 0;
  for (int k = 0; k < c.K; ++k) n += Fru<T>::param_count(c.C, c.depth(k));
  return n;
}

template class Cca<float>;
template class Cca<double>;
template class Imdb<float>;
template class Imdb<double>;
template class Fru<float>;
template class Fru<double>;
template class RoutingNet<float>;
template class RoutingNet<double>;

#define SALDRN_INSTANTIATE(T)                                                                \
  template std::pair<Tensor<T>, PatchGrid> decompose<T>(const Tensor<T>&, int, int);         \
  template Tensor<T> extract_patches<T>(const Tensor<T>&, const PatchGrid&);                 \
  template Tensor<T> recombine<T>(const Tensor<T>&, const PatchGrid&);

SALDRN_INSTANTIATE(float)
SALDRN_INSTANTIATE(double)

}  // namespace saldrn
