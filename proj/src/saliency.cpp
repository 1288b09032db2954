#include "saldrn/saliency.hpp"

#include <vector>

namespace saldrn {

template <typename T>
SaliencyNet<T>::SaliencyNet(ParamStore<T>& store, const DetectorConfig& config, const std::string& prefix)
    : config_(config) {
  int cin = 3;
  for (int s = 0; s < 3; ++s) {
    const int c = config.widths[s];
    const std::string p = prefix + ".enc" + std::to_string(s + 1);
    Stage& st = stages_[s];
    st.down = make_conv(store, p + ".down", cin, c, 3, 2);
    st.conv1 = make_conv(store, p + ".conv1", c, c, 3);
    st.conv2 = make_conv(store, p + ".conv2", c, c, 3);
    st.gn1_gamma = store.add(p + ".gn1.gamma", {1, c, 1, 1});
    st.gn1_beta = store.add(p + ".gn1.beta", {1, c, 1, 1});
    st.gn2_gamma = store.add(p + ".gn2.gamma", {1, c, 1, 1});
    st.gn2_beta = store.add(p + ".gn2.beta", {1, c, 1, 1});
    cin = c;
  }
  const int cat = config.widths[0] + config.widths[1] + config.widths[2];
  fuse_ = make_conv(store, prefix + ".dec.fuse", cat, config.m, 1);
  head_ = make_conv(store, prefix + ".dec.head", config.m, 1, 3);
}

template <typename T>
std::array<Var<T>, 3> SaliencyNet<T>::encode(const Var<T>& image) const {
  const Shape s = image->value.shape();
  if (s.c != 3) throw ContractViolation("saliency detector expects 3-channel input");
  if (s.h < 8 || s.w < 8) throw InputTooSmall("saliency detector needs H, W >= 8");
  const T slope = static_cast<T>(config_.slope);
  const T eps = static_cast<T>(1e-5);
  std::array<Var<T>, 3> feats;
  Var<T> x = image;
  for (int i = 0; i < 3; ++i) {
    const Stage& st = stages_[i];
    Var<T> d = st.down(x);
    Var<T> y = group_norm(leaky_relu(st.conv1(d), slope), st.gn1_gamma, st.gn1_beta, config_.groups, eps);
    y = group_norm(leaky_relu(st.conv2(y), slope), st.gn2_gamma, st.gn2_beta, config_.groups, eps);
    x = add(d, y);
    feats[i] = x;
  }
  return feats;
}

template <typename T>
Var<T> SaliencyNet<T>::forward(const Var<T>& image) const {
  auto feats = encode(image);
  const int H = image->value.h(), W = image->value.w();
  std::vector<Var<T>> up;
  for (const auto& f : feats) up.push_back(nearest_resize(f, H, W));
  Var<T> cat = concat_channels<T>(up);
  return sigmoid(head_(fuse_(cat)));
}

template <typename T>
std::size_t SaliencyNet<T>::param_count(const DetectorConfig& c) {
  std::size_t n = 0;
  int cin = 3;
  for (int w : c.widths) {
    n += conv_params(cin, w, 3) + 2 * conv_params(w, w, 3) + 4 * static_cast<std::size_t>(w);
    cin = w;
  }
  n += conv_params(c.widths[0] + c.widths[1] + c.widths[2], c.m, 1) + conv_params(c.m, 1, 3);
  return n;
}

template <typename T>
double SaliencyNet<T>::macs(const DetectorConfig& c, int h, int w) {
  const int cat = c.widths[0] + c.widths[1] + c.widths[2];
  double total = static_cast<double>(h) * w * (cat * c.m + c.m * 9.0);
  int cin = 3;
  for (int width : c.widths) {
    h = (h + 1) / 2;
    w = (w + 1) / 2;
    total += static_cast<double>(h) * w * width * (cin * 9.0 + 2.0 * width * 9.0);
    cin = width;
  }
  return total;
}

template class SaliencyNet<float>;
template class SaliencyNet<double>;

}  // namespace saldrn
