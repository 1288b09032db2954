#pragma once

// Reverse-mode differentiation over NCHW tensors.
//
// A Var is a shared handle to a graph node. Nodes only keep their parents when
// gradient recording is enabled and some input requires a gradient, so
// inference under NoGradGuard frees intermediates as soon as they go out of
// scope.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "saldrn/tensor.hpp"

namespace saldrn {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Gradient storage, zero-filled on first use.
  Tensor<T>& grad_buffer() {
    if (grad.shape() != value.shape() || grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Counts multiply-accumulates executed by conv2d while alive (innermost wins).
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;
  std::uint64_t total() const { return total_; }

 private:
  std::uint64_t total_ = 0;
  MacCounter* previous_;
  friend void count_macs(std::uint64_t);
};
void count_macs(std::uint64_t macs);

template <typename T>
Var<T> constant(Tensor<T> value);
template <typename T>
Var<T> variable(Tensor<T> value);

/// Seeds d(root)/d(root) = 1 and propagates to every reachable leaf.
template <typename T>
void backward(const Var<T>& root);

struct ConvSpec {
  int stride = 1;
  int pad = 0;
  int groups = 1;
};

inline int conv_out_dim(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

/// Weight shape (Cout, Cin/groups, k, k); bias may be null or hold Cout values.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, ConvSpec spec);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T>
Var<T> relu(const Var<T>& x);
template <typename T>
Var<T> sigmoid(const Var<T>& x);

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts);
template <typename T>
Var<T> slice_channels(const Var<T>& x, int start, int count);

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int factor);
/// Nearest-neighbour resize, source index floor(dst * in / out).
template <typename T>
Var<T> nearest_resize(const Var<T>& x, int out_h, int out_w);

template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int groups, T eps);

/// Per-channel population std + mean, N x C x 1 x 1.
template <typename T>
Var<T> channel_contrast(const Var<T>& x);
/// x[n, c, :, :] * a[n, c]
template <typename T>
Var<T> channel_scale(const Var<T>& x, const Var<T>& a);

/// Per-axis interpolation table: output coordinate i reads source indices
/// lo[i] and hi[i] with weight frac[i] on hi.
struct AxisTable {
  std::vector<int> lo;
  std::vector<int> hi;
  std::vector<double> frac;
  int size() const { return static_cast<int>(lo.size()); }
};

/// out(i, j) = (1-a)(1-b) z00 + (1-a) b z01 + a (1-b) z10 + a b z11, with
/// b the row fraction, a the column fraction and z_{col step, row step}.
template <typename T>
Var<T> bilinear_gather(const Var<T>& x, const AxisTable& rows, const AxisTable& cols);

/// sum_n weights[n] * mean |x_n - target_n|, scalar.
template <typename T>
Var<T> weighted_l1(const Var<T>& x, const Tensor<T>& target, std::span<const T> weights);
/// mean |x - target|, scalar.
template <typename T>
Var<T> mean_abs_diff(const Var<T>& x, const Tensor<T>& target);
/// mean binary cross-entropy of probabilities x against target in [0, 1].
template <typename T>
Var<T> binary_cross_entropy(const Var<T>& x, const Tensor<T>& target);
/// mean over all elements, scalar.
template <typename T>
Var<T> mean_all(const Var<T>& x);
/// sum_i coeffs[i] * scalars[i]
template <typename T>
Var<T> weighted_sum(std::span<const Var<T>> scalars, std::span<const T> coeffs);

template <typename T>
T scalar_value(const Var<T>& v) {
  return v->value[0];
}

}  // namespace saldrn
