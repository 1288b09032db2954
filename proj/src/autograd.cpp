#include "saldrn/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <unordered_set>

#include "saldrn/gemm.hpp"

namespace saldrn {
namespace {

thread_local bool g_grad_enabled = true;
thread_local MacCounter* g_counter = nullptr;

using std::size_t;

template <typename T>
bool needs_graph(std::initializer_list<const Var<T>*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Var<T>* v : inputs)
    if (*v && (*v)->requires_grad) return true;
  return false;
}

template <typename T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> parents, bool track,
                 std::function<void(Node<T>&)> fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return node;
}

template <typename T>
void check_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a->value.shape() != b->value.shape()) {
    throw ContractViolation(std::string(op) + ": shape mismatch");
  }
}

/// Output columns [lo, hi) read input columns inside [0, W).
inline void valid_cols(int W, int Wo, int stride, int off, int& lo, int& hi) {
  lo = 0;
  while (lo < Wo && lo * stride + off < 0) ++lo;
  hi = Wo;
  while (hi > lo && (hi - 1) * stride + off >= W) --hi;
}

template <typename T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* col) {
  const size_t P = static_cast<size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + (static_cast<size_t>(c) * k * k + ky * k + kx) * P;
        const T* src = x + static_cast<size_t>(c) * H * W;
        int lo, hi;
        valid_cols(W, Wo, stride, kx - pad, lo, hi);
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* row = dst + static_cast<size_t>(oy) * Wo;
          if (iy < 0 || iy >= H) {
            std::fill_n(row, Wo, T(0));
            continue;
          }
          const T* srow = src + static_cast<size_t>(iy) * W + kx - pad;
          std::fill_n(row, lo, T(0));
          if (stride == 1) {
            std::copy(srow + lo, srow + hi, row + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) row[ox] = srow[ox * stride];
          }
          std::fill(row + std::max(lo, hi), row + Wo, T(0));
        }
      }
}

template <typename T>
void col2im_add(const T* col, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* x) {
  const size_t P = static_cast<size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + (static_cast<size_t>(c) * k * k + ky * k + kx) * P;
        T* dst = x + static_cast<size_t>(c) * H * W;
        int lo, hi;
        valid_cols(W, Wo, stride, kx - pad, lo, hi);
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          const T* row = src + static_cast<size_t>(oy) * Wo;
          T* drow = dst + static_cast<size_t>(iy) * W + kx - pad;
          if (stride == 1) {
            for (int ox = lo; ox < hi; ++ox) drow[ox] += row[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) drow[ox * stride] += row[ox];
          }
        }
      }
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

MacCounter::MacCounter() : previous_(g_counter) { g_counter = this; }
MacCounter::~MacCounter() { g_counter = previous_; }

void count_macs(std::uint64_t macs) {
  if (g_counter) g_counter->total_ += macs;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return node;
}

template <typename T>
Var<T> variable(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = true;
  return node;
}

template <typename T>
void backward(const Var<T>& root) {
  if (!root->requires_grad) return;
  // Iterative post-order DFS gives a topological order (parents first).
  // `order` owns the nodes so clearing a child's parent list cannot free a
  // node that is still waiting for its gradient.
  std::vector<Var<T>> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Var<T>, size_t>> stack{{root, 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Var<T> p = node->parents[next++];
      if (p->requires_grad && seen.insert(p.get()).second) stack.emplace_back(std::move(p), 0);
    } else {
      order.push_back(std::move(node));
      stack.pop_back();
    }
  }
  root->grad_buffer().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = it->get();
    if (node->backward_fn) {
      if (!node->grad.empty()) node->backward_fn(*node);
      // Interior nodes are single use; releasing them frees activations early.
      node->backward_fn = nullptr;
      node->parents.clear();
      node->grad = Tensor<T>();
    }
    it->reset();
  }
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, ConvSpec spec) {
  const Shape xs = x->value.shape();
  const Shape ws = weight->value.shape();
  const int G = spec.groups;
  const int k = ws.h;
  if (ws.h != ws.w || G <= 0 || xs.c % G != 0 || ws.n % G != 0 || ws.c * G != xs.c) {
    throw ContractViolation("conv2d: incompatible input/weight shapes");
  }
  if (bias && static_cast<int>(bias->value.numel()) != ws.n) {
    throw ContractViolation("conv2d: bias size does not match output channels");
  }
  const int Ho = conv_out_dim(xs.h, k, spec.stride, spec.pad);
  const int Wo = conv_out_dim(xs.w, k, spec.stride, spec.pad);
  if (Ho <= 0 || Wo <= 0) throw ContractViolation("conv2d: empty output");
  const int cin_g = xs.c / G;
  const int cout_g = ws.n / G;
  const int Kg = cin_g * k * k;
  const int P = Ho * Wo;
  const bool direct = k == 1 && spec.stride == 1 && spec.pad == 0;

  Tensor<T> out({xs.n, ws.n, Ho, Wo});
  std::vector<T> col(direct ? 0 : static_cast<size_t>(Kg) * P);
  for (int n = 0; n < xs.n; ++n) {
    for (int g = 0; g < G; ++g) {
      const T* xin = x->value.plane(n, g * cin_g);
      const T* cm = xin;
      if (!direct) {
        im2col(xin, cin_g, xs.h, xs.w, k, spec.stride, spec.pad, Ho, Wo, col.data());
        cm = col.data();
      }
      const T* wg = weight->value.data() + static_cast<size_t>(g) * cout_g * Kg;
      gemm_nn(cout_g, P, Kg, wg, Kg, cm, P, out.plane(n, g * cout_g), P, false);
    }
    if (bias) {
      for (int c = 0; c < ws.n; ++c) {
        const T b = bias->value[c];
        T* o = out.plane(n, c);
        for (int i = 0; i < P; ++i) o[i] += b;
      }
    }
  }
  count_macs(static_cast<std::uint64_t>(xs.n) * ws.n * P * Kg);

  const bool track = needs_graph<T>({&x, &weight, &bias});
  std::vector<Var<T>> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_node<T>(std::move(out), std::move(parents), track, [=](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    Node<T>& wn = *self.parents[1];
    Node<T>* bn = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    const Tensor<T>& dy = self.grad;
    std::vector<T> buf(direct ? 0 : static_cast<size_t>(Kg) * P);
    std::vector<T> wt;
    if (xn.requires_grad) {
      // W^T per group, Kg x cout_g.
      wt.resize(static_cast<size_t>(G) * Kg * cout_g);
      for (int g = 0; g < G; ++g)
        for (int o = 0; o < cout_g; ++o)
          for (int q = 0; q < Kg; ++q)
            wt[(static_cast<size_t>(g) * Kg + q) * cout_g + o] =
                wn.value[(static_cast<size_t>(g) * cout_g + o) * Kg + q];
    }
    for (int n = 0; n < xs.n; ++n) {
      for (int g = 0; g < G; ++g) {
        const T* dyg = dy.plane(n, g * cout_g);
        if (xn.requires_grad) {
          T* dx = xn.grad_buffer().plane(n, g * cin_g);
          const T* wtg = wt.data() + static_cast<size_t>(g) * Kg * cout_g;
          if (direct) {
            gemm_nn(Kg, P, cout_g, wtg, cout_g, dyg, P, dx, P, true);
          } else {
            gemm_nn(Kg, P, cout_g, wtg, cout_g, dyg, P, buf.data(), P, false);
            col2im_add(buf.data(), cin_g, xs.h, xs.w, k, spec.stride, spec.pad, Ho, Wo, dx);
          }
        }
        if (wn.requires_grad) {
          const T* xin = xn.value.plane(n, g * cin_g);
          const T* cm = xin;
          if (!direct) {
            im2col(xin, cin_g, xs.h, xs.w, k, spec.stride, spec.pad, Ho, Wo, buf.data());
            cm = buf.data();
          }
          T* dw = wn.grad_buffer().data() + static_cast<size_t>(g) * cout_g * Kg;
          gemm_nt(cout_g, Kg, P, dyg, P, cm, P, dw, Kg, true);
        }
      }
      if (bn && bn->requires_grad) {
        T* db = bn->grad_buffer().data();
        for (int c = 0; c < ws.n; ++c) {
          const T* d = dy.plane(n, c);
          T s = 0;
          for (int i = 0; i < P; ++i) s += d[i];
          db[c] += s;
        }
      }
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same(a, b, "add");
  Tensor<T> out = a->value;
  for (size_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return make_node<T>(std::move(out), {a, b}, needs_graph<T>({&a, &b}), [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      T* g = p->grad_buffer().data();
      for (size_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same(a, b, "mul");
  Tensor<T> out = a->value;
  for (size_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return make_node<T>(std::move(out), {a, b}, needs_graph<T>({&a, &b}), [](Node<T>& self) {
    Node<T>& an = *self.parents[0];
    Node<T>& bn = *self.parents[1];
    if (an.requires_grad) {
      T* g = an.grad_buffer().data();
      for (size_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i] * bn.value[i];
    }
    if (bn.requires_grad) {
      T* g = bn.grad_buffer().data();
      for (size_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i] * an.value[i];
    }
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> out = x->value;
  for (T& v : out.vec()) v = v >= T(0) ? v : v * slope;
  return make_node<T>(std::move(out), {x}, needs_graph<T>({&x}), [slope](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    T* g = xn.grad_buffer().data();
    for (size_t i = 0; i < self.grad.numel(); ++i)
      g[i] += xn.value[i] >= T(0) ? self.grad[i] : self.grad[i] * slope;
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x->value;
  for (T& v : out.vec()) v = std::max(v, T(0));
  return make_node<T>(std::move(out), {x}, needs_graph<T>({&x}), [](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    T* g = xn.grad_buffer().data();
    for (size_t i = 0; i < self.grad.numel(); ++i)
      if (xn.value[i] > T(0)) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out = x->value;
  for (T& v : out.vec()) v = T(1) / (T(1) + std::exp(-v));
  return make_node<T>(std::move(out), {x}, needs_graph<T>({&x}), [](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer().data();
    for (size_t i = 0; i < self.grad.numel(); ++i) {
      const T s = self.value[i];
      g[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractViolation("concat of zero tensors");
  Shape s = parts.front()->value.shape();
  s.c = 0;
  bool track = false;
  for (const auto& p : parts) {
    const Shape& ps = p->value.shape();
    if (ps.n != s.n || ps.h != s.h || ps.w != s.w) throw ContractViolation("concat: shape mismatch");
    s.c += ps.c;
    track = track || needs_graph<T>({&p});
  }
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    int c0 = 0;
    for (const auto& p : parts) {
      const size_t len = p->value.shape().sample();
      std::copy_n(p->value.plane(n, 0), len, out.plane(n, c0));
      c0 += p->value.c();
    }
  }
  std::vector<Var<T>> parents(parts.begin(), parts.end());
  return make_node<T>(std::move(out), std::move(parents), track, [](Node<T>& self) {
    for (int n = 0; n < self.value.n(); ++n) {
      int c0 = 0;
      for (auto& p : self.parents) {
        const size_t len = p->value.shape().sample();
        if (p->requires_grad) {
          T* g = p->grad_buffer().plane(n, 0);
          const T* src = self.grad.plane(n, c0);
          for (size_t i = 0; i < len; ++i) g[i] += src[i];
        }
        c0 += p->value.c();
      }
    }
  });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, int start, int count) {
  const Shape xs = x->value.shape();
  if (start < 0 || count <= 0 || start + count > xs.c) throw ContractViolation("slice_channels: out of range");
  Tensor<T> out({xs.n, count, xs.h, xs.w});
  const size_t len = static_cast<size_t>(count) * xs.h * xs.w;
  for (int n = 0; n < xs.n; ++n) std::copy_n(x->value.plane(n, start), len, out.plane(n, 0));
  return make_node<T>(std::move(out), {x}, needs_graph<T>({&x}), [start, len](Node<T>& self) {
    Tensor<T>& g = self.parents[0]->grad_buffer();
    for (int n = 0; n < self.value.n(); ++n) {
      T* dst = g.plane(n, start);
      const T* src = self.grad.plane(n, 0);
      for (size_t i = 0; i < len; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r) {
  const Shape xs = x->value.shape();
  if (r <= 0 || xs.c % (r * r) != 0) throw ContractViolation("pixel_shuffle: channels not divisible");
  const int co = xs.c / (r * r);
  Tensor<T> out({xs.n, co, xs.h * r, xs.w * r});
  auto index = [=](int n, int c, int i, int j, int y, int xx) {
    // (input offset, output offset)
    const size_t in = ((static_cast<size_t>(n) * xs.c + c * r * r + i * r + j) * xs.h + y) * xs.w + xx;
    const size_t o = ((static_cast<size_t>(n) * co + c) * (xs.h * r) + (y * r + i)) * (xs.w * r) + xx * r + j;
    return std::pair<size_t, size_t>(in, o);
  };
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < co; ++c)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j)
          for (int y = 0; y < xs.h; ++y)
            for (int xx = 0; xx < xs.w; ++xx) {
              auto [in, o] = index(n, c, i, j, y, xx);
              out[o] = x->value[in];
            }
  return make_node<T>(std::move(out), {x}, needs_graph<T>({&x}), [=](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer().data();
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < co; ++c)
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < r; ++j)
            for (int y = 0; y < xs.h; ++y)
              for (int xx = 0; xx < xs.w; ++xx) {
                auto [in, o] = index(n, c, i, j, y, xx);
                g[in] += self.grad[o];
              }
  });
}

template <typename T>
Var<T> nearest_resize(const Var<T>& x, int out_h, int out_w) {
  const Shape xs = x->value.shape();
  if (out_h <= 0 || out_w <= 0) throw ContractViolation("nearest_resize: empty output");
  std::vector<int> ys(out_h), xsrc(out_w);
  for (int y = 0; y < out_h; ++y) ys[y] = static_cast<int>(static_cast<long long>(y) * xs.h / out_h);
  for (int xx = 0; xx < out_w; ++xx) xsrc[xx] = static_cast<int>(static_cast<long long>(xx) * xs.w / out_w);
  Tensor<T> out({xs.n, xs.c, out_h, out_w});
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const T* src = x->value.plane(n, c);
      T* dst = out.plane(n, c);
      for (int y = 0; y < out_h; ++y)
        for (int xx = 0; xx < out_w; ++xx) dst[y * out_w + xx] = src[ys[y] * xs.w + xsrc[xx]];
    }
  return make_node<T>(std::move(out), {x}, needs_graph<T>({&x}), [=](Node<T>& self) {
    Tensor<T>& g = self.parents[0]->grad_buffer();
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        T* dst = g.plane(n, c);
        const T* src = self.grad.plane(n, c);
        for (int y = 0; y < out_h; ++y)
          for (int xx = 0; xx < out_w; ++xx) dst[ys[y] * xs.w + xsrc[xx]] += src[y * out_w + xx];
      }
  });
}

template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int groups, T eps) {
  const Shape xs = x->value.shape();
  if (groups <= 0 || xs.c % groups != 0) throw ContractViolation("group_norm: channels not divisible");
  if (static_cast<int>(gamma->value.numel()) != xs.c || static_cast<int>(beta->value.numel()) != xs.c) {
    throw ContractViolation("group_norm: affine size mismatch");
  }
  const int cg = xs.c / groups;
  const size_t M = static_cast<size_t>(cg) * xs.h * xs.w;
  const size_t hw = xs.plane();
  Tensor<T> xhat(xs);
  std::vector<T> inv_std(static_cast<size_t>(xs.n) * groups);
  Tensor<T> out(xs);
  for (int n = 0; n < xs.n; ++n)
    for (int g = 0; g < groups; ++g) {
      const T* src = x->value.plane(n, g * cg);
      double mean = 0;
      for (size_t i = 0; i < M; ++i) mean += src[i];
      mean /= static_cast<double>(M);
      double var = 0;
      for (size_t i = 0; i < M; ++i) var += (src[i] - mean) * (src[i] - mean);
      var /= static_cast<double>(M);
      const T is = static_cast<T>(1.0 / std::sqrt(var + eps));
      inv_std[static_cast<size_t>(n) * groups + g] = is;
      T* xh = xhat.plane(n, g * cg);
      T* o = out.plane(n, g * cg);
      for (size_t i = 0; i < M; ++i) {
        const int c = g * cg + static_cast<int>(i / hw);
        xh[i] = (src[i] - static_cast<T>(mean)) * is;
        o[i] = xh[i] * gamma->value[c] + beta->value[c];
      }
    }
  return make_node<T>(std::move(out), {x, gamma, beta}, needs_graph<T>({&x, &gamma, &beta}),
                      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    Node<T>& gn = *self.parents[1];
    Node<T>& bn = *self.parents[2];
    for (int n = 0; n < xs.n; ++n)
      for (int g = 0; g < groups; ++g) {
        const T* dy = self.grad.plane(n, g * cg);
        const T* xh = xhat.plane(n, g * cg);
        if (gn.requires_grad || bn.requires_grad) {
          for (int cc = 0; cc < cg; ++cc) {
            const int c = g * cg + cc;
            T sg = 0, sb = 0;
            for (size_t i = 0; i < hw; ++i) {
              sg += dy[cc * hw + i] * xh[cc * hw + i];
              sb += dy[cc * hw + i];
            }
            if (gn.requires_grad) gn.grad_buffer()[c] += sg;
            if (bn.requires_grad) bn.grad_buffer()[c] += sb;
          }
        }
        if (xn.requires_grad) {
          T s1 = 0, s2 = 0;
          for (size_t i = 0; i < M; ++i) {
            const T d = dy[i] * gn.value[g * cg + static_cast<int>(i / hw)];
            s1 += d;
            s2 += d * xh[i];
          }
          const T is = inv_std[static_cast<size_t>(n) * groups + g];
          const T inv_m = T(1) / static_cast<T>(M);
          T* dx = xn.grad_buffer().plane(n, g * cg);
          for (size_t i = 0; i < M; ++i) {
            const T d = dy[i] * gn.value[g * cg + static_cast<int>(i / hw)];
            dx[i] += is * (d - inv_m * s1 - xh[i] * inv_m * s2);
          }
        }
      }
  });
}

template <typename T>
Var<T> channel_contrast(const Var<T>& x) {
  const Shape xs = x->value.shape();
  const size_t M = xs.plane();
  Tensor<T> out({xs.n, xs.c, 1, 1});
  std::vector<T> means(static_cast<size_t>(xs.n) * xs.c), stds(means.size());
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const T* src = x->value.plane(n, c);
      double mean = 0;
      for (size_t i = 0; i < M; ++i) mean += src[i];
      mean /= static_cast<double>(M);
      double var = 0;
      for (size_t i = 0; i < M; ++i) var += (src[i] - mean) * (src[i] - mean);
      var /= static_cast<double>(M);
      const size_t idx = static_cast<size_t>(n) * xs.c + c;
      means[idx] = static_cast<T>(mean);
      stds[idx] = static_cast<T>(std::sqrt(var));
      out[idx] = static_cast<T>(std::sqrt(var) + mean);
    }
  return make_node<T>(std::move(out), {x}, needs_graph<T>({&x}),
                      [=, means = std::move(means), stds = std::move(stds)](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    const T inv_m = T(1) / static_cast<T>(M);
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        const size_t idx = static_cast<size_t>(n) * xs.c + c;
        const T dz = self.grad[idx];
        const T* src = xn.value.plane(n, c);
        T* dx = xn.grad_buffer().plane(n, c);
        const T sd = stds[idx];
        for (size_t i = 0; i < M; ++i) {
          T d = inv_m;
          if (sd > T(0)) d += (src[i] - means[idx]) * inv_m / sd;
          dx[i] += dz * d;
        }
      }
  });
}

template <typename T>
Var<T> channel_scale(const Var<T>& x, const Var<T>& a) {
  const Shape xs = x->value.shape();
  if (a->value.n() != xs.n || a->value.c() != xs.c || a->value.shape().plane() != 1) {
    throw ContractViolation("channel_scale: scale shape mismatch");
  }
  const size_t M = xs.plane();
  Tensor<T> out(xs);
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const T s = a->value[static_cast<size_t>(n) * xs.c + c];
      const T* src = x->value.plane(n, c);
      T* dst = out.plane(n, c);
      for (size_t i = 0; i < M; ++i) dst[i] = src[i] * s;
    }
  return make_node<T>(std::move(out), {x, a}, needs_graph<T>({&x, &a}), [=](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    Node<T>& an = *self.parents[1];
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        const size_t idx = static_cast<size_t>(n) * xs.c + c;
        const T* dy = self.grad.plane(n, c);
        if (xn.requires_grad) {
          T* dx = xn.grad_buffer().plane(n, c);
          for (size_t i = 0; i < M; ++i) dx[i] += dy[i] * an.value[idx];
        }
        if (an.requires_grad) {
          const T* src = xn.value.plane(n, c);
          T s = 0;
          for (size_t i = 0; i < M; ++i) s += dy[i] * src[i];
          an.grad_buffer()[idx] += s;
        }
      }
  });
}

template <typename T>
Var<T> bilinear_gather(const Var<T>& x, const AxisTable& rows, const AxisTable& cols) {
  const Shape xs = x->value.shape();
  const int Ho = rows.size();
  const int Wo = cols.size();
  for (int i = 0; i < Ho; ++i)
    if (rows.lo[i] < 0 || rows.hi[i] >= xs.h || rows.lo[i] >= xs.h || rows.hi[i] < 0)
      throw ContractViolation("bilinear_gather: row index out of range");
  for (int j = 0; j < Wo; ++j)
    if (cols.lo[j] < 0 || cols.hi[j] >= xs.w || cols.lo[j] >= xs.w || cols.hi[j] < 0)
      throw ContractViolation("bilinear_gather: column index out of range");
  std::vector<T> fb(Ho), fa(Wo);
  for (int i = 0; i < Ho; ++i) fb[i] = static_cast<T>(rows.frac[i]);
  for (int j = 0; j < Wo; ++j) fa[j] = static_cast<T>(cols.frac[j]);
  Tensor<T> out({xs.n, xs.c, Ho, Wo});
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const T* z = x->value.plane(n, c);
      T* o = out.plane(n, c);
      for (int i = 0; i < Ho; ++i) {
        const T b = fb[i];
        const T* r0 = z + static_cast<size_t>(rows.lo[i]) * xs.w;
        const T* r1 = z + static_cast<size_t>(rows.hi[i]) * xs.w;
        for (int j = 0; j < Wo; ++j) {
          const T a = fa[j];
          const int c0 = cols.lo[j], c1 = cols.hi[j];
          o[static_cast<size_t>(i) * Wo + j] = (T(1) - a) * (T(1) - b) * r0[c0] + (T(1) - a) * b * r1[c0] +
                                               a * (T(1) - b) * r0[c1] + a * b * r1[c1];
        }
      }
    }
  return make_node<T>(std::move(out), {x}, needs_graph<T>({&x}), [=](Node<T>& self) {
    Tensor<T>& g = self.parents[0]->grad_buffer();
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        T* dz = g.plane(n, c);
        const T* dy = self.grad.plane(n, c);
        for (int i = 0; i < Ho; ++i) {
          const T b = fb[i];
          T* r0 = dz + static_cast<size_t>(rows.lo[i]) * xs.w;
          T* r1 = dz + static_cast<size_t>(rows.hi[i]) * xs.w;
          for (int j = 0; j < Wo; ++j) {
            const T a = fa[j];
            const T d = dy[static_cast<size_t>(i) * Wo + j];
            const int c0 = cols.lo[j], c1 = cols.hi[j];
            r0[c0] += (T(1) - a) * (T(1) - b) * d;
            r1[c0] += (T(1) - a) * b * d;
            r0[c1] += a * (T(1) - b) * d;
            r1[c1] += a * b * d;
          }
        }
      }
  });
}

template <typename T>
Var<T> weighted_l1(const Var<T>& x, const Tensor<T>& target, std::span<const T> weights) {
  const Shape xs = x->value.shape();
  if (target.shape() != xs) throw ContractViolation("weighted_l1: target shape mismatch");
  if (static_cast<int>(weights.size()) != xs.n) throw ContractViolation("weighted_l1: one weight per sample");
  const size_t S = xs.sample();
  double total = 0;
  for (int n = 0; n < xs.n; ++n) {
    double s = 0;
    const size_t base = static_cast<size_t>(n) * S;
    for (size_t i = 0; i < S; ++i) s += std::abs(static_cast<double>(x->value[base + i]) - target[base + i]);
    total += weights[n] * s / static_cast<double>(S);
  }
  std::vector<T> w(weights.begin(), weights.end());
  return make_node<T>(Tensor<T>({1, 1, 1, 1}, static_cast<T>(total)), {x}, needs_graph<T>({&x}),
                      [=, w = std::move(w)](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    T* g = xn.grad_buffer().data();
    const T up = self.grad[0];
    for (int n = 0; n < xs.n; ++n) {
      const T k = up * w[n] / static_cast<T>(S);
      const size_t base = static_cast<size_t>(n) * S;
      for (size_t i = 0; i < S; ++i) {
        const T d = xn.value[base + i] - target[base + i];
        if (d > T(0)) g[base + i] += k;
        else if (d < T(0)) g[base + i] -= k;
      }
    }
  });
}

template <typename T>
Var<T> mean_abs_diff(const Var<T>& x, const Tensor<T>& target) {
  std::vector<T> w(static_cast<size_t>(x->value.n()), T(1) / static_cast<T>(x->value.n()));
  return weighted_l1<T>(x, target, w);
}

template <typename T>
Var<T> binary_cross_entropy(const Var<T>& x, const Tensor<T>& target) {
  if (target.shape() != x->value.shape()) throw ContractViolation("binary_cross_entropy: target shape mismatch");
  constexpr double kEps = 1e-7;
  const size_t M = x->value.numel();
  double total = 0;
  for (size_t i = 0; i < M; ++i) {
    const double p = std::clamp(static_cast<double>(x->value[i]), kEps, 1.0 - kEps);
    const double t = target[i];
    total -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return make_node<T>(Tensor<T>({1, 1, 1, 1}, static_cast<T>(total / static_cast<double>(M))), {x},
                      needs_graph<T>({&x}), [=](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    T* g = xn.grad_buffer().data();
    const double k = static_cast<double>(self.grad[0]) / static_cast<double>(M);
    for (size_t i = 0; i < M; ++i) {
      const double raw = xn.value[i];
      if (raw < kEps || raw > 1.0 - kEps) continue;
      const double t = target[i];
      g[i] += static_cast<T>(k * (raw - t) / (raw * (1.0 - raw)));
    }
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
  const size_t M = x->value.numel();
  double s = 0;
  for (size_t i = 0; i < M; ++i) s += x->value[i];
  return make_node<T>(Tensor<T>({1, 1, 1, 1}, static_cast<T>(s / static_cast<double>(M))), {x},
                      needs_graph<T>({&x}), [M](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer().data();
    const T k = self.grad[0] / static_cast<T>(M);
    for (size_t i = 0; i < M; ++i) g[i] += k;
  });
}

template <typename T>
Var<T> weighted_sum(std::span<const Var<T>> scalars, std::span<const T> coeffs) {
  if (scalars.size() != coeffs.size() || scalars.empty()) {
    throw ContractViolation("weighted_sum: one coefficient per term");
  }
  T total = 0;
  bool track = false;
  for (size_t i = 0; i < scalars.size(); ++i) {
    total += coeffs[i] * scalars[i]->value[0];
    track = track || needs_graph<T>({&scalars[i]});
  }
  std::vector<T> k(coeffs.begin(), coeffs.end());
  std::vector<Var<T>> parents(scalars.begin(), scalars.end());
  return make_node<T>(Tensor<T>({1, 1, 1, 1}, total), std::move(parents), track,
                      [k = std::move(k)](Node<T>& self) {
    for (size_t i = 0; i < self.parents.size(); ++i)
      if (self.parents[i]->requires_grad) self.parents[i]->grad_buffer()[0] += k[i] * self.grad[0];
  });
}

#define SALDRN_INSTANTIATE(T)                                                                    \
  template Var<T> constant<T>(Tensor<T>);                                                        \
  template Var<T> variable<T>(Tensor<T>);                                                        \
  template void backward<T>(const Var<T>&);                                                      \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, ConvSpec);              \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                               \
  template Var<T> relu<T>(const Var<T>&);                                                        \
  template Var<T> sigmoid<T>(const Var<T>&);                                                     \
  template Var<T> concat_channels<T>(std::span<const Var<T>>);                                   \
  template Var<T> slice_channels<T>(const Var<T>&, int, int);                                    \
  template Var<T> pixel_shuffle<T>(const Var<T>&, int);                                          \
  template Var<T> nearest_resize<T>(const Var<T>&, int, int);                                    \
  template Var<T> group_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, T);            \
  template Var<T> channel_contrast<T>(const Var<T>&);                                            \
  template Var<T> channel_scale<T>(const Var<T>&, const Var<T>&);                                \
  template Var<T> bilinear_gather<T>(const Var<T>&, const AxisTable&, const AxisTable&);         \
  template Var<T> weighted_l1<T>(const Var<T>&, const Tensor<T>&, std::span<const T>);           \
  template Var<T> mean_abs_diff<T>(const Var<T>&, const Tensor<T>&);                             \
  template Var<T> binary_cross_entropy<T>(const Var<T>&, const Tensor<T>&);                      \
  template Var<T> mean_all<T>(const Var<T>&);                                                    \
  template Var<T> weighted_sum<T>(std::span<const Var<T>>, std::span<const T>);

SALDRN_INSTANTIATE(float)
SALDRN_INSTANTIATE(double)

}  // namespace saldrn
