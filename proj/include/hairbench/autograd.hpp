#pragma once

// Reverse-mode automatic differentiation over Tensor<T>.
//
// A Var is a handle to a Node in a dynamically built graph. Parameters are
// persistent leaves; every op allocates a fresh node that remembers its
// inputs and a closure that pushes its gradient back to them. A graph is
// single-writer: build it, call backward() once, read the leaf gradients.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hairbench/detail/conv_kernels.hpp"
#include "hairbench/error.hpp"
#include "hairbench/tensor.hpp"

namespace hairbench {

enum class OpKind {
  Leaf,
  Conv2d,
  Deconv2d,
  ConcatChannels,
  SliceChannels,
  Relu,
  Clamp01,
  MaxPool2,
  Add,
  Sub,
  Mul,
  Div,
  AddScalar,
  Scale,
  Square,
  Sum,
  Mean,
  GaussianBlurValid,
  MaskedL1,
  MaskedSquaredComposed,
  MaskedTotalVariation,
};

inline const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Deconv2d: return "deconv2d";
    case OpKind::ConcatChannels: return "concat_channels";
    case OpKind::SliceChannels: return "slice_channels";
    case OpKind::Relu: return "relu";
    case OpKind::Clamp01: return "clamp01";
    case OpKind::MaxPool2: return "max_pool2";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::Scale: return "scale";
    case OpKind::Square: return "square";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::GaussianBlurValid: return "gaussian_blur_valid";
    case OpKind::MaskedL1: return "masked_l1";
    case OpKind::MaskedSquaredComposed: return "masked_squared_composed";
    case OpKind::MaskedTotalVariation: return "masked_total_variation";
  }
  return "unknown";
}

template <typename T>
struct Node {
  OpKind op = OpKind::Leaf;
  Tensor<T> value;
  Tensor<T> grad;  // same shape as value once allocated
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  /// A leaf that never receives gradients (data, targets, masks).
  static Var constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }

  /// A trainable leaf; its gradient accumulates until zero_grad().
  static Var parameter(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->ensure_grad();
    return Var(std::move(n));
  }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& grad() { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  OpKind op() const { return node_->op; }
  bool requires_grad() const { return node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  void zero_grad() {
    node_->ensure_grad();
    node_->grad.fill(T{0});
  }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Wraps an op's output in a node. Non-finite outputs are an engine fault.
template <typename T>
Var<T> make_result(OpKind op, Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward_fn) {
  if (!value.all_finite()) {
    throw NumericalFault(std::string("non-finite value produced by ") + op_name(op));
  }
  auto n = std::make_shared<Node<T>>();
  n->op = op;
  n->value = std::move(value);
  for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
  if (n->requires_grad) {
    n->inputs.reserve(inputs.size());
    for (auto& in : inputs) n->inputs.push_back(in.shared());
    n->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(n));
}

/// Accumulates d(root)/d(leaf) into every reachable parameter's grad().
template <typename T>
void backward(const Var<T>& root) {
  if (root.value().size() != 1) {
    throw ContractViolation("backward: root must be scalar-valued, got shape " +
                            to_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node(), 0}};
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad();
  root.node()->grad[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>& n = **it;
    if (n.backward_fn && n.grad.shape() == n.value.shape()) n.backward_fn(n);
  }
}

namespace ops_detail {

template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ContractViolation(std::string(what) + ": shape mismatch " + to_string(a.shape()) +
                            " vs " + to_string(b.shape()));
  }
}

template <typename T>
Node<T>* grad_target(Node<T>& n, std::size_t i) {
  Node<T>* in = n.inputs[i].get();
  if (!in->requires_grad) return nullptr;
  in->ensure_grad();
  return in;
}

template <typename T>
void add_bias_grad(const Tensor<T>& g, std::size_t batch, std::size_t filters,
                   std::size_t plane, Tensor<T>& gb) {
  for (std::size_t f = 0; f < filters; ++f) {
    double s = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* p = g.data().data() + (b * filters + f) * plane;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
    }
    gb[f] += static_cast<T>(s);
  }
}

}  // namespace ops_detail

/// 3x3 cross-correlation, zero padding 1. x:[B,C,H,W], kernel:[F,C,3,3], bias:[F].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, std::size_t stride) {
  using namespace detail;
  const auto& xs = x.shape();
  const auto& ks = kernel.shape();
  if (xs.size() != 4) throw ContractViolation("conv2d: input must be [B,C,H,W], got " + to_string(xs));
  if (ks.size() != 4 || ks[2] != 3 || ks[3] != 3) {
    throw ContractViolation("conv2d: kernel must be [F,C,3,3], got " + to_string(ks));
  }
  if (ks[1] != xs[1]) {
    throw ContractViolation("conv2d: kernel input channels " + std::to_string(ks[1]) +
                            " != input channels " + std::to_string(xs[1]));
  }
  if (bias.shape() != Shape{ks[0]}) {
    throw ContractViolation("conv2d: bias shape " + to_string(bias.shape()) + " != [" +
                            std::to_string(ks[0]) + "]");
  }
  if (stride != 1 && stride != 2) throw ContractViolation("conv2d: stride must be 1 or 2");
  if (xs[2] % stride != 0 || xs[3] % stride != 0) {
    throw ContractViolation("conv2d: spatial size " + std::to_string(xs[2]) + "x" +
                            std::to_string(xs[3]) + " not divisible by stride " +
                            std::to_string(stride));
  }
  const std::size_t batch = xs[0], in_c = xs[1], h = xs[2], w = xs[3], filters = ks[0];
  const std::size_t ho = h / stride, wo = w / stride;
  const std::size_t rows = in_c * kTaps, plane = ho * wo;

  Tensor<T> out({batch, filters, ho, wo});
  ColumnBuffer<T> buffer;
  ConstMatrixMap<T> kmat(kernel.value().data().data(), filters, rows);
  for (std::size_t b = 0; b < batch; ++b) {
    auto cols = buffer.get(rows * plane);
    im2col<T>(x.value().data().subspan(b * in_c * h * w, in_c * h * w), in_c, h, w, stride, cols);
    MatrixMap<T> o(out.data().data() + b * filters * plane, filters, plane);
    o.noalias() = kmat * ConstMatrixMap<T>(cols.data(), rows, plane);
    for (std::size_t f = 0; f < filters; ++f) o.row(f).array() += bias.value()[f];
  }

  return make_result<T>(
      OpKind::Conv2d, std::move(out), {x, kernel, bias},
      [=](Node<T>& n) {
        Node<T>* gx = ops_detail::grad_target(n, 0);
        Node<T>* gk = ops_detail::grad_target(n, 1);
        Node<T>* gbias = ops_detail::grad_target(n, 2);
        const Tensor<T>& xin = n.inputs[0]->value;
        const Tensor<T>& kin = n.inputs[1]->value;
        ConstMatrixMap<T> km(kin.data().data(), filters, rows);
        ColumnBuffer<T> buf;
        for (std::size_t b = 0; b < batch; ++b) {
          ConstMatrixMap<T> g(n.grad.data().data() + b * filters * plane, filters, plane);
          if (gk) {
            auto cols = buf.get(rows * plane);
            im2col<T>(xin.data().subspan(b * in_c * h * w, in_c * h * w), in_c, h, w, stride, cols);
            MatrixMap<T> gkm(gk->grad.data().data(), filters, rows);
            gkm.noalias() += g * ConstMatrixMap<T>(cols.data(), rows, plane).transpose();
          }
          if (gx) {
            auto cols = buf.get(rows * plane);
            MatrixMap<T>(cols.data(), rows, plane).noalias() = km.transpose() * g;
            col2im<T>(cols, in_c, h, w, stride,
                      gx->grad.data().subspan(b * in_c * h * w, in_c * h * w));
          }
        }
        if (gbias) ops_detail::add_bias_grad(n.grad, batch, filters, plane, gbias->grad);
      });
}

/// 3x3 transposed convolution with stride 2; the adjoint of stride-2 conv2d.
/// x:[B,C,H,W], kernel:[C,F,3,3], bias:[F] -> [B,F,2H,2W].
template <typename T>
Var<T> deconv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias) {
  using namespace detail;
  constexpr std::size_t stride = 2;
  const auto& xs = x.shape();
  const auto& ks = kernel.shape();
  if (xs.size() != 4) throw ContractViolation("deconv2d: input must be [B,C,H,W], got " + to_string(xs));
  if (ks.size() != 4 || ks[2] != 3 || ks[3] != 3) {
    throw ContractViolation("deconv2d: kernel must be [C,F,3,3], got " + to_string(ks));
  }
  if (ks[0] != xs[1]) {
    throw ContractViolation("deconv2d: kernel input channels " + std::to_string(ks[0]) +
                            " != input channels " + std::to_string(xs[1]));
  }
  if (bias.shape() != Shape{ks[1]}) {
    throw ContractViolation("deconv2d: bias shape " + to_string(bias.shape()) + " != [" +
                            std::to_string(ks[1]) + "]");
  }
  const std::size_t batch = xs[0], in_c = xs[1], h = xs[2], w = xs[3], filters = ks[1];
  const std::size_t ho = h * stride, wo = w * stride;
  const std::size_t rows = filters * kTaps, plane = h * w, out_plane = ho * wo;

  Tensor<T> out({batch, filters, ho, wo});
  ColumnBuffer<T> buffer;
  ConstMatrixMap<T> kmat(kernel.value().data().data(), in_c, rows);
  for (std::size_t b = 0; b < batch; ++b) {
    auto cols = buffer.get(rows * plane);
    MatrixMap<T>(cols.data(), rows, plane).noalias() =
        kmat.transpose() * ConstMatrixMap<T>(x.value().data().data() + b * in_c * plane, in_c, plane);
    auto ob = out.data().subspan(b * filters * out_plane, filters * out_plane);
    col2im<T>(cols, filters, ho, wo, stride, ob);
    for (std::size_t f = 0; f < filters; ++f) {
      const T bv = bias.value()[f];
      for (std::size_t i = 0; i < out_plane; ++i) ob[f * out_plane + i] += bv;
    }
  }

  return make_result<T>(
      OpKind::Deconv2d, std::move(out), {x, kernel, bias},
      [=](Node<T>& n) {
        Node<T>* gx = ops_detail::grad_target(n, 0);
        Node<T>* gk = ops_detail::grad_target(n, 1);
        Node<T>* gbias = ops_detail::grad_target(n, 2);
        const Tensor<T>& xin = n.inputs[0]->value;
        ConstMatrixMap<T> km(n.inputs[1]->value.data().data(), in_c, rows);
        ColumnBuffer<T> buf;
        for (std::size_t b = 0; b < batch; ++b) {
          auto cols = buf.get(rows * plane);
          im2col<T>(std::span<const T>(n.grad.data().subspan(b * filters * out_plane, filters * out_plane)),
                    filters, ho, wo, stride, cols);
          ConstMatrixMap<T> cm(cols.data(), rows, plane);
          if (gx) {
            MatrixMap<T>(gx->grad.data().data() + b * in_c * plane, in_c, plane).noalias() += km * cm;
          }
          if (gk) {
            MatrixMap<T>(gk->grad.data().data(), in_c, rows).noalias() +=
                ConstMatrixMap<T>(xin.data().data() + b * in_c * plane, in_c, plane) * cm.transpose();
          }
        }
        if (gbias) ops_detail::add_bias_grad(n.grad, batch, filters, out_plane, gbias->grad);
      });
}

/// a:[B,C1,H,W], b:[B,C2,H,W] -> [B,C1+C2,H,W]; a first.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 4 || bs.size() != 4 || as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3]) {
    throw ContractViolation("concat_channels: batch/spatial mismatch " + to_string(as) + " vs " +
                            to_string(bs));
  }
  const std::size_t batch = as[0], c1 = as[1], c2 = bs[1], plane = as[2] * as[3];
  Tensor<T> out({batch, c1 + c2, as[2], as[3]});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(a.value().data().data() + n * c1 * plane, c1 * plane,
                out.data().data() + n * (c1 + c2) * plane);
    std::copy_n(b.value().data().data() + n * c2 * plane, c2 * plane,
                out.data().data() + (n * (c1 + c2) + c1) * plane);
  }
  return make_result<T>(OpKind::ConcatChannels, std::move(out), {a, b}, [=](Node<T>& nd) {
    Node<T>* ga = ops_detail::grad_target(nd, 0);
    Node<T>* gb = ops_detail::grad_target(nd, 1);
    for (std::size_t n = 0; n < batch; ++n) {
      const T* src = nd.grad.data().data() + n * (c1 + c2) * plane;
      if (ga) {
        T* d = ga->grad.data().data() + n * c1 * plane;
        for (std::size_t i = 0; i < c1 * plane; ++i) d[i] += src[i];
      }
      if (gb) {
        T* d = gb->grad.data().data() + n * c2 * plane;
        for (std::size_t i = 0; i < c2 * plane; ++i) d[i] += src[c1 * plane + i];
      }
    }
  });
}

/// Channels [begin, end) of x:[B,C,H,W].
template <typename T>
Var<T> slice_channels(const Var<T>& x, std::size_t begin, std::size_t end) {
  const auto& xs = x.shape();
  if (xs.size() != 4 || begin > end || end > xs[1]) {
    throw ContractViolation("slice_channels: range [" + std::to_string(begin) + "," +
                            std::to_string(end) + ") invalid for " + to_string(xs));
  }
  const std::size_t batch = xs[0], c = xs[1], k = end - begin, plane = xs[2] * xs[3];
  Tensor<T> out({batch, k, xs[2], xs[3]});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(x.value().data().data() + (n * c + begin) * plane, k * plane,
                out.data().data() + n * k * plane);
  }
  return make_result<T>(OpKind::SliceChannels, std::move(out), {x}, [=](Node<T>& nd) {
    Node<T>* gx = ops_detail::grad_target(nd, 0);
    if (!gx) return;
    for (std::size_t n = 0; n < batch; ++n) {
      T* d = gx->grad.data().data() + (n * c + begin) * plane;
      const T* s = nd.grad.data().data() + n * k * plane;
      for (std::size_t i = 0; i < k * plane; ++i) d[i] += s[i];
    }
  });
}

namespace ops_detail {

/// Elementwise unary op with derivative expressed through input and output values.
template <typename T, typename Fwd, typename Deriv>
Var<T> unary(OpKind op, const Var<T>& x, Fwd fwd, Deriv deriv) {
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return make_result<T>(op, std::move(out), {x}, [deriv](Node<T>& n) {
    Node<T>* gx = grad_target(n, 0);
    if (!gx) return;
    const auto& xin = n.inputs[0]->value;
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      gx->grad[i] += n.grad[i] * deriv(xin[i], n.value[i]);
    }
  });
}

}  // namespace ops_detail

template <typename T>
Var<T> relu(const Var<T>& x) {
  return ops_detail::unary<T>(
      OpKind::Relu, x, [](T v) { return v > T{0} ? v : T{0}; },
      [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

/// Clamped-linear activation onto [0, 1]; zero gradient where clamped.
template <typename T>
Var<T> clamp01(const Var<T>& x) {
  return ops_detail::unary<T>(
      OpKind::Clamp01, x, [](T v) { return std::clamp(v, T{0}, T{1}); },
      [](T v, T) { return (v > T{0} && v < T{1}) ? T{1} : T{0}; });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  return ops_detail::unary<T>(
      OpKind::Square, x, [](T v) { return v * v; }, [](T v, T) { return T{2} * v; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, double s) {
  const T c = static_cast<T>(s);
  return ops_detail::unary<T>(
      OpKind::AddScalar, x, [c](T v) { return v + c; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> scale(const Var<T>& x, double s) {
  const T c = static_cast<T>(s);
  return ops_detail::unary<T>(
      OpKind::Scale, x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

/// 2x2 max pooling with stride 2; ties resolve to the first element in raster order.
template <typename T>
Var<T> max_pool2(const Var<T>& x) {
  const auto& xs = x.shape();
  if (xs.size() != 4 || xs[2] % 2 || xs[3] % 2) {
    throw ContractViolation("max_pool2: need [B,C,H,W] with even H, W, got " + to_string(xs));
  }
  const std::size_t planes = xs[0] * xs[1], h = xs[2], w = xs[3], ho = h / 2, wo = w / 2;
  Tensor<T> out({xs[0], xs[1], ho, wo});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto& xv = x.value();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        std::size_t best = p * h * w + (2 * i) * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = p * h * w + (2 * i + di) * w + 2 * j + dj;
            if (xv[idx] > xv[best]) best = idx;
          }
        }
        const std::size_t o = (p * ho + i) * wo + j;
        out[o] = xv[best];
        (*argmax)[o] = best;
      }
    }
  }
  return make_result<T>(OpKind::MaxPool2, std::move(out), {x}, [argmax](Node<T>& n) {
    Node<T>* gx = ops_detail::grad_target(n, 0);
    if (!gx) return;
    for (std::size_t o = 0; o < n.grad.size(); ++o) gx->grad[(*argmax)[o]] += n.grad[o];
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  ops_detail::check_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result<T>(OpKind::Add, std::move(out), {a, b}, [](Node<T>& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (Node<T>* g = ops_detail::grad_target(n, k)) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) g->grad[i] += n.grad[i];
      }
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  ops_detail::check_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_result<T>(OpKind::Sub, std::move(out), {a, b}, [](Node<T>& n) {
    if (Node<T>* g = ops_detail::grad_target(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) g->grad[i] += n.grad[i];
    }
    if (Node<T>* g = ops_detail::grad_target(n, 1)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) g->grad[i] -= n.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  ops_detail::check_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result<T>(OpKind::Mul, std::move(out), {a, b}, [](Node<T>& n) {
    const auto& av = n.inputs[0]->value;
    const auto& bv = n.inputs[1]->value;
    if (Node<T>* g = ops_detail::grad_target(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) g->grad[i] += n.grad[i] * bv[i];
    }
    if (Node<T>* g = ops_detail::grad_target(n, 1)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) g->grad[i] += n.grad[i] * av[i];
    }
  });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  ops_detail::check_same_shape(a, b, "div");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  return make_result<T>(OpKind::Div, std::move(out), {a, b}, [](Node<T>& n) {
    const auto& bv = n.inputs[1]->value;
    if (Node<T>* g = ops_detail::grad_target(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) g->grad[i] += n.grad[i] / bv[i];
    }
    if (Node<T>* g = ops_detail::grad_target(n, 1)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        g->grad[i] -= n.grad[i] * n.value[i] / bv[i];
      }
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  double s = 0.0;
  for (T v : x.value().data()) s += v;
  return make_result<T>(OpKind::Sum, Tensor<T>::scalar(static_cast<T>(s)), {x}, [](Node<T>& n) {
    if (Node<T>* g = ops_detail::grad_target(n, 0)) {
      const T up = n.grad[0];
      for (auto& v : g->grad.data()) v += up;
    }
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const double count = static_cast<double>(x.value().size());
  double s = 0.0;
  for (T v : x.value().data()) s += v;
  return make_result<T>(OpKind::Mean, Tensor<T>::scalar(static_cast<T>(s / count)), {x},
                        [count](Node<T>& n) {
                          if (Node<T>* g = ops_detail::grad_target(n, 0)) {
                            const T up = static_cast<T>(n.grad[0] / count);
                            for (auto& v : g->grad.data()) v += up;
                          }
                        });
}

/// Separable depthwise filter with a symmetric 1-D window, 'valid' extent:
/// [B,C,H,W] -> [B,C,H-n+1,W-n+1].
template <typename T>
Var<T> gaussian_blur_valid(const Var<T>& x, std::vector<double> window) {
  const auto& xs = x.shape();
  const std::size_t n = window.size();
  if (xs.size() != 4 || xs[2] < n || xs[3] < n) {
    throw ContractViolation("gaussian_blur_valid: input " + to_string(xs) +
                            " smaller than window " + std::to_string(n));
  }
  const std::size_t planes = xs[0] * xs[1], h = xs[2], w = xs[3];
  const std::size_t ho = h - n + 1, wo = w - n + 1;
  Tensor<T> out({xs[0], xs[1], ho, wo});
  std::vector<double> tmp(h * wo);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.value().data().data() + p * h * w;
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += window[k] * src[i * w + j + k];
        tmp[i * wo + j] = s;
      }
    }
    T* dst = out.data().data() + p * ho * wo;
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += window[k] * tmp[(i + k) * wo + j];
        dst[i * wo + j] = static_cast<T>(s);
      }
    }
  }
  return make_result<T>(OpKind::GaussianBlurValid, std::move(out), {x},
                        [=, window = std::move(window)](Node<T>& nd) {
                          Node<T>* gx = ops_detail::grad_target(nd, 0);
                          if (!gx) return;
                          std::vector<double> t(h * wo);
                          for (std::size_t p = 0; p < planes; ++p) {
                            std::fill(t.begin(), t.end(), 0.0);
                            const T* g = nd.grad.data().data() + p * ho * wo;
                            for (std::size_t i = 0; i < ho; ++i) {
                              for (std::size_t k = 0; k < n; ++k) {
                                for (std::size_t j = 0; j < wo; ++j) {
                                  t[(i + k) * wo + j] += window[k] * g[i * wo + j];
                                }
                              }
                            }
                            T* d = gx->grad.data().data() + p * h * w;
                            for (std::size_t i = 0; i < h; ++i) {
                              for (std::size_t j = 0; j < wo; ++j) {
                                const double v = t[i * wo + j];
                                for (std::size_t k = 0; k < n; ++k) {
                                  d[i * w + j + k] += static_cast<T>(window[k] * v);
                                }
                              }
                            }
                          }
                        });
}

}  // namespace hairbench
