#include "avuseg/tensor.hpp"

#include "avuseg/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>
#include <utility>

namespace avuseg {

struct Tensor::Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  bool backward_done = false;
  std::string op;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents' grads.
  std::function<void(Node&)> backprop;

  std::int64_t size() const {
    return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                           std::multiplies<>());
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
  }
};

namespace {

using Node = Tensor::Node;
using NodePtr = std::shared_ptr<Node>;

std::int64_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::int64_t{1},
                         std::multiplies<>());
}

NodePtr make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (static_cast<std::int64_t>(values.size()) != numel(shape))
    throw ShapeError("tensor: value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  return n;
}

NodePtr make_op(std::string op, Shape shape, std::vector<double> values,
                std::vector<NodePtr> parents,
                std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->is_leaf = false;
  n->op = std::move(op);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Tensor binary_op(const char* name, const Tensor& a, const Tensor& b,
                 const std::function<double(double, double)>& fwd,
                 const std::function<void(Node&, Node&, Node&)>& bwd) {
  check_same_shape(name, a, b);
  std::vector<double> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  auto pa = a.node(), pb = b.node();
  return Tensor(make_op(name, a.shape(), std::move(out), {pa, pb},
                        [pa, pb, bwd](Node& n) { bwd(n, *pa, *pb); }));
}

Tensor unary_op(const char* name, const Tensor& a,
                const std::function<double(double)>& fwd,
                const std::function<double(double, double, double)>& dfdx) {
  // dfdx(x, y, gy) -> contribution to grad x; y is the forward output.
  std::vector<double> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  auto pa = a.node();
  return Tensor(make_op(name, a.shape(), std::move(out), {pa},
                        [pa, dfdx](Node& n) {
                          if (!pa->requires_grad) return;
                          pa->ensure_grad();
                          for (std::size_t i = 0; i < n.values.size(); ++i)
                            pa->grad[i] +=
                                dfdx(pa->values[i], n.values[i], n.grad[i]);
                        }));
}

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), false));
}

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> v(numel(shape), value);
  return Tensor(make_leaf(std::move(shape), std::move(v), false));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::scalar(double value) { return constant({1}, {value}); }

Tensor Tensor::param(Shape shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), true));
}

const Shape& Tensor::shape() const { return n_->shape; }
std::int64_t Tensor::size() const { return n_->size(); }
bool Tensor::requires_grad() const { return n_->requires_grad; }
const std::vector<double>& Tensor::values() const { return n_->values; }

std::vector<double>& Tensor::mutable_values() {
  if (!n_->is_leaf) throw Error("mutable_values: not a leaf tensor");
  return n_->values;
}

const std::vector<double>& Tensor::grad() const {
  n_->ensure_grad();
  return n_->grad;
}

void Tensor::zero_grad() {
  n_->grad.assign(n_->values.size(), 0.0);
  n_->backward_done = false;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor is not scalar");
  return n_->values[0];
}

Tensor Tensor::detach() const { return constant(n_->shape, n_->values); }

void backward(const Tensor& loss) {
  auto root = loss.node();
  if (!root) throw Error("backward: undefined tensor");
  if (root->size() != 1) throw ShapeError("backward: root is not a scalar");
  if (!root->requires_grad)
    throw Error("backward: graph is detached (no differentiable leaves)");
  if (root->backward_done)
    throw Error("backward: repeated call without grad reset");
  root->backward_done = true;

  // Post-order DFS, then reverse == topological order from the root.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) {
      n->ensure_grad();
      n->backprop(*n);
    }
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](Node& n, Node& pa, Node& pb) {
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            pa.grad[i] += n.grad[i];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            pb.grad[i] += n.grad[i];
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](Node& n, Node& pa, Node& pb) {
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            pa.grad[i] += n.grad[i];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            pb.grad[i] -= n.grad[i];
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](Node& n, Node& pa, Node& pb) {
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            pa.grad[i] += n.grad[i] * pb.values[i];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            pb.grad[i] += n.grad[i] * pa.values[i];
        }
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double y : b.values())
    if (y == 0.0) throw DomainError("div: zero denominator");
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](Node& n, Node& pa, Node& pb) {
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            pa.grad[i] += n.grad[i] / pb.values[i];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            pb.grad[i] -=
                n.grad[i] * pa.values[i] / (pb.values[i] * pb.values[i]);
        }
      });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  // Grad routes to the larger operand; ties go to the first.
  return binary_op(
      "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](Node& n, Node& pa, Node& pb) {
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          if (pa.values[i] >= pb.values[i]) {
            if (pa.requires_grad) pa.grad[i] += n.grad[i];
          } else if (pb.requires_grad) {
            pb.grad[i] += n.grad[i];
          }
        }
      });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(
      "add_scalar", a, [s](double x) { return x + s; },
      [](double, double, double gy) { return gy; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_op(
      "mul_scalar", a, [s](double x) { return x * s; },
      [s](double, double, double gy) { return gy * s; });
}

Tensor maximum_scalar(const Tensor& a, double s) {
  return unary_op(
      "maximum_scalar", a, [s](double x) { return x >= s ? x : s; },
      [s](double x, double, double gy) { return x >= s ? gy : 0.0; });
}

Tensor rsub_scalar(double s, const Tensor& a) {
  return unary_op(
      "rsub_scalar", a, [s](double x) { return s - x; },
      [](double, double, double gy) { return -gy; });
}

Tensor vlog(const Tensor& a) {
  for (double x : a.values())
    if (x <= 0.0) throw DomainError("log: non-positive input");
  return unary_op(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double, double gy) { return gy / x; });
}

Tensor vexp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y, double gy) { return gy * y; });
}

Tensor vtanh(const Tensor& a) {
  return unary_op(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y, double gy) { return gy * (1.0 - y * y); });
}

Tensor vsoftplus(const Tensor& a) {
  return unary_op(
      "softplus", a,
      [](double x) {
        return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
      },
      [](double x, double, double gy) { return gy / (1.0 + std::exp(-x)); });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  const std::int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double aik = av[i * k + kk];
      for (std::int64_t j = 0; j < n; ++j)
        out[i * n + j] += aik * bv[kk * n + j];
    }
  auto pa = a.node(), pb = b.node();
  return Tensor(make_op(
      "matmul", {m, n}, std::move(out), {pa, pb}, [pa, pb, m, k, n](Node& nd) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) {
              const double g = nd.grad[i * n + j];
              for (std::int64_t kk = 0; kk < k; ++kk)
                pa->grad[i * k + kk] += g * pb->values[kk * n + j];
            }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) {
              const double g = nd.grad[i * n + j];
              for (std::int64_t kk = 0; kk < k; ++kk)
                pb->grad[kk * n + j] += g * pa->values[i * k + kk];
            }
        }
      }));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape: element count mismatch " +
                     shape_str(x.shape()) + " -> " + shape_str(shape));
  auto px = x.node();
  return Tensor(make_op("reshape", std::move(shape), x.values(), {px},
                        [px](Node& n) {
                          if (!px->requires_grad) return;
                          px->ensure_grad();
                          for (std::size_t i = 0; i < n.grad.size(); ++i)
                            px->grad[i] += n.grad[i];
                        }));
}

Tensor conv2d(const Tensor& input, const Tensor& weight, Padding padding,
              std::int64_t dilation) {
  if (input.shape().size() != 4 || weight.shape().size() != 4)
    throw ShapeError("conv2d: expected 4-D input/weight, got " +
                     shape_str(input.shape()) + " and " +
                     shape_str(weight.shape()));
  if (input.shape()[1] != weight.shape()[1])
    throw ShapeError("conv2d: channel mismatch " + shape_str(input.shape()) +
                     " vs " + shape_str(weight.shape()));
  if (dilation < 1) throw DomainError("conv2d: dilation must be >= 1");
  kernels::Conv2dDims d;
  d.batch = input.shape()[0];
  d.in_ch = input.shape()[1];
  d.in_h = input.shape()[2];
  d.in_w = input.shape()[3];
  d.out_ch = weight.shape()[0];
  d.kh = weight.shape()[2];
  d.kw = weight.shape()[3];
  d.dilation = dilation;
  if (padding == Padding::Same) {
    if (d.kh % 2 == 0 || d.kw % 2 == 0)
      throw DomainError("conv2d: same padding needs odd kernel sizes");
    d.pad_h = dilation * (d.kh - 1) / 2;
    d.pad_w = dilation * (d.kw - 1) / 2;
  } else {
    d.pad_h = d.pad_w = 0;
  }
  const std::int64_t oh = d.out_h(), ow = d.out_w();
  if (oh <= 0 || ow <= 0)
    throw ShapeError("conv2d: kernel larger than input under valid padding");
  std::vector<double> out(
      static_cast<std::size_t>(d.batch * d.out_ch * oh * ow));
  kernels::conv2d_forward(input.values().data(), weight.values().data(),
                          out.data(), d);
  auto pin = input.node(), pw = weight.node();
  return Tensor(make_op("conv2d", {d.batch, d.out_ch, oh, ow}, std::move(out),
                        {pin, pw}, [pin, pw, d](Node& n) {
                          if (pin->requires_grad) {
                            pin->ensure_grad();
                            kernels::conv2d_backward_input(
                                n.grad.data(), pw->values.data(),
                                pin->grad.data(), d);
                          }
                          if (pw->requires_grad) {
                            pw->ensure_grad();
                            kernels::conv2d_backward_weight(
                                n.grad.data(), pin->values.data(),
                                pw->grad.data(), d);
                          }
                        }));
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  if (x.shape().size() != 4 || bias.shape().size() != 1 ||
      bias.shape()[0] != x.shape()[1])
    throw ShapeError("add_channel_bias: shape mismatch " +
                     shape_str(x.shape()) + " vs " + shape_str(bias.shape()));
  const std::int64_t N = x.shape()[0], C = x.shape()[1],
                     HW = x.shape()[2] * x.shape()[3];
  std::vector<double> out(x.values());
  for (std::int64_t nn = 0; nn < N; ++nn)
    for (std::int64_t c = 0; c < C; ++c) {
      const double b = bias.values()[c];
      double* o = out.data() + (nn * C + c) * HW;
      for (std::int64_t i = 0; i < HW; ++i) o[i] += b;
    }
  auto px = x.node(), pb = bias.node();
  return Tensor(make_op(
      "add_channel_bias", x.shape(), std::move(out), {px, pb},
      [px, pb, N, C, HW](Node& n) {
        if (px->requires_grad) {
          px->ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            px->grad[i] += n.grad[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::int64_t nn = 0; nn < N; ++nn)
            for (std::int64_t c = 0; c < C; ++c) {
              const double* g = n.grad.data() + (nn * C + c) * HW;
              double acc = 0.0;
              for (std::int64_t i = 0; i < HW; ++i) acc += g[i];
              pb->grad[c] += acc;
            }
        }
      }));
}

Tensor maxpool2(const Tensor& x) {
  if (x.shape().size() != 4)
    throw ShapeError("maxpool2: expected 4-D input, got " +
                     shape_str(x.shape()));
  const std::int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
                     W = x.shape()[3];
  if (H % 2 != 0 || W % 2 != 0)
    throw ShapeError("maxpool2: spatial dims must be even, got " +
                     shape_str(x.shape()));
  const std::int64_t OH = H / 2, OW = W / 2;
  std::vector<double> out(static_cast<std::size_t>(N * C * OH * OW));
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  const auto& xv = x.values();
  for (std::int64_t nc = 0; nc < N * C; ++nc)
    for (std::int64_t oy = 0; oy < OH; ++oy)
      for (std::int64_t ox = 0; ox < OW; ++ox) {
        std::int64_t best = (nc * H + 2 * oy) * W + 2 * ox;
        for (std::int64_t dy = 0; dy < 2; ++dy)
          for (std::int64_t dx = 0; dx < 2; ++dx) {
            const std::int64_t i = (nc * H + 2 * oy + dy) * W + 2 * ox + dx;
            if (xv[i] > xv[best]) best = i;
          }
        const std::int64_t o = (nc * OH + oy) * OW + ox;
        out[o] = xv[best];
        (*argmax)[o] = best;
      }
  auto px = x.node();
  return Tensor(make_op("maxpool2", {N, C, OH, OW}, std::move(out), {px},
                        [px, argmax](Node& n) {
                          if (!px->requires_grad) return;
                          px->ensure_grad();
                          for (std::size_t i = 0; i < n.grad.size(); ++i)
                            px->grad[(*argmax)[i]] += n.grad[i];
                        }));
}

Tensor upsample2(const Tensor& x) {
  if (x.shape().size() != 4)
    throw ShapeError("upsample2: expected 4-D input, got " +
                     shape_str(x.shape()));
  const std::int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
                     W = x.shape()[3];
  const std::int64_t OH = H * 2, OW = W * 2;
  std::vector<double> out(static_cast<std::size_t>(N * C * OH * OW));
  const auto& xv = x.values();
  for (std::int64_t nc = 0; nc < N * C; ++nc)
    for (std::int64_t oy = 0; oy < OH; ++oy)
      for (std::int64_t ox = 0; ox < OW; ++ox)
        out[(nc * OH + oy) * OW + ox] = xv[(nc * H + oy / 2) * W + ox / 2];
  auto px = x.node();
  return Tensor(make_op("upsample2", {N, C, OH, OW}, std::move(out), {px},
                        [px, N, C, H, W, OH, OW](Node& n) {
                          if (!px->requires_grad) return;
                          px->ensure_grad();
                          for (std::int64_t nc = 0; nc < N * C; ++nc)
                            for (std::int64_t oy = 0; oy < OH; ++oy)
                              for (std::int64_t ox = 0; ox < OW; ++ox)
                                px->grad[(nc * H + oy / 2) * W + ox / 2] +=
                                    n.grad[(nc * OH + oy) * OW + ox];
                        }));
}

namespace {

struct AxisSpan {
  std::int64_t outer, axis, inner;
};

AxisSpan axis_span(const Shape& s, std::int64_t axis) {
  if (axis < 0 || axis >= static_cast<std::int64_t>(s.size()))
    throw ShapeError("axis out of range for shape " + shape_str(s));
  AxisSpan sp{1, s[axis], 1};
  for (std::int64_t i = 0; i < axis; ++i) sp.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) sp.inner *= s[i];
  return sp;
}

}  // namespace

Tensor softmax(const Tensor& x, std::int64_t axis) {
  const AxisSpan sp = axis_span(x.shape(), axis);
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::int64_t o = 0; o < sp.outer; ++o)
    for (std::int64_t in = 0; in < sp.inner; ++in) {
      const std::int64_t base = o * sp.axis * sp.inner + in;
      double mx = xv[base];
      for (std::int64_t a = 1; a < sp.axis; ++a)
        mx = std::max(mx, xv[base + a * sp.inner]);
      double denom = 0.0;
      for (std::int64_t a = 0; a < sp.axis; ++a)
        denom += std::exp(xv[base + a * sp.inner] - mx);
      for (std::int64_t a = 0; a < sp.axis; ++a)
        out[base + a * sp.inner] = std::exp(xv[base + a * sp.inner] - mx) / denom;
    }
  auto px = x.node();
  return Tensor(make_op(
      "softmax", x.shape(), std::move(out), {px}, [px, sp](Node& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::int64_t o = 0; o < sp.outer; ++o)
          for (std::int64_t in = 0; in < sp.inner; ++in) {
            const std::int64_t base = o * sp.axis * sp.inner + in;
            double dot = 0.0;
            for (std::int64_t a = 0; a < sp.axis; ++a) {
              const std::int64_t i = base + a * sp.inner;
              dot += n.grad[i] * n.values[i];
            }
            for (std::int64_t a = 0; a < sp.axis; ++a) {
              const std::int64_t i = base + a * sp.inner;
              px->grad[i] += n.values[i] * (n.grad[i] - dot);
            }
          }
      }));
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  auto px = x.node();
  return Tensor(make_op("sum", {1}, {acc}, {px}, [px](Node& n) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (double& g : px->grad) g += n.grad[0];
  }));
}

Tensor mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  acc *= inv;
  auto px = x.node();
  return Tensor(make_op("mean", {1}, {acc}, {px}, [px, inv](Node& n) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (double& g : px->grad) g += n.grad[0] * inv;
  }));
}

Tensor sum_channels(const Tensor& x) {
  if (x.shape().size() != 4)
    throw ShapeError("sum_channels: expected 4-D input, got " +
                     shape_str(x.shape()));
  const std::int64_t N = x.shape()[0], C = x.shape()[1],
                     HW = x.shape()[2] * x.shape()[3];
  std::vector<double> out(static_cast<std::size_t>(N * HW), 0.0);
  const auto& xv = x.values();
  for (std::int64_t nn = 0; nn < N; ++nn)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t i = 0; i < HW; ++i)
        out[nn * HW + i] += xv[(nn * C + c) * HW + i];
  auto px = x.node();
  return Tensor(make_op("sum_channels", {N, 1, x.shape()[2], x.shape()[3]},
                        std::move(out), {px}, [px, N, C, HW](Node& n) {
                          if (!px->requires_grad) return;
                          px->ensure_grad();
                          for (std::int64_t nn = 0; nn < N; ++nn)
                            for (std::int64_t c = 0; c < C; ++c)
                              for (std::int64_t i = 0; i < HW; ++i)
                                px->grad[(nn * C + c) * HW + i] +=
                                    n.grad[nn * HW + i];
                        }));
}

Tensor broadcast_channels(const Tensor& x, std::int64_t channels) {
  if (x.shape().size() != 4 || x.shape()[1] != 1)
    throw ShapeError("broadcast_channels: expected (N,1,H,W), got " +
                     shape_str(x.shape()));
  const std::int64_t N = x.shape()[0], HW = x.shape()[2] * x.shape()[3];
  std::vector<double> out(static_cast<std::size_t>(N * channels * HW));
  const auto& xv = x.values();
  for (std::int64_t nn = 0; nn < N; ++nn)
    for (std::int64_t c = 0; c < channels; ++c)
      for (std::int64_t i = 0; i < HW; ++i)
        out[(nn * channels + c) * HW + i] = xv[nn * HW + i];
  auto px = x.node();
  return Tensor(make_op("broadcast_channels",
                        {N, channels, x.shape()[2], x.shape()[3]},
                        std::move(out), {px}, [px, N, channels, HW](Node& n) {
                          if (!px->requires_grad) return;
                          px->ensure_grad();
                          for (std::int64_t nn = 0; nn < N; ++nn)
                            for (std::int64_t c = 0; c < channels; ++c)
                              for (std::int64_t i = 0; i < HW; ++i)
                                px->grad[nn * HW + i] +=
                                    n.grad[(nn * channels + c) * HW + i];
                        }));
}

Tensor mask_from(const Tensor& x, const std::function<double(double)>& pred) {
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pred(xv[i]);
  return Tensor::constant(x.shape(), std::move(out));
}

}  // namespace avuseg
