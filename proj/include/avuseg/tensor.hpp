#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "avuseg/common.hpp"

// Dense tensor with taped reverse-mode differentiation. Values are 64-bit
// floats; the op graph is acyclic and backward visits each node once in
// reverse topological order. Broadcasting is restricted to scalar-tensor
// and per-channel bias.

namespace avuseg {

using Shape = std::vector<std::int64_t>;

enum class Padding { Same, Valid };

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor full(Shape shape, double value);
  static Tensor zeros(Shape shape);
  static Tensor scalar(double value);
  // Leaf that receives gradients.
  static Tensor param(Shape shape, std::vector<double> values);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const;
  std::int64_t size() const;
  bool requires_grad() const;

  const std::vector<double>& values() const;
  std::vector<double>& mutable_values();  // leaves only (optimizer updates)
  const std::vector<double>& grad() const;
  void zero_grad();

  double item() const;  // scalar tensors only

  // Copy of the values as a fresh constant leaf, cut from the graph.
  Tensor detach() const;

  struct Node;
  const std::shared_ptr<Node>& node() const { return n_; }
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

 private:
  std::shared_ptr<Node> n_;
};

// Populates grad on every reachable leaf; rejects non-scalar roots,
// detached graphs, and repeated calls on the same root.
void backward(const Tensor& loss);

// Elementwise, matching shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

// Scalar broadcast.
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor maximum_scalar(const Tensor& a, double s);
Tensor rsub_scalar(double s, const Tensor& a);  // s - a

// Elementwise unary.
Tensor vlog(const Tensor& a);  // domain error on values <= 0
Tensor vexp(const Tensor& a);
Tensor vtanh(const Tensor& a);
Tensor vsoftplus(const Tensor& a);
Tensor neg(const Tensor& a);

// (m,k) x (k,n) -> (m,n)
Tensor matmul(const Tensor& a, const Tensor& b);

// Same element count, new shape; grads pass through untouched.
Tensor reshape(const Tensor& x, Shape shape);

// input (N,C,H,W), weight (O,C,kh,kw), stride 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, Padding padding,
              std::int64_t dilation = 1);
// x (N,C,H,W) + bias (C)
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// 2x2 max pool / nearest-neighbor 2x upsample on (N,C,H,W).
Tensor maxpool2(const Tensor& x);
Tensor upsample2(const Tensor& x);

// Softmax along `axis`.
Tensor softmax(const Tensor& x, std::int64_t axis);

// Reductions.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// (N,C,H,W) -> (N,1,H,W)
Tensor sum_channels(const Tensor& x);
// (N,1,H,W) -> (N,C,H,W)
Tensor broadcast_channels(const Tensor& x, std::int64_t channels);

// Detached {0,1} masks from a predicate over values.
Tensor mask_from(const Tensor& x, const std::function<double(double)>& pred);

}  // namespace avuseg
