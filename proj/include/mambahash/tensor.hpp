#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mambahash {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
// Row-major strides: stride[r-1] = 1, stride[k] = stride[k+1] * shape[k+1].
std::vector<std::size_t> row_major_strides(const Shape& shape);

class Tensor;

namespace detail {

// Receives the upstream gradient of a node and accumulates into the
// gradients of its inputs. Entries of `input_grads` are empty for inputs
// that do not require gradients.
using BackwardFn = std::function<void(std::span<const double> out_grad,
                                      std::vector<std::span<double>>& input_grads)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  const char* op = "leaf";
};

}  // namespace detail

// Dense row-major array of doubles with an optional reverse-mode tape.
//
// A Tensor is a cheap handle; copies share the underlying node. Values are
// treated as immutable once an op has consumed them, except for parameters
// that an optimizer updates between passes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Direct write access. Only valid for leaves (parameters, inputs).
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  const char* op_name() const;

  // Accumulated gradient; empty span if backward never reached this tensor.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Reverse-mode sweep from a scalar. Gradients accumulate into every
  // reachable tensor that requires them.
  void backward() const;

  // Same values, cut from the tape.
  Tensor detach() const;

  // Records an op result. The node joins the tape only when some input
  // requires gradients; otherwise `backward` is dropped.
  static Tensor record(const char* op, Shape shape, std::vector<double> value,
                       std::vector<Tensor> inputs, detail::BackwardFn backward);

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

// While alive on a thread, ops on that thread skip tape recording.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool active();

 private:
  bool previous_;
};

}  // namespace mambahash
