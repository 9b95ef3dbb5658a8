#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lpnet::nd {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Propagates `self.grad` into the gradient buffers of `self.parents`.
using BackwardFn = std::function<void(Node& self)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward;

  // Zero-filled on first access.
  std::vector<double>& grad_buffer();
  bool has_grad() const { return !grad.empty(); }
};

// Shared handle to a node of the computation graph. Copies alias the same
// storage; use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  // Leaf that accumulates gradient whenever a tape is active.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  bool has_grad() const;
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  void zero_grad();
  // Releases the gradient buffer; has_grad() is false afterwards.
  void clear_grad();

  // New leaf holding a copy of the values; never receives gradient.
  Tensor detach() const;
  // Same as detach() but keeps the requires_grad flag of a leaf.
  Tensor clone() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Single-use record of the operations of one forward pass. Nodes are stored
// in creation order, so the reverse order is a valid reverse topological
// order for backpropagation.
class Tape {
 public:
  void record(NodePtr node);
  // Seeds d(loss)/d(loss) = 1 and propagates to every recorded node once.
  // A tape can be run only once.
  void backward(const Tensor& loss);
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  std::vector<NodePtr> nodes_;
  bool consumed_ = false;
};

// Makes `tape` the recording target of the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Creates the result node of an operation. Recording happens only when a tape
// is active and at least one parent requires grad; otherwise `backward` is
// dropped and the result is a constant.
Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<Tensor> parents, BackwardFn backward);

}  // namespace lpnet::nd
