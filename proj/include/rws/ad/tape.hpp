#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <deque>
#include <unordered_map>
#include <vector>

#include "rws/ad/tensor.hpp"

namespace rws::ad {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid for the lifetime of the tape.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradients of a scalar loss with respect to every requires-grad leaf.
class Gradients {
 public:
  const Tensor& operator[](Var leaf) const&;
  Tensor operator[](Var leaf) &&;
  const Tensor& at(std::size_t node_id) const&;
  Tensor at(std::size_t node_id) &&;
  bool contains(Var leaf) const { return by_id_.contains(leaf.id()); }
  std::size_t size() const { return by_id_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> by_id_;
};

// The computation record. Nodes are appended in execution order, so every
// input id precedes its consumer; backward walks the list once in reverse.
// A tape is confined to one thread and may be differentiated once.
class Tape {
 public:
  using Backward =
      std::function<void(Tape& tape, std::size_t self, std::span<const double> grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  Var scalar(double v) { return constant(Tensor::scalar(v)); }

  // Appends an op output. The node requires grad iff some input does; the
  // backward closure is dropped otherwise. Non-finite values throw.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward,
             const char* op_name);
  Var record(Tensor value, std::span<const Var> inputs, Backward backward, const char* op_name);

  Gradients backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient accumulator of a node, or nullptr when the node does not need one.
  double* grad_buffer(std::size_t id);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    bool is_leaf = false;
    Backward backward;
    std::vector<double> grad;
  };

  void check_open() const;

  std::deque<Node> nodes_;  // references to values stay valid as the tape grows
  bool consumed_ = false;
};

}  // namespace rws::ad
