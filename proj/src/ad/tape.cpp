#include "rws/ad/tape.hpp"

#include <string>
#include <utility>

#include "rws/error.hpp"

namespace rws::ad {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

const Tensor& Gradients::operator[](Var leaf) const& { return at(leaf.id()); }
Tensor Gradients::operator[](Var leaf) && { return at(leaf.id()); }
Tensor Gradients::at(std::size_t node_id) && { return std::as_const(*this).at(node_id); }

const Tensor& Gradients::at(std::size_t node_id) const& {
  auto it = by_id_.find(node_id);
  if (it == by_id_.end()) {
    throw RecordError("no gradient recorded for node " + std::to_string(node_id));
  }
  return it->second;
}

void Tape::check_open() const {
  if (consumed_) throw RecordError("computation record already consumed by backward()");
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  check_open();
  if (!value.all_finite()) throw NonFiniteError("leaf tensor contains non-finite values");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward,
                 const char* op_name) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward), op_name);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward,
                 const char* op_name) {
  check_open();
  if (!value.all_finite()) {
    throw NonFiniteError(std::string("non-finite result from op '") + op_name + "'");
  }
  bool rg = false;
  for (const Var& in : inputs) {
    if (&in.tape() != this) {
      throw RecordError(std::string("op '") + op_name + "' mixes inputs from different tapes");
    }
    rg = rg || nodes_[in.id()].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = rg;
  if (rg) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

double* Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad.data();
}

Gradients Tape::backward(Var loss) {
  check_open();
  if (&loss.tape() != this) throw RecordError("loss belongs to a different tape");
  if (loss.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  consumed_ = true;

  if (double* g = grad_buffer(loss.id())) g[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.is_leaf || !n.backward || n.grad.empty()) continue;
    // The closure may touch other nodes' buffers but never this node's grad,
    // so a span over it stays valid.
    n.backward(*this, i, std::span<const double>(n.grad));
  }

  Gradients out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (!n.is_leaf || !n.requires_grad) continue;
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    out.by_id_.emplace(i, Tensor(n.value.shape(), std::move(n.grad)));
  }
  return out;
}

}  // namespace rws::ad
