#include "advspk/graph.hpp"

#include <optional>

namespace advspk {

struct Graph::Node {
  std::string op;
  Tensor owned;
  const Tensor* external = nullptr;
  std::vector<std::size_t> parents;
  BackwardFn backward;
  bool requires_grad = false;
  std::optional<Tensor> grad;

  const Tensor& value() const { return external ? *external : owned; }
};

Graph::Graph(bool track_parameters) : track_parameters_(track_parameters) {}
Graph::~Graph() = default;

const Tensor& Var::value() const { return graph_->node(*this).value(); }

const Graph::Node& Graph::node(Var v) const {
  if (v.graph_ != this || v.id_ >= nodes_.size()) {
    throw std::invalid_argument("graph: variable does not belong to this graph");
  }
  return *nodes_[v.id_];
}

Var Graph::constant(Tensor value) {
  auto n = std::make_unique<Node>();
  n->op = "constant";
  n->owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant_ref(const Tensor& value) {
  auto n = std::make_unique<Node>();
  n->op = "constant";
  n->external = &value;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::input(Tensor value) {
  auto n = std::make_unique<Node>();
  n->op = "input";
  n->owned = std::move(value);
  n->requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(const Parameters& params, const std::string& name) {
  const Parameter& p = params.at(name);
  auto n = std::make_unique<Node>();
  n->op = "parameter:" + name;
  n->external = &p.value;
  n->requires_grad = track_parameters_ && p.trainable;
  nodes_.push_back(std::move(n));
  if (nodes_.back()->requires_grad) parameter_nodes_.emplace_back(name, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string_view op, Tensor value, std::vector<Var> parents, BackwardFn backward) {
  auto n = std::make_unique<Node>();
  n->op = std::string(op);
  n->owned = std::move(value);
  n->parents.reserve(parents.size());
  for (const Var& p : parents) {
    node(p);  // ownership check
    n->parents.push_back(p.id_);
    n->requires_grad = n->requires_grad || nodes_[p.id_]->requires_grad;
  }
  if (n->requires_grad) n->backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(Var root) {
  const Node& r = node(root);
  if (r.value().size() != 1) {
    throw ShapeError("graph: backward root '" + r.op + "' must be scalar, got shape " +
                     to_string(r.value().shape()));
  }
  if (!r.requires_grad) return;
  {
    Node& rn = *nodes_[root.id_];
    if (!rn.grad) rn.grad.emplace(rn.value().shape(), 0.0);
    (*rn.grad)[0] += 1.0;
  }
  std::vector<Tensor*> slots;
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = *nodes_[i];
    if (!n.grad || !n.backward) continue;
    slots.clear();
    for (auto pid : n.parents) {
      Node& p = *nodes_[pid];
      if (!p.requires_grad) {
        slots.push_back(nullptr);
        continue;
      }
      if (!p.grad) p.grad.emplace(p.value().shape(), 0.0);
      slots.push_back(&*p.grad);
    }
    n.backward(*n.grad, slots);
  }
}

Tensor Graph::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad) return *n.grad;
  return Tensor(n.value().shape(), 0.0);
}

std::map<std::string, Tensor> Graph::parameter_grads() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : parameter_nodes_) {
    const Node& n = *nodes_[id];
    Tensor g = n.grad ? *n.grad : Tensor(n.value().shape(), 0.0);
    auto [it, inserted] = out.emplace(name, g);
    if (!inserted) {
      // Same parameter bound twice in one graph; gradients add.
      for (std::size_t k = 0; k < g.size(); ++k) it->second[k] += g[k];
    }
  }
  return out;
}

void Graph::zero_grad() {
  for (auto& n : nodes_) n->grad.reset();
}

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

std::string_view Graph::op_name(Var v) const { return node(v).op; }

}  // namespace advspk
