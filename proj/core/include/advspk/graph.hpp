#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advspk/parameters.hpp"
#include "advspk/tensor.hpp"

namespace advspk {

class Graph;

/// Handle to a node recorded on a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Operations execute eagerly as they are recorded, so a
/// graph is built fresh for each forward pass. Nodes are stored in creation
/// order, which is a topological order; backward walks it in reverse.
class Graph {
 public:
  /// A backward rule receives the node's output gradient and one gradient slot
  /// per parent (nullptr where the parent does not need a gradient). Rules
  /// accumulate into the slots.
  using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> parent_grads)>;

  /// With track_parameters false, parameters enter the graph as constants; used
  /// when only input gradients are needed (attack generation).
  explicit Graph(bool track_parameters = true);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  ~Graph();

  Var constant(Tensor value);
  /// Constant backed by external storage that must outlive the graph.
  Var constant_ref(const Tensor& value);
  /// Leaf whose gradient is collected by backward().
  Var input(Tensor value);
  Var parameter(const Parameters& params, const std::string& name);

  Var record(std::string_view op, Tensor value, std::vector<Var> parents, BackwardFn backward);

  /// Accumulates d(root)/d(node) into every node reachable from root.
  /// Throws ShapeError when root is not a scalar.
  void backward(Var root);
  /// Gradient accumulated for v; a zero tensor of v's shape if none reached it.
  Tensor grad(Var v) const;
  /// Gradients of all trainable parameters bound into this graph, by name.
  std::map<std::string, Tensor> parameter_grads() const;
  void zero_grad();

  bool requires_grad(Var v) const;
  std::string_view op_name(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool tracks_parameters() const { return track_parameters_; }

 private:
  friend class Var;
  struct Node;

  const Node& node(Var v) const;

  std::vector<std::unique_ptr<Node>> nodes_;
  std::vector<std::pair<std::string, std::size_t>> parameter_nodes_;
  bool track_parameters_;
};

}  // namespace advspk
