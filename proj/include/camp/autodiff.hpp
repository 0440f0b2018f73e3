#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "camp/errors.hpp"
#include "camp/tensor.hpp"

namespace camp {

/// Reverse-mode tape. Nodes are appended in evaluation order, which is a
/// topological order by construction; backward() walks them exactly once in
/// reverse. Each node records its operation kind, parent ids, forward value
/// and (during backward) its gradient; saved forward context (pool argmax
/// indices, batch statistics, dropout masks) lives in the backward closure.
template <class T>
class Graph {
 public:
  using NodeId = int;
  using BackFn = std::function<void(Graph&)>;

  NodeId add(const char* kind, std::vector<NodeId> parents, Tensor<T> value,
             bool leaf_needs_grad = false) {
    bool needs = leaf_needs_grad;
    for (NodeId p : parents) {
      if (p < 0 || p >= static_cast<NodeId>(nodes_.size()))
        throw numeric_error("graph: parent id out of range");
      needs = needs || nodes_[p].needs_grad;
    }
    nodes_.push_back(Node{kind, std::move(parents), std::move(value), Tensor<T>{}, nullptr, needs});
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  void set_back(NodeId id, BackFn back) { nodes_[id].back = std::move(back); }

  NodeId leaf(Tensor<T> value, bool needs_grad, const char* kind = "leaf") {
    return add(kind, {}, std::move(value), needs_grad);
  }

  const Tensor<T>& value(NodeId id) const { return nodes_[id].value; }
  Tensor<T>& value(NodeId id) { return nodes_[id].value; }
  Tensor<T>& grad(NodeId id) { return nodes_[id].grad; }
  bool needs_grad(NodeId id) const { return nodes_[id].needs_grad; }
  const char* kind(NodeId id) const { return nodes_[id].kind; }
  const std::vector<NodeId>& parents(NodeId id) const { return nodes_[id].parents; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Runs reverse accumulation from a scalar root. May be called once per
  /// forward construction; a second call without rebuilding is rejected.
  void backward(NodeId root) {
    if (backward_done_)
      throw numeric_error("graph: backward already ran; rebuild the forward pass first");
    if (root < 0 || root >= static_cast<NodeId>(nodes_.size()))
      throw numeric_error("graph: backward root out of range");
    if (nodes_[root].value.size() != 1)
      throw numeric_error("graph: backward root must be scalar");
    backward_done_ = true;
    for (NodeId i = 0; i <= root; ++i)
      if (nodes_[i].needs_grad) nodes_[i].grad = Tensor<T>(nodes_[i].value.shape());
    nodes_[root].grad[0] = T{1};
    for (NodeId i = root; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.needs_grad && n.back) n.back(*this);
    }
  }

 private:
  struct Node {
    const char* kind;
    std::vector<NodeId> parents;
    Tensor<T> value;
    Tensor<T> grad;
    BackFn back;
    bool needs_grad;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace camp
