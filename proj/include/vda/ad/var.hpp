#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vda/core/tensor.hpp"

namespace vda {

/// Thread-local switch for graph recording. Off during plain backward passes,
/// on during double-backward (create_graph) and normal forward evaluation.
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

struct GradModeGuard {
  explicit GradModeGuard(bool enable) : prev(grad_mode_flag()) { grad_mode_flag() = enable; }
  ~GradModeGuard() { grad_mode_flag() = prev; }
  bool prev;
};

template <typename T>
class Var;

/// One node of the define-by-run graph. Backward functions are written in
/// terms of graph ops so that gradients are themselves differentiable,
/// which is what makes double backward (R1 penalty) work.
template <typename T>
struct Node {
  Tensor<T> value;
  bool requires_grad = false;
  bool leaf = true;
  std::vector<Var<T>> parents;
  std::function<std::vector<Var<T>>(const Var<T>& gout)> backward_fn;

  // Leaf-only gradient accumulator; grad_steps counts accumulations since the
  // last zero_grad so optimizers can skip untouched parameters.
  Tensor<T> grad;
  int64_t grad_steps = 0;
};

template <typename T>
class Var {
 public:
  Var() = default;

  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    node_->leaf = true;
  }

  static Var make_op(Tensor<T> value, std::vector<Var> parents,
                     std::function<std::vector<Var>(const Var&)> backward_fn) {
    bool need = false;
    if (grad_mode_flag()) {
      for (const auto& p : parents)
        if (p.defined() && p.requires_grad()) need = true;
    }
    Var v;
    v.node_ = std::make_shared<Node<T>>();
    v.node_->value = std::move(value);
    if (need) {
      v.node_->requires_grad = true;
      v.node_->leaf = false;
      v.node_->parents = std::move(parents);
      v.node_->backward_fn = std::move(backward_fn);
    }
    return v;
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& val() const { return node_->value; }
  Tensor<T>& mutable_val() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int64_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }
  Node<T>* node() const { return node_.get(); }

  void set_requires_grad(bool rg) {
    node_->requires_grad = rg;
    if (!rg) {
      node_->grad = Tensor<T>();
      node_->grad_steps = 0;
    }
  }

  /// Accumulated gradient of a leaf; undefined tensor if never touched.
  const Tensor<T>& grad() const { return node_->grad; }
  int64_t grad_steps() const { return node_->grad_steps; }

  void zero_grad() {
    if (node_->grad.defined()) node_->grad.fill(T(0));
    node_->grad_steps = 0;
  }

  /// A leaf sharing this value, cut off from the graph.
  Var detach() const { return Var(node_->value, false); }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
void topo_collect(Node<T>* root, std::vector<Node<T>*>& order) {
  // Iterative post-order DFS over parent edges; reversed it yields an order
  // where every node appears before all of its parents.
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node<T>* p = n->parents[idx].node();
      ++idx;
      if (p && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
}

template <typename T>
Var<T> add_grads(const Var<T>& a, const Var<T>& b);  // defined in ops.hpp

/// Shared backward executor. When `targets` is null, gradients accumulate
/// into leaf .grad buffers; otherwise they are returned for the requested
/// target nodes and leaf buffers are left untouched.
template <typename T>
std::vector<Var<T>> run_backward(const Var<T>& root, const std::vector<Var<T>>* targets,
                                 bool create_graph) {
  if (root.numel() != 1) throw ShapeError("backward: root must be scalar");
  if (!root.requires_grad()) throw Error("backward: root does not require grad");

  GradModeGuard guard(create_graph);

  std::vector<Node<T>*> order;
  topo_collect(root.node(), order);

  std::unordered_set<Node<T>*> target_set;
  if (targets)
    for (const auto& t : *targets) target_set.insert(t.node());

  // With explicit targets, only nodes that can reach one of them matter.
  // Post-order lists producers first, so one forward sweep settles the set;
  // everything else is skipped below, which keeps e.g. weight gradients out
  // of a gradient-penalty inner pass entirely.
  std::unordered_set<Node<T>*> marked;
  if (targets) {
    for (Node<T>* n : order) {
      if (target_set.count(n)) {
        marked.insert(n);
        continue;
      }
      for (const auto& pv : n->parents) {
        Node<T>* p = pv.node();
        if (p && marked.count(p)) {
          marked.insert(n);
          break;
        }
      }
    }
  }
  auto relevant = [&](Node<T>* n) { return !targets || marked.count(n); };

  std::unordered_map<Node<T>*, Var<T>> gmap;
  gmap[root.node()] = Var<T>(Tensor<T>::ones(root.shape()), false);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    auto found = gmap.find(n);
    if (found == gmap.end()) continue;
    Var<T> g = found->second;
    if (n->leaf) {
      if (!targets) {
        if (!n->grad.defined()) n->grad = Tensor<T>::zeros(n->value.shape());
        const T* src = g.val().data();
        T* dst = n->grad.data();
        for (int64_t i = 0, m = n->grad.numel(); i < m; ++i) dst[i] += src[i];
        n->grad_steps++;
      }
      continue;
    }
    if (!relevant(n)) {
      gmap.erase(n);
      continue;
    }
    auto pgrads = n->backward_fn(g);
    for (size_t i = 0; i < n->parents.size(); ++i) {
      Node<T>* p = n->parents[i].node();
      if (!p || !p->requires_grad || !pgrads[i].defined() || !relevant(p)) continue;
      auto slot = gmap.find(p);
      if (slot == gmap.end())
        gmap.emplace(p, pgrads[i]);
      else
        slot->second = add_grads(slot->second, pgrads[i]);
    }
    if (!targets || !target_set.count(n)) gmap.erase(n);
  }

  std::vector<Var<T>> out;
  if (targets) {
    out.reserve(targets->size());
    for (const auto& t : *targets) {
      auto f = gmap.find(t.node());
      if (f != gmap.end())
        out.push_back(f->second);
      else
        out.push_back(Var<T>(Tensor<T>::zeros(t.shape()), false));
    }
  }
  return out;
}

}  // namespace detail

/// Accumulates d(root)/d(leaf) into every reachable leaf's .grad.
template <typename T>
void backward(const Var<T>& root, bool create_graph = false) {
  detail::run_backward<T>(root, nullptr, create_graph);
}

/// Functional gradient of a scalar root w.r.t. explicit inputs; leaf .grad
/// buffers are not modified. With create_graph the results stay connected.
template <typename T>
std::vector<Var<T>> grad(const Var<T>& root, const std::vector<Var<T>>& inputs,
                         bool create_graph = false) {
  return detail::run_backward<T>(root, &inputs, create_graph);
}

}  // namespace vda
