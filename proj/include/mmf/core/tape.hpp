#pragma once

#include <deque>
#include <functional>
#include <stdexcept>
#include <vector>

#include "mmf/core/tensor.hpp"

namespace mmf {

// Reverse-mode autodiff over a dynamically built tape. Nodes are created in
// topological order by construction, so the backward pass is a single reverse
// sweep. Gradients are dense tensors allocated lazily per node.
//
// Single logical thread per tape; concurrent forward passes must use separate
// tapes over immutable parameters.
template <typename T>
class Tape {
  public:
    struct Node {
        Tensor<T> val;
        Tensor<T> grad;  // empty until touched by backward
        std::function<void(Tape&, int)> back;
        bool needs_grad = false;
        bool grad_alloc = false;
    };

    int leaf(Tensor<T> value, bool needs_grad = false) {
        Node node;
        node.val = std::move(value);
        node.needs_grad = needs_grad;
        nodes_.push_back(std::move(node));
        return int(nodes_.size()) - 1;
    }

    // `parents` is only used to propagate needs_grad; backward closures capture
    // the parent ids they need.
    int push(Tensor<T> value, std::initializer_list<int> parents,
             std::function<void(Tape&, int)> back) {
        return push_impl(std::move(value), parents.begin(), parents.end(), std::move(back));
    }
    int push(Tensor<T> value, const std::vector<int>& parents, std::function<void(Tape&, int)> back) {
        return push_impl(std::move(value), parents.begin(), parents.end(), std::move(back));
    }

    Tensor<T>& val(int i) { return nodes_[i].val; }
    const Tensor<T>& val(int i) const { return nodes_[i].val; }

    bool needs_grad(int i) const { return nodes_[i].needs_grad; }

    Tensor<T>& grad(int i) {
        Node& node = nodes_[i];
        if (!node.grad_alloc) {
            node.grad = Tensor<T>::zeros(node.val.shape);
            node.grad_alloc = true;
        }
        return node.grad;
    }

    bool has_grad(int i) const { return nodes_[i].grad_alloc; }

    void backward(int root) {
        if (root < 0 || root >= int(nodes_.size())) throw std::runtime_error("Tape::backward: bad root");
        grad(root);
        for (T& g : nodes_[root].grad.v) g = T(1);
        for (int i = root; i >= 0; --i) {
            Node& node = nodes_[i];
            if (!node.needs_grad || !node.grad_alloc || !node.back) continue;
            node.back(*this, i);
        }
    }

    std::size_t size() const { return nodes_.size(); }

    void clear() { nodes_.clear(); }

  private:
    template <typename It>
    int push_impl(Tensor<T> value, It first, It last, std::function<void(Tape&, int)> back) {
        Node node;
        node.val = std::move(value);
        for (It it = first; it != last; ++it)
            if (*it >= 0 && nodes_[*it].needs_grad) node.needs_grad = true;
        if (node.needs_grad) node.back = std::move(back);
        nodes_.push_back(std::move(node));
        return int(nodes_.size()) - 1;
    }

    std::deque<Node> nodes_;
};

}  // namespace mmf
