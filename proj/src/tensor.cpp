#include "drcbench/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "drcbench/errors.hpp"

namespace drc::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel())
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

template <typename T>
void Tensor<T>::fill(T v) {
    std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor<T>& Node<T>::grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor<T>(value.shape());
    return grad;
}

template <typename T>
void Node<T>::accumulate(std::span<const T> g) {
    Tensor<T>& buf = grad_buffer();
    T* dst = buf.ptr();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

template <typename T>
Var<T> Var<T>::leaf(Tensor<T> value, bool requires_grad) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Var(std::move(node));
}

template <typename T>
void Var<T>::zero_grad() {
    node_->grad = Tensor<T>();
}

template <typename T>
Var<T> make_result(const char* op, Tensor<T> value, std::vector<Var<T>> parents,
                   std::function<void(Node<T>&)> backward) {
    if (!value.all_finite())
        throw NumericError(std::string("non-finite value produced by ") + op);
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->op = op;
    const bool needs = g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                                     [](const Var<T>& p) { return p.requires_grad(); });
    if (needs) {
        node->requires_grad = true;
        for (auto& p : parents) node->parents.push_back(p.shared());
        node->backward_fn = std::move(backward);
    }
    return Var<T>(std::move(node));
}

template <typename T>
void backward(Var<T>& loss) {
    Node<T>* root = loss.node();
    if (!root) throw UsageError("backward on an empty variable");
    if (root->consumed) throw UsageError("graph already consumed by a previous backward()");
    if (root->value.numel() != 1)
        throw UsageError("backward needs a scalar loss, got shape " + shape_str(root->value.shape()));

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    const T one = T(1);
    root->accumulate(std::span<const T>(&one, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
        if (!n->grad.empty() && !n->grad.all_finite())
            throw NumericError(std::string("non-finite gradient at ") + n->op);
    }
    root->consumed = true;
    for (Node<T>* n : order) {
        if (n->backward_fn) {
            n->consumed = true;
            n->backward_fn = nullptr;
            n->parents.clear();
            n->grad = Tensor<T>();
        }
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() noexcept { return g_grad_enabled; }

template class Tensor<float>;
template class Tensor<double>;
template struct Node<float>;
template struct Node<double>;
template class Var<float>;
template class Var<double>;
template Var<float> make_result(const char*, Tensor<float>, std::vector<Var<float>>,
                                std::function<void(Node<float>&)>);
template Var<double> make_result(const char*, Tensor<double>, std::vector<Var<double>>,
                                 std::function<void(Node<double>&)>);
template void backward(Var<float>&);
template void backward(Var<double>&);

}  // namespace drc::ad
