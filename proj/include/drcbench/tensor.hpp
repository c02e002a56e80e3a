#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace drc::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array. float for training, double for gradient checks.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{});
    Tensor(Shape shape, std::vector<T> data);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* ptr() noexcept { return data_.data(); }
    const T* ptr() const noexcept { return data_.data(); }
    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    /// Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;
    void fill(T v);
    bool all_finite() const noexcept;

private:
    Shape shape_;
    std::vector<T> data_;
};

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until something flows into it
    bool requires_grad = false;
    bool consumed = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    /// grad += g, allocating a zero gradient on first use.
    void accumulate(std::span<const T> g);
    Tensor<T>& grad_buffer();
};

/// Handle to a node of the reverse-mode graph. Copies share the node.
template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    /// A leaf: inputs (requires_grad = false) or trainable parameters.
    static Var leaf(Tensor<T> value, bool requires_grad = false);

    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }
    /// Gradient after backward(); empty if nothing reached this node.
    const Tensor<T>& grad() const { return node_->grad; }
    void zero_grad();
    Node<T>* node() const { return node_.get(); }
    const std::shared_ptr<Node<T>>& shared() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<Node<T>> node_;
};

/// Builds a result node. When grad recording is off or no parent needs a
/// gradient, the node is a plain constant and `backward` is dropped.
/// Throws NumericError naming `op` if the value holds NaN/Inf.
template <typename T>
Var<T> make_result(const char* op, Tensor<T> value, std::vector<Var<T>> parents,
                   std::function<void(Node<T>&)> backward);

/// Populates .grad of every requires_grad node reachable from `loss`, then
/// releases the graph. Throws UsageError for a non-scalar loss or a graph
/// that was already consumed.
template <typename T>
void backward(Var<T>& loss);

/// Disables graph recording on this thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled() noexcept;

}  // namespace drc::ad
