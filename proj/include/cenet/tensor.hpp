#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cenet {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Feature maps are always laid out N x C x H x W.
enum class Axis : std::size_t { batch = 0, channel = 1, height = 2, width = 3 };

// Storage and autograd record behind a Tensor handle.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first use
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Called with this node's grad populated; accumulates into parents' grads.
    std::function<void(Node&)> backward_fn;

    bool is_leaf() const { return !backward_fn; }
    std::span<double> grad_buffer();
};

/// Dense 64-bit tensor with an optional gradient slot.
///
/// Copies share storage (handle semantics); `clone()` makes an independent
/// leaf. Op results keep a reference to their inputs while gradients are
/// enabled, so the recorded graph lives as long as the result does.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor scalar(double value) { return Tensor(Shape{1}, value); }
    static Tensor from(Shape shape, std::initializer_list<double> values);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t dim(Axis axis) const { return dim(static_cast<std::size_t>(axis)); }
    std::size_t ndim() const { return shape().size(); }
    std::size_t numel() const { return data().size(); }

    std::span<const double> data() const;
    // Parameter mutation (optimizers, checkpoint load, tests). Not for op results
    // that are still part of a live graph.
    std::span<double> mutable_data();
    double at(std::size_t i) const { return data()[i]; }
    double item() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on = true);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();
    void clear_grad();

    // Fresh leaf with copied data and no history.
    Tensor clone() const;

    const std::shared_ptr<Node>& node() const { return node_; }
    bool same_storage(const Tensor& other) const { return node_ == other.node_; }

private:
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    std::shared_ptr<Node> node_;

    friend Tensor make_result(Shape, std::vector<double>, const std::vector<Tensor>&,
                              std::function<void(Node&)>);
};

/// Wraps an op's output. When gradients are enabled and any parent requires
/// grad, the result records `backward_fn` and its parents for `backward`.
Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& parents,
                   std::function<void(Node&)> backward_fn);

/// Reverse-mode sweep from a single-element tensor. Interior gradients are
/// reset on every call; leaf gradients accumulate.
void backward(const Tensor& loss);

bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace cenet
