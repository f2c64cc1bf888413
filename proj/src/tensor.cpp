#include "cenet/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

namespace cenet {

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape) {
    for (std::size_t extent : shape) {
        if (extent == 0) {
            throw std::invalid_argument("tensor: zero extent in shape " + shape_str(shape));
        }
    }
}

}  // namespace

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t extent : shape) n *= extent;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::span<double> Node::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<Node>()) {
    check_shape(shape);
    node_->data.assign(cenet::numel(shape), fill);
    node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : node_(std::make_shared<Node>()) {
    check_shape(shape);
    if (cenet::numel(shape) != data.size()) {
        throw std::invalid_argument("tensor: shape " + shape_str(shape) + " needs " +
                                    std::to_string(cenet::numel(shape)) + " values, got " +
                                    std::to_string(data.size()));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values) {
    return Tensor(std::move(shape), std::vector<double>(values));
}

const Shape& Tensor::shape() const {
    if (!node_) throw std::logic_error("tensor: use of undefined tensor");
    return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    const Shape& s = shape();
    if (axis >= s.size()) {
        throw std::out_of_range("tensor: axis " + std::to_string(axis) + " out of range for " +
                                shape_str(s));
    }
    return s[axis];
}

std::span<const double> Tensor::data() const {
    if (!node_) throw std::logic_error("tensor: use of undefined tensor");
    return node_->data;
}

std::span<double> Tensor::mutable_data() {
    if (!node_) throw std::logic_error("tensor: use of undefined tensor");
    return node_->data;
}

double Tensor::item() const {
    if (numel() != 1) {
        throw std::invalid_argument("tensor: item() on non-scalar " + shape_str(shape()));
    }
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    if (!node_) throw std::logic_error("tensor: use of undefined tensor");
    node_->requires_grad = on;
    return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw std::logic_error("tensor: no gradient recorded");
    return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
    if (!node_) throw std::logic_error("tensor: use of undefined tensor");
    return node_->grad_buffer();
}

void Tensor::zero_grad() {
    if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::clear_grad() {
    if (node_) {
        node_->grad.clear();
        node_->grad.shrink_to_fit();
    }
}

Tensor Tensor::clone() const {
    Tensor t(shape(), std::vector<double>(data().begin(), data().end()));
    t.node_->requires_grad = requires_grad();
    return t;
}

Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& parents,
                   std::function<void(Node&)> backward_fn) {
    Tensor out(std::move(shape), std::move(data));
    if (!g_grad_enabled) return out;
    bool any = false;
    for (const Tensor& p : parents) any = any || p.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->parents.reserve(parents.size());
    for (const Tensor& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward_fn = std::move(backward_fn);
    return out;
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw std::invalid_argument("backward: loss must have a single element, got " +
                                    (loss.defined() ? shape_str(loss.shape()) : "undefined"));
    }
    Node* root = loss.node().get();
    if (!root->requires_grad) {
        throw std::invalid_argument("backward: loss does not depend on any parameter");
    }

    // Iterative post-order DFS; parents always precede children in `order`.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order) {
        if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
    }
    root->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
    }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace cenet
