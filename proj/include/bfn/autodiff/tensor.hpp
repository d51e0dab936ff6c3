#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "bfn/error.hpp"

namespace bfn::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One value in the graph. Interior nodes own a backward rule that pushes
/// their gradient into their parents.
struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward;

    std::size_t size() const noexcept { return value.size(); }

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

/// Handle to a 2-D real tensor (rows × cols). Copies share the node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(std::size_t rows, std::size_t cols) {
        return constant(rows, cols, std::vector<double>(rows * cols, 0.0));
    }

    static Tensor constant(std::size_t rows, std::size_t cols, std::vector<double> values) {
        if (values.size() != rows * cols) {
            throw shape_error("tensor data holds " + std::to_string(values.size()) + " values, shape " +
                              std::to_string(rows) + "x" + std::to_string(cols));
        }
        auto n = std::make_shared<Node>();
        n->rows = rows;
        n->cols = cols;
        n->value = std::move(values);
        return Tensor(std::move(n));
    }

    /// Leaf that accumulates gradients.
    static Tensor parameter(std::size_t rows, std::size_t cols, std::vector<double> values) {
        Tensor t = constant(rows, cols, std::move(values));
        t.node_->requires_grad = true;
        return t;
    }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    std::size_t rows() const noexcept { return node_->rows; }
    std::size_t cols() const noexcept { return node_->cols; }
    std::size_t size() const noexcept { return node_->value.size(); }
    std::vector<std::size_t> shape() const { return {node_->rows, node_->cols}; }
    std::string shape_str() const { return std::to_string(rows()) + "x" + std::to_string(cols()); }
    bool requires_grad() const noexcept { return node_->requires_grad; }

    const std::vector<double>& value() const noexcept { return node_->value; }
    std::vector<double>& mutable_value() noexcept { return node_->value; }
    double operator()(std::size_t i, std::size_t j) const { return node_->value[i * node_->cols + j]; }
    double item() const {
        if (size() != 1) throw shape_error("item() on a " + shape_str() + " tensor");
        return node_->value[0];
    }

    /// Gradient buffer; all zeros if nothing has flowed in yet.
    const std::vector<double>& grad() const { return node_->ensure_grad(); }
    std::vector<double>& mutable_grad() { return node_->ensure_grad(); }
    void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

    Node& node() const noexcept { return *node_; }
    const NodePtr& ptr() const noexcept { return node_; }

private:
    NodePtr node_;
};

/// Records operations in creation order. Only ops executed while a tape is
/// active (see Tape::Scope) and touching a gradient-requiring input are
/// recorded; otherwise ops run as plain forward computations.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    class Scope {
    public:
        explicit Scope(Tape& tape) : previous_(current()) { current() = &tape; }
        ~Scope() { current() = previous_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* previous_;
    };

    static Tape* active() noexcept { return current(); }

    void record(NodePtr node) { nodes_.push_back(std::move(node)); }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule once,
    /// in reverse creation order. Leaf gradients accumulate.
    void backward(const Tensor& loss) {
        if (loss.size() != 1) throw shape_error("backward needs a scalar loss, got " + loss.shape_str());
        loss.node().ensure_grad()[0] += 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node& n = **it;
            if (n.grad.empty() || !n.backward) continue;
            n.backward(n);
            ++visits_;
        }
    }

    std::size_t backward_visits() const noexcept { return visits_; }

    void clear() {
        nodes_.clear();
        visits_ = 0;
    }

private:
    static Tape*& current() noexcept {
        thread_local Tape* tape = nullptr;
        return tape;
    }

    std::vector<NodePtr> nodes_;
    std::size_t visits_ = 0;
};

namespace detail {

/// Allocates an op result; when any input needs a gradient and a tape is
/// active the node is linked to its inputs and recorded.
template <typename... Ts>
NodePtr make_node(std::size_t rows, std::size_t cols, const Ts&... inputs) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value.assign(rows * cols, 0.0);
    Tape* tape = Tape::active();
    if (tape && (inputs.requires_grad() || ...)) {
        n->requires_grad = true;
        (n->parents.push_back(inputs.ptr()), ...);
        tape->record(n);
    }
    return n;
}

inline NodePtr make_node_list(std::size_t rows, std::size_t cols, const std::vector<Tensor>& inputs) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value.assign(rows * cols, 0.0);
    Tape* tape = Tape::active();
    const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (tape && any) {
        n->requires_grad = true;
        for (const auto& t : inputs) n->parents.push_back(t.ptr());
        tape->record(n);
    }
    return n;
}

}  // namespace detail

}  // namespace bfn::ad
