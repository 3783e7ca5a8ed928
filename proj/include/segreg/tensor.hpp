#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace segreg {

// Storage node shared by Tensor handles. Gradient buffers are allocated
// lazily on first accumulation, so a node that never receives gradient
// costs nothing on the backward pass.
struct TensorNode {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until something flows into it
    bool requires_grad = false;
    bool is_leaf = true;
    std::uint64_t id = 0;
};

// Dense multi-dimensional array of 64-bit reals with handle semantics:
// copying a Tensor aliases the same node. Scalars have an empty shape.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, bool requires_grad = false);

    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int extent(int axis) const { return node_->shape[static_cast<std::size_t>(axis)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(node_->data.size()); }
    bool is_scalar() const { return node_->data.size() == 1 && node_->shape.empty(); }

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }
    double value() const;  // scalar accessor; throws on non-scalar

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    bool has_grad() const { return !node_->grad.empty(); }
    // Allocates a zero buffer on first use.
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void zero_grad() { node_->grad.clear(); }

    // Leaf copy sharing no graph history; gradient stops here.
    Tensor detach() const;

    std::shared_ptr<TensorNode> node() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

// Ordered record of executed operations. Entries are appended in execution
// order, so walking them back to front is a reverse topological order of
// the graph: every consumer is processed before its producers.
class Tape {
public:
    struct Entry {
        std::shared_ptr<TensorNode> output;
        std::vector<std::shared_ptr<TensorNode>> inputs;
        std::function<void()> backward;
    };

    // One tape per execution context.
    static Tape& active();

    void record(Entry entry) { entries_.push_back(std::move(entry)); }
    void clear() { entries_.clear(); }
    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::vector<Entry> entries_;
};

// Seeds d(loss)/d(loss) = 1 and replays the active tape backward, populating
// grad on every requires_grad tensor reachable from loss. Repeated calls
// without zero_grad accumulate. Throws on a non-scalar argument.
void backward(const Tensor& loss);

// Builds an op output: requires_grad iff any input does, marked non-leaf.
Tensor op_result(std::vector<int> shape, std::vector<double> data,
                 const std::vector<Tensor>& inputs);

// Records the backward closure for an op output on the active tape. Only to
// be called when out.requires_grad(); the closure may assume out's grad
// buffer is non-empty when invoked.
void record_op(const Tensor& out, const std::vector<Tensor>& inputs,
               std::function<void()> backward_fn);

// Grad-buffer helpers for backward closures.
inline bool wants_grad(const std::shared_ptr<TensorNode>& n) { return n->requires_grad; }
inline std::vector<double>& ensure_grad(const std::shared_ptr<TensorNode>& n) {
    if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
    return n->grad;
}

std::string format_shape(const std::vector<int>& shape);
std::int64_t shape_size(const std::vector<int>& shape);

}  // namespace segreg
