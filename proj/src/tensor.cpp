#include "segreg/tensor.hpp"

#include <atomic>
#include <sstream>
#include <stdexcept>

namespace segreg {

namespace {
std::atomic<std::uint64_t> g_next_id{1};
}

std::int64_t shape_size(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
}

std::string format_shape(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {
void validate_shape(const std::vector<int>& shape) {
    for (int e : shape) {
        if (e <= 0) {
            throw std::invalid_argument("tensor extent must be positive, got shape " +
                                        format_shape(shape));
        }
    }
}
}  // namespace

Tensor::Tensor(std::vector<int> shape, bool requires_grad) {
    validate_shape(shape);
    node_ = std::make_shared<TensorNode>();
    node_->shape = std::move(shape);
    node_->data.assign(static_cast<std::size_t>(shape_size(node_->shape)), 0.0);
    node_->requires_grad = requires_grad;
    node_->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    validate_shape(shape);
    if (shape_size(shape) != static_cast<std::int64_t>(data.size())) {
        throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                    " does not match shape " + format_shape(shape));
    }
    Tensor t;
    t.node_ = std::make_shared<TensorNode>();
    t.node_->shape = std::move(shape);
    t.node_->data = std::move(data);
    t.node_->requires_grad = requires_grad;
    t.node_->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({}, {value}, requires_grad);
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return Tensor(std::move(shape), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.node_->data.begin(), t.node_->data.end(), value);
    return t;
}

double Tensor::value() const {
    if (node_->data.size() != 1) {
        throw std::invalid_argument("value() requires a scalar tensor, got shape " + format_shape(node_->shape));
    }
    return node_->data[0];
}

std::vector<double>& Tensor::grad() {
    if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
    return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty()) {
        const_cast<TensorNode*>(node_.get())->grad.assign(node_->data.size(), 0.0);
    }
    return node_->grad;
}

Tensor Tensor::detach() const {
    Tensor t = from_data(node_->shape, node_->data, false);
    return t;
}

Tape& Tape::active() {
    thread_local Tape tape;
    return tape;
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw std::invalid_argument("backward() requires a scalar loss");
    }
    Tensor seed = loss;  // handle copy; shares the node
    seed.grad()[0] += 1.0;
    auto& entries = Tape::active().entries();
    for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
        // Nodes whose grad buffer was never touched received no gradient;
        // their sub-graphs are skipped entirely.
        if (it->output->grad.empty()) continue;
        it->backward();
    }
}

Tensor op_result(std::vector<int> shape, std::vector<double> data,
                 const std::vector<Tensor>& inputs) {
    bool needs_grad = false;
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
    Tensor out = Tensor::from_data(std::move(shape), std::move(data), needs_grad);
    out.node()->is_leaf = false;
    return out;
}

void record_op(const Tensor& out, const std::vector<Tensor>& inputs,
               std::function<void()> backward_fn) {
    Tape::Entry e;
    e.output = out.node();
    for (const auto& in : inputs) e.inputs.push_back(in.node());
    e.backward = std::move(backward_fn);
    Tape::active().record(std::move(e));
}

}  // namespace segreg
