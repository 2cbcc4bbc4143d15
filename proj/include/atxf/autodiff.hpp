#pragma once

// Reverse-mode automatic differentiation over Tensor<T>.
//
// A Tape is the computation record: every primitive op appends one node
// (op name, input node ids, output value, backward closure holding whatever
// intermediates it needs). Nodes are appended in evaluation order, so the
// node list is already topologically sorted and backward() walks it once in
// reverse. Gradient contributions are accumulated in that fixed order, which
// keeps results bitwise reproducible for a given kernel ISA.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "atxf/tensor.hpp"

namespace atxf::ad {

template <typename T>
class Tape;

template <typename T>
class Var {
public:
    Var() = default;
    Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor<T>& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t id() const noexcept { return id_; }
    Tape<T>* tape() const noexcept { return tape_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
};

// Boolean mask (true = blocked) with a shape broadcastable against the tensor
// it is applied to.
struct Mask {
    Shape shape;
    std::vector<std::uint8_t> blocked;

    bool at_flat(std::size_t i) const { return blocked[i] != 0; }
};

template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf that never receives a gradient.
    Var<T> constant(Tensor<T> value);
    // Leaf whose gradient is tracked.
    Var<T> parameter(Tensor<T> value);

    // Appends an op node. Throws NumericError if `value` has a non-finite
    // entry. The closure is dropped when no input requires a gradient.
    Var<T> record(const char* op, Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward);

    // Reverse sweep from a one-element loss node.
    void backward(Var<T> loss);

    const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
    const char* op(std::size_t id) const { return nodes_[id].op; }
    const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Gradient of the last backward() w.r.t. `v`; zeros if v never received one.
    Tensor<T> grad(Var<T> v) const;
    bool has_grad(std::size_t id) const { return id < grads_.size() && grads_[id].size() != 0; }

    // Accumulation target for backward closures; zero-initialised on demand.
    Tensor<T>& grad_buffer(std::size_t id);
    const Tensor<T>& upstream(std::size_t id) const { return grads_[id]; }

    // Drops every node recorded after the first `size`; earlier Vars stay valid.
    void truncate(std::size_t size) {
        if (size < nodes_.size()) nodes_.erase(nodes_.begin() + static_cast<std::ptrdiff_t>(size), nodes_.end());
        grads_.clear();
    }

    // Number of node backward closures run by the last backward().
    std::size_t backward_visits() const noexcept { return backward_visits_; }

private:
    struct Node {
        const char* op;
        Tensor<T> value;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad;
    };

    std::vector<Node> nodes_;
    std::vector<Tensor<T>> grads_;
    std::size_t backward_visits_ = 0;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
    return tape_->value(id_);
}

// ---- primitive ops -------------------------------------------------------

// Batched matrix product [.., m, k] x [.., k, n]; batch dims broadcast.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

// Element-wise with numpy broadcasting.
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> a, T factor);
template <typename T>
Var<T> relu(Var<T> a);

template <typename T>
Var<T> softmax(Var<T> a, std::size_t axis);

// Normalises over the last axis; gamma/beta have shape [last].
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T epsilon);

// Gathers rows of table [vocab, width] -> ids_shape + [width].
// Throws EncodingError for ids outside [0, vocab).
template <typename T>
Var<T> embedding(Var<T> table, const std::vector<std::int32_t>& ids, const Shape& ids_shape);

// Blocked positions take `fill`; gradient is zero there.
template <typename T>
Var<T> masked_fill(Var<T> a, const Mask& mask, T fill);

template <typename T>
Var<T> reshape(Var<T> a, Shape shape);
template <typename T>
Var<T> permute(Var<T> a, const std::vector<std::size_t>& axes);
// Swaps the last two axes.
template <typename T>
Var<T> transpose(Var<T> a);

template <typename T>
Var<T> sum(Var<T> a);
template <typename T>
Var<T> mean(Var<T> a);

// Mean over positions whose target != pad_id of -log softmax(logits)[target].
// logits [.., vocab]; targets has one id per row. Returns 0 (and passes no
// gradient) when every target is padding.
template <typename T>
Var<T> sparse_cross_entropy(Var<T> logits, const std::vector<std::int32_t>& targets, std::int32_t pad_id);

// Inverted dropout; identity when rate == 0.
template <typename T>
Var<T> dropout(Var<T> a, T rate, std::mt19937_64& rng);

template <typename T>
Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <typename T>
Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <typename T>
Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }

}  // namespace atxf::ad
