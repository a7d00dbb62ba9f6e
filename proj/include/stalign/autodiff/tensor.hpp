#pragma once

// Dense tensors with a reverse-mode tape.
//
// A BasicTensor is a cheap handle to a shared node. Every op that sees an
// input requiring gradients records its parents and a backward closure on the
// output node; calling backward() on a scalar walks that record in reverse
// topological order. The record is rebuilt every forward pass and a given
// loss may be back-propagated exactly once.
//
// Storage is T (float for models, double for gradient checking). Reductions
// accumulate in double regardless of T.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stalign/errors.hpp"

namespace stalign::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

using stalign::ContractError;
using stalign::ShapeError;

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until something flows in
    bool requires_grad = false;
    bool backpropagated = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::vector<T>& ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
        return grad;
    }
};

/// Disables tape recording on this thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

template <typename T>
class BasicTensor {
public:
    using value_type = T;
    using NodePtr = std::shared_ptr<Node<T>>;

    BasicTensor() = default;
    explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}

    static BasicTensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
    static BasicTensor zeros(Shape shape, bool requires_grad = false);
    static BasicTensor full(Shape shape, T fill, bool requires_grad = false);
    static BasicTensor scalar(T v, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const;
    std::size_t numel() const { return node_->value.size(); }

    std::span<const T> values() const { return node_->value; }
    /// Direct write access. Only meaningful on leaves (parameters, inputs).
    std::span<T> mutable_values() { return node_->value; }
    T item() const;
    T at(std::size_t i) const { return node_->value.at(i); }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->ensure_grad(); }
    void zero_grad();

    /// Back-propagates from this scalar. Throws ContractError if the tensor is
    /// not a scalar or if this loss was already back-propagated.
    void backward();

    /// Copy of the values as a fresh leaf, detached from the tape.
    BasicTensor detach() const;

    Node<T>* node() const { return node_.get(); }
    const NodePtr& node_ptr() const { return node_; }

private:
    NodePtr node_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Row-combination recipe: output row r = sum of weight * input[src].
struct RowMix {
    struct Term {
        std::size_t src;
        double weight;
    };
    std::vector<std::vector<Term>> rows;

    static RowMix gather(std::span<const std::size_t> indices);
};

/// Layout of a grouped multi-head attention call over R = groups * group_size rows.
struct AttentionLayout {
    std::size_t group_size = 0;
    std::size_t num_heads = 1;
    /// Optional, size R. Zero marks a key that no query may attend to.
    std::vector<unsigned char> key_mask;
    /// Optional sink receiving probabilities, laid out [group][head][query][key].
    std::vector<double>* probs_out = nullptr;
};

// ---- ops ------------------------------------------------------------------

template <typename T> BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> transpose(const BasicTensor<T>& a);
template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> scale(const BasicTensor<T>& a, double s);
/// a / s where s is a one-element tensor (e.g. a learnable temperature).
template <typename T> BasicTensor<T> div_by_scalar(const BasicTensor<T>& a, const BasicTensor<T>& s);
/// x[..., n] + b[n]
template <typename T> BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& b);
/// x[m, in] * W[in, out] (+ b[out] when defined)
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> gelu(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> tanh(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis);
template <typename T> BasicTensor<T> log_softmax(const BasicTensor<T>& x, std::size_t axis);
/// Normalizes over the last axis; gamma and beta have the last axis' length.
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, double eps = 1e-5);
template <typename T> BasicTensor<T> concat(std::span<const BasicTensor<T>> xs, std::size_t axis);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& x, std::size_t axis);
template <typename T> BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);
/// Square matrix -> its diagonal as a vector.
template <typename T> BasicTensor<T> diagonal(const BasicTensor<T>& x);
/// Each row divided by its L2 norm (plus eps).
template <typename T> BasicTensor<T> l2_normalize_rows(const BasicTensor<T>& x, double eps = 1e-12);
template <typename T> BasicTensor<T> row_mix(const BasicTensor<T>& x, const RowMix& mix);
/// Scaled dot-product attention applied independently to each contiguous
/// group of rows and each head (column slice of width d / num_heads).
template <typename T>
BasicTensor<T> attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                         const AttentionLayout& layout);

template <typename T> BasicTensor<T> operator+(const BasicTensor<T>& a, const BasicTensor<T>& b) { return add(a, b); }
template <typename T> BasicTensor<T> operator-(const BasicTensor<T>& a, const BasicTensor<T>& b) { return sub(a, b); }
template <typename T> BasicTensor<T> operator*(const BasicTensor<T>& a, const BasicTensor<T>& b) { return mul(a, b); }

}  // namespace stalign::ad
