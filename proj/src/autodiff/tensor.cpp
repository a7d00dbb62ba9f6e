#include "stalign/autodiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <type_traits>
#include <unordered_set>

#include "stalign/autodiff/parallel.hpp"

namespace stalign::ad {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

RowMix RowMix::gather(std::span<const std::size_t> indices) {
    RowMix mix;
    mix.rows.reserve(indices.size());
    for (std::size_t i : indices) mix.rows.push_back({{i, 1.0}});
    return mix;
}

// ---- BasicTensor ----------------------------------------------------------

template <typename T>
BasicTensor<T> BasicTensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError("tensor: zero-length dimension in shape " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("tensor: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return BasicTensor(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T fill, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<T>(n, fill), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T v, bool requires_grad) {
    return from({}, {v}, requires_grad);
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t i) const {
    if (i >= rank()) {
        throw ShapeError("tensor: axis " + std::to_string(i) + " out of range for " + shape_str(shape()));
    }
    return node_->shape[i];
}

template <typename T>
T BasicTensor<T>::item() const {
    if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
    return node_->value[0];
}

template <typename T>
void BasicTensor<T>::zero_grad() {
    node_->grad.clear();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
    return from(node_->shape, node_->value, false);
}

template <typename T>
void BasicTensor<T>::backward() {
    if (numel() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " + shape_str(shape()));
    }
    if (node_->backpropagated) throw ContractError("backward: this tape was already back-propagated");
    if (!node_->requires_grad) throw ContractError("backward: loss does not depend on any parameter");

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node<T>* p = n->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                if (p->backpropagated) {
                    throw ContractError("backward: graph contains a node from an already back-propagated tape");
                }
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->ensure_grad()[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
    // Release the tape; interior nodes cannot be reused for another pass.
    for (Node<T>* n : order) {
        if (n->backward_fn) {
            n->backward_fn = nullptr;
            n->parents.clear();
            n->backpropagated = true;
        }
    }
    node_->backpropagated = true;
}

template class BasicTensor<float>;
template class BasicTensor<double>;

// ---- op helpers -----------------------------------------------------------

namespace {

template <typename T>
bool any_requires_grad(std::initializer_list<const BasicTensor<T>*> xs) {
    for (const auto* x : xs) {
        if (x->defined() && x->requires_grad()) return true;
    }
    return false;
}

/// Builds an op output. The backward closure is only kept when recording.
template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> values,
                           std::initializer_list<const BasicTensor<T>*> inputs,
                           std::function<void(Node<T>&)> backward_fn) {
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    if (grad_enabled() && any_requires_grad<T>(inputs)) {
        node->requires_grad = true;
        for (const auto* x : inputs) {
            // Undefined inputs (optional bias) still occupy a slot so closures
            // can address parents by position.
            node->parents.push_back(x->defined() ? x->node_ptr() : nullptr);
        }
        node->backward_fn = std::move(backward_fn);
    }
    return BasicTensor<T>(std::move(node));
}

template <typename T>
std::vector<T>* grad_of(Node<T>& self, std::size_t parent) {
    auto& p = self.parents[parent];
    if (!p || !p->requires_grad) return nullptr;
    return &p->ensure_grad();
}

template <typename T>
void require_rank(const BasicTensor<T>& x, std::size_t r, const char* op) {
    if (x.rank() != r) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                         shape_str(x.shape()));
    }
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

struct AxisSplit {
    std::size_t outer, len, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
    if (axis >= s.size()) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s));
    }
    AxisSplit a{1, s[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
    return a;
}

// Rows [i, i+R) of C += A * Bd, in 8-column register tiles. Every element is
// summed over p in ascending order.
template <std::size_t R, typename T>
void gemm_rows(const T* a, const double* bd, T* c, std::size_t i, std::size_t k, std::size_t n) {
    std::size_t j = 0;
    using v8d = double __attribute__((vector_size(64)));
    for (; j + 8 <= n; j += 8) {
        v8d t[R] = {};
        for (std::size_t p = 0; p < k; ++p) {
            v8d bv;
            std::memcpy(&bv, bd + p * n + j, sizeof bv);
            for (std::size_t r = 0; r < R; ++r) t[r] += static_cast<double>(a[(i + r) * k + p]) * bv;
        }
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t q = 0; q < 8; ++q) c[(i + r) * n + j + q] += static_cast<T>(t[r][q]);
    }
    for (; j < n; ++j) {
        for (std::size_t r = 0; r < R; ++r) {
            double t = 0.0;
            for (std::size_t p = 0; p < k; ++p) t += static_cast<double>(a[(i + r) * k + p]) * bd[p * n + j];
            c[(i + r) * n + j] += static_cast<T>(t);
        }
    }
}

// C[m×n] += A[m×k] * Bd[k×n], row-parallel, double accumulation.
template <typename T>
void gemm_nn_d(const T* a, const double* bd, T* c, std::size_t m, std::size_t k, std::size_t n) {
    parallel_for(m, [&](std::size_t r0, std::size_t r1) {
        std::size_t i = r0;
        for (; i + 4 <= r1; i += 4) gemm_rows<4>(a, bd, c, i, k, n);
        for (; i < r1; ++i) gemm_rows<1>(a, bd, c, i, k, n);
    });
}

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    if constexpr (std::is_same_v<T, double>) {
        gemm_nn_d(a, b, c, m, k, n);
    } else {
        const std::vector<double> bd(b, b + k * n);
        gemm_nn_d(a, bd.data(), c, m, k, n);
    }
}

// C[m×k] += G[m×n] * B[k×n]^T, via a transposed copy of B so the inner loop
// is an axpy rather than a serial dot product.
template <typename T>
void gemm_nt(const T* g, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
    std::vector<double> bt(n * k);
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
    gemm_nn_d(g, bt.data(), c, m, n, k);
}

// C[k×n] += A[m×k]^T * G[m×n]
template <typename T>
void gemm_tn(const T* a, const T* g, T* c, std::size_t m, std::size_t k, std::size_t n) {
    std::vector<T> at(k * m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
    if constexpr (std::is_same_v<T, double>) {
        gemm_nn_d(at.data(), g, c, k, m, n);
    } else {
        const std::vector<double> gd(g, g + m * n);
        gemm_nn_d(at.data(), gd.data(), c, k, m, n);
    }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

// ---- linear algebra -------------------------------------------------------

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    std::vector<T> out(m * n, T(0));
    gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
    return make_result<T>({m, n}, std::move(out), {&a, &b}, [m, k, n](Node<T>& self) {
        const T* g = self.grad.data();
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (auto* ga = grad_of(self, 0)) gemm_nt(g, bv.data(), ga->data(), m, n, k);
        if (auto* gb = grad_of(self, 1)) gemm_tn(av.data(), g, gb->data(), m, k, n);
    });
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
    require_rank(a, 2, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<T> out(m * n);
    const auto v = a.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
    return make_result<T>({n, m}, std::move(out), {&a}, [m, n](Node<T>& self) {
        if (auto* ga = grad_of(self, 0)) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += self.grad[j * m + i];
        }
    });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
    require_rank(x, 2, "linear");
    require_rank(w, 2, "linear");
    const std::size_t m = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
    if (w.dim(0) != in) {
        throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(w.shape()));
    }
    if (b.defined() && (b.rank() != 1 || b.dim(0) != out_dim)) {
        throw ShapeError("linear: bias " + shape_str(b.shape()) + " does not match weight " +
                         shape_str(w.shape()));
    }
    std::vector<T> out(m * out_dim, T(0));
    if (b.defined()) {
        const auto bv = b.values();
        for (std::size_t i = 0; i < m; ++i) std::copy(bv.begin(), bv.end(), out.begin() + i * out_dim);
    }
    gemm_nn(x.values().data(), w.values().data(), out.data(), m, in, out_dim);
    return make_result<T>({m, out_dim}, std::move(out), {&x, &w, &b}, [m, in, out_dim](Node<T>& self) {
        const T* g = self.grad.data();
        if (auto* gx = grad_of(self, 0)) gemm_nt(g, self.parents[1]->value.data(), gx->data(), m, out_dim, in);
        if (auto* gw = grad_of(self, 1)) gemm_tn(self.parents[0]->value.data(), g, gw->data(), m, in, out_dim);
        if (auto* gb = grad_of(self, 2)) {
            for (std::size_t j = 0; j < out_dim; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < m; ++i) s += g[i * out_dim + j];
                (*gb)[j] += static_cast<T>(s);
            }
        }
    });
}

// ---- elementwise ----------------------------------------------------------

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (auto* gp = grad_of(self, p)) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) (*gp)[i] += self.grad[i];
            }
        }
    });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "sub");
    std::vector<T> out(a.numel());
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
        if (auto* ga = grad_of(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
        if (auto* gb = grad_of(self, 1))
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*gb)[i] -= self.grad[i];
    });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (auto* ga = grad_of(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i] * bv[i];
        if (auto* gb = grad_of(self, 1))
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*gb)[i] += self.grad[i] * av[i];
    });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, double s) {
    std::vector<T> out(a.numel());
    const auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(av[i] * s);
    return make_result<T>(a.shape(), std::move(out), {&a}, [s](Node<T>& self) {
        if (auto* ga = grad_of(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += static_cast<T>(self.grad[i] * s);
    });
}

template <typename T>
BasicTensor<T> div_by_scalar(const BasicTensor<T>& a, const BasicTensor<T>& s) {
    if (s.numel() != 1) throw ShapeError("div_by_scalar: divisor has shape " + shape_str(s.shape()));
    const double sv = s.values()[0];
    if (sv == 0.0) throw ContractError("div_by_scalar: division by zero");
    std::vector<T> out(a.numel());
    const auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(av[i] / sv);
    return make_result<T>(a.shape(), std::move(out), {&a, &s}, [sv](Node<T>& self) {
        const auto& av = self.parents[0]->value;
        if (auto* ga = grad_of(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += static_cast<T>(self.grad[i] / sv);
        if (auto* gs = grad_of(self, 1)) {
            double acc = 0.0;
            for (std::size_t i = 0; i < self.grad.size(); ++i) acc += static_cast<double>(self.grad[i]) * av[i];
            (*gs)[0] += static_cast<T>(-acc / (sv * sv));
        }
    });
}

template <typename T>
BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& b) {
    if (x.rank() == 0 || b.rank() != 1 || b.dim(0) != x.shape().back()) {
        throw ShapeError("add_bias: bias " + shape_str(b.shape()) + " does not match last axis of " +
                         shape_str(x.shape()));
    }
    const std::size_t n = b.dim(0);
    std::vector<T> out(x.values().begin(), x.values().end());
    const auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
    return make_result<T>(x.shape(), std::move(out), {&x, &b}, [n](Node<T>& self) {
        if (auto* gx = grad_of(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i];
        if (auto* gb = grad_of(self, 1)) {
            std::vector<double> acc(n, 0.0);
            for (std::size_t i = 0; i < self.grad.size(); ++i) acc[i % n] += self.grad[i];
            for (std::size_t j = 0; j < n; ++j) (*gb)[j] += static_cast<T>(acc[j]);
        }
    });
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
    std::vector<T> out(x.numel());
    const auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xv[i];
        out[i] = static_cast<T>(0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v))));
    }
    return make_result<T>(x.shape(), std::move(out), {&x}, [](Node<T>& self) {
        auto* gx = grad_of(self, 0);
        if (!gx) return;
        const auto& xv = self.parents[0]->value;
        for (std::size_t i = 0; i < xv.size(); ++i) {
            const double v = xv[i];
            const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
            const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
            (*gx)[i] += static_cast<T>(self.grad[i] * d);
        }
    });
}

template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) {
    std::vector<T> out(x.numel());
    const auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(std::tanh(static_cast<double>(xv[i])));
    return make_result<T>(x.shape(), std::move(out), {&x}, [](Node<T>& self) {
        if (auto* gx = grad_of(self, 0)) {
            for (std::size_t i = 0; i < self.value.size(); ++i) {
                const double y = self.value[i];
                (*gx)[i] += static_cast<T>(self.grad[i] * (1.0 - y * y));
            }
        }
    });
}

// ---- normalizations -------------------------------------------------------

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis) {
    const auto sp = split_axis(x.shape(), axis, "softmax");
    std::vector<T> out(x.numel());
    const auto xv = x.values();
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
            const std::size_t base = o * sp.len * sp.inner + in;
            double mx = -INFINITY;
            for (std::size_t i = 0; i < sp.len; ++i) mx = std::max(mx, static_cast<double>(xv[base + i * sp.inner]));
            double z = 0.0;
            for (std::size_t i = 0; i < sp.len; ++i) z += std::exp(xv[base + i * sp.inner] - mx);
            for (std::size_t i = 0; i < sp.len; ++i)
                out[base + i * sp.inner] = static_cast<T>(std::exp(xv[base + i * sp.inner] - mx) / z);
        }
    }
    return make_result<T>(x.shape(), std::move(out), {&x}, [sp](Node<T>& self) {
        auto* gx = grad_of(self, 0);
        if (!gx) return;
        const auto& y = self.value;
        const auto& g = self.grad;
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t in = 0; in < sp.inner; ++in) {
                const std::size_t base = o * sp.len * sp.inner + in;
                double dot = 0.0;
                for (std::size_t i = 0; i < sp.len; ++i) {
                    const std::size_t idx = base + i * sp.inner;
                    dot += static_cast<double>(g[idx]) * y[idx];
                }
                for (std::size_t i = 0; i < sp.len; ++i) {
                    const std::size_t idx = base + i * sp.inner;
                    (*gx)[idx] += static_cast<T>(y[idx] * (g[idx] - dot));
                }
            }
        }
    });
}

template <typename T>
BasicTensor<T> log_softmax(const BasicTensor<T>& x, std::size_t axis) {
    const auto sp = split_axis(x.shape(), axis, "log_softmax");
    std::vector<T> out(x.numel());
    const auto xv = x.values();
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
            const std::size_t base = o * sp.len * sp.inner + in;
            double mx = -INFINITY;
            for (std::size_t i = 0; i < sp.len; ++i) mx = std::max(mx, static_cast<double>(xv[base + i * sp.inner]));
            double z = 0.0;
            for (std::size_t i = 0; i < sp.len; ++i) z += std::exp(xv[base + i * sp.inner] - mx);
            const double lse = mx + std::log(z);
            for (std::size_t i = 0; i < sp.len; ++i)
                out[base + i * sp.inner] = static_cast<T>(xv[base + i * sp.inner] - lse);
        }
    }
    return make_result<T>(x.shape(), std::move(out), {&x}, [sp](Node<T>& self) {
        auto* gx = grad_of(self, 0);
        if (!gx) return;
        const auto& y = self.value;
        const auto& g = self.grad;
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t in = 0; in < sp.inner; ++in) {
                const std::size_t base = o * sp.len * sp.inner + in;
                double gsum = 0.0;
                for (std::size_t i = 0; i < sp.len; ++i) gsum += g[base + i * sp.inner];
                for (std::size_t i = 0; i < sp.len; ++i) {
                    const std::size_t idx = base + i * sp.inner;
                    (*gx)[idx] += static_cast<T>(g[idx] - std::exp(static_cast<double>(y[idx])) * gsum);
                }
            }
        }
    });
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          double eps) {
    if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
    const std::size_t n = x.shape().back();
    if (n < 2) throw ShapeError("layer_norm: last axis must have length >= 2, got " + shape_str(x.shape()));
    if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
        throw ShapeError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()) +
                         " do not match last axis of " + shape_str(x.shape()));
    }
    const std::size_t rows = x.numel() / n;
    std::vector<T> out(x.numel());
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto rstd = std::make_shared<std::vector<double>>(rows);
    const auto xv = x.values(), gv = gamma.values(), bv = beta.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = xv.data() + r * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(n);
        const double rs = 1.0 / std::sqrt(var + eps);
        (*rstd)[r] = rs;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (row[j] - mu) * rs;
            (*xhat)[r * n + j] = h;
            out[r * n + j] = static_cast<T>(h * gv[j] + bv[j]);
        }
    }
    return make_result<T>(x.shape(), std::move(out), {&x, &gamma, &beta}, [n, rows, xhat, rstd](Node<T>& self) {
        const auto& g = self.grad;
        const auto& gam = self.parents[1]->value;
        auto* gx = grad_of(self, 0);
        auto* gg = grad_of(self, 1);
        auto* gb = grad_of(self, 2);
        std::vector<double> acc_g(n, 0.0), acc_b(n, 0.0);
        std::vector<double> dh(n);
        for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double gj = g[r * n + j];
                const double h = (*xhat)[r * n + j];
                acc_g[j] += gj * h;
                acc_b[j] += gj;
                dh[j] = gj * gam[j];
                m1 += dh[j];
                m2 += dh[j] * h;
            }
            if (gx) {
                m1 /= static_cast<double>(n);
                m2 /= static_cast<double>(n);
                const double rs = (*rstd)[r];
                for (std::size_t j = 0; j < n; ++j) {
                    (*gx)[r * n + j] += static_cast<T>(rs * (dh[j] - m1 - (*xhat)[r * n + j] * m2));
                }
            }
        }
        if (gg)
            for (std::size_t j = 0; j < n; ++j) (*gg)[j] += static_cast<T>(acc_g[j]);
        if (gb)
            for (std::size_t j = 0; j < n; ++j) (*gb)[j] += static_cast<T>(acc_b[j]);
    });
}

template <typename T>
BasicTensor<T> l2_normalize_rows(const BasicTensor<T>& x, double eps) {
    require_rank(x, 2, "l2_normalize_rows");
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<T> out(x.numel());
    auto norms = std::make_shared<std::vector<double>>(m);
    const auto xv = x.values();
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += static_cast<double>(xv[i * n + j]) * xv[i * n + j];
        const double nr = std::sqrt(s);
        (*norms)[i] = nr;
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = static_cast<T>(xv[i * n + j] / (nr + eps));
    }
    return make_result<T>(x.shape(), std::move(out), {&x}, [m, n, eps, norms](Node<T>& self) {
        auto* gx = grad_of(self, 0);
        if (!gx) return;
        const auto& xv = self.parents[0]->value;
        for (std::size_t i = 0; i < m; ++i) {
            const double nr = (*norms)[i];
            const double denom = nr + eps;
            double xg = 0.0;
            for (std::size_t j = 0; j < n; ++j) xg += static_cast<double>(xv[i * n + j]) * self.grad[i * n + j];
            const double coef = nr > 0.0 ? xg / (nr * denom * denom) : 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                (*gx)[i * n + j] += static_cast<T>(self.grad[i * n + j] / denom - xv[i * n + j] * coef);
            }
        }
    });
}

// ---- structural -----------------------------------------------------------

template <typename T>
BasicTensor<T> concat(std::span<const BasicTensor<T>> xs, std::size_t axis) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = xs[0].shape();
    if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& x : xs) {
        const Shape& s = x.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
        if (!ok) throw ShapeError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(first));
        out_shape[axis] += s[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
    for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
    const std::size_t out_len = out_shape[axis];
    std::vector<T> out(shape_numel(out_shape));
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& x : xs) {
        offsets.push_back(off);
        const std::size_t len = x.shape()[axis];
        const auto v = x.values();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(v.begin() + o * len * inner, len * inner, out.begin() + (o * out_len + off) * inner);
        }
        off += len;
    }

    // Variable arity: parents are wired by hand instead of via make_result.
    auto node = std::make_shared<Node<T>>();
    node->shape = out_shape;
    node->value = std::move(out);
    bool rg = false;
    for (const auto& x : xs) rg = rg || x.requires_grad();
    if (grad_enabled() && rg) {
        node->requires_grad = true;
        std::vector<std::size_t> lens;
        for (const auto& x : xs) {
            node->parents.push_back(x.node_ptr());
            lens.push_back(x.shape()[axis]);
        }
        node->backward_fn = [outer, inner, out_len, offsets, lens](Node<T>& self) {
            for (std::size_t p = 0; p < self.parents.size(); ++p) {
                auto* gp = grad_of(self, p);
                if (!gp) continue;
                for (std::size_t o = 0; o < outer; ++o) {
                    const std::size_t src = (o * out_len + offsets[p]) * inner;
                    const std::size_t dst = o * lens[p] * inner;
                    for (std::size_t i = 0; i < lens[p] * inner; ++i) (*gp)[dst + i] += self.grad[src + i];
                }
            }
        };
    }
    return BasicTensor<T>(std::move(node));
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x, std::size_t axis) {
    const auto sp = split_axis(x.shape(), axis, "mean");
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    std::vector<T> out(sp.outer * sp.inner);
    const auto xv = x.values();
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
            double s = 0.0;
            for (std::size_t i = 0; i < sp.len; ++i) s += xv[(o * sp.len + i) * sp.inner + in];
            out[o * sp.inner + in] = static_cast<T>(s / static_cast<double>(sp.len));
        }
    }
    return make_result<T>(std::move(out_shape), std::move(out), {&x}, [sp](Node<T>& self) {
        auto* gx = grad_of(self, 0);
        if (!gx) return;
        const double w = 1.0 / static_cast<double>(sp.len);
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t i = 0; i < sp.len; ++i)
                for (std::size_t in = 0; in < sp.inner; ++in)
                    (*gx)[(o * sp.len + i) * sp.inner + in] += static_cast<T>(self.grad[o * sp.inner + in] * w);
    });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
    double s = 0.0;
    for (T v : x.values()) s += v;
    return make_result<T>({}, {static_cast<T>(s)}, {&x}, [](Node<T>& self) {
        if (auto* gx = grad_of(self, 0)) {
            for (auto& g : *gx) g += self.grad[0];
        }
    });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    std::vector<T> out(x.values().begin(), x.values().end());
    return make_result<T>(std::move(shape), std::move(out), {&x}, [](Node<T>& self) {
        if (auto* gx = grad_of(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i];
    });
}

template <typename T>
BasicTensor<T> diagonal(const BasicTensor<T>& x) {
    require_rank(x, 2, "diagonal");
    const std::size_t n = x.dim(0);
    if (x.dim(1) != n) throw ShapeError("diagonal: matrix " + shape_str(x.shape()) + " is not square");
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = x.values()[i * n + i];
    return make_result<T>({n}, std::move(out), {&x}, [n](Node<T>& self) {
        if (auto* gx = grad_of(self, 0))
            for (std::size_t i = 0; i < n; ++i) (*gx)[i * n + i] += self.grad[i];
    });
}

template <typename T>
BasicTensor<T> row_mix(const BasicTensor<T>& x, const RowMix& mix) {
    require_rank(x, 2, "row_mix");
    const std::size_t rows_in = x.dim(0), d = x.dim(1);
    const std::size_t rows_out = mix.rows.size();
    if (rows_out == 0) throw ShapeError("row_mix: empty recipe");
    std::vector<T> out(rows_out * d, T(0));
    const auto xv = x.values();
    std::vector<double> acc(d);
    for (std::size_t r = 0; r < rows_out; ++r) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (const auto& t : mix.rows[r]) {
            if (t.src >= rows_in) {
                throw ShapeError("row_mix: source row " + std::to_string(t.src) + " out of range for " +
                                 shape_str(x.shape()));
            }
            for (std::size_t j = 0; j < d; ++j) acc[j] += t.weight * xv[t.src * d + j];
        }
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = static_cast<T>(acc[j]);
    }
    auto recipe = std::make_shared<RowMix>(mix);
    return make_result<T>({rows_out, d}, std::move(out), {&x}, [recipe, d](Node<T>& self) {
        auto* gx = grad_of(self, 0);
        if (!gx) return;
        for (std::size_t r = 0; r < recipe->rows.size(); ++r) {
            for (const auto& t : recipe->rows[r]) {
                for (std::size_t j = 0; j < d; ++j)
                    (*gx)[t.src * d + j] += static_cast<T>(t.weight * self.grad[r * d + j]);
            }
        }
    });
}

// ---- attention ------------------------------------------------------------

template <typename T>
BasicTensor<T> attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                         const AttentionLayout& layout) {
    require_rank(q, 2, "attention");
    require_same_shape(q, k, "attention");
    require_same_shape(q, v, "attention");
    const std::size_t rows = q.dim(0), d = q.dim(1);
    const std::size_t s = layout.group_size, h = layout.num_heads;
    if (s == 0 || rows % s != 0) {
        throw ShapeError("attention: " + std::to_string(rows) + " rows do not split into groups of " +
                         std::to_string(s));
    }
    if (h == 0 || d % h != 0) {
        throw ShapeError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(h) +
                         " heads");
    }
    if (!layout.key_mask.empty() && layout.key_mask.size() != rows) {
        throw ShapeError("attention: key mask has " + std::to_string(layout.key_mask.size()) + " entries for " +
                         std::to_string(rows) + " rows");
    }
    const std::size_t groups = rows / s, dh = d / h;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto qv = q.values(), kv = k.values(), vv = v.values();
    auto probs = std::make_shared<std::vector<double>>(groups * h * s * s, 0.0);
    auto mask = std::make_shared<std::vector<unsigned char>>(layout.key_mask);
    std::vector<T> out(rows * d, T(0));

    parallel_for(groups, [&](std::size_t g0, std::size_t g1) {
        std::vector<double> logits(s);
        for (std::size_t g = g0; g < g1; ++g) {
            const std::size_t r0 = g * s;
            for (std::size_t hd = 0; hd < h; ++hd) {
                const std::size_t c0 = hd * dh;
                double* P = probs->data() + ((g * h + hd) * s) * s;
                for (std::size_t i = 0; i < s; ++i) {
                    double mx = -INFINITY;
                    for (std::size_t j = 0; j < s; ++j) {
                        if (!mask->empty() && !(*mask)[r0 + j]) continue;
                        double acc = 0.0;
                        for (std::size_t c = 0; c < dh; ++c)
                            acc += static_cast<double>(qv[(r0 + i) * d + c0 + c]) * kv[(r0 + j) * d + c0 + c];
                        logits[j] = acc * sc;
                        mx = std::max(mx, logits[j]);
                    }
                    if (mx == -INFINITY) continue;  // every key masked: row stays zero
                    double z = 0.0;
                    for (std::size_t j = 0; j < s; ++j) {
                        if (!mask->empty() && !(*mask)[r0 + j]) continue;
                        P[i * s + j] = std::exp(logits[j] - mx);
                        z += P[i * s + j];
                    }
                    for (std::size_t j = 0; j < s; ++j) P[i * s + j] /= z;
                    for (std::size_t c = 0; c < dh; ++c) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < s; ++j) acc += P[i * s + j] * vv[(r0 + j) * d + c0 + c];
                        out[(r0 + i) * d + c0 + c] = static_cast<T>(acc);
                    }
                }
            }
        }
    });
    if (layout.probs_out != nullptr) *layout.probs_out = *probs;

    return make_result<T>({rows, d}, std::move(out), {&q, &k, &v}, [=](Node<T>& self) {
        const auto& qv = self.parents[0]->value;
        const auto& kv = self.parents[1]->value;
        const auto& vv = self.parents[2]->value;
        auto* gq = grad_of(self, 0);
        auto* gk = grad_of(self, 1);
        auto* gv = grad_of(self, 2);
        const auto& go = self.grad;
        parallel_for(groups, [&](std::size_t g0, std::size_t g1) {
            std::vector<double> dp(s), ds(s * s);
            for (std::size_t g = g0; g < g1; ++g) {
                const std::size_t r0 = g * s;
                for (std::size_t hd = 0; hd < h; ++hd) {
                    const std::size_t c0 = hd * dh;
                    const double* P = probs->data() + ((g * h + hd) * s) * s;
                    for (std::size_t i = 0; i < s; ++i) {
                        // dP[i][j] = dO[i] . V[j]
                        double rowdot = 0.0;
                        for (std::size_t j = 0; j < s; ++j) {
                            double acc = 0.0;
                            if (P[i * s + j] != 0.0) {
                                for (std::size_t c = 0; c < dh; ++c)
                                    acc += static_cast<double>(go[(r0 + i) * d + c0 + c]) * vv[(r0 + j) * d + c0 + c];
                            }
                            dp[j] = acc;
                            rowdot += acc * P[i * s + j];
                        }
                        for (std::size_t j = 0; j < s; ++j) ds[i * s + j] = P[i * s + j] * (dp[j] - rowdot) * sc;
                    }
                    if (gv) {
                        for (std::size_t j = 0; j < s; ++j)
                            for (std::size_t c = 0; c < dh; ++c) {
                                double acc = 0.0;
                                for (std::size_t i = 0; i < s; ++i) acc += P[i * s + j] * go[(r0 + i) * d + c0 + c];
                                (*gv)[(r0 + j) * d + c0 + c] += static_cast<T>(acc);
                            }
                    }
                    if (gq) {
                        for (std::size_t i = 0; i < s; ++i)
                            for (std::size_t c = 0; c < dh; ++c) {
                                double acc = 0.0;
                                for (std::size_t j = 0; j < s; ++j) acc += ds[i * s + j] * kv[(r0 + j) * d + c0 + c];
                                (*gq)[(r0 + i) * d + c0 + c] += static_cast<T>(acc);
                            }
                    }
                    if (gk) {
                        for (std::size_t j = 0; j < s; ++j)
                            for (std::size_t c = 0; c < dh; ++c) {
                                double acc = 0.0;
                                for (std::size_t i = 0; i < s; ++i) acc += ds[i * s + j] * qv[(r0 + i) * d + c0 + c];
                                (*gk)[(r0 + j) * d + c0 + c] += static_cast<T>(acc);
                            }
                    }
                }
            }
        });
    });
}

// ---- explicit instantiations ----------------------------------------------

#define STALIGN_INSTANTIATE_OPS(T)                                                                       \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                        \
    template BasicTensor<T> transpose(const BasicTensor<T>&);                                            \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                           \
    template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                           \
    template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                           \
    template BasicTensor<T> scale(const BasicTensor<T>&, double);                                        \
    template BasicTensor<T> div_by_scalar(const BasicTensor<T>&, const BasicTensor<T>&);                 \
    template BasicTensor<T> add_bias(const BasicTensor<T>&, const BasicTensor<T>&);                      \
    template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
    template BasicTensor<T> gelu(const BasicTensor<T>&);                                                 \
    template BasicTensor<T> tanh(const BasicTensor<T>&);                                                 \
    template BasicTensor<T> softmax(const BasicTensor<T>&, std::size_t);                                 \
    template BasicTensor<T> log_softmax(const BasicTensor<T>&, std::size_t);                             \
    template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&,                     \
                                       const BasicTensor<T>&, double);                                   \
    template BasicTensor<T> concat(std::span<const BasicTensor<T>>, std::size_t);                        \
    template BasicTensor<T> mean(const BasicTensor<T>&, std::size_t);                                    \
    template BasicTensor<T> sum(const BasicTensor<T>&);                                                  \
    template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                       \
    template BasicTensor<T> diagonal(const BasicTensor<T>&);                                             \
    template BasicTensor<T> l2_normalize_rows(const BasicTensor<T>&, double);                            \
    template BasicTensor<T> row_mix(const BasicTensor<T>&, const RowMix&);                               \
    template BasicTensor<T> attention(const BasicTensor<T>&, const BasicTensor<T>&,                      \
                                      const BasicTensor<T>&, const AttentionLayout&);

STALIGN_INSTANTIATE_OPS(float)
STALIGN_INSTANTIATE_OPS(double)

#undef STALIGN_INSTANTIATE_OPS

}  // namespace stalign::ad
