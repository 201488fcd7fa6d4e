#ifndef MOVSEM_NUMERIC_HPP
#define MOVSEM_NUMERIC_HPP

#include "movsem/common.hpp"
#include "movsem/io.hpp"

#include <cmath>
#include <cstring>
#include <deque>
#include <limits>
#include <span>
#include <string>
#include <vector>

#ifdef MOVSEM_USE_BLAS
#include <cblas.h>
#endif

namespace movsem::num {

// Additive bias that removes padded keys from attention softmaxes.
inline constexpr double kMaskBias = -1e9;
inline constexpr double kLayerNormEps = 1e-5;

// ---------------------------------------------------------------------------
// gemm: C = alpha * op(A) @ op(B) + beta * C, row-major.
// Backed by OpenBLAS when available; the scalar fallback keeps the same
// contract. Leading dimensions allow operating on column sub-blocks in place.
// ---------------------------------------------------------------------------

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);

#ifdef MOVSEM_USE_BLAS
template <>
inline void gemm<float>(bool ta, bool tb, int m, int n, int k, float alpha, const float* a,
                        int lda, const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
template <>
inline void gemm<double>(bool ta, bool tb, int m, int n, int k, double alpha, const double* a,
                         int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
#endif

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            T acc = 0;
            for (int l = 0; l < k; ++l) {
                T av = trans_a ? a[l * lda + i] : a[i * lda + l];
                T bv = trans_b ? b[j * ldb + l] : b[l * ldb + j];
                acc += av * bv;
            }
            c[i * ldc + j] = alpha * acc + (beta == T(0) ? T(0) : beta * c[i * ldc + j]);
        }
    }
}

// ---------------------------------------------------------------------------
// Trainable parameter with Adam state.
// ---------------------------------------------------------------------------

template <typename T>
struct Parameter {
    std::string name;
    std::vector<int> shape; // {rows, cols} or {n}
    std::vector<T> value;
    std::vector<T> grad;
    std::vector<T> adam_m;
    std::vector<T> adam_v;
    std::int64_t adam_step_count = 0;

    Parameter() = default;
    Parameter(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
        std::size_t total = 1;
        for (int d : shape) total *= static_cast<std::size_t>(d);
        value.assign(total, T(0));
        grad.assign(total, T(0));
        adam_m.assign(total, T(0));
        adam_v.assign(total, T(0));
    }

    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

    void fill_uniform(Rng& rng, double scale) {
        for (auto& x : value) x = static_cast<T>((rng.uniform() * 2.0 - 1.0) * scale);
    }
    // Glorot-style range for a {fan_in, fan_out} matrix
    void fill_xavier(Rng& rng) {
        double fan_in = shape.size() == 2 ? shape[0] : shape[0];
        double fan_out = shape.size() == 2 ? shape[1] : shape[0];
        fill_uniform(rng, std::sqrt(6.0 / (fan_in + fan_out)));
    }
    void fill_constant(T v) { std::fill(value.begin(), value.end(), v); }
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam update; clears gradients. A NaN gradient aborts with
/// the parameter's name.
template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, const AdamConfig& cfg) {
    for (Parameter<T>* p : params) {
        ++p->adam_step_count;
        double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->adam_step_count));
        double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->adam_step_count));
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            double g = static_cast<double>(p->grad[i]);
            if (std::isnan(g)) {
                throw NumericError("adam_step: NaN gradient in parameter " + p->name);
            }
            double m = cfg.beta1 * p->adam_m[i] + (1.0 - cfg.beta1) * g;
            double v = cfg.beta2 * p->adam_v[i] + (1.0 - cfg.beta2) * g * g;
            p->adam_m[i] = static_cast<T>(m);
            p->adam_v[i] = static_cast<T>(v);
            p->value[i] -= static_cast<T>(cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps));
        }
        p->zero_grad();
    }
}

// ---------------------------------------------------------------------------
// Reverse-mode tape over dense row-major 2-D tensors. One tape = one forward
// graph; tapes are single-threaded, independent tapes may run concurrently.
// ---------------------------------------------------------------------------

template <typename T>
class Tape;

template <typename T>
class Var {
  public:
    Var() = default;
    Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

    int id() const { return id_; }
    Tape<T>* tape() const { return tape_; }
    int rows() const;
    int cols() const;
    std::span<const T> value() const;
    std::span<const T> grad() const;

  private:
    Tape<T>* tape_ = nullptr;
    int id_ = -1;
};

template <typename T>
class Tape {
  public:
    /// grad_enabled = false builds a forward-only graph: parameters enter as
    /// plain constants, no gradient buffers, no backward closures.
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    struct Node {
        std::vector<int> shape; // {rows, cols}
        std::vector<T> val_store;
        const T* val = nullptr; // val_store.data() or external parameter memory
        std::vector<T> grad;
        std::vector<T> aux; // op scratch kept for backward (e.g. attention weights)
        bool requires_grad = false;
        std::function<void()> back;
        Parameter<T>* param = nullptr;
    };

    Var<T> constant(int rows, int cols, std::span<const T> values) {
        return make(rows, cols, values, false);
    }
    Var<T> leaf(int rows, int cols, std::span<const T> values) {
        return make(rows, cols, values, grad_enabled_);
    }
    /// Gradient-tracked view of a parameter (no copy). After backward(),
    /// collect_param_grads() adds the accumulated node gradients into the
    /// parameters' grad buffers.
    Var<T> param(Parameter<T>& p) {
        int rows = p.shape.size() == 2 ? p.shape[0] : 1;
        int cols = p.shape.size() == 2 ? p.shape[1] : p.shape[0];
        Node node;
        node.shape = {rows, cols};
        node.val = p.value.data();
        if (grad_enabled_) {
            node.grad.assign(p.size(), T(0));
            node.requires_grad = true;
            node.param = &p;
        }
        nodes_.push_back(std::move(node));
        return {this, static_cast<int>(nodes_.size() - 1)};
    }

    Var<T> op(int rows, int cols, const std::vector<int>& parents) {
        Node node;
        node.shape = {rows, cols};
        node.val_store.assign(static_cast<std::size_t>(rows) * cols, T(0));
        node.val = node.val_store.data();
        for (int pid : parents) {
            if (nodes_[pid].requires_grad) {
                node.requires_grad = true;
                break;
            }
        }
        if (node.requires_grad) node.grad.assign(node.val_store.size(), T(0));
        nodes_.push_back(std::move(node));
        return {this, static_cast<int>(nodes_.size() - 1)};
    }

    Node& n(int id) { return nodes_[id]; }
    const Node& n(int id) const { return nodes_[id]; }
    T* mut_val(int id) { return nodes_[id].val_store.data(); }

    /// Seed d(out)/d(out) = 1 for a 1x1 output and run the graph backwards.
    void backward(const Var<T>& out) {
        Node& o = nodes_[out.id()];
        if (o.shape[0] != 1 || o.shape[1] != 1) {
            throw ShapeError("backward: output must be 1x1, got " + format_shape(o.shape));
        }
        if (!o.requires_grad) return;
        o.grad[0] = T(1);
        for (int id = out.id(); id >= 0; --id) {
            Node& node = nodes_[id];
            if (node.requires_grad && node.back) node.back();
        }
    }

    /// Add (scale * node grad) into each referenced parameter's grad buffer.
    void collect_param_grads(T scale = T(1)) {
        for (auto& node : nodes_) {
            if (!node.param) continue;
            for (std::size_t i = 0; i < node.grad.size(); ++i) {
                node.param->grad[i] += scale * node.grad[i];
            }
        }
    }

    /// Visit the accumulated gradient of each parameter node (used by batch
    /// training to reduce into per-worker buffers).
    void visit_param_grads(const std::function<void(Parameter<T>*, std::span<const T>)>& fn) {
        for (auto& node : nodes_) {
            if (node.param) fn(node.param, std::span<const T>(node.grad.data(), node.grad.size()));
        }
    }

    std::size_t size() const { return nodes_.size(); }
    bool grad_enabled() const { return grad_enabled_; }

  private:
    Var<T> make(int rows, int cols, std::span<const T> values, bool track) {
        if (values.size() != static_cast<std::size_t>(rows) * cols) {
            throw ShapeError("tape: value count " + std::to_string(values.size()) +
                             " does not fill [" + std::to_string(rows) + "x" +
                             std::to_string(cols) + "]");
        }
        Node node;
        node.shape = {rows, cols};
        node.val_store.assign(values.begin(), values.end());
        node.val = node.val_store.data();
        node.requires_grad = track;
        if (track) node.grad.assign(node.val_store.size(), T(0));
        nodes_.push_back(std::move(node));
        return {this, static_cast<int>(nodes_.size() - 1)};
    }

    bool grad_enabled_ = true;
    std::deque<Node> nodes_;
};

template <typename T>
int Var<T>::rows() const {
    return tape_->n(id_).shape[0];
}
template <typename T>
int Var<T>::cols() const {
    return tape_->n(id_).shape[1];
}
template <typename T>
std::span<const T> Var<T>::value() const {
    const auto& node = tape_->n(id_);
    return {node.val, static_cast<std::size_t>(node.shape[0]) * node.shape[1]};
}
template <typename T>
std::span<const T> Var<T>::grad() const {
    const auto& node = tape_->n(id_);
    return {node.grad.data(), node.grad.size()};
}

namespace detail {

template <typename T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shapes [" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + "] vs [" + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + "]");
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Core operations (forward + registered backward).
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: [" + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         "] @ [" + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + "]");
    }
    Tape<T>& t = *a.tape();
    int m = a.rows(), k = a.cols(), n = b.cols();
    Var<T> out = t.op(m, n, {a.id(), b.id()});
    gemm<T>(false, false, m, n, k, T(1), t.n(a.id()).val, k, t.n(b.id()).val, n, T(0),
            t.mut_val(out.id()), n);
    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, a, b, out, m, n, k] {
            const T* go = t.n(out.id()).grad.data();
            if (t.n(a.id()).requires_grad) {
                gemm<T>(false, true, m, k, n, T(1), go, n, t.n(b.id()).val, n, T(1),
                        t.n(a.id()).grad.data(), k);
            }
            if (t.n(b.id()).requires_grad) {
                gemm<T>(true, false, k, n, m, T(1), t.n(a.id()).val, k, go, n, T(1),
                        t.n(b.id()).grad.data(), n);
            }
        };
    }
    return out;
}

/// a @ b^T without materializing the transpose.
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: [" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + "] @ [" + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + "]^T");
    }
    Tape<T>& t = *a.tape();
    int m = a.rows(), k = a.cols(), n = b.rows();
    Var<T> out = t.op(m, n, {a.id(), b.id()});
    gemm<T>(false, true, m, n, k, T(1), t.n(a.id()).val, k, t.n(b.id()).val, k, T(0),
            t.mut_val(out.id()), n);
    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, a, b, out, m, n, k] {
            const T* go = t.n(out.id()).grad.data();
            if (t.n(a.id()).requires_grad) {
                gemm<T>(false, false, m, k, n, T(1), go, n, t.n(b.id()).val, k, T(1),
                        t.n(a.id()).grad.data(), k);
            }
            if (t.n(b.id()).requires_grad) {
                gemm<T>(true, false, n, k, m, T(1), go, n, t.n(a.id()).val, k, T(1),
                        t.n(b.id()).grad.data(), k);
            }
        };
    }
    return out;
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    detail::require_same_shape("add", a, b);
    Tape<T>& t = *a.tape();
    Var<T> out = t.op(a.rows(), a.cols(), {a.id(), b.id()});
    const T* av = t.n(a.id()).val;
    const T* bv = t.n(b.id()).val;
    T* ov = t.mut_val(out.id());
    std::size_t total = a.value().size();
    for (std::size_t i = 0; i < total; ++i) ov[i] = av[i] + bv[i];
    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, a, b, out, total] {
            const T* go = t.n(out.id()).grad.data();
            for (Var<T> side : {a, b}) {
                auto& node = t.n(side.id());
                if (!node.requires_grad) continue;
                for (std::size_t i = 0; i < total; ++i) node.grad[i] += go[i];
            }
        };
    }
    return out;
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    detail::require_same_shape("sub", a, b);
    Tape<T>& t = *a.tape();
    Var<T> out = t.op(a.rows(), a.cols(), {a.id(), b.id()});
    const T* av = t.n(a.id()).val;
    const T* bv = t.n(b.id()).val;
    T* ov = t.mut_val(out.id());
    std::size_t total = a.value().size();
    for (std::size_t i = 0; i < total; ++i) ov[i] = av[i] - bv[i];
    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, a, b, out, total] {
            const T* go = t.n(out.id()).grad.data();
            if (t.n(a.id()).requires_grad) {
                for (std::size_t i = 0; i < total; ++i) t.n(a.id()).grad[i] += go[i];
            }
            if (t.n(b.id()).requires_grad) {
                for (std::size_t i = 0; i < total; ++i) t.n(b.id()).grad[i] -= go[i];
            }
        };
    }
    return out;
}

/// Broadcast-add a 1xN bias to every row of an MxN matrix.
template <typename T>
Var<T> add_rowvec(Var<T> a, Var<T> bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols()) {
        throw ShapeError("add_rowvec: bias [" + std::to_string(bias.rows()) + "x" +
                         std::to_string(bias.cols()) + "] for matrix of " +
                         std::to_string(a.cols()) + " columns");
    }
    Tape<T>& t = *a.tape();
    int m = a.rows(), n = a.cols();
    Var<T> out = t.op(m, n, {a.id(), bias.id()});
    const T* av = t.n(a.id()).val;
    const T* bv = t.n(bias.id()).val;
    T* ov = t.mut_val(out.id());
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) ov[i * n + j] = av[i * n + j] + bv[j];
    }
    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, a, bias, out, m, n] {
            const T* go = t.n(out.id()).grad.data();
            if (t.n(a.id()).requires_grad) {
                auto& ga = t.n(a.id()).grad;
                for (int i = 0; i < m * n; ++i) ga[i] += go[i];
            }
            if (t.n(bias.id()).requires_grad) {
                auto& gb = t.n(bias.id()).grad;
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) gb[j] += go[i * n + j];
                }
            }
        };
    }
    return out;
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
    Tape<T>& t = *a.tape();
    Var<T> out = t.op(a.rows(), a.cols(), {a.id()});
    const T* av = t.n(a.id()).val;
    T* ov = t.mut_val(out.id());
    std::size_t total = a.value().size();
    for (std::size_t i = 0; i < total; ++i) ov[i] = av[i] * s;
    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, a, out, s, total] {
            const T* go = t.n(out.id()).grad.data();
            auto& ga = t.n(a.id()).grad;
            for (std::size_t i = 0; i < total; ++i) ga[i] += go[i] * s;
        };
    }
    return out;
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    detail::require_same_shape("mul", a, b);
    Tape<T>& t = *a.tape();
    Var<T> out = t.op(a.rows(), a.cols(), {a.id(), b.id()});
    const T* av = t.n(a.id()).val;
    const T* bv = t.n(b.id()).val;
    T* ov = t.mut_val(out.id());
    std::size_t total = a.value().size();
    for (std::size_t i = 0; i < total; ++i) ov[i] = av[i] * bv[i];
    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, a, b, out, total] {
            const T* go = t.n(out.id()).grad.data();
            if (t.n(a.id()).requires_grad) {
                for (std::size_t i = 0; i < total; ++i) {
                    t.n(a.id()).grad[i] += go[i] * t.n(b.id()).val[i];
                }
            }
            if (t.n(b.id()).requires_grad) {
                for (std::size_t i = 0; i < total; ++i) {
                    t.n(b.id()).grad[i] += go[i] * t.n(a.id()).val[i];
                }
            }
        };
    }
    return out;
}

template <typename T>
Var<T> square(Var<T> a) {
    return mul(a, a);
}

/// Concatenate along axis 0 (stack rows) or axis 1 (widen columns).
template <typename T>
Var<T> concat(Var<T> a, Var<T> b, int axis) {
    Tape<T>& t = *a.tape();
    if (axis == 0) {
        if (a.cols() != b.cols()) {
            throw ShapeError("concat axis 0: column mismatch " + std::to_string(a.cols()) +
                             " vs " + std::to_string(b.cols()));
        }
        int m = a.rows() + b.rows(), n = a.cols();
        Var<T> out = t.op(m, n, {a.id(), b.id()});
        T* ov = t.mut_val(out.id());
        std::memcpy(ov, t.n(a.id()).val, a.value().size() * sizeof(T));
        std::memcpy(ov + a.value().size(), t.n(b.id()).val, b.value().size() * sizeof(T));
        if (t.n(out.id()).requires_grad) {
            t.n(out.id()).back = [&t, a, b, out] {
                const T* go = t.n(out.id()).grad.data();
                std::size_t na = a.value().size();
                if (t.n(a.id()).requires_grad) {
                    for (std::size_t i = 0; i < na; ++i) t.n(a.id()).grad[i] += go[i];
                }
                if (t.n(b.id()).requires_grad) {
                    for (std::size_t i = 0; i < b.value().size(); ++i) {
                        t.n(b.id()).grad[i] += go[na + i];
                    }
                }
            };
        }
        return out;
    }
    if (axis != 1) throw ShapeError("concat: axis must be 0 or 1");
    if (a.rows() != b.rows()) {
        throw ShapeError("concat axis 1: row mismatch " + std::to_string(a.rows()) + " vs " +
                         std::to_string(b.rows()));
    }
    int m = a.rows(), na = a.cols(), nb = b.cols();
    Var<T> out = t.op(m, na + nb, {a.id(), b.id()});
    T* ov = t.mut_val(out.id());
    for (int i = 0; i < m; ++i) {
        std::memcpy(ov + i * (na + nb), t.n(a.id()).val + i * na, na * sizeof(T));
        std::memcpy(ov + i * (na + nb) + na, t.n(b.id()).val + i * nb, nb * sizeof(T));
    }
    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, a, b, out, m, na, nb] {
            const T* go = t.n(out.id()).grad.data();
            for (int i = 0; i < m; ++i) {
                if (t.n(a.id()).requires_grad) {
                    for (int j = 0; j < na; ++j) {
                        t.n(a.id()).grad[i * na + j] += go[i * (na + nb) + j];
                    }
                }
                if (t.n(b.id()).requires_grad) {
                    for (int j = 0; j < nb; ++j) {
                        t.n(b.id()).grad[i * nb + j] += go[i * (na + nb) + na + j];
                    }
                }
            }
        };
    }
    return out;
}

/// Softmax along rows (axis 1) or columns (axis 0), max-shifted.
template <typename T>
Var<T> softmax(Var<T> a, int axis) {
    if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
    Tape<T>& t = *a.tape();
    int m = a.rows(), n = a.cols();
    Var<T> out = t.op(m, n, {a.id()});
    const T* av = t.n(a.id()).val;
    T* ov = t.mut_val(out.id());
    int outer = axis == 1 ? m : n;
    int inner = axis == 1 ? n : m;
    auto at = [&](int o, int i) { return axis == 1 ? o * n + i : i * n + o; };
    for (int o = 0; o < outer; ++o) {
        T mx = av[at(o, 0)];
        for (int i = 1; i < inner; ++i) mx = std::max(mx, av[at(o, i)]);
        T sum = 0;
        for (int i = 0; i < inner; ++i) {
            T e = std::exp(av[at(o, i)] - mx);
            ov[at(o, i)] = e;
            sum += e;
        }
        for (int i = 0; i < inner; ++i) ov[at(o, i)] /= sum;
    }
    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, a, out, outer, inner, at] {
            const T* go = t.n(out.id()).grad.data();
            const T* y = t.n(out.id()).val;
            auto& ga = t.n(a.id()).grad;
            for (int o = 0; o < outer; ++o) {
                T dotp = 0;
                for (int i = 0; i < inner; ++i) dotp += go[at(o, i)] * y[at(o, i)];
                for (int i = 0; i < inner; ++i) {
                    ga[at(o, i)] += (go[at(o, i)] - dotp) * y[at(o, i)];
                }
            }
        };
    }
    return out;
}

/// Row-wise layer normalization with affine parameters (1xN each).
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta) {
    if (gamma.rows() != 1 || gamma.cols() != x.cols() || beta.rows() != 1 ||
        beta.cols() != x.cols()) {
        throw ShapeError("layer_norm: affine params must be [1x" + std::to_string(x.cols()) + "]");
    }
    Tape<T>& t = *x.tape();
    int m = x.rows(), n = x.cols();
    Var<T> out = t.op(m, n, {x.id(), gamma.id(), beta.id()});
    const T* xv = t.n(x.id()).val;
    const T* gv = t.n(gamma.id()).val;
    const T* bv = t.n(beta.id()).val;
    T* ov = t.mut_val(out.id());
    auto& aux = t.n(out.id()).aux; // per row: mean, inv_std
    aux.assign(static_cast<std::size_t>(m) * 2, T(0));
    for (int i = 0; i < m; ++i) {
        T mean = 0;
        for (int j = 0; j < n; ++j) mean += xv[i * n + j];
        mean /= static_cast<T>(n);
        T var = 0;
        for (int j = 0; j < n; ++j) {
            T d = xv[i * n + j] - mean;
            var += d * d;
        }
        var /= static_cast<T>(n);
        T inv_std = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
        aux[i * 2] = mean;
        aux[i * 2 + 1] = inv_std;
        for (int j = 0; j < n; ++j) {
            ov[i * n + j] = (xv[i * n + j] - mean) * inv_std * gv[j] + bv[j];
        }
    }
    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, x, gamma, beta, out, m, n] {
            const T* go = t.n(out.id()).grad.data();
            const T* xv2 = t.n(x.id()).val;
            const T* gv2 = t.n(gamma.id()).val;
            const auto& aux2 = t.n(out.id()).aux;
            for (int i = 0; i < m; ++i) {
                T mean = aux2[i * 2], inv_std = aux2[i * 2 + 1];
                // accumulate affine grads
                if (t.n(gamma.id()).requires_grad) {
                    auto& gg = t.n(gamma.id()).grad;
                    for (int j = 0; j < n; ++j) {
                        gg[j] += go[i * n + j] * (xv2[i * n + j] - mean) * inv_std;
                    }
                }
                if (t.n(beta.id()).requires_grad) {
                    auto& gb = t.n(beta.id()).grad;
                    for (int j = 0; j < n; ++j) gb[j] += go[i * n + j];
                }
                if (t.n(x.id()).requires_grad) {
                    // dL/dx through the normalized value
                    T sum_dy = 0, sum_dy_xhat = 0;
                    for (int j = 0; j < n; ++j) {
                        T dy = go[i * n + j] * gv2[j];
                        T xhat = (xv2[i * n + j] - mean) * inv_std;
                        sum_dy += dy;
                        sum_dy_xhat += dy * xhat;
                    }
                    auto& gx = t.n(x.id()).grad;
                    for (int j = 0; j < n; ++j) {
                        T dy = go[i * n + j] * gv2[j];
                        T xhat = (xv2[i * n + j] - mean) * inv_std;
                        gx[i * n + j] += inv_std * (dy - (sum_dy + xhat * sum_dy_xhat) /
                                                             static_cast<T>(n));
                    }
                }
            }
        };
    }
    return out;
}

template <typename T>
Var<T> relu(Var<T> a) {
    Tape<T>& t = *a.tape();
    Var<T> out = t.op(a.rows(), a.cols(), {a.id()});
    const T* av = t.n(a.id()).val;
    T* ov = t.mut_val(out.id());
    std::size_t total = a.value().size();
    for (std::size_t i = 0; i < total; ++i) ov[i] = av[i] > T(0) ? av[i] : T(0);
    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, a, out, total] {
            const T* go = t.n(out.id()).grad.data();
            const T* av2 = t.n(a.id()).val;
            auto& ga = t.n(a.id()).grad;
            for (std::size_t i = 0; i < total; ++i) {
                if (av2[i] > T(0)) ga[i] += go[i];
            }
        };
    }
    return out;
}

/// Mean over kept rows (keep[i] != 0) -> 1xN. No kept rows -> zeros.
template <typename T>
Var<T> masked_mean(Var<T> x, const std::vector<std::uint8_t>& keep) {
    if (keep.size() != static_cast<std::size_t>(x.rows())) {
        throw ShapeError("masked_mean: mask length " + std::to_string(keep.size()) + " for " +
                         std::to_string(x.rows()) + " rows");
    }
    Tape<T>& t = *x.tape();
    int m = x.rows(), n = x.cols();
    Var<T> out = t.op(1, n, {x.id()});
    const T* xv = t.n(x.id()).val;
    T* ov = t.mut_val(out.id());
    int count = 0;
    for (int i = 0; i < m; ++i) {
        if (!keep[i]) continue;
        ++count;
        for (int j = 0; j < n; ++j) ov[j] += xv[i * n + j];
    }
    if (count > 0) {
        for (int j = 0; j < n; ++j) ov[j] /= static_cast<T>(count);
    }
    if (t.n(out.id()).requires_grad && count > 0) {
        t.n(out.id()).back = [&t, x, out, keep, m, n, count] {
            const T* go = t.n(out.id()).grad.data();
            auto& gx = t.n(x.id()).grad;
            T inv = T(1) / static_cast<T>(count);
            for (int i = 0; i < m; ++i) {
                if (!keep[i]) continue;
                for (int j = 0; j < n; ++j) gx[i * n + j] += go[j] * inv;
            }
        };
    }
    return out;
}

/// Per-block masked mean: rows are consecutive blocks of `block` rows; output
/// row b is the mean over kept rows of block b (zeros when none kept).
template <typename T>
Var<T> block_masked_mean(Var<T> x, int block, const std::vector<std::uint8_t>& keep) {
    if (x.rows() % block != 0) {
        throw ShapeError("block_masked_mean: rows " + std::to_string(x.rows()) +
                         " not divisible by block " + std::to_string(block));
    }
    if (keep.size() != static_cast<std::size_t>(x.rows())) {
        throw ShapeError("block_masked_mean: mask length mismatch");
    }
    Tape<T>& t = *x.tape();
    int m = x.rows(), n = x.cols(), nb = m / block;
    Var<T> out = t.op(nb, n, {x.id()});
    const T* xv = t.n(x.id()).val;
    T* ov = t.mut_val(out.id());
    std::vector<int> counts(nb, 0);
    for (int b = 0; b < nb; ++b) {
        for (int r = 0; r < block; ++r) {
            int i = b * block + r;
            if (!keep[i]) continue;
            ++counts[b];
            for (int j = 0; j < n; ++j) ov[b * n + j] += xv[i * n + j];
        }
        if (counts[b] > 0) {
            for (int j = 0; j < n; ++j) ov[b * n + j] /= static_cast<T>(counts[b]);
        }
    }
    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, x, out, keep, block, n, nb, counts] {
            const T* go = t.n(out.id()).grad.data();
            auto& gx = t.n(x.id()).grad;
            for (int b = 0; b < nb; ++b) {
                if (counts[b] == 0) continue;
                T inv = T(1) / static_cast<T>(counts[b]);
                for (int r = 0; r < block; ++r) {
                    int i = b * block + r;
                    if (!keep[i]) continue;
                    for (int j = 0; j < n; ++j) gx[i * n + j] += go[b * n + j] * inv;
                }
            }
        };
    }
    return out;
}

/// Normalize each row to unit L2 norm. A (near-)zero row is an error.
template <typename T>
Var<T> l2_normalize(Var<T> x) {
    Tape<T>& t = *x.tape();
    int m = x.rows(), n = x.cols();
    Var<T> out = t.op(m, n, {x.id()});
    const T* xv = t.n(x.id()).val;
    T* ov = t.mut_val(out.id());
    auto& aux = t.n(out.id()).aux;
    aux.assign(m, T(0));
    for (int i = 0; i < m; ++i) {
        T norm2 = 0;
        for (int j = 0; j < n; ++j) norm2 += xv[i * n + j] * xv[i * n + j];
        T norm = std::sqrt(norm2);
        if (!(norm > T(1e-12))) {
            throw NumericError("l2_normalize: zero-norm row " + std::to_string(i));
        }
        aux[i] = norm;
        for (int j = 0; j < n; ++j) ov[i * n + j] = xv[i * n + j] / norm;
    }
    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, x, out, m, n] {
            const T* go = t.n(out.id()).grad.data();
            const T* y = t.n(out.id()).val;
            const auto& aux2 = t.n(out.id()).aux;
            auto& gx = t.n(x.id()).grad;
            for (int i = 0; i < m; ++i) {
                T dotp = 0;
                for (int j = 0; j < n; ++j) dotp += go[i * n + j] * y[i * n + j];
                T inv = T(1) / aux2[i];
                for (int j = 0; j < n; ++j) {
                    gx[i * n + j] += (go[i * n + j] - dotp * y[i * n + j]) * inv;
                }
            }
        };
    }
    return out;
}

/// Block-diagonal multi-head scaled dot-product attention core.
/// q, k, v: RxD with R divisible by `block`; attention runs independently in
/// each block of `block` consecutive rows. `padded[i]` removes row i as a
/// key (additive -1e9 pre-softmax). A query row whose block has no valid key
/// yields zeros. Attention weights are kept in the node's aux buffer, laid
/// out block-major as [block_index][head][row_in_block][key_in_block].
template <typename T>
Var<T> block_attention(Var<T> q, Var<T> k, Var<T> v, int block, int heads,
                       const std::vector<std::uint8_t>& padded) {
    detail::require_same_shape("block_attention(q,k)", q, k);
    detail::require_same_shape("block_attention(q,v)", q, v);
    int r = q.rows(), d = q.cols();
    if (r % block != 0) {
        throw ShapeError("block_attention: rows " + std::to_string(r) +
                         " not divisible by block " + std::to_string(block));
    }
    if (d % heads != 0) {
        throw ShapeError("block_attention: width " + std::to_string(d) +
                         " not divisible by heads " + std::to_string(heads));
    }
    if (padded.size() != static_cast<std::size_t>(r)) {
        throw ShapeError("block_attention: mask length mismatch");
    }
    Tape<T>& t = *q.tape();
    int nb = r / block, dk = d / heads;
    T alpha = T(1) / std::sqrt(static_cast<T>(dk));
    Var<T> out = t.op(r, d, {q.id(), k.id(), v.id()});
    const T* qv = t.n(q.id()).val;
    const T* kv = t.n(k.id()).val;
    const T* vv = t.n(v.id()).val;
    T* ov = t.mut_val(out.id());
    auto& weights = t.n(out.id()).aux;
    weights.assign(static_cast<std::size_t>(nb) * heads * block * block, T(0));

    for (int b = 0; b < nb; ++b) {
        bool any_valid = false;
        for (int j = 0; j < block; ++j) any_valid |= !padded[b * block + j];
        if (!any_valid) continue; // output rows stay zero
        for (int h = 0; h < heads; ++h) {
            T* w = weights.data() + (static_cast<std::size_t>(b) * heads + h) * block * block;
            const T* qb = qv + static_cast<std::size_t>(b) * block * d + h * dk;
            const T* kb = kv + static_cast<std::size_t>(b) * block * d + h * dk;
            const T* vb = vv + static_cast<std::size_t>(b) * block * d + h * dk;
            // scores
            gemm<T>(false, true, block, block, dk, alpha, qb, d, kb, d, T(0), w, block);
            // mask + softmax per query row
            for (int i = 0; i < block; ++i) {
                T* row = w + i * block;
                for (int j = 0; j < block; ++j) {
                    if (padded[b * block + j]) row[j] += static_cast<T>(kMaskBias);
                }
                T mx = row[0];
                for (int j = 1; j < block; ++j) mx = std::max(mx, row[j]);
                T sum = 0;
                for (int j = 0; j < block; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    sum += row[j];
                }
                for (int j = 0; j < block; ++j) row[j] /= sum;
            }
            // context
            T* ob = ov + static_cast<std::size_t>(b) * block * d + h * dk;
            gemm<T>(false, false, block, dk, block, T(1), w, block, vb, d, T(0), ob, d);
        }
    }

    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, q, k, v, out, block, heads, padded, nb, dk, alpha] {
            int d = q.cols();
            const T* go = t.n(out.id()).grad.data();
            const T* qv2 = t.n(q.id()).val;
            const T* kv2 = t.n(k.id()).val;
            const T* vv2 = t.n(v.id()).val;
            const auto& weights2 = t.n(out.id()).aux;
            std::vector<T> dw(static_cast<std::size_t>(block) * block);
            for (int b = 0; b < nb; ++b) {
                bool any_valid = false;
                for (int j = 0; j < block; ++j) any_valid |= !padded[b * block + j];
                if (!any_valid) continue;
                for (int h = 0; h < heads; ++h) {
                    const T* w =
                        weights2.data() + (static_cast<std::size_t>(b) * heads + h) * block * block;
                    const T* gb = go + static_cast<std::size_t>(b) * block * d + h * dk;
                    const T* qb = qv2 + static_cast<std::size_t>(b) * block * d + h * dk;
                    const T* kb = kv2 + static_cast<std::size_t>(b) * block * d + h * dk;
                    const T* vb = vv2 + static_cast<std::size_t>(b) * block * d + h * dk;
                    // dV += W^T dCtx
                    if (t.n(v.id()).requires_grad) {
                        T* gv = t.n(v.id()).grad.data() +
                                static_cast<std::size_t>(b) * block * d + h * dk;
                        gemm<T>(true, false, block, dk, block, T(1), w, block, gb, d, T(1), gv, d);
                    }
                    // dW = dCtx V^T, then softmax backward
                    gemm<T>(false, true, block, block, dk, T(1), gb, d, vb, d, T(0), dw.data(),
                            block);
                    for (int i = 0; i < block; ++i) {
                        T dotp = 0;
                        for (int j = 0; j < block; ++j) dotp += dw[i * block + j] * w[i * block + j];
                        for (int j = 0; j < block; ++j) {
                            dw[i * block + j] = (dw[i * block + j] - dotp) * w[i * block + j];
                        }
                    }
                    if (t.n(q.id()).requires_grad) {
                        T* gq = t.n(q.id()).grad.data() +
                                static_cast<std::size_t>(b) * block * d + h * dk;
                        gemm<T>(false, false, block, dk, block, alpha, dw.data(), block, kb, d,
                                T(1), gq, d);
                    }
                    if (t.n(k.id()).requires_grad) {
                        T* gk = t.n(k.id()).grad.data() +
                                static_cast<std::size_t>(b) * block * d + h * dk;
                        gemm<T>(true, false, block, dk, block, alpha, dw.data(), block, qb, d,
                                T(1), gk, d);
                    }
                }
            }
        };
    }
    return out;
}

/// Row-wise log-sum-exp -> Mx1, max-shifted.
template <typename T>
Var<T> logsumexp_row(Var<T> x) {
    Tape<T>& t = *x.tape();
    int m = x.rows(), n = x.cols();
    Var<T> out = t.op(m, 1, {x.id()});
    const T* xv = t.n(x.id()).val;
    T* ov = t.mut_val(out.id());
    for (int i = 0; i < m; ++i) {
        T mx = xv[i * n];
        for (int j = 1; j < n; ++j) mx = std::max(mx, xv[i * n + j]);
        T sum = 0;
        for (int j = 0; j < n; ++j) sum += std::exp(xv[i * n + j] - mx);
        ov[i] = mx + std::log(sum);
    }
    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, x, out, m, n] {
            const T* go = t.n(out.id()).grad.data();
            const T* xv2 = t.n(x.id()).val;
            const T* lse = t.n(out.id()).val;
            auto& gx = t.n(x.id()).grad;
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    gx[i * n + j] += go[i] * std::exp(xv2[i * n + j] - lse[i]);
                }
            }
        };
    }
    return out;
}

/// Extract element (i, j) as a 1x1 node.
template <typename T>
Var<T> pick(Var<T> x, int i, int j) {
    if (i >= x.rows() || j >= x.cols()) {
        throw ShapeError("pick: (" + std::to_string(i) + "," + std::to_string(j) +
                         ") out of range");
    }
    Tape<T>& t = *x.tape();
    Var<T> out = t.op(1, 1, {x.id()});
    t.mut_val(out.id())[0] = t.n(x.id()).val[i * x.cols() + j];
    if (t.n(out.id()).requires_grad) {
        int n = x.cols();
        t.n(out.id()).back = [&t, x, out, i, j, n] {
            t.n(x.id()).grad[i * n + j] += t.n(out.id()).grad[0];
        };
    }
    return out;
}

template <typename T>
Var<T> sum(Var<T> x) {
    Tape<T>& t = *x.tape();
    Var<T> out = t.op(1, 1, {x.id()});
    const T* xv = t.n(x.id()).val;
    T acc = 0;
    std::size_t total = x.value().size();
    for (std::size_t i = 0; i < total; ++i) acc += xv[i];
    t.mut_val(out.id())[0] = acc;
    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, x, out, total] {
            T g = t.n(out.id()).grad[0];
            auto& gx = t.n(x.id()).grad;
            for (std::size_t i = 0; i < total; ++i) gx[i] += g;
        };
    }
    return out;
}

/// Euclidean distance between two equal-shape tensors -> 1x1.
template <typename T>
Var<T> euclidean(Var<T> a, Var<T> b) {
    detail::require_same_shape("euclidean", a, b);
    Tape<T>& t = *a.tape();
    Var<T> out = t.op(1, 1, {a.id(), b.id()});
    const T* av = t.n(a.id()).val;
    const T* bv = t.n(b.id()).val;
    std::size_t total = a.value().size();
    T acc = 0;
    for (std::size_t i = 0; i < total; ++i) {
        T d = av[i] - bv[i];
        acc += d * d;
    }
    T dist = std::sqrt(acc);
    t.mut_val(out.id())[0] = dist;
    if (t.n(out.id()).requires_grad) {
        t.n(out.id()).back = [&t, a, b, out, total, dist] {
            T g = t.n(out.id()).grad[0];
            T inv = dist > T(1e-12) ? T(1) / dist : T(0);
            for (std::size_t i = 0; i < total; ++i) {
                T d = (t.n(a.id()).val[i] - t.n(b.id()).val[i]) * inv * g;
                if (t.n(a.id()).requires_grad) t.n(a.id()).grad[i] += d;
                if (t.n(b.id()).requires_grad) t.n(b.id()).grad[i] -= d;
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Multi-head self-attention with projections, the spec-level composite.
// ---------------------------------------------------------------------------

template <typename T>
struct AttentionParams {
    Parameter<T> wq, bq, wk, bk, wv, bv, wo, bo;

    AttentionParams() = default;
    AttentionParams(const std::string& prefix, int d_model)
        : wq(prefix + ".wq", {d_model, d_model}),
          bq(prefix + ".bq", {d_model}),
          wk(prefix + ".wk", {d_model, d_model}),
          bk(prefix + ".bk", {d_model}),
          wv(prefix + ".wv", {d_model, d_model}),
          bv(prefix + ".bv", {d_model}),
          wo(prefix + ".wo", {d_model, d_model}),
          bo(prefix + ".bo", {d_model}) {}

    void init(Rng& rng) {
        for (Parameter<T>* w : {&wq, &wk, &wv, &wo}) w->fill_xavier(rng);
    }
    std::vector<Parameter<T>*> params() { return {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo}; }
};

/// Full multi-head self-attention over blocks of `block` consecutive rows
/// (block == rows gives ordinary full attention). `padded` removes keys.
template <typename T>
Var<T> multi_head_self_attention(Var<T> x, AttentionParams<T>& p, int heads, int block,
                                 const std::vector<std::uint8_t>& padded) {
    Tape<T>& t = *x.tape();
    Var<T> q = add_rowvec(matmul(x, t.param(p.wq)), t.param(p.bq));
    Var<T> k = add_rowvec(matmul(x, t.param(p.wk)), t.param(p.bk));
    Var<T> v = add_rowvec(matmul(x, t.param(p.wv)), t.param(p.bv));
    Var<T> ctx = block_attention(q, k, v, block, heads, padded);
    return add_rowvec(matmul(ctx, t.param(p.wo)), t.param(p.bo));
}

// ---------------------------------------------------------------------------
// Parameter <-> checkpoint bridging (float archives).
// ---------------------------------------------------------------------------

template <typename T>
void archive_put(io::TensorArchive& archive, const Parameter<T>& p) {
    io::NamedTensor t;
    t.shape = p.shape;
    t.values.assign(p.value.begin(), p.value.end());
    archive[p.name] = std::move(t);
}

template <typename T>
void archive_get(const io::TensorArchive& archive, Parameter<T>& p) {
    auto it = archive.find(p.name);
    if (it == archive.end()) throw DataError("checkpoint: missing tensor " + p.name);
    if (it->second.shape != p.shape) {
        throw DataError("checkpoint: tensor " + p.name + " has shape " +
                        format_shape(it->second.shape) + ", expected " + format_shape(p.shape));
    }
    p.value.assign(it->second.values.begin(), it->second.values.end());
}

} // namespace movsem::num

#endif // MOVSEM_NUMERIC_HPP
