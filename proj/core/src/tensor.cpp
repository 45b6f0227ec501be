#include "biofuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "biofuse/errors.hpp"

namespace biofuse::autodiff {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (const auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

BoolMask BoolMask::falses(Shape s) {
    BoolMask m;
    m.data.assign(shape_numel(s), 0);
    m.shape = std::move(s);
    return m;
}

bool BoolMask::any() const {
    return std::any_of(data.begin(), data.end(), [](std::uint8_t b) { return b != 0; });
}

namespace {

void check_finite(const char* op, const std::vector<double>& v) {
    for (const double x : v) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string(op) + ": non-finite value in forward output");
        }
    }
}

std::shared_ptr<Node> make_op(const char* op, Shape shape,
                              std::vector<std::shared_ptr<Node>> parents) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value.assign(shape_numel(shape), 0.0);
    n->shape = std::move(shape);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) {
        if (p->requires_grad) {
            n->requires_grad = true;
            break;
        }
    }
    return n;
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
}

// b broadcasts over a's leading axes when its shape is a trailing suffix of a's.
bool trailing_broadcast(const Shape& a, const Shape& b) {
    if (b.size() > a.size()) return false;
    return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = make_op("leaf", std::move(shape), {});
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.values().begin(), t.values().end(), v);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("Tensor::from: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
    }
    auto n = std::make_shared<Node>();
    n->op = "leaf";
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from(Shape{}, {v}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double bound, Rng& rng, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& x : t.values()) x = rng.uniform(-bound, bound);
    return t;
}

const std::vector<double>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (numel() != 1) {
        throw UsageError("Tensor::item: tensor with " + std::to_string(numel()) +
                         " elements is not a scalar");
    }
    return node_->value[0];
}

void Tensor::backward() const {
    if (!defined()) throw UsageError("backward: undefined tensor");
    if (numel() != 1) {
        throw UsageError("backward: seed output must be scalar, got shape " + shape_str(shape()));
    }

    // Iterative post-order DFS; each node enters the order exactly once.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* n;
        std::size_t next;
    };
    std::vector<Frame> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node* p = f.n->parents[f.next++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->requires_grad || !n->backward_fn) continue;
        n->ensure_grad();
        n->backward_fn();
    }
}

// ---------------------------------------------------------------- arithmetic

namespace {

enum class BinKind { Add, Sub, Mul };

Tensor binary_op(const char* name, BinKind kind, const Tensor& a, const Tensor& b) {
    if (!trailing_broadcast(a.shape(), b.shape())) shape_fail(name, a, b);
    const std::size_t n = a.numel();
    const std::size_t chunk = b.numel() == 0 ? 1 : b.numel();

    auto out = make_op(name, a.shape(), {a.node(), b.node()});
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out->value;
    switch (kind) {
        case BinKind::Add:
            for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i % chunk];
            break;
        case BinKind::Sub:
            for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] - bv[i % chunk];
            break;
        case BinKind::Mul:
            for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i % chunk];
            break;
    }
    check_finite(name, ov);

    Node* o = out.get();
    auto an = a.node();
    auto bn = b.node();
    out->backward_fn = [o, an, bn, kind, n, chunk]() {
        const auto& g = o->grad;
        if (an->requires_grad) {
            an->ensure_grad();
            if (kind == BinKind::Mul) {
                for (std::size_t i = 0; i < n; ++i) an->grad[i] += g[i] * bn->value[i % chunk];
            } else {
                for (std::size_t i = 0; i < n; ++i) an->grad[i] += g[i];
            }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            switch (kind) {
                case BinKind::Add:
                    for (std::size_t i = 0; i < n; ++i) bn->grad[i % chunk] += g[i];
                    break;
                case BinKind::Sub:
                    for (std::size_t i = 0; i < n; ++i) bn->grad[i % chunk] -= g[i];
                    break;
                case BinKind::Mul:
                    for (std::size_t i = 0; i < n; ++i) bn->grad[i % chunk] += g[i] * an->value[i];
                    break;
            }
        }
    };
    return Tensor(out);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", BinKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", BinKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op("mul", BinKind::Mul, a, b); }

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double c) {
    auto out = make_op("scale", a.shape(), {a.node()});
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out->value[i] = a.values()[i] * c;
    check_finite("scale", out->value);

    Node* o = out.get();
    auto an = a.node();
    out->backward_fn = [o, an, c, n]() {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += o->grad[i] * c;
    };
    return Tensor(out);
}

Tensor add_scalar(const Tensor& a, double c) {
    auto out = make_op("add_scalar", a.shape(), {a.node()});
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out->value[i] = a.values()[i] + c;
    check_finite("add_scalar", out->value);

    Node* o = out.get();
    auto an = a.node();
    out->backward_fn = [o, an, n]() {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += o->grad[i];
    };
    return Tensor(out);
}

// ------------------------------------------------------------ linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0]) shape_fail("matmul", a, b);
    const std::size_t M = a.shape()[0], K = a.shape()[1], N = b.shape()[1];

    auto out = make_op("matmul", {M, N}, {a.node(), b.node()});
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out->value.data();
    for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t k = 0; k < K; ++k) {
            const double aik = av[i * K + k];
            const double* brow = bv + k * N;
            double* orow = ov + i * N;
            for (std::size_t j = 0; j < N; ++j) orow[j] += aik * brow[j];
        }
    }
    check_finite("matmul", out->value);

    Node* o = out.get();
    auto an = a.node();
    auto bn = b.node();
    out->backward_fn = [o, an, bn, M, K, N]() {
        const double* g = o->grad.data();
        if (an->requires_grad) {
            an->ensure_grad();
            double* da = an->grad.data();
            const double* bv2 = bn->value.data();
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t j = 0; j < N; ++j) {
                    const double gij = g[i * N + j];
                    for (std::size_t k = 0; k < K; ++k) da[i * K + k] += gij * bv2[k * N + j];
                }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            double* db = bn->grad.data();
            const double* av2 = an->value.data();
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t k = 0; k < K; ++k) {
                    const double aik = av2[i * K + k];
                    const double* grow = g + i * N;
                    double* dbrow = db + k * N;
                    for (std::size_t j = 0; j < N; ++j) dbrow[j] += aik * grow[j];
                }
        }
    };
    return Tensor(out);
}

namespace {

Tensor batched_matmul(const char* name, const Tensor& a, const Tensor& b, bool transpose_b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.shape()[0] != b.shape()[0]) shape_fail(name, a, b);
    const std::size_t H = a.shape()[0], M = a.shape()[1], K = a.shape()[2];
    const std::size_t bK = transpose_b ? b.shape()[2] : b.shape()[1];
    const std::size_t N = transpose_b ? b.shape()[1] : b.shape()[2];
    if (bK != K) shape_fail(name, a, b);

    auto out = make_op(name, {H, M, N}, {a.node(), b.node()});
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out->value.data();
    for (std::size_t h = 0; h < H; ++h) {
        const double* ah = av + h * M * K;
        const double* bh = bv + h * K * N;
        double* oh = ov + h * M * N;
        if (!transpose_b) {
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t k = 0; k < K; ++k) {
                    const double aik = ah[i * K + k];
                    for (std::size_t j = 0; j < N; ++j) oh[i * N + j] += aik * bh[k * N + j];
                }
        } else {
            // b slice is [N,K]
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t j = 0; j < N; ++j) {
                    double acc = 0.0;
                    const double* arow = ah + i * K;
                    const double* brow = bh + j * K;
                    for (std::size_t k = 0; k < K; ++k) acc += arow[k] * brow[k];
                    oh[i * N + j] = acc;
                }
        }
    }
    check_finite(name, out->value);

    Node* o = out.get();
    auto an = a.node();
    auto bn = b.node();
    out->backward_fn = [o, an, bn, H, M, K, N, transpose_b]() {
        const double* g = o->grad.data();
        for (std::size_t h = 0; h < H; ++h) {
            const double* gh = g + h * M * N;
            const double* ah = an->value.data() + h * M * K;
            const double* bh = bn->value.data() + h * K * N;
            if (an->requires_grad) {
                an->ensure_grad();
                double* da = an->grad.data() + h * M * K;
                if (!transpose_b) {
                    for (std::size_t i = 0; i < M; ++i)
                        for (std::size_t j = 0; j < N; ++j) {
                            const double gij = gh[i * N + j];
                            for (std::size_t k = 0; k < K; ++k)
                                da[i * K + k] += gij * bh[k * N + j];
                        }
                } else {
                    for (std::size_t i = 0; i < M; ++i)
                        for (std::size_t j = 0; j < N; ++j) {
                            const double gij = gh[i * N + j];
                            for (std::size_t k = 0; k < K; ++k)
                                da[i * K + k] += gij * bh[j * K + k];
                        }
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                double* db = bn->grad.data() + h * K * N;
                if (!transpose_b) {
                    for (std::size_t i = 0; i < M; ++i)
                        for (std::size_t k = 0; k < K; ++k) {
                            const double aik = ah[i * K + k];
                            for (std::size_t j = 0; j < N; ++j)
                                db[k * N + j] += aik * gh[i * N + j];
                        }
                } else {
                    // db slice is [N,K]
                    for (std::size_t i = 0; i < M; ++i)
                        for (std::size_t j = 0; j < N; ++j) {
                            const double gij = gh[i * N + j];
                            for (std::size_t k = 0; k < K; ++k)
                                db[j * K + k] += gij * ah[i * K + k];
                        }
                }
            }
        }
    };
    return Tensor(out);
}

}  // namespace

Tensor bmm(const Tensor& a, const Tensor& b) { return batched_matmul("bmm", a, b, false); }
Tensor bmm_nt(const Tensor& a, const Tensor& b) { return batched_matmul("bmm_nt", a, b, true); }

Tensor transpose(const Tensor& a) {
    if (a.ndim() != 2) throw ShapeError("transpose: expected 2-D, got " + shape_str(a.shape()));
    const std::size_t M = a.shape()[0], N = a.shape()[1];
    auto out = make_op("transpose", {N, M}, {a.node()});
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) out->value[j * M + i] = a.values()[i * N + j];

    Node* o = out.get();
    auto an = a.node();
    out->backward_fn = [o, an, M, N]() {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < N; ++j) an->grad[i * N + j] += o->grad[j * M + i];
    };
    return Tensor(out);
}

// -------------------------------------------------------------- structure

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
    }
    auto out = make_op("reshape", std::move(shape), {a.node()});
    out->value = a.values();

    Node* o = out.get();
    auto an = a.node();
    out->backward_fn = [o, an]() {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i];
    };
    return Tensor(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw UsageError("concat_rows: no parts");
    const std::size_t D = parts[0].shape().back();
    std::size_t rows = 0;
    std::vector<std::shared_ptr<Node>> parents;
    for (const auto& p : parts) {
        if (p.ndim() != 2 || p.shape()[1] != D) {
            throw ShapeError("concat_rows: part shape " + shape_str(p.shape()) +
                             " does not match width " + std::to_string(D));
        }
        rows += p.shape()[0];
        parents.push_back(p.node());
    }
    auto out = make_op("concat_rows", {rows, D}, std::move(parents));
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.values().begin(), p.values().end(), out->value.begin() + off);
        off += p.numel();
    }

    Node* o = out.get();
    auto parent_nodes = o->parents;  // copy for capture
    out->backward_fn = [o, parent_nodes]() {
        std::size_t off2 = 0;
        for (const auto& p : parent_nodes) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += o->grad[off2 + i];
            }
            off2 += p->value.size();
        }
    };
    return Tensor(out);
}

Tensor concat_flat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw UsageError("concat_flat: no parts");
    std::size_t total = 0;
    std::vector<std::shared_ptr<Node>> parents;
    for (const auto& p : parts) {
        total += p.numel();
        parents.push_back(p.node());
    }
    auto out = make_op("concat_flat", {total}, std::move(parents));
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.values().begin(), p.values().end(), out->value.begin() + off);
        off += p.numel();
    }

    Node* o = out.get();
    auto parent_nodes = o->parents;
    out->backward_fn = [o, parent_nodes]() {
        std::size_t off2 = 0;
        for (const auto& p : parent_nodes) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += o->grad[off2 + i];
            }
            off2 += p->value.size();
        }
    };
    return Tensor(out);
}

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
    if (a.ndim() != 2) throw ShapeError("slice_rows: expected 2-D, got " + shape_str(a.shape()));
    if (r0 >= r1 || r1 > a.shape()[0]) {
        throw UsageError("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") out of bounds for " + shape_str(a.shape()));
    }
    const std::size_t D = a.shape()[1];
    auto out = make_op("slice_rows", {r1 - r0, D}, {a.node()});
    std::copy(a.values().begin() + r0 * D, a.values().begin() + r1 * D, out->value.begin());

    Node* o = out.get();
    auto an = a.node();
    out->backward_fn = [o, an, r0, D]() {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[r0 * D + i] += o->grad[i];
    };
    return Tensor(out);
}

Tensor mean_rows(const Tensor& a) {
    if (a.ndim() != 2) throw ShapeError("mean_rows: expected 2-D, got " + shape_str(a.shape()));
    const std::size_t T = a.shape()[0], D = a.shape()[1];
    auto out = make_op("mean_rows", {D}, {a.node()});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t d = 0; d < D; ++d) out->value[d] += a.values()[t * D + d];
    for (std::size_t d = 0; d < D; ++d) out->value[d] /= static_cast<double>(T);
    check_finite("mean_rows", out->value);

    Node* o = out.get();
    auto an = a.node();
    out->backward_fn = [o, an, T, D]() {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double inv = 1.0 / static_cast<double>(T);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t d = 0; d < D; ++d) an->grad[t * D + d] += o->grad[d] * inv;
    };
    return Tensor(out);
}

Tensor sum(const Tensor& a) {
    auto out = make_op("sum", Shape{}, {a.node()});
    double acc = 0.0;
    for (const double x : a.values()) acc += x;
    out->value[0] = acc;
    check_finite("sum", out->value);

    Node* o = out.get();
    auto an = a.node();
    out->backward_fn = [o, an]() {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double g = o->grad[0];
        for (auto& dg : an->grad) dg += g;
    };
    return Tensor(out);
}

Tensor split_heads(const Tensor& a, std::size_t heads) {
    if (a.ndim() != 2 || heads == 0 || a.shape()[1] % heads != 0) {
        throw ShapeError("split_heads: " + shape_str(a.shape()) + " into " +
                         std::to_string(heads) + " heads");
    }
    const std::size_t T = a.shape()[0], D = a.shape()[1], dh = D / heads;
    auto out = make_op("split_heads", {heads, T, dh}, {a.node()});
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = 0; i < dh; ++i)
                out->value[(h * T + t) * dh + i] = a.values()[t * D + h * dh + i];

    Node* o = out.get();
    auto an = a.node();
    out->backward_fn = [o, an, heads, T, D, dh]() {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t i = 0; i < dh; ++i)
                    an->grad[t * D + h * dh + i] += o->grad[(h * T + t) * dh + i];
    };
    return Tensor(out);
}

Tensor merge_heads(const Tensor& a) {
    if (a.ndim() != 3) throw ShapeError("merge_heads: expected 3-D, got " + shape_str(a.shape()));
    const std::size_t H = a.shape()[0], T = a.shape()[1], dh = a.shape()[2];
    auto out = make_op("merge_heads", {T, H * dh}, {a.node()});
    for (std::size_t h = 0; h < H; ++h)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = 0; i < dh; ++i)
                out->value[t * (H * dh) + h * dh + i] = a.values()[(h * T + t) * dh + i];

    Node* o = out.get();
    auto an = a.node();
    out->backward_fn = [o, an, H, T, dh]() {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t i = 0; i < dh; ++i)
                    an->grad[(h * T + t) * dh + i] += o->grad[t * (H * dh) + h * dh + i];
    };
    return Tensor(out);
}

// ---------------------------------------------------- neural building blocks

Tensor masked_softmax(const Tensor& logits, const std::optional<BoolMask>& mask) {
    if (mask && mask->shape != logits.shape()) {
        throw ShapeError("masked_softmax: mask shape " + shape_str(mask->shape) +
                         " does not match logits " + shape_str(logits.shape()));
    }
    if (logits.ndim() == 0) throw ShapeError("masked_softmax: scalar input");
    const std::size_t T = logits.shape().back();
    const std::size_t rows = logits.numel() / T;
    const std::uint8_t* m = mask ? mask->data.data() : nullptr;

    auto out = make_op("masked_softmax", logits.shape(), {logits.node()});
    const double* x = logits.values().data();
    double* w = out->value.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * T;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < T; ++j) {
            if (m && m[base + j]) continue;
            mx = std::max(mx, x[base + j]);
        }
        if (mx == -std::numeric_limits<double>::infinity()) {
            // every edge in this row silenced: zero context contribution
            for (std::size_t j = 0; j < T; ++j) w[base + j] = 0.0;
            continue;
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < T; ++j) {
            if (m && m[base + j]) {
                w[base + j] = 0.0;
            } else {
                const double e = std::exp(x[base + j] - mx);
                w[base + j] = e;
                denom += e;
            }
        }
        for (std::size_t j = 0; j < T; ++j) w[base + j] /= denom;
    }
    check_finite("masked_softmax", out->value);

    Node* o = out.get();
    auto ln = logits.node();
    out->backward_fn = [o, ln, rows, T]() {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const double* wv = o->value.data();
        const double* g = o->grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t base = r * T;
            double dot = 0.0;
            for (std::size_t j = 0; j < T; ++j) dot += wv[base + j] * g[base + j];
            for (std::size_t j = 0; j < T; ++j)
                ln->grad[base + j] += wv[base + j] * (g[base + j] - dot);
        }
    };
    return Tensor(out);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.ndim() == 0) throw ShapeError("layer_norm: scalar input");
    const std::size_t D = x.shape().back();
    if (gamma.numel() != D || beta.numel() != D) {
        throw ShapeError("layer_norm: gamma/beta length must be " + std::to_string(D));
    }
    const std::size_t rows = x.numel() / D;

    auto out = make_op("layer_norm", x.shape(), {x.node(), gamma.node(), beta.node()});
    // cache per-row inverse stddev and normalized values for backward
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    const double* xv = x.values().data();
    const double* gv = gamma.values().data();
    const double* bv = beta.values().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * D;
        double mean = 0.0;
        for (std::size_t d = 0; d < D; ++d) mean += xv[base + d];
        mean /= static_cast<double>(D);
        double var = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
            const double c = xv[base + d] - mean;
            var += c * c;
        }
        var /= static_cast<double>(D);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = inv;
        for (std::size_t d = 0; d < D; ++d) {
            const double xh = (xv[base + d] - mean) * inv;
            (*xhat)[base + d] = xh;
            out->value[base + d] = gv[d] * xh + bv[d];
        }
    }
    check_finite("layer_norm", out->value);

    Node* o = out.get();
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    out->backward_fn = [o, xn, gn, bn, xhat, inv_std, rows, D]() {
        const double* g = o->grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t base = r * D;
            if (gn->requires_grad) {
                gn->ensure_grad();
                for (std::size_t d = 0; d < D; ++d)
                    gn->grad[d] += g[base + d] * (*xhat)[base + d];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t d = 0; d < D; ++d) bn->grad[d] += g[base + d];
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                double mean_a = 0.0, mean_ax = 0.0;
                for (std::size_t d = 0; d < D; ++d) {
                    const double aj = g[base + d] * gn->value[d];
                    mean_a += aj;
                    mean_ax += aj * (*xhat)[base + d];
                }
                mean_a /= static_cast<double>(D);
                mean_ax /= static_cast<double>(D);
                const double inv = (*inv_std)[r];
                for (std::size_t d = 0; d < D; ++d) {
                    const double aj = g[base + d] * gn->value[d];
                    xn->grad[base + d] += inv * (aj - mean_a - (*xhat)[base + d] * mean_ax);
                }
            }
        }
    };
    return Tensor(out);
}

Tensor gelu(const Tensor& x) {
    auto out = make_op("gelu", x.shape(), {x.node()});
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x.values()[i];
        out->value[i] = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
    }
    check_finite("gelu", out->value);

    Node* o = out.get();
    auto xn = x.node();
    out->backward_fn = [o, xn, n]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = xn->value[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            xn->grad[i] += o->grad[i] * (cdf + v * pdf);
        }
    };
    return Tensor(out);
}

Tensor relu(const Tensor& x) {
    auto out = make_op("relu", x.shape(), {x.node()});
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) out->value[i] = std::max(0.0, x.values()[i]);

    Node* o = out.get();
    auto xn = x.node();
    out->backward_fn = [o, xn, n]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
            if (xn->value[i] > 0.0) xn->grad[i] += o->grad[i];
    };
    return Tensor(out);
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) {
        throw UsageError("dropout: rate " + std::to_string(rate) + " outside [0,1)");
    }
    if (!training || rate == 0.0) return x;

    const std::size_t n = x.numel();
    const double keep_scale = 1.0 / (1.0 - rate);
    auto factors = std::make_shared<std::vector<double>>(n);
    auto out = make_op("dropout", x.shape(), {x.node()});
    for (std::size_t i = 0; i < n; ++i) {
        const double f = rng.uniform01() < rate ? 0.0 : keep_scale;
        (*factors)[i] = f;
        out->value[i] = x.values()[i] * f;
    }

    Node* o = out.get();
    auto xn = x.node();
    out->backward_fn = [o, xn, factors, n]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) xn->grad[i] += o->grad[i] * (*factors)[i];
    };
    return Tensor(out);
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
    if (logits.ndim() != 1) {
        throw ShapeError("cross_entropy: expected 1-D logits, got " + shape_str(logits.shape()));
    }
    if (label >= logits.numel()) {
        throw UsageError("cross_entropy: label " + std::to_string(label) +
                         " out of range for " + std::to_string(logits.numel()) + " classes");
    }
    return cross_entropy_batch(reshape(logits, {1, logits.numel()}), {label});
}

Tensor cross_entropy_batch(const Tensor& logits, const std::vector<std::size_t>& labels) {
    if (logits.ndim() != 2) {
        throw ShapeError("cross_entropy_batch: expected 2-D logits, got " +
                         shape_str(logits.shape()));
    }
    const std::size_t B = logits.shape()[0], K = logits.shape()[1];
    if (labels.size() != B) {
        throw UsageError("cross_entropy_batch: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(B));
    }
    for (const auto lb : labels) {
        if (lb >= K) {
            throw UsageError("cross_entropy_batch: label " + std::to_string(lb) +
                             " out of range for " + std::to_string(K) + " classes");
        }
    }

    auto out = make_op("cross_entropy", Shape{}, {logits.node()});
    auto probs = std::make_shared<std::vector<double>>(logits.numel());
    const double* x = logits.values().data();
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t base = b * K;
        double mx = x[base];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, x[base + k]);
        double denom = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double e = std::exp(x[base + k] - mx);
            (*probs)[base + k] = e;
            denom += e;
        }
        for (std::size_t k = 0; k < K; ++k) (*probs)[base + k] /= denom;
        loss += mx + std::log(denom) - x[base + labels[b]];
    }
    out->value[0] = loss / static_cast<double>(B);
    check_finite("cross_entropy", out->value);

    Node* o = out.get();
    auto ln = logits.node();
    auto labels_copy = labels;
    out->backward_fn = [o, ln, probs, labels_copy, B, K]() {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const double g = o->grad[0] / static_cast<double>(B);
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t base = b * K;
            for (std::size_t k = 0; k < K; ++k) {
                const double onehot = (k == labels_copy[b]) ? 1.0 : 0.0;
                ln->grad[base + k] += g * ((*probs)[base + k] - onehot);
            }
        }
    };
    return Tensor(out);
}

std::size_t argmax_row(const Tensor& t) {
    if (t.numel() == 0) throw UsageError("argmax_row: empty tensor");
    std::size_t best = 0;
    for (std::size_t i = 1; i < t.numel(); ++i)
        if (t.values()[i] > t.values()[best]) best = i;
    return best;
}

double l2_norm(const std::vector<double>& v) {
    double acc = 0.0;
    for (const double x : v) acc += x * x;
    return std::sqrt(acc);
}

}  // namespace biofuse::autodiff
