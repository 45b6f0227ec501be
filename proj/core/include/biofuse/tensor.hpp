#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "biofuse/rng.hpp"

namespace biofuse::autodiff {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Attention-edge mask. true = silence this edge; consumed by masked_softmax,
// which zeroes the corresponding weight exactly.
struct BoolMask {
    Shape shape;
    std::vector<std::uint8_t> data;

    BoolMask() = default;
    static BoolMask falses(Shape s);
    std::size_t numel() const { return data.size(); }
    bool any() const;
    void set(std::size_t flat_index, bool v) { data[flat_index] = v ? 1 : 0; }
    bool operator==(const BoolMask& other) const = default;
};

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // same length as value once backward touches it
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward_fn;  // accumulates this->grad into parents

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

// Value-semantics handle over a shared autodiff node. Ops build a dynamic
// tape; Tensor::backward() walks it once in reverse topological order.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    // i.i.d. uniform in [-bound, bound]
    static Tensor uniform(Shape shape, double bound, Rng& rng, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->value.size(); }
    std::size_t ndim() const { return node_->shape.size(); }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    std::vector<double>& values() { return node_->value; }
    const std::vector<double>& values() const { return node_->value; }
    const std::vector<double>& grad() const;
    void zero_grad();

    double item() const;  // scalar tensors only

    // Reverse-mode sweep from a scalar output; each tape node visited once.
    void backward() const;

    const std::shared_ptr<Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<Node> node_;
};

// ---- elementwise and arithmetic ----
Tensor add(const Tensor& a, const Tensor& b);  // shapes equal, or b broadcast over trailing axes
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);           // [M,K]x[K,N]
Tensor bmm(const Tensor& a, const Tensor& b);              // [H,M,K]x[H,K,N]
Tensor bmm_nt(const Tensor& a, const Tensor& b);           // [H,M,K]x[H,N,K] -> [H,M,N]
Tensor transpose(const Tensor& a);                         // 2-D

// ---- structure ----
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_rows(const std::vector<Tensor>& parts);      // 2-D [Ti,D] -> [sum Ti, D]
Tensor concat_flat(const std::vector<Tensor>& parts);      // any shapes -> 1-D [sum numel]
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);  // rows [r0, r1)
Tensor mean_rows(const Tensor& a);                         // [T,D] -> [D]
Tensor sum(const Tensor& a);                               // -> scalar
Tensor split_heads(const Tensor& a, std::size_t heads);    // [T,D] -> [H,T,D/H]
Tensor merge_heads(const Tensor& a);                       // [H,T,dh] -> [T,H*dh]

// ---- neural building blocks ----
// Softmax over the last axis. Masked entries get weight exactly 0; rows with
// every entry masked return all zeros. No mask means plain softmax; the code
// path is shared, so an all-false mask is bitwise identical to no mask.
Tensor masked_softmax(const Tensor& logits, const std::optional<BoolMask>& mask = std::nullopt);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor gelu(const Tensor& x);  // exact x * Phi(x)
Tensor relu(const Tensor& x);
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);
Tensor cross_entropy(const Tensor& logits, std::size_t label);                    // [K] -> scalar
Tensor cross_entropy_batch(const Tensor& logits, const std::vector<std::size_t>& labels);  // [B,K]

// ---- value-only helpers (no autodiff) ----
std::size_t argmax_row(const Tensor& t);  // 1-D; ties break to the lowest index
double l2_norm(const std::vector<double>& v);

}  // namespace biofuse::autodiff
