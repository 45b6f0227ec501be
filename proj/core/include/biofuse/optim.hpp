#pragma once

#include <vector>

#include "biofuse/tensor.hpp"

namespace biofuse::autodiff {

struct AdamWConfig {
    double lr = 4e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// AdamW with decoupled weight decay: parameters are first scaled by
// (1 - lr * weight_decay), then moved by the bias-corrected moment update.
class AdamW {
public:
    explicit AdamW(std::vector<Tensor> params, AdamWConfig cfg = {});

    void zero_grad();
    void step();

    long long step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    AdamWConfig cfg_;
    long long t_ = 0;
};

}  // namespace biofuse::autodiff
