#include "biofuse/optim.hpp"

#include <cmath>

namespace biofuse::autodiff {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void AdamW::step() {
    ++t_;
    const double bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double decay = 1.0 - cfg_.lr * cfg_.weight_decay;

    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i].values();
        const auto& g = params_[i].grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            p[j] *= decay;
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bias1;
            const double v_hat = v[j] / bias2;
            p[j] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
    }
}

}  // namespace biofuse::autodiff
