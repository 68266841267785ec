#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "graphvae/autodiff.hpp"

namespace graphvae {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.5; // paper setup; classic default would be 0.9
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction over a fixed parameter list. Moment buffers are
/// created on construction and match parameter shapes.
class Adam {
public:
    Adam(std::vector<Var> params, AdamConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const Var& p : params_) {
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
        }
    }

    std::int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

    /// One update from the gradients currently stored on the parameters.
    /// Parameters with no gradient (never touched by backward) are skipped.
    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Node& p = *params_[i];
            if (p.grad.size() == 0) continue;
            if (!p.grad.same_shape(p.value))
                throw std::invalid_argument("Adam::step: gradient shape mismatch");
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                double g = p.grad[j];
                m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
                v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
                double mhat = m_[i][j] / bc1;
                double vhat = v_[i][j] / bc2;
                p.value[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    void zero_grad() { graphvae::zero_grad(params_); }

private:
    std::vector<Var> params_;
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    std::int64_t t_ = 0;
};

} // namespace graphvae
