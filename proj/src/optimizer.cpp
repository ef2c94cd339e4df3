#include "cgsam/optimizer.hpp"

#include <cmath>
#include <numbers>

namespace cgsam {

AdamW::AdamW(const ParameterStore& store, std::vector<int> indices, AdamWConfig config)
    : indices_(std::move(indices)), config_(config)
{
    for (int i : indices_) {
        const Matrix& p = store[i].value;
        m_.emplace_back(p.rows, p.cols);
        v_.emplace_back(p.rows, p.cols);
    }
}

void AdamW::step(ParameterStore& store, const GradStore& grads, real lr)
{
    ++steps_;
    const real bc1 = 1 - std::pow(config_.beta1, steps_);
    const real bc2 = 1 - std::pow(config_.beta2, steps_);
    for (std::size_t k = 0; k < indices_.size(); ++k) {
        Matrix& p = store[indices_[k]].value;
        const Matrix& g = grads.grads.at(indices_[k]);
        const bool decay = p.rows > 1 && p.cols > 1;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const real gi = g.empty() ? 0.0 : g.data[i];
            real& m = m_[k].data[i];
            real& v = v_[k].data[i];
            m = config_.beta1 * m + (1 - config_.beta1) * gi;
            v = config_.beta2 * v + (1 - config_.beta2) * gi * gi;
            if (decay) p.data[i] -= lr * config_.weight_decay * p.data[i];
            p.data[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + config_.eps);
        }
    }
}

real cosine_lr(real base_lr, int step, int total_steps)
{
    if (total_steps <= 1) return base_lr;
    const real t = static_cast<real>(step) / static_cast<real>(total_steps);
    return 0.5 * base_lr * (1 + std::cos(std::numbers::pi * t));
}

}  // namespace cgsam
