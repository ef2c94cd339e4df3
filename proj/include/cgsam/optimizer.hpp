#pragma once

#include <vector>

#include "cgsam/autograd.hpp"
#include "cgsam/params.hpp"

namespace cgsam {

struct AdamWConfig {
    real lr = 1e-4;
    real beta1 = 0.9;
    real beta2 = 0.999;
    real eps = 1e-8;
    real weight_decay = 1e-4;
    friend bool operator==(const AdamWConfig&, const AdamWConfig&) = default;
};

/// Decoupled weight decay Adam over a fixed set of parameter indices. Weight
/// decay applies to 2-D weights only (not to biases, norms, gates or rows).
class AdamW {
public:
    AdamW(const ParameterStore& store, std::vector<int> indices, AdamWConfig config);

    /// One update at learning rate lr. Missing gradients count as zero.
    void step(ParameterStore& store, const GradStore& grads, real lr);
    int steps() const { return steps_; }
    const std::vector<int>& indices() const { return indices_; }

private:
    std::vector<int> indices_;
    AdamWConfig config_;
    std::vector<Matrix> m_, v_;
    int steps_ = 0;
};

/// Cosine decay from base_lr to 0 over total_steps (step is 0-based).
real cosine_lr(real base_lr, int step, int total_steps);

}  // namespace cgsam
