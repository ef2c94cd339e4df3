#include "cgsam/losses.hpp"

#include <algorithm>
#include <cmath>

namespace cgsam {

namespace {

real sigmoid(real x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

LossResult segmentation_loss(const Matrix& logits, const BinaryMask& gt, const LossSwitches& switches)
{
    if (!switches.any()) throw ConfigError("loss: at least one term must be enabled");
    const std::size_t n = logits.size();
    if (logits.cols != 1 || n != gt.values.size() || n == 0)
        throw InputError("loss: logits " + shape_str(logits) + " do not match a " + std::to_string(gt.height) + "x" +
                         std::to_string(gt.width) + " mask");
    for (auto v : gt.values)
        if (v > 1) throw InputError("loss: ground truth is not binary");

    LossResult r;
    r.grad = Matrix(logits.rows, 1);
    std::vector<real> p(n);
    real sp = 0, sg = 0, spg = 0;
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = sigmoid(logits.data[i]);
        sp += p[i];
        sg += gt.values[i];
        spg += p[i] * gt.values[i];
    }
    if (switches.bce) {
        real acc = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const real x = logits.data[i];
            const real z = std::clamp(x, -kLogitClamp, kLogitClamp);
            const real g = gt.values[i];
            // -g log s(z) - (1-g) log(1-s(z)) = softplus(z) - g z
            acc += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - g * z;
            if (std::abs(x) < kLogitClamp) r.grad.data[i] += (sigmoid(z) - g) / static_cast<real>(n);
        }
        r.terms.bce = acc / static_cast<real>(n);
    }
    if (switches.dice) {
        const real den = sp + sg + kLossSmooth;
        const real num = 2 * spg + kLossSmooth;
        r.terms.dice = 1 - num / den;
        for (std::size_t i = 0; i < n; ++i) {
            const real dp = -(2 * gt.values[i] * den - num) / (den * den);
            r.grad.data[i] += dp * p[i] * (1 - p[i]);
        }
    }
    if (switches.iou) {
        const real uni = sp + sg - spg + kLossSmooth;
        const real inter = spg + kLossSmooth;
        r.terms.iou = 1 - inter / uni;
        for (std::size_t i = 0; i < n; ++i) {
            const real g = gt.values[i];
            const real dp = -(g * uni - inter * (1 - g)) / (uni * uni);
            r.grad.data[i] += dp * p[i] * (1 - p[i]);
        }
    }
    r.terms.total = r.terms.bce + r.terms.dice + r.terms.iou;
    return r;
}

Var segmentation_loss(Var logits, const BinaryMask& gt, const LossSwitches& switches, LossTerms* terms)
{
    LossResult r = segmentation_loss(logits.value(), gt, switches);
    if (terms != nullptr) *terms = r.terms;
    const int il = logits.id();
    return logits.graph()->record(Matrix(1, 1, r.terms.total), {logits},
                                  [il, grad = std::move(r.grad)](Graph& g, int self) {
                                      const real dy = g.grad(self)->data[0];
                                      if (Matrix* d = g.grad_buffer(il))
                                          for (std::size_t i = 0; i < grad.size(); ++i) d->data[i] += dy * grad.data[i];
                                  });
}

}  // namespace cgsam
