#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "cgsam/autograd.hpp"
#include "cgsam/tensor.hpp"

namespace cgsam::test {

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& gen, real lo = -1.0, real hi = 1.0)
{
    std::uniform_real_distribution<real> u(lo, hi);
    Matrix m(rows, cols);
    for (auto& v : m.data) v = u(gen);
    return m;
}

inline real max_abs_diff(const Matrix& a, const Matrix& b)
{
    real m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

using ScalarFn = std::function<Var(Graph&, const std::vector<Var>&)>;

/// Largest relative error between analytic gradients and central differences
/// over every element of every input.
inline real gradcheck(const ScalarFn& fn, const std::vector<Matrix>& inputs, real h = 1e-6)
{
    Graph g(GradMode::all);
    std::vector<Var> vars;
    for (const auto& m : inputs) vars.push_back(g.variable(m));
    Var out = fn(g, vars);
    g.backward(out);

    real worst = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Matrix* analytic = vars[k].grad();
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            auto eval = [&](real delta) {
                std::vector<Matrix> shifted = inputs;
                shifted[k].data[i] += delta;
                Graph g2(GradMode::none);
                std::vector<Var> v2;
                for (const auto& m : shifted) v2.push_back(g2.constant(m));
                return fn(g2, v2).value().data[0];
            };
            const real numeric = (eval(h) - eval(-h)) / (2 * h);
            const real a = analytic != nullptr ? analytic->data[i] : 0.0;
            const real err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace cgsam::test
