#include <random>

#include "cgsam/autograd.hpp"
#include "cgsam/params.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cgsam;
using test::gradcheck;
using test::random_matrix;

namespace {

// Random fixed projection to a scalar so every output element matters.
Var project(Var y, std::uint64_t seed)
{
    std::mt19937_64 gen(seed);
    return ops::weighted_sum(y, random_matrix(y.rows(), y.cols(), gen));
}

}  // namespace

TEST_CASE("gradients of dense ops match central differences")
{
    std::mt19937_64 gen(42);
    const real tol = 1e-6;

    SUBCASE("matmul / matmul_nt / linear")
    {
        CHECK(gradcheck([](Graph&, const std::vector<Var>& v) { return project(ops::matmul(v[0], v[1]), 1); },
                        {random_matrix(4, 3, gen), random_matrix(3, 5, gen)}) < tol);
        CHECK(gradcheck([](Graph&, const std::vector<Var>& v) { return project(ops::matmul_nt(v[0], v[1]), 2); },
                        {random_matrix(4, 3, gen), random_matrix(6, 3, gen)}) < tol);
        CHECK(gradcheck([](Graph&, const std::vector<Var>& v) { return project(ops::linear(v[0], v[1], v[2]), 3); },
                        {random_matrix(5, 3, gen), random_matrix(3, 4, gen), random_matrix(1, 4, gen)}) < tol);
    }
    SUBCASE("broadcast adds and scalar gate")
    {
        CHECK(gradcheck([](Graph&, const std::vector<Var>& v) { return project(ops::add_row(v[0], v[1]), 4); },
                        {random_matrix(5, 3, gen), random_matrix(1, 3, gen)}) < tol);
        CHECK(gradcheck([](Graph&, const std::vector<Var>& v) { return project(ops::add_col(v[0], v[1]), 5); },
                        {random_matrix(5, 3, gen), random_matrix(5, 1, gen)}) < tol);
        CHECK(gradcheck([](Graph&, const std::vector<Var>& v) { return project(ops::mul_scalar(v[0], v[1]), 6); },
                        {random_matrix(5, 3, gen), random_matrix(1, 1, gen)}) < tol);
        CHECK(gradcheck([](Graph&, const std::vector<Var>& v) { return project(ops::repeat_row(v[0], 4), 7); },
                        {random_matrix(1, 3, gen)}) < tol);
    }
    SUBCASE("nonlinearities and normalization")
    {
        CHECK(gradcheck([](Graph&, const std::vector<Var>& v) { return project(ops::gelu(v[0]), 8); },
                        {random_matrix(4, 4, gen, -3, 3)}) < tol);
        CHECK(gradcheck(
                  [](Graph&, const std::vector<Var>& v) { return project(ops::layer_norm(v[0], v[1], v[2], 1e-5), 9); },
                  {random_matrix(4, 6, gen, -2, 2), random_matrix(1, 6, gen), random_matrix(1, 6, gen)}) < 1e-5);
    }
    SUBCASE("attention")
    {
        CHECK(gradcheck(
                  [](Graph&, const std::vector<Var>& v) { return project(ops::attention(v[0], v[1], v[2], 2), 10); },
                  {random_matrix(3, 4, gen), random_matrix(5, 4, gen), random_matrix(5, 4, gen)}) < tol);
    }
    SUBCASE("layout ops")
    {
        const GridSize g4{4, 4};
        CHECK(gradcheck([&](Graph&, const std::vector<Var>& v) { return project(ops::patchify(v[0], g4, 2), 11); },
                        {random_matrix(16, 2, gen)}) < tol);
        CHECK(gradcheck([](Graph&, const std::vector<Var>& v) { return project(ops::pixel_shuffle2(v[0], {2, 3}), 12); },
                        {random_matrix(6, 8, gen)}) < tol);
        CHECK(gradcheck([](Graph&, const std::vector<Var>& v) { return project(ops::im2col3x3(v[0], {3, 4}), 13); },
                        {random_matrix(12, 2, gen)}) < tol);
        CHECK(gradcheck(
                  [](Graph&, const std::vector<Var>& v) { return project(ops::bilinear_resize(v[0], {2, 3}, {5, 4}), 14); },
                  {random_matrix(6, 2, gen)}) < tol);
        CHECK(gradcheck(
                  [](Graph&, const std::vector<Var>& v) {
                      return project(ops::concat_rows({ops::slice_rows(v[0], 1, 2), ops::slice_cols(v[1], 1, 3)}), 15);
                  },
                  {random_matrix(4, 3, gen), random_matrix(2, 5, gen)}) < tol);
    }
    SUBCASE("cosine rows")
    {
        CHECK(gradcheck([](Graph&, const std::vector<Var>& v) { return project(ops::cosine_rows(v[0], v[1], 1e-8), 16); },
                        {random_matrix(6, 4, gen), random_matrix(1, 4, gen)}) < tol);
    }
}

TEST_CASE("parameter leaves collect gradients only under the selected mode")
{
    ParameterStore store;
    ParamBuilder b(store, 1);
    const int w = b.make("w", 3, 2, InitSpec::trunc_normal(0.5));
    const int frozen = b.make("frozen", 3, 2, InitSpec::trunc_normal(0.5));
    store[w].trainable = true;

    std::mt19937_64 gen(5);
    const Matrix x = random_matrix(4, 3, gen);
    auto run = [&](GradMode mode) {
        Graph g(mode);
        Var xv = g.constant(x);
        Var y = ops::add(ops::matmul(xv, g.param(store, w)), ops::matmul(xv, g.param(store, frozen)));
        Var loss = ops::sum(y);
        g.backward(loss);
        GradStore gs(store.size());
        g.accumulate_param_grads(gs);
        return gs;
    };
    auto trainable = run(GradMode::trainable);
    CHECK_FALSE(trainable.grads[w].empty());
    CHECK(trainable.grads[frozen].empty());
    auto all = run(GradMode::all);
    CHECK_FALSE(all.grads[frozen].empty());
    CHECK(all.grads[w] == trainable.grads[w]);

    Graph g(GradMode::none);
    Var y = ops::matmul(g.constant(x), g.param(store, w));
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("initialization is keyed by name, not by creation order")
{
    ParameterStore s1, s2;
    ParamBuilder b1(s1, 9), b2(s2, 9);
    b1.make("a", 2, 2, InitSpec::trunc_normal());
    b1.make("b", 2, 2, InitSpec::trunc_normal());
    b2.make("b", 2, 2, InitSpec::trunc_normal());
    b2.make("a", 2, 2, InitSpec::trunc_normal());
    CHECK(s1[s1.index("a")].value == s2[s2.index("a")].value);
    CHECK(s1[s1.index("b")].value == s2[s2.index("b")].value);
    for (real v : s1[0].value.data) CHECK(std::abs(v) <= 0.04);

    auto counting = ParamBuilder::counting();
    CHECK(counting.make("c", 3, 4, InitSpec::zeros()) == -1);
    CHECK(counting.shapes().front().second == 12);
}
