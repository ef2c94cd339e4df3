#include <cmath>
#include <random>

#include "cgsam/losses.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cgsam;

namespace {

Matrix random_logits(int n, std::mt19937_64& gen, real scale = 3.0)
{
    return test::random_matrix(n, 1, gen, -scale, scale);
}

}  // namespace

TEST_CASE("loss terms match the scalar-loop oracle")
{
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix logits = random_logits(64, gen, 6.0);
        const BinaryMask gt = oracle::random_mask(8, 8, gen, 0.3);
        const auto r = segmentation_loss(logits, gt, {});
        const auto o = oracle::losses(logits.data, gt);
        CHECK(r.terms.bce == doctest::Approx(o.bce).epsilon(1e-12));
        CHECK(std::abs(r.terms.dice - o.dice) < 1e-9);
        CHECK(std::abs(r.terms.iou - o.iou) < 1e-9);
        CHECK(r.terms.total == doctest::Approx(o.bce + o.dice + o.iou));
    }
}

TEST_CASE("uniform 0.5 predictions give BCE ln 2")
{
    std::mt19937_64 gen(3);
    const BinaryMask gt = oracle::random_mask(7, 9, gen);
    const auto r = segmentation_loss(Matrix(63, 1, 0.0), gt, {true, false, false});
    CHECK(std::abs(r.terms.bce - std::log(2.0)) < 1e-9);
    CHECK(r.terms.dice == 0.0);
    CHECK(r.terms.iou == 0.0);
}

TEST_CASE("perfect saturated predictions drive Dice and IoU to zero")
{
    std::mt19937_64 gen(5);
    const BinaryMask gt = oracle::random_mask(6, 6, gen);
    Matrix logits(36, 1);
    for (int i = 0; i < 36; ++i) logits.data[i] = gt.values[i] ? 40.0 : -40.0;
    const auto r = segmentation_loss(logits, gt, {});
    CHECK(r.terms.dice < 1e-12);
    CHECK(r.terms.iou < 1e-12);
    CHECK(r.terms.bce < 1e-6);
}

TEST_CASE("every loss term is nonnegative")
{
    std::mt19937_64 gen(17);
    for (int trial = 0; trial < 200; ++trial) {
        const auto r = segmentation_loss(random_logits(25, gen, 20.0), oracle::random_mask(5, 5, gen, 0.2), {});
        CHECK(r.terms.bce >= 0);
        CHECK(r.terms.dice >= 0);
        CHECK(r.terms.iou >= 0);
    }
}

TEST_CASE("each loss term's gradient matches central differences")
{
    std::mt19937_64 gen(23);
    const LossSwitches single[] = {{true, false, false}, {false, true, false}, {false, false, true}, {}};
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix logits = random_logits(36, gen);
        const BinaryMask gt = oracle::random_mask(6, 6, gen);
        for (const auto& sw : single) {
            const auto r = segmentation_loss(logits, gt, sw);
            const real h = 1e-4;
            for (int i = 0; i < 36; ++i) {
                Matrix up = logits, down = logits;
                up.data[i] += h;
                down.data[i] -= h;
                const real numeric =
                    (segmentation_loss(up, gt, sw).terms.total - segmentation_loss(down, gt, sw).terms.total) / (2 * h);
                const real a = r.grad.data[i];
                const real rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
                CHECK(rel < 1e-3);
            }
        }
    }
}

TEST_CASE("graph loss op backpropagates the same gradient")
{
    std::mt19937_64 gen(29);
    const Matrix logits = random_logits(16, gen);
    const BinaryMask gt = oracle::random_mask(4, 4, gen);
    const real worst = test::gradcheck(
        [&](Graph&, const std::vector<Var>& in) { return segmentation_loss(in[0], gt, LossSwitches{}); }, {logits});
    CHECK(worst < 1e-6);
}

TEST_CASE("a small gradient step lowers the loss")
{
    int failures = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 gen(seed);
        Matrix logits = random_logits(64, gen);
        const BinaryMask gt = oracle::random_mask(8, 8, gen);
        const auto before = segmentation_loss(logits, gt, {});
        for (std::size_t i = 0; i < logits.size(); ++i) logits.data[i] -= 1e-5 * before.grad.data[i];
        if (!(segmentation_loss(logits, gt, {}).terms.total < before.terms.total)) ++failures;
    }
    CHECK(failures <= 1);
}

TEST_CASE("loss rejects bad inputs")
{
    BinaryMask gt(2, 2);
    CHECK_THROWS_AS(segmentation_loss(Matrix(4, 1), gt, {false, false, false}), ConfigError);
    CHECK_THROWS_AS(segmentation_loss(Matrix(5, 1), gt, {}), InputError);
    gt.values[0] = 2;
    CHECK_THROWS_AS(segmentation_loss(Matrix(4, 1), gt, {}), InputError);
}
