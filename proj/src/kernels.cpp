#include "cgsam/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace cgsam::kernels {

namespace {

// Below this many multiply-adds the parallel region costs more than it saves.
constexpr long kParallelWork = 1L << 16;

bool worth_parallel(long work) { return work >= kParallelWork; }

inline real dot4(const real* x, const real* y, int n)
{
    real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += x[i] * y[i];
        s1 += x[i + 1] * y[i + 1];
        s2 += x[i + 2] * y[i + 2];
        s3 += x[i + 3] * y[i + 3];
    }
    for (; i < n; ++i) s0 += x[i] * y[i];
    return (s0 + s1) + (s2 + s3);
}

constexpr real kInvSqrt2 = 0.70710678118654752440;
constexpr real kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

BilinearTap bilinear_tap(int out_index, int in_size, int out_size)
{
    BilinearTap t;
    if (in_size == out_size) {
        t.lo = t.hi = out_index;
        return t;
    }
    const real scale = static_cast<real>(in_size) / static_cast<real>(out_size);
    real src = (static_cast<real>(out_index) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in_size - 1) lo = in_size - 1;
    const int hi = std::min(lo + 1, in_size - 1);
    const real frac = src - lo;
    t.lo = lo;
    t.hi = hi;
    t.w_hi = hi == lo ? 0.0 : frac;
    t.w_lo = 1.0 - t.w_hi;
    return t;
}

void gemm_nn(std::span<const real> a, std::span<const real> b, std::span<real> c, int m, int k, int n,
             bool accumulate)
{
    const real* A = a.data();
    const real* B = b.data();
    real* C = c.data();
#pragma omp parallel for schedule(static) if (worth_parallel(static_cast<long>(m) * k * n))
    for (int i = 0; i < m; ++i) {
        real* crow = C + static_cast<std::size_t>(i) * n;
        if (!accumulate) std::fill(crow, crow + n, 0.0);
        const real* arow = A + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const real av = arow[p];
            const real* brow = B + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt(std::span<const real> a, std::span<const real> b, std::span<real> c, int m, int k, int n,
             bool accumulate)
{
    const real* A = a.data();
    const real* B = b.data();
    real* C = c.data();
#pragma omp parallel for schedule(static) if (worth_parallel(static_cast<long>(m) * k * n))
    for (int i = 0; i < m; ++i) {
        const real* arow = A + static_cast<std::size_t>(i) * k;
        real* crow = C + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const real v = dot4(arow, B + static_cast<std::size_t>(j) * k, k);
            crow[j] = accumulate ? crow[j] + v : v;
        }
    }
}

void gemm_tn(std::span<const real> a, std::span<const real> b, std::span<real> c, int m, int k, int n,
             bool accumulate)
{
    const real* A = a.data();
    const real* B = b.data();
    real* C = c.data();
#pragma omp parallel for schedule(static) if (worth_parallel(static_cast<long>(m) * k * n))
    for (int i = 0; i < m; ++i) {
        real* crow = C + static_cast<std::size_t>(i) * n;
        if (!accumulate) std::fill(crow, crow + n, 0.0);
        for (int p = 0; p < k; ++p) {
            const real av = A[static_cast<std::size_t>(p) * m + i];
            if (av == 0.0) continue;
            const real* brow = B + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void softmax_rows(std::span<real> x, int rows, int cols)
{
    real* X = x.data();
#pragma omp parallel for schedule(static) if (worth_parallel(static_cast<long>(rows) * cols * 8))
    for (int r = 0; r < rows; ++r) {
        real* row = X + static_cast<std::size_t>(r) * cols;
        real mx = row[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        real sum = 0;
        for (int j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const real inv = 1.0 / sum;
        for (int j = 0; j < cols; ++j) row[j] *= inv;
    }
}

void softmax_rows_backward(std::span<const real> y, std::span<const real> dy, std::span<real> dx, int rows,
                           int cols)
{
#pragma omp parallel for schedule(static) if (worth_parallel(static_cast<long>(rows) * cols * 4))
    for (int r = 0; r < rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * cols;
        const real s = dot4(&y[off], &dy[off], cols);
        for (int j = 0; j < cols; ++j) dx[off + j] += y[off + j] * (dy[off + j] - s);
    }
}

void layer_norm(std::span<const real> x, std::span<const real> gamma, std::span<const real> beta,
                std::span<real> y, std::span<real> mean, std::span<real> rstd, int rows, int cols, real eps)
{
#pragma omp parallel for schedule(static) if (worth_parallel(static_cast<long>(rows) * cols * 4))
    for (int r = 0; r < rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * cols;
        real mu = 0;
        for (int j = 0; j < cols; ++j) mu += x[off + j];
        mu /= cols;
        real var = 0;
        for (int j = 0; j < cols; ++j) {
            const real d = x[off + j] - mu;
            var += d * d;
        }
        var /= cols;
        const real rs = 1.0 / std::sqrt(var + eps);
        mean[r] = mu;
        rstd[r] = rs;
        for (int j = 0; j < cols; ++j) y[off + j] = (x[off + j] - mu) * rs * gamma[j] + beta[j];
    }
}

void layer_norm_backward(std::span<const real> x, std::span<const real> gamma, std::span<const real> mean,
                         std::span<const real> rstd, std::span<const real> dy, std::span<real> dx,
                         std::span<real> dgamma, std::span<real> dbeta, int rows, int cols)
{
    // Parameter gradients reduce over rows; kept serial so the order is fixed.
    if (!dgamma.empty() || !dbeta.empty()) {
        for (int r = 0; r < rows; ++r) {
            const std::size_t off = static_cast<std::size_t>(r) * cols;
            for (int j = 0; j < cols; ++j) {
                const real xhat = (x[off + j] - mean[r]) * rstd[r];
                if (!dgamma.empty()) dgamma[j] += dy[off + j] * xhat;
                if (!dbeta.empty()) dbeta[j] += dy[off + j];
            }
        }
    }
    if (dx.empty()) return;
#pragma omp parallel for schedule(static) if (worth_parallel(static_cast<long>(rows) * cols * 6))
    for (int r = 0; r < rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * cols;
        real sum_g = 0, sum_gx = 0;
        for (int j = 0; j < cols; ++j) {
            const real g = dy[off + j] * gamma[j];
            const real xhat = (x[off + j] - mean[r]) * rstd[r];
            sum_g += g;
            sum_gx += g * xhat;
        }
        const real inv_n = 1.0 / cols;
        for (int j = 0; j < cols; ++j) {
            const real g = dy[off + j] * gamma[j];
            const real xhat = (x[off + j] - mean[r]) * rstd[r];
            dx[off + j] += rstd[r] * (g - inv_n * sum_g - xhat * inv_n * sum_gx);
        }
    }
}

void gelu(std::span<const real> x, std::span<real> y)
{
    const std::size_t n = x.size();
#pragma omp parallel for schedule(static) if (worth_parallel(static_cast<long>(n) * 16))
    for (std::size_t i = 0; i < n; ++i) y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
}

void gelu_backward(std::span<const real> x, std::span<const real> dy, std::span<real> dx)
{
    const std::size_t n = x.size();
#pragma omp parallel for schedule(static) if (worth_parallel(static_cast<long>(n) * 16))
    for (std::size_t i = 0; i < n; ++i) {
        const real cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
        const real pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
        dx[i] += dy[i] * (cdf + x[i] * pdf);
    }
}

void bilinear_resize(std::span<const real> in, std::span<real> out, int channels, int in_h, int in_w, int out_h,
                     int out_w)
{
    std::vector<BilinearTap> tx(out_w);
    for (int x = 0; x < out_w; ++x) tx[x] = bilinear_tap(x, in_w, out_w);
#pragma omp parallel for schedule(static) if (worth_parallel(static_cast<long>(out_h) * out_w * channels * 4))
    for (int y = 0; y < out_h; ++y) {
        const BilinearTap ty = bilinear_tap(y, in_h, out_h);
        for (int x = 0; x < out_w; ++x) {
            const BilinearTap& t = tx[x];
            real* o = &out[(static_cast<std::size_t>(y) * out_w + x) * channels];
            const real* p00 = &in[(static_cast<std::size_t>(ty.lo) * in_w + t.lo) * channels];
            const real* p01 = &in[(static_cast<std::size_t>(ty.lo) * in_w + t.hi) * channels];
            const real* p10 = &in[(static_cast<std::size_t>(ty.hi) * in_w + t.lo) * channels];
            const real* p11 = &in[(static_cast<std::size_t>(ty.hi) * in_w + t.hi) * channels];
            for (int c = 0; c < channels; ++c) {
                const real top = t.w_lo * p00[c] + t.w_hi * p01[c];
                const real bot = t.w_lo * p10[c] + t.w_hi * p11[c];
                o[c] = ty.w_lo * top + ty.w_hi * bot;
            }
        }
    }
}

void bilinear_resize_backward(std::span<const real> dout, std::span<real> din, int channels, int in_h, int in_w,
                              int out_h, int out_w)
{
    // Scatter pattern: serial so that accumulation order is fixed.
    std::vector<BilinearTap> tx(out_w);
    for (int x = 0; x < out_w; ++x) tx[x] = bilinear_tap(x, in_w, out_w);
    for (int y = 0; y < out_h; ++y) {
        const BilinearTap ty = bilinear_tap(y, in_h, out_h);
        for (int x = 0; x < out_w; ++x) {
            const BilinearTap& t = tx[x];
            const real* g = &dout[(static_cast<std::size_t>(y) * out_w + x) * channels];
            real* p00 = &din[(static_cast<std::size_t>(ty.lo) * in_w + t.lo) * channels];
            real* p01 = &din[(static_cast<std::size_t>(ty.lo) * in_w + t.hi) * channels];
            real* p10 = &din[(static_cast<std::size_t>(ty.hi) * in_w + t.lo) * channels];
            real* p11 = &din[(static_cast<std::size_t>(ty.hi) * in_w + t.hi) * channels];
            const real w00 = ty.w_lo * t.w_lo, w01 = ty.w_lo * t.w_hi;
            const real w10 = ty.w_hi * t.w_lo, w11 = ty.w_hi * t.w_hi;
            for (int c = 0; c < channels; ++c) {
                p00[c] += w00 * g[c];
                p01[c] += w01 * g[c];
                p10[c] += w10 * g[c];
                p11[c] += w11 * g[c];
            }
        }
    }
}

}  // namespace cgsam::kernels
