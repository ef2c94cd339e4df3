// Serial reference kernels. Straightforward loops, no blocking, no OpenMP.
// The optimized kernels in kernels.cpp are tested and benchmarked against these.

#include <algorithm>
#include <cmath>

#include "cgsam/kernels.hpp"

namespace cgsam::kernels::reference {

void gemm_nn(std::span<const real> a, std::span<const real> b, std::span<real> c, int m, int k, int n,
             bool accumulate)
{
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            real s = 0;
            for (int p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

void gemm_nt(std::span<const real> a, std::span<const real> b, std::span<real> c, int m, int k, int n,
             bool accumulate)
{
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            real s = 0;
            for (int p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

void gemm_tn(std::span<const real> a, std::span<const real> b, std::span<real> c, int m, int k, int n,
             bool accumulate)
{
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            real s = 0;
            for (int p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

void softmax_rows(std::span<real> x, int rows, int cols)
{
    for (int r = 0; r < rows; ++r) {
        real mx = x[r * cols];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, x[r * cols + j]);
        real sum = 0;
        for (int j = 0; j < cols; ++j) sum += std::exp(x[r * cols + j] - mx);
        for (int j = 0; j < cols; ++j) x[r * cols + j] = std::exp(x[r * cols + j] - mx) / sum;
    }
}

void softmax_rows_backward(std::span<const real> y, std::span<const real> dy, std::span<real> dx, int rows,
                           int cols)
{
    for (int r = 0; r < rows; ++r)
        for (int i = 0; i < cols; ++i) {
            // Full Jacobian row: d y_j / d x_i = y_j (delta_ij - y_i)
            real g = 0;
            for (int j = 0; j < cols; ++j) {
                const real jac = y[r * cols + j] * ((i == j ? 1.0 : 0.0) - y[r * cols + i]);
                g += jac * dy[r * cols + j];
            }
            dx[r * cols + i] += g;
        }
}

void layer_norm(std::span<const real> x, std::span<const real> gamma, std::span<const real> beta,
                std::span<real> y, std::span<real> mean, std::span<real> rstd, int rows, int cols, real eps)
{
    for (int r = 0; r < rows; ++r) {
        real mu = 0;
        for (int j = 0; j < cols; ++j) mu += x[r * cols + j];
        mu /= cols;
        real var = 0;
        for (int j = 0; j < cols; ++j) var += (x[r * cols + j] - mu) * (x[r * cols + j] - mu);
        var /= cols;
        mean[r] = mu;
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < cols; ++j) y[r * cols + j] = gamma[j] * (x[r * cols + j] - mu) * rstd[r] + beta[j];
    }
}

void layer_norm_backward(std::span<const real> x, std::span<const real> gamma, std::span<const real> mean,
                         std::span<const real> rstd, std::span<const real> dy, std::span<real> dx,
                         std::span<real> dgamma, std::span<real> dbeta, int rows, int cols)
{
    for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < cols; ++j) {
            const real xhat = (x[r * cols + j] - mean[r]) * rstd[r];
            if (!dgamma.empty()) dgamma[j] += dy[r * cols + j] * xhat;
            if (!dbeta.empty()) dbeta[j] += dy[r * cols + j];
        }
        if (dx.empty()) continue;
        // Explicit Jacobian of xhat: rstd * (delta_ij - 1/n - xhat_i xhat_j / n)
        for (int i = 0; i < cols; ++i) {
            const real xi = (x[r * cols + i] - mean[r]) * rstd[r];
            real g = 0;
            for (int j = 0; j < cols; ++j) {
                const real xj = (x[r * cols + j] - mean[r]) * rstd[r];
                const real jac = rstd[r] * ((i == j ? 1.0 : 0.0) - 1.0 / cols - xi * xj / cols);
                g += dy[r * cols + j] * gamma[j] * jac;
            }
            dx[r * cols + i] += g;
        }
    }
}

void gelu(std::span<const real> x, std::span<real> y)
{
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * 0.5 * std::erfc(-x[i] / std::sqrt(2.0));
}

void gelu_backward(std::span<const real> x, std::span<const real> dy, std::span<real> dx)
{
    const real pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const real cdf = 0.5 * std::erfc(-x[i] / std::sqrt(2.0));
        const real pdf = std::exp(-x[i] * x[i] / 2.0) / std::sqrt(2.0 * pi);
        dx[i] += dy[i] * (cdf + x[i] * pdf);
    }
}

namespace {

// Source coordinate under half-pixel centers, clamped at the low edge.
void source_coord(int o, int in_size, int out_size, int& lo, int& hi, real& frac)
{
    real src = (o + 0.5) * in_size / out_size - 0.5;
    src = std::max(src, 0.0);
    lo = std::min(static_cast<int>(src), in_size - 1);
    hi = std::min(lo + 1, in_size - 1);
    frac = hi == lo ? 0.0 : src - lo;
}

}  // namespace

void bilinear_resize(std::span<const real> in, std::span<real> out, int channels, int in_h, int in_w, int out_h,
                     int out_w)
{
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            int y0, y1, x0, x1;
            real fy, fx;
            source_coord(y, in_h, out_h, y0, y1, fy);
            source_coord(x, in_w, out_w, x0, x1, fx);
            for (int c = 0; c < channels; ++c) {
                const real v00 = in[(y0 * in_w + x0) * channels + c];
                const real v01 = in[(y0 * in_w + x1) * channels + c];
                const real v10 = in[(y1 * in_w + x0) * channels + c];
                const real v11 = in[(y1 * in_w + x1) * channels + c];
                out[(y * out_w + x) * channels + c] = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                                      fy * ((1 - fx) * v10 + fx * v11);
            }
        }
}

void bilinear_resize_backward(std::span<const real> dout, std::span<real> din, int channels, int in_h, int in_w,
                              int out_h, int out_w)
{
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            int y0, y1, x0, x1;
            real fy, fx;
            source_coord(y, in_h, out_h, y0, y1, fy);
            source_coord(x, in_w, out_w, x0, x1, fx);
            for (int c = 0; c < channels; ++c) {
                const real g = dout[(y * out_w + x) * channels + c];
                din[(y0 * in_w + x0) * channels + c] += (1 - fy) * (1 - fx) * g;
                din[(y0 * in_w + x1) * channels + c] += (1 - fy) * fx * g;
                din[(y1 * in_w + x0) * channels + c] += fy * (1 - fx) * g;
                din[(y1 * in_w + x1) * channels + c] += fy * fx * g;
            }
        }
}

}  // namespace cgsam::kernels::reference
