#pragma once

// Dense numeric kernels used by the autograd engine.
//
// Two implementations share every signature:
//   cgsam::kernels            OpenMP row-parallel kernels (used by the engine)
//   cgsam::kernels::reference plain serial loops, kept as the test oracle
//
// All matrices are row-major. Each output element is produced by exactly one
// thread with a fixed summation order, so results do not depend on the
// number of OpenMP threads.

#include <span>

#include "cgsam/tensor.hpp"

namespace cgsam::kernels {

// C[m x n] (+)= A[m x k] * B[k x n]
void gemm_nn(std::span<const real> a, std::span<const real> b, std::span<real> c, int m, int k, int n,
             bool accumulate);
// C[m x n] (+)= A[m x k] * B[n x k]^T
void gemm_nt(std::span<const real> a, std::span<const real> b, std::span<real> c, int m, int k, int n,
             bool accumulate);
// C[m x n] (+)= A[k x m]^T * B[k x n]
void gemm_tn(std::span<const real> a, std::span<const real> b, std::span<real> c, int m, int k, int n,
             bool accumulate);

void softmax_rows(std::span<real> x, int rows, int cols);
// dx = y * (dy - sum(dy*y)) per row, accumulated into dx.
void softmax_rows_backward(std::span<const real> y, std::span<const real> dy, std::span<real> dx, int rows,
                           int cols);

// Per-row normalization; stores mean and reciprocal std per row for the backward pass.
void layer_norm(std::span<const real> x, std::span<const real> gamma, std::span<const real> beta,
                std::span<real> y, std::span<real> mean, std::span<real> rstd, int rows, int cols, real eps);
// Accumulates into dx, dgamma, dbeta (any of which may be empty to skip).
void layer_norm_backward(std::span<const real> x, std::span<const real> gamma, std::span<const real> mean,
                         std::span<const real> rstd, std::span<const real> dy, std::span<real> dx,
                         std::span<real> dgamma, std::span<real> dbeta, int rows, int cols);

// Exact GELU, x * Phi(x).
void gelu(std::span<const real> x, std::span<real> y);
void gelu_backward(std::span<const real> x, std::span<const real> dy, std::span<real> dx);

// Bilinear resampling with half-pixel centers and edge clamping
// (align_corners = false). Input/output are (h*w) x channels.
void bilinear_resize(std::span<const real> in, std::span<real> out, int channels, int in_h, int in_w, int out_h,
                     int out_w);
// Adjoint of bilinear_resize, accumulated into din.
void bilinear_resize_backward(std::span<const real> dout, std::span<real> din, int channels, int in_h, int in_w,
                              int out_h, int out_w);

namespace reference {

void gemm_nn(std::span<const real> a, std::span<const real> b, std::span<real> c, int m, int k, int n,
             bool accumulate);
void gemm_nt(std::span<const real> a, std::span<const real> b, std::span<real> c, int m, int k, int n,
             bool accumulate);
void gemm_tn(std::span<const real> a, std::span<const real> b, std::span<real> c, int m, int k, int n,
             bool accumulate);
void softmax_rows(std::span<real> x, int rows, int cols);
void softmax_rows_backward(std::span<const real> y, std::span<const real> dy, std::span<real> dx, int rows,
                           int cols);
void layer_norm(std::span<const real> x, std::span<const real> gamma, std::span<const real> beta,
                std::span<real> y, std::span<real> mean, std::span<real> rstd, int rows, int cols, real eps);
void layer_norm_backward(std::span<const real> x, std::span<const real> gamma, std::span<const real> mean,
                         std::span<const real> rstd, std::span<const real> dy, std::span<real> dx,
                         std::span<real> dgamma, std::span<real> dbeta, int rows, int cols);
void gelu(std::span<const real> x, std::span<real> y);
void gelu_backward(std::span<const real> x, std::span<const real> dy, std::span<real> dx);
void bilinear_resize(std::span<const real> in, std::span<real> out, int channels, int in_h, int in_w, int out_h,
                     int out_w);
void bilinear_resize_backward(std::span<const real> dout, std::span<real> din, int channels, int in_h, int in_w,
                              int out_h, int out_w);

}  // namespace reference

/// Source taps of one output coordinate along an axis.
struct BilinearTap {
    int lo = 0;
    int hi = 0;
    real w_lo = 1.0;
    real w_hi = 0.0;
};

BilinearTap bilinear_tap(int out_index, int in_size, int out_size);

}  // namespace cgsam::kernels
