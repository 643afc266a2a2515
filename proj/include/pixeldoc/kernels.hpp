#pragma once

#include <cstddef>

namespace pixeldoc::kernels {

// Dense kernels used by the transformer and the image pipeline. Each kernel
// exists twice: the serial reference below in kernels::serial, and the OpenMP
// version in this namespace. Both compute every output element with the same
// inner-loop order, so results are bitwise identical regardless of thread
// count; tests and the benchmark tool compare the two paths.

// c[m  x n] (+)= a[m x k] * b[k x n]
void matmul(double* c, const double* a, const double* b, int m, int k, int n,
            bool accumulate = false);

// c[m x n] (+)= a[m x k] * b^T, with b stored [n x k]
void matmul_nt(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate = false);

// c[k x n] (+)= a^T * b, with a stored [m x k], b stored [m x n]
void matmul_tn(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate = false);

// Row-wise softmax in place, with max subtraction.
void softmax_rows(double* x, int rows, int cols);

// y = 0.5 * x * (1 + erf(x / sqrt 2)), elementwise over n values.
void gelu_forward(double* y, const double* x, std::size_t n);

// dx (+)= dy * gelu'(x)
void gelu_backward(double* dx, const double* x, const double* dy, std::size_t n,
                   bool accumulate = false);

// Per-row layer norm; mean and rstd (1/sqrt(var+eps)) are saved for backward.
void layernorm_forward(double* y, double* mean, double* rstd, const double* x,
                       const double* gamma, const double* beta, int rows, int cols,
                       double eps);

// dx is overwritten; dgamma/dbeta accumulate.
void layernorm_backward(double* dx, double* dgamma, double* dbeta, const double* dy,
                        const double* x, const double* gamma, const double* mean,
                        const double* rstd, int rows, int cols);

namespace serial {

void matmul(double* c, const double* a, const double* b, int m, int k, int n,
            bool accumulate = false);
void matmul_nt(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate = false);
void matmul_tn(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate = false);
void softmax_rows(double* x, int rows, int cols);
void gelu_forward(double* y, const double* x, std::size_t n);
void gelu_backward(double* dx, const double* x, const double* dy, std::size_t n,
                   bool accumulate = false);
void layernorm_forward(double* y, double* mean, double* rstd, const double* x,
                       const double* gamma, const double* beta, int rows, int cols,
                       double eps);
void layernorm_backward(double* dx, double* dgamma, double* dbeta, const double* dy,
                        const double* x, const double* gamma, const double* mean,
                        const double* rstd, int rows, int cols);

}  // namespace serial

}  // namespace pixeldoc::kernels
