#include "pixeldoc/kernels.hpp"

#include <cmath>

namespace pixeldoc::kernels {

namespace {

inline double dot(const double* a, const double* b, int n) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

inline double gelu_value(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440));
}

inline double gelu_slope(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
    const double pdf = std::exp(-0.5 * x * x) * 0.39894228040143267794;
    return cdf + x * pdf;
}

inline void softmax_row(double* row, int n) {
    double mx = row[0];
    for (int i = 1; i < n; ++i) {
        if (row[i] > mx) mx = row[i];
    }
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        row[i] = std::exp(row[i] - mx);
        sum += row[i];
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < n; ++i) {
        row[i] *= inv;
    }
}

inline void layernorm_row(double* y, double* mean, double* rstd, const double* x,
                          const double* gamma, const double* beta, int cols, double eps) {
    double mu = 0.0;
    for (int i = 0; i < cols; ++i) mu += x[i];
    mu /= cols;
    double var = 0.0;
    for (int i = 0; i < cols; ++i) {
        const double d = x[i] - mu;
        var += d * d;
    }
    var /= cols;
    const double rs = 1.0 / std::sqrt(var + eps);
    for (int i = 0; i < cols; ++i) {
        y[i] = (x[i] - mu) * rs * gamma[i] + beta[i];
    }
    *mean = mu;
    *rstd = rs;
}

inline void layernorm_row_dx(double* dx, const double* dy, const double* x,
                             const double* gamma, double mean, double rstd, int cols) {
    double a = 0.0;
    double b = 0.0;
    for (int i = 0; i < cols; ++i) {
        const double xhat = (x[i] - mean) * rstd;
        const double dxhat = dy[i] * gamma[i];
        a += dxhat;
        b += dxhat * xhat;
    }
    a /= cols;
    b /= cols;
    for (int i = 0; i < cols; ++i) {
        const double xhat = (x[i] - mean) * rstd;
        dx[i] = rstd * (dy[i] * gamma[i] - a - xhat * b);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// OpenMP path: outer loops over independent output rows/elements.

void matmul(double* c, const double* a, const double* b, int m, int k, int n,
            bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            double acc = accumulate ? crow[j] : 0.0;
            for (int p = 0; p < k; ++p) {
                acc += arow[p] * b[static_cast<std::size_t>(p) * n + j];
            }
            crow[j] = acc;
        }
    }
}

void matmul_nt(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double v = dot(arow, b + static_cast<std::size_t>(j) * k, k);
            crow[j] = accumulate ? crow[j] + v : v;
        }
    }
}

void matmul_tn(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < k; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            double acc = accumulate ? crow[j] : 0.0;
            for (int r = 0; r < m; ++r) {
                acc += a[static_cast<std::size_t>(r) * k + i] *
                       b[static_cast<std::size_t>(r) * n + j];
            }
            crow[j] = acc;
        }
    }
}

void softmax_rows(double* x, int rows, int cols) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        softmax_row(x + static_cast<std::size_t>(r) * cols, cols);
    }
}

void gelu_forward(double* y, const double* x, std::size_t n) {
    const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        y[i] = gelu_value(x[i]);
    }
}

void gelu_backward(double* dx, const double* x, const double* dy, std::size_t n,
                   bool accumulate) {
    const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        const double v = dy[i] * gelu_slope(x[i]);
        dx[i] = accumulate ? dx[i] + v : v;
    }
}

void layernorm_forward(double* y, double* mean, double* rstd, const double* x,
                       const double* gamma, const double* beta, int rows, int cols,
                       double eps) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * cols;
        layernorm_row(y + off, mean + r, rstd + r, x + off, gamma, beta, cols, eps);
    }
}

void layernorm_backward(double* dx, double* dgamma, double* dbeta, const double* dy,
                        const double* x, const double* gamma, const double* mean,
                        const double* rstd, int rows, int cols) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * cols;
        layernorm_row_dx(dx + off, dy + off, x + off, gamma, mean[r], rstd[r], cols);
    }
    // Parameter grads reduce over rows; parallel over columns keeps the
    // per-column accumulation order fixed.
#pragma omp parallel for schedule(static)
    for (int i = 0; i < cols; ++i) {
        double dg = 0.0;
        double db = 0.0;
        for (int r = 0; r < rows; ++r) {
            const std::size_t off = static_cast<std::size_t>(r) * cols + i;
            const double xhat = (x[off] - mean[r]) * rstd[r];
            dg += dy[off] * xhat;
            db += dy[off];
        }
        dgamma[i] += dg;
        dbeta[i] += db;
    }
}

// ---------------------------------------------------------------------------
// Serial reference path: same loop bodies, no pragmas.

namespace serial {

void matmul(double* c, const double* a, const double* b, int m, int k, int n,
            bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            double acc = accumulate ? crow[j] : 0.0;
            for (int p = 0; p < k; ++p) {
                acc += arow[p] * b[static_cast<std::size_t>(p) * n + j];
            }
            crow[j] = acc;
        }
    }
}

void matmul_nt(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double v = dot(arow, b + static_cast<std::size_t>(j) * k, k);
            crow[j] = accumulate ? crow[j] + v : v;
        }
    }
}

void matmul_tn(double* c, const double* a, const double* b, int m, int k, int n,
               bool accumulate) {
    for (int i = 0; i < k; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            double acc = accumulate ? crow[j] : 0.0;
            for (int r = 0; r < m; ++r) {
                acc += a[static_cast<std::size_t>(r) * k + i] *
                       b[static_cast<std::size_t>(r) * n + j];
            }
            crow[j] = acc;
        }
    }
}

void softmax_rows(double* x, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        softmax_row(x + static_cast<std::size_t>(r) * cols, cols);
    }
}

void gelu_forward(double* y, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = gelu_value(x[i]);
    }
}

void gelu_backward(double* dx, const double* x, const double* dy, std::size_t n,
                   bool accumulate) {
    for (std::size_t i = 0; i < n; ++i) {
        const double v = dy[i] * gelu_slope(x[i]);
        dx[i] = accumulate ? dx[i] + v : v;
    }
}

void layernorm_forward(double* y, double* mean, double* rstd, const double* x,
                       const double* gamma, const double* beta, int rows, int cols,
                       double eps) {
    for (int r = 0; r < rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * cols;
        layernorm_row(y + off, mean + r, rstd + r, x + off, gamma, beta, cols, eps);
    }
}

void layernorm_backward(double* dx, double* dgamma, double* dbeta, const double* dy,
                        const double* x, const double* gamma, const double* mean,
                        const double* rstd, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * cols;
        layernorm_row_dx(dx + off, dy + off, x + off, gamma, mean[r], rstd[r], cols);
    }
    for (int i = 0; i < cols; ++i) {
        double dg = 0.0;
        double db = 0.0;
        for (int r = 0; r < rows; ++r) {
            const std::size_t off = static_cast<std::size_t>(r) * cols + i;
            const double xhat = (x[off] - mean[r]) * rstd[r];
            dg += dy[off] * xhat;
            db += dy[off];
        }
        dgamma[i] += dg;
        dbeta[i] += db;
    }
}

}  // namespace serial

}  // namespace pixeldoc::kernels
