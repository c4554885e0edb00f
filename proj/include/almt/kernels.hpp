#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

// Dense kernels behind the tensor ops. The primary versions are
// OpenMP-parallel over output rows; every per-element reduction runs in a
// fixed ascending order, so results are bit-identical to the serial
// reference in almt::kern::serial regardless of thread count. Products and
// partial sums are accumulated in double before the final store.

namespace almt::kern {

// Work thresholds below which the OpenMP versions stay serial.
inline constexpr std::int64_t kParMatmulFlops = 1 << 16;
inline constexpr std::int64_t kParRowsWork = 1 << 14;
inline constexpr std::int64_t kParElemWork = 1 << 14;

// C[m x n] = A[m x k] * B[k x n], C += when Acc.
template <typename T, bool Acc = false>
void matmul_nn(T* c, const T* a, const T* b, int m, int k, int n) {
    const std::int64_t flops = static_cast<std::int64_t>(m) * k * n;
#pragma omp parallel for schedule(static) if (flops >= kParMatmulFlops)
    for (int i = 0; i < m; ++i) {
        std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
        const T* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = static_cast<double>(arow[p]);
            const T* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) acc[static_cast<std::size_t>(j)] += av * static_cast<double>(brow[j]);
        }
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double v = Acc ? static_cast<double>(crow[j]) + acc[static_cast<std::size_t>(j)]
                                 : acc[static_cast<std::size_t>(j)];
            crow[j] = static_cast<T>(v);
        }
    }
}

// C[m x n] = A[m x k] * B[n x k]^T.
template <typename T, bool Acc = false>
void matmul_nt(T* c, const T* a, const T* b, int m, int k, int n) {
    const std::int64_t flops = static_cast<std::int64_t>(m) * k * n;
#pragma omp parallel for schedule(static) if (flops >= kParMatmulFlops)
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += static_cast<double>(arow[p]) * static_cast<double>(brow[p]);
            crow[j] = static_cast<T>(Acc ? static_cast<double>(crow[j]) + acc : acc);
        }
    }
}

// C[m x n] = A[k x m]^T * B[k x n].
template <typename T, bool Acc = false>
void matmul_tn(T* c, const T* a, const T* b, int m, int k, int n) {
    const std::int64_t flops = static_cast<std::int64_t>(m) * k * n;
#pragma omp parallel for schedule(static) if (flops >= kParMatmulFlops)
    for (int i = 0; i < m; ++i) {
        std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
        for (int p = 0; p < k; ++p) {
            const double av = static_cast<double>(a[static_cast<std::size_t>(p) * m + i]);
            const T* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) acc[static_cast<std::size_t>(j)] += av * static_cast<double>(brow[j]);
        }
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double v = Acc ? static_cast<double>(crow[j]) + acc[static_cast<std::size_t>(j)]
                                 : acc[static_cast<std::size_t>(j)];
            crow[j] = static_cast<T>(v);
        }
    }
}

// Row-wise softmax with max subtraction.
template <typename T>
void softmax_rows(T* out, const T* x, int rows, int cols) {
    const std::int64_t work = static_cast<std::int64_t>(rows) * cols;
#pragma omp parallel for schedule(static) if (work >= kParRowsWork)
    for (int i = 0; i < rows; ++i) {
        const T* xr = x + static_cast<std::size_t>(i) * cols;
        T* yr = out + static_cast<std::size_t>(i) * cols;
        double mx = static_cast<double>(xr[0]);
        for (int j = 1; j < cols; ++j) mx = std::max(mx, static_cast<double>(xr[j]));
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double e = std::exp(static_cast<double>(xr[j]) - mx);
            yr[j] = static_cast<T>(e);
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < cols; ++j) yr[j] = static_cast<T>(static_cast<double>(yr[j]) * inv);
    }
}

// dx += y * (g - sum(g * y)) per row, where y is the softmax output.
template <typename T>
void softmax_rows_backward(T* dx, const T* y, const T* g, int rows, int cols) {
    const std::int64_t work = static_cast<std::int64_t>(rows) * cols;
#pragma omp parallel for schedule(static) if (work >= kParRowsWork)
    for (int i = 0; i < rows; ++i) {
        const T* yr = y + static_cast<std::size_t>(i) * cols;
        const T* gr = g + static_cast<std::size_t>(i) * cols;
        T* dr = dx + static_cast<std::size_t>(i) * cols;
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += static_cast<double>(gr[j]) * static_cast<double>(yr[j]);
        for (int j = 0; j < cols; ++j) {
            const double v = static_cast<double>(yr[j]) * (static_cast<double>(gr[j]) - dot);
            dr[j] = static_cast<T>(static_cast<double>(dr[j]) + v);
        }
    }
}

// Row-wise layer norm with population variance: out = (x - mu) / sqrt(var + eps) * gamma + beta.
template <typename T>
void layer_norm_rows(T* out, const T* x, const T* gamma, const T* beta, double eps, int rows, int cols) {
    const std::int64_t work = static_cast<std::int64_t>(rows) * cols;
#pragma omp parallel for schedule(static) if (work >= kParRowsWork)
    for (int i = 0; i < rows; ++i) {
        const T* xr = x + static_cast<std::size_t>(i) * cols;
        T* yr = out + static_cast<std::size_t>(i) * cols;
        double mean = 0.0;
        for (int j = 0; j < cols; ++j) mean += static_cast<double>(xr[j]);
        mean /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double d = static_cast<double>(xr[j]) - mean;
            var += d * d;
        }
        var /= cols;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < cols; ++j) {
            const double xhat = (static_cast<double>(xr[j]) - mean) * inv;
            yr[j] = static_cast<T>(xhat * static_cast<double>(gamma[j]) + static_cast<double>(beta[j]));
        }
    }
}

// Backward of layer_norm_rows. Recomputes per-row statistics from x.
// dgamma/dbeta are accumulated serially in row order so the reduction order
// is fixed; dx rows are independent and accumulated in parallel.
template <typename T>
void layer_norm_rows_backward(T* dx, T* dgamma, T* dbeta, const T* x, const T* gamma, const T* g,
                              double eps, int rows, int cols) {
    const std::int64_t work = static_cast<std::int64_t>(rows) * cols;
    if (dx != nullptr) {
#pragma omp parallel for schedule(static) if (work >= kParRowsWork)
        for (int i = 0; i < rows; ++i) {
            const T* xr = x + static_cast<std::size_t>(i) * cols;
            const T* gr = g + static_cast<std::size_t>(i) * cols;
            T* dr = dx + static_cast<std::size_t>(i) * cols;
            double mean = 0.0;
            for (int j = 0; j < cols; ++j) mean += static_cast<double>(xr[j]);
            mean /= cols;
            double var = 0.0;
            for (int j = 0; j < cols; ++j) {
                const double d = static_cast<double>(xr[j]) - mean;
                var += d * d;
            }
            var /= cols;
            const double inv = 1.0 / std::sqrt(var + eps);
            double sum_gg = 0.0, sum_ggx = 0.0;
            for (int j = 0; j < cols; ++j) {
                const double xhat = (static_cast<double>(xr[j]) - mean) * inv;
                const double gg = static_cast<double>(gr[j]) * static_cast<double>(gamma[j]);
                sum_gg += gg;
                sum_ggx += gg * xhat;
            }
            const double inv_n = 1.0 / cols;
            for (int j = 0; j < cols; ++j) {
                const double xhat = (static_cast<double>(xr[j]) - mean) * inv;
                const double gg = static_cast<double>(gr[j]) * static_cast<double>(gamma[j]);
                const double v = (gg - inv_n * sum_gg - xhat * inv_n * sum_ggx) * inv;
                dr[j] = static_cast<T>(static_cast<double>(dr[j]) + v);
            }
        }
    }
    if (dgamma != nullptr || dbeta != nullptr) {
        for (int j = 0; j < cols; ++j) {
            double dg = 0.0, db = 0.0;
            for (int i = 0; i < rows; ++i) {
                const T* xr = x + static_cast<std::size_t>(i) * cols;
                const double gij = static_cast<double>(g[static_cast<std::size_t>(i) * cols + j]);
                double mean = 0.0;
                for (int q = 0; q < cols; ++q) mean += static_cast<double>(xr[q]);
                mean /= cols;
                double var = 0.0;
                for (int q = 0; q < cols; ++q) {
                    const double d = static_cast<double>(xr[q]) - mean;
                    var += d * d;
                }
                var /= cols;
                const double xhat = (static_cast<double>(xr[j]) - mean) / std::sqrt(var + eps);
                dg += gij * xhat;
                db += gij;
            }
            if (dgamma != nullptr) dgamma[j] = static_cast<T>(static_cast<double>(dgamma[j]) + dg);
            if (dbeta != nullptr) dbeta[j] = static_cast<T>(static_cast<double>(dbeta[j]) + db);
        }
    }
}

// Exact GELU: x * Phi(x) with Phi the standard normal CDF via erf.
template <typename T>
void gelu(T* out, const T* x, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n >= kParElemWork)
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(x[i]);
        out[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * 0.7071067811865475244)));
    }
}

// dx += g * (Phi(x) + x * phi(x)).
template <typename T>
void gelu_backward(T* dx, const T* x, const T* g, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n >= kParElemWork)
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(x[i]);
        const double cdf = 0.5 * (1.0 + std::erf(v * 0.7071067811865475244));
        const double pdf = 0.3989422804014326779 * std::exp(-0.5 * v * v);
        dx[i] = static_cast<T>(static_cast<double>(dx[i]) + static_cast<double>(g[i]) * (cdf + v * pdf));
    }
}

template <typename T>
void add(T* out, const T* a, const T* b, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n >= kParElemWork)
    for (std::int64_t i = 0; i < n; ++i)
        out[i] = static_cast<T>(static_cast<double>(a[i]) + static_cast<double>(b[i]));
}

template <typename T>
void sub(T* out, const T* a, const T* b, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n >= kParElemWork)
    for (std::int64_t i = 0; i < n; ++i)
        out[i] = static_cast<T>(static_cast<double>(a[i]) - static_cast<double>(b[i]));
}

template <typename T>
void hadamard(T* out, const T* a, const T* b, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n >= kParElemWork)
    for (std::int64_t i = 0; i < n; ++i)
        out[i] = static_cast<T>(static_cast<double>(a[i]) * static_cast<double>(b[i]));
}

template <typename T>
void scale(T* out, const T* x, double c, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n >= kParElemWork)
    for (std::int64_t i = 0; i < n; ++i) out[i] = static_cast<T>(static_cast<double>(x[i]) * c);
}

// dst += src (optionally scaled); the grad accumulation workhorse.
template <typename T>
void acc(T* dst, const T* src, std::int64_t n, double c = 1.0) {
#pragma omp parallel for schedule(static) if (n >= kParElemWork)
    for (std::int64_t i = 0; i < n; ++i)
        dst[i] = static_cast<T>(static_cast<double>(dst[i]) + static_cast<double>(src[i]) * c);
}

template <typename T>
void acc_hadamard(T* dst, const T* a, const T* b, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n >= kParElemWork)
    for (std::int64_t i = 0; i < n; ++i)
        dst[i] = static_cast<T>(static_cast<double>(dst[i]) +
                                static_cast<double>(a[i]) * static_cast<double>(b[i]));
}

// out[i, :] = x[i, :] + row.
template <typename T>
void add_row_broadcast(T* out, const T* x, const T* row, int rows, int cols) {
    const std::int64_t work = static_cast<std::int64_t>(rows) * cols;
#pragma omp parallel for schedule(static) if (work >= kParRowsWork)
    for (int i = 0; i < rows; ++i) {
        const T* xr = x + static_cast<std::size_t>(i) * cols;
        T* yr = out + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j)
            yr[j] = static_cast<T>(static_cast<double>(xr[j]) + static_cast<double>(row[j]));
    }
}

// drow[j] += sum_i g[i, j], rows accumulated in ascending order.
template <typename T>
void col_sums_acc(T* drow, const T* g, int rows, int cols) {
    for (int j = 0; j < cols; ++j) {
        double s = 0.0;
        for (int i = 0; i < rows; ++i) s += static_cast<double>(g[static_cast<std::size_t>(i) * cols + j]);
        drow[j] = static_cast<T>(static_cast<double>(drow[j]) + s);
    }
}

// Fixed-order full reduction.
template <typename T>
double sum_all(const T* x, std::int64_t n) {
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += static_cast<double>(x[i]);
    return s;
}

// Serial reference implementations, kept for kernel tests and the benchmark.
// Plain loops with the same per-element accumulation order as the primary
// kernels above; outputs must match them bit for bit.
namespace serial {

template <typename T, bool Acc = false>
void matmul_nn(T* c, const T* a, const T* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int p = 0; p < k; ++p)
                s += static_cast<double>(a[static_cast<std::size_t>(i) * k + p]) *
                     static_cast<double>(b[static_cast<std::size_t>(p) * n + j]);
            T& cv = c[static_cast<std::size_t>(i) * n + j];
            cv = static_cast<T>(Acc ? static_cast<double>(cv) + s : s);
        }
    }
}

template <typename T, bool Acc = false>
void matmul_nt(T* c, const T* a, const T* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int p = 0; p < k; ++p)
                s += static_cast<double>(a[static_cast<std::size_t>(i) * k + p]) *
                     static_cast<double>(b[static_cast<std::size_t>(j) * k + p]);
            T& cv = c[static_cast<std::size_t>(i) * n + j];
            cv = static_cast<T>(Acc ? static_cast<double>(cv) + s : s);
        }
    }
}

template <typename T, bool Acc = false>
void matmul_tn(T* c, const T* a, const T* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int p = 0; p < k; ++p)
                s += static_cast<double>(a[static_cast<std::size_t>(p) * m + i]) *
                     static_cast<double>(b[static_cast<std::size_t>(p) * n + j]);
            T& cv = c[static_cast<std::size_t>(i) * n + j];
            cv = static_cast<T>(Acc ? static_cast<double>(cv) + s : s);
        }
    }
}

template <typename T>
void softmax_rows(T* out, const T* x, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        const T* xr = x + static_cast<std::size_t>(i) * cols;
        T* yr = out + static_cast<std::size_t>(i) * cols;
        double mx = static_cast<double>(xr[0]);
        for (int j = 1; j < cols; ++j) mx = std::max(mx, static_cast<double>(xr[j]));
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double e = std::exp(static_cast<double>(xr[j]) - mx);
            yr[j] = static_cast<T>(e);
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < cols; ++j) yr[j] = static_cast<T>(static_cast<double>(yr[j]) * inv);
    }
}

template <typename T>
void layer_norm_rows(T* out, const T* x, const T* gamma, const T* beta, double eps, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        const T* xr = x + static_cast<std::size_t>(i) * cols;
        T* yr = out + static_cast<std::size_t>(i) * cols;
        double mean = 0.0;
        for (int j = 0; j < cols; ++j) mean += static_cast<double>(xr[j]);
        mean /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double d = static_cast<double>(xr[j]) - mean;
            var += d * d;
        }
        var /= cols;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < cols; ++j) {
            const double xhat = (static_cast<double>(xr[j]) - mean) * inv;
            yr[j] = static_cast<T>(xhat * static_cast<double>(gamma[j]) + static_cast<double>(beta[j]));
        }
    }
}

template <typename T>
void gelu(T* out, const T* x, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(x[i]);
        out[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * 0.7071067811865475244)));
    }
}

template <typename T>
void add(T* out, const T* a, const T* b, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i)
        out[i] = static_cast<T>(static_cast<double>(a[i]) + static_cast<double>(b[i]));
}

} // namespace serial

} // namespace almt::kern
