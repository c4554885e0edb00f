#include "almt/ops.hpp"

#include <cstring>

#include "almt/kernels.hpp"

namespace almt {

namespace {

template <typename T>
void require_rank2(const TensorT<T>& t, const char* op, const char* role) {
    if (t.rank() > 2)
        throw DimensionError(std::string(op) + ": " + role + " must have rank <= 2, got shape " +
                             t.shape().str());
}

template <typename T>
bool track(const TapeT<T>& tape, const TensorT<T>& a) {
    return tape.recording() && a.requires_grad();
}

template <typename T>
bool track(const TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
    return tape.recording() && (a.requires_grad() || b.requires_grad());
}

} // namespace

template <typename T>
TensorT<T> matmul(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
    require_rank2(a, "matmul", "lhs");
    require_rank2(b, "matmul", "rhs");
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner extents differ, " + a.shape().str() + " x " +
                             b.shape().str());
    const int m = a.rows(), k = a.cols(), n = b.cols();
    TensorT<T> out = TensorT<T>::zeros({m, n});
    kern::matmul_nn<T>(out.data(), a.data(), b.data(), m, k, n);
    check_finite(out, "matmul");
    if (track(tape, a, b)) {
        out.mark_tracked();
        TensorT<T> av = a, bv = b, ov = out;
        tape.record([av, bv, ov, m, k, n]() mutable {
            const T* g = ov.grad();
            // dA += g * B^T, dB += A^T * g
            if (av.requires_grad()) kern::matmul_nt<T, true>(av.grad(), g, bv.data(), m, n, k);
            if (bv.requires_grad()) kern::matmul_tn<T, true>(bv.grad(), av.data(), g, k, m, n);
        }, out);
    }
    return out;
}

template <typename T>
TensorT<T> matmul_nt(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
    require_rank2(a, "matmul_nt", "lhs");
    require_rank2(b, "matmul_nt", "rhs");
    if (a.cols() != b.cols())
        throw DimensionError("matmul_nt: inner extents differ, " + a.shape().str() + " x " +
                             b.shape().str() + "^T");
    const int m = a.rows(), k = a.cols(), n = b.rows();
    TensorT<T> out = TensorT<T>::zeros({m, n});
    kern::matmul_nt<T>(out.data(), a.data(), b.data(), m, k, n);
    check_finite(out, "matmul_nt");
    if (track(tape, a, b)) {
        out.mark_tracked();
        TensorT<T> av = a, bv = b, ov = out;
        tape.record([av, bv, ov, m, k, n]() mutable {
            const T* g = ov.grad();
            // C = A * B^T: dA += g * B, dB += g^T * A
            if (av.requires_grad()) kern::matmul_nn<T, true>(av.grad(), g, bv.data(), m, n, k);
            if (bv.requires_grad()) kern::matmul_tn<T, true>(bv.grad(), g, av.data(), n, m, k);
        }, out);
    }
    return out;
}

namespace {

template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shapes differ, " + a.shape().str() + " vs " +
                             b.shape().str());
}

} // namespace

template <typename T>
TensorT<T> add(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "add");
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    kern::add<T>(out.data(), a.data(), b.data(), a.numel());
    check_finite(out, "add");
    if (track(tape, a, b)) {
        out.mark_tracked();
        TensorT<T> av = a, bv = b, ov = out;
        tape.record([av, bv, ov]() mutable {
            const T* g = ov.grad();
            if (av.requires_grad()) kern::acc<T>(av.grad(), g, av.numel());
            if (bv.requires_grad()) kern::acc<T>(bv.grad(), g, bv.numel());
        }, out);
    }
    return out;
}

template <typename T>
TensorT<T> sub(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "sub");
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    kern::sub<T>(out.data(), a.data(), b.data(), a.numel());
    check_finite(out, "sub");
    if (track(tape, a, b)) {
        out.mark_tracked();
        TensorT<T> av = a, bv = b, ov = out;
        tape.record([av, bv, ov]() mutable {
            const T* g = ov.grad();
            if (av.requires_grad()) kern::acc<T>(av.grad(), g, av.numel());
            if (bv.requires_grad()) kern::acc<T>(bv.grad(), g, bv.numel(), -1.0);
        }, out);
    }
    return out;
}

template <typename T>
TensorT<T> mul(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "mul");
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    kern::hadamard<T>(out.data(), a.data(), b.data(), a.numel());
    check_finite(out, "mul");
    if (track(tape, a, b)) {
        out.mark_tracked();
        TensorT<T> av = a, bv = b, ov = out;
        tape.record([av, bv, ov]() mutable {
            const T* g = ov.grad();
            if (av.requires_grad()) kern::acc_hadamard<T>(av.grad(), g, bv.data(), av.numel());
            if (bv.requires_grad()) kern::acc_hadamard<T>(bv.grad(), g, av.data(), bv.numel());
        }, out);
    }
    return out;
}

template <typename T>
TensorT<T> scale(TapeT<T>& tape, const TensorT<T>& x, double c) {
    TensorT<T> out = TensorT<T>::zeros(x.shape());
    kern::scale<T>(out.data(), x.data(), c, x.numel());
    check_finite(out, "scale");
    if (track(tape, x)) {
        out.mark_tracked();
        TensorT<T> xv = x, ov = out;
        tape.record([xv, ov, c]() mutable { kern::acc<T>(xv.grad(), ov.grad(), xv.numel(), c); }, out);
    }
    return out;
}

template <typename T>
TensorT<T> add_row_broadcast(TapeT<T>& tape, const TensorT<T>& x, const TensorT<T>& row) {
    require_rank2(x, "add_row_broadcast", "input");
    if (row.rank() != 1 || row.cols() != x.cols())
        throw DimensionError("add_row_broadcast: row shape " + row.shape().str() +
                             " does not match input " + x.shape().str());
    TensorT<T> out = TensorT<T>::zeros(x.shape());
    kern::add_row_broadcast<T>(out.data(), x.data(), row.data(), x.rows(), x.cols());
    check_finite(out, "add_row_broadcast");
    if (track(tape, x, row)) {
        out.mark_tracked();
        TensorT<T> xv = x, rv = row, ov = out;
        tape.record([xv, rv, ov]() mutable {
            const T* g = ov.grad();
            if (xv.requires_grad()) kern::acc<T>(xv.grad(), g, xv.numel());
            if (rv.requires_grad()) kern::col_sums_acc<T>(rv.grad(), g, xv.rows(), xv.cols());
        }, out);
    }
    return out;
}

template <typename T>
TensorT<T> softmax_rows(TapeT<T>& tape, const TensorT<T>& x) {
    require_rank2(x, "softmax_rows", "input");
    check_finite(x, "softmax_rows input");
    TensorT<T> out = TensorT<T>::zeros(x.shape());
    kern::softmax_rows<T>(out.data(), x.data(), x.rows(), x.cols());
    check_finite(out, "softmax_rows");
    if (track(tape, x)) {
        out.mark_tracked();
        TensorT<T> xv = x, ov = out;
        tape.record([xv, ov]() mutable {
            kern::softmax_rows_backward<T>(xv.grad(), ov.data(), ov.grad(), xv.rows(), xv.cols());
        }, out);
    }
    return out;
}

template <typename T>
TensorT<T> layer_norm_rows(TapeT<T>& tape, const TensorT<T>& x, const TensorT<T>& gamma,
                           const TensorT<T>& beta, double eps) {
    require_rank2(x, "layer_norm_rows", "input");
    if (eps <= 0) throw ValidationError("layer_norm_rows: eps must be positive");
    if (gamma.rank() != 1 || gamma.cols() != x.cols() || beta.rank() != 1 || beta.cols() != x.cols())
        throw DimensionError("layer_norm_rows: gamma " + gamma.shape().str() + " / beta " +
                             beta.shape().str() + " do not match input " + x.shape().str());
    TensorT<T> out = TensorT<T>::zeros(x.shape());
    kern::layer_norm_rows<T>(out.data(), x.data(), gamma.data(), beta.data(), eps, x.rows(), x.cols());
    check_finite(out, "layer_norm_rows");
    if (tape.recording() && (x.requires_grad() || gamma.requires_grad() || beta.requires_grad())) {
        out.mark_tracked();
        TensorT<T> xv = x, gv = gamma, bv = beta, ov = out;
        tape.record([xv, gv, bv, ov, eps]() mutable {
            kern::layer_norm_rows_backward<T>(xv.requires_grad() ? xv.grad() : nullptr,
                                              gv.requires_grad() ? gv.grad() : nullptr,
                                              bv.requires_grad() ? bv.grad() : nullptr, xv.data(),
                                              gv.data(), ov.grad(), eps, xv.rows(), xv.cols());
        }, out);
    }
    return out;
}

template <typename T>
TensorT<T> gelu(TapeT<T>& tape, const TensorT<T>& x) {
    TensorT<T> out = TensorT<T>::zeros(x.shape());
    kern::gelu<T>(out.data(), x.data(), x.numel());
    check_finite(out, "gelu");
    if (track(tape, x)) {
        out.mark_tracked();
        TensorT<T> xv = x, ov = out;
        tape.record([xv, ov]() mutable {
            kern::gelu_backward<T>(xv.grad(), xv.data(), ov.grad(), xv.numel());
        }, out);
    }
    return out;
}

template <typename T>
TensorT<T> concat_rows(TapeT<T>& tape, std::span<const TensorT<T>> parts) {
    if (parts.empty()) throw ValidationError("concat_rows: no parts given");
    const int cols = parts[0].cols();
    int total_rows = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        require_rank2(p, "concat_rows", "part");
        if (p.cols() != cols)
            throw DimensionError("concat_rows: column extent differs, " + parts[0].shape().str() +
                                 " vs " + p.shape().str());
        total_rows += p.rows();
        any_grad = any_grad || p.requires_grad();
    }
    TensorT<T> out = TensorT<T>::zeros({total_rows, cols});
    int at = 0;
    for (const auto& p : parts) {
        std::memcpy(out.data() + static_cast<std::size_t>(at) * cols, p.data(),
                    static_cast<std::size_t>(p.numel()) * sizeof(T));
        at += p.rows();
    }
    check_finite(out, "concat_rows");
    if (tape.recording() && any_grad) {
        out.mark_tracked();
        std::vector<TensorT<T>> pv(parts.begin(), parts.end());
        TensorT<T> ov = out;
        tape.record([pv, ov, cols]() mutable {
            const T* g = ov.grad();
            int row = 0;
            for (auto& p : pv) {
                if (p.requires_grad())
                    kern::acc<T>(p.grad(), g + static_cast<std::size_t>(row) * cols, p.numel());
                row += p.rows();
            }
        }, out);
    }
    return out;
}

template <typename T>
TensorT<T> concat_cols(TapeT<T>& tape, std::span<const TensorT<T>> parts) {
    if (parts.empty()) throw ValidationError("concat_cols: no parts given");
    const int rows = parts[0].rows();
    int total_cols = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        require_rank2(p, "concat_cols", "part");
        if (p.rows() != rows)
            throw DimensionError("concat_cols: row extent differs, " + parts[0].shape().str() +
                                 " vs " + p.shape().str());
        total_cols += p.cols();
        any_grad = any_grad || p.requires_grad();
    }
    TensorT<T> out = TensorT<T>::zeros({rows, total_cols});
    int at = 0;
    for (const auto& p : parts) {
        const int pc = p.cols();
        for (int i = 0; i < rows; ++i)
            std::memcpy(out.data() + static_cast<std::size_t>(i) * total_cols + at,
                        p.data() + static_cast<std::size_t>(i) * pc,
                        static_cast<std::size_t>(pc) * sizeof(T));
        at += pc;
    }
    check_finite(out, "concat_cols");
    if (tape.recording() && any_grad) {
        out.mark_tracked();
        std::vector<TensorT<T>> pv(parts.begin(), parts.end());
        TensorT<T> ov = out;
        tape.record([pv, ov, rows, total_cols]() mutable {
            const T* g = ov.grad();
            int col = 0;
            for (auto& p : pv) {
                const int pc = p.cols();
                if (p.requires_grad()) {
                    T* pg = p.grad();
                    for (int i = 0; i < rows; ++i)
                        kern::acc<T>(pg + static_cast<std::size_t>(i) * pc,
                                     g + static_cast<std::size_t>(i) * total_cols + col, pc);
                }
                col += pc;
            }
        }, out);
    }
    return out;
}

template <typename T>
TensorT<T> slice_rows(TapeT<T>& tape, const TensorT<T>& x, int begin, int count) {
    require_rank2(x, "slice_rows", "input");
    if (begin < 0 || count < 1 || begin + count > x.rows())
        throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") out of bounds for " +
                             x.shape().str());
    const int cols = x.cols();
    TensorT<T> out = TensorT<T>::zeros({count, cols});
    std::memcpy(out.data(), x.data() + static_cast<std::size_t>(begin) * cols,
                static_cast<std::size_t>(count) * cols * sizeof(T));
    if (track(tape, x)) {
        out.mark_tracked();
        TensorT<T> xv = x, ov = out;
        tape.record([xv, ov, begin, cols]() mutable {
            kern::acc<T>(xv.grad() + static_cast<std::size_t>(begin) * cols, ov.grad(), ov.numel());
        }, out);
    }
    return out;
}

template <typename T>
TensorT<T> mean_rows(TapeT<T>& tape, const TensorT<T>& x) {
    require_rank2(x, "mean_rows", "input");
    const int rows = x.rows(), cols = x.cols();
    TensorT<T> out = TensorT<T>::zeros({1, cols});
    for (int j = 0; j < cols; ++j) {
        double s = 0.0;
        for (int i = 0; i < rows; ++i) s += static_cast<double>(x.at(i, j));
        out.data()[j] = static_cast<T>(s / rows);
    }
    check_finite(out, "mean_rows");
    if (track(tape, x)) {
        out.mark_tracked();
        TensorT<T> xv = x, ov = out;
        tape.record([xv, ov, rows, cols]() mutable {
            const T* g = ov.grad();
            T* dx = xv.grad();
            const double inv = 1.0 / rows;
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) {
                    T& d = dx[static_cast<std::size_t>(i) * cols + j];
                    d = static_cast<T>(static_cast<double>(d) + static_cast<double>(g[j]) * inv);
                }
        }, out);
    }
    return out;
}

template <typename T>
TensorT<T> sum_all(TapeT<T>& tape, const TensorT<T>& x) {
    TensorT<T> out = TensorT<T>::scalar(static_cast<T>(kern::sum_all<T>(x.data(), x.numel())));
    check_finite(out, "sum_all");
    if (track(tape, x)) {
        out.mark_tracked();
        TensorT<T> xv = x, ov = out;
        tape.record([xv, ov]() mutable {
            const double g = static_cast<double>(ov.grad()[0]);
            T* dx = xv.grad();
            const std::int64_t n = xv.numel();
            for (std::int64_t i = 0; i < n; ++i)
                dx[i] = static_cast<T>(static_cast<double>(dx[i]) + g);
        }, out);
    }
    return out;
}

template <typename T>
TensorT<T> dropout(TapeT<T>& tape, const TensorT<T>& x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ValidationError("dropout: rate must be in [0, 1)");
    if (rate == 0.0) return x;
    TensorT<T> mask = TensorT<T>::zeros(x.shape());
    const double keep_inv = 1.0 / (1.0 - rate);
    for (std::int64_t i = 0; i < x.numel(); ++i)
        mask.data()[i] = rng.uniform01() >= rate ? static_cast<T>(keep_inv) : T{0};
    return mul(tape, x, mask);
}

#define ALMT_INSTANTIATE_OPS(T)                                                                    \
    template TensorT<T> matmul<T>(TapeT<T>&, const TensorT<T>&, const TensorT<T>&);                \
    template TensorT<T> matmul_nt<T>(TapeT<T>&, const TensorT<T>&, const TensorT<T>&);             \
    template TensorT<T> add<T>(TapeT<T>&, const TensorT<T>&, const TensorT<T>&);                   \
    template TensorT<T> sub<T>(TapeT<T>&, const TensorT<T>&, const TensorT<T>&);                   \
    template TensorT<T> mul<T>(TapeT<T>&, const TensorT<T>&, const TensorT<T>&);                   \
    template TensorT<T> scale<T>(TapeT<T>&, const TensorT<T>&, double);                            \
    template TensorT<T> add_row_broadcast<T>(TapeT<T>&, const TensorT<T>&, const TensorT<T>&);     \
    template TensorT<T> softmax_rows<T>(TapeT<T>&, const TensorT<T>&);                             \
    template TensorT<T> layer_norm_rows<T>(TapeT<T>&, const TensorT<T>&, const TensorT<T>&,        \
                                           const TensorT<T>&, double);                             \
    template TensorT<T> gelu<T>(TapeT<T>&, const TensorT<T>&);                                     \
    template TensorT<T> concat_rows<T>(TapeT<T>&, std::span<const TensorT<T>>);                    \
    template TensorT<T> concat_cols<T>(TapeT<T>&, std::span<const TensorT<T>>);                    \
    template TensorT<T> slice_rows<T>(TapeT<T>&, const TensorT<T>&, int, int);                     \
    template TensorT<T> mean_rows<T>(TapeT<T>&, const TensorT<T>&);                                \
    template TensorT<T> sum_all<T>(TapeT<T>&, const TensorT<T>&);                                  \
    template TensorT<T> dropout<T>(TapeT<T>&, const TensorT<T>&, double, Rng&);

ALMT_INSTANTIATE_OPS(float)
ALMT_INSTANTIATE_OPS(double)
ALMT_INSTANTIATE_OPS(long double)

#undef ALMT_INSTANTIATE_OPS

} // namespace almt
