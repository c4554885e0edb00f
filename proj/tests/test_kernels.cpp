// The OpenMP kernels fix every per-element reduction order, so they must
// match the serial reference implementations bit for bit.

#include <doctest.h>

#include <array>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "almt/kernels.hpp"
#include "almt/rng.hpp"

using namespace almt;

namespace {

std::vector<float> random_vec(std::size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

bool bit_equal(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

} // namespace

TEST_CASE("matmul kernels match the serial reference bit for bit") {
    Rng rng(7);
    for (auto [m, k, n] : {std::array{3, 4, 5}, std::array{17, 33, 9}, std::array{64, 128, 64},
                           std::array{1, 1, 1}, std::array{58, 128, 16}}) {
        const auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
        const auto b_nn = random_vec(static_cast<std::size_t>(k) * n, rng);
        std::vector<float> c1(static_cast<std::size_t>(m) * n), c2 = c1;
        kern::matmul_nn<float>(c1.data(), a.data(), b_nn.data(), m, k, n);
        kern::serial::matmul_nn<float>(c2.data(), a.data(), b_nn.data(), m, k, n);
        CHECK(bit_equal(c1, c2));

        const auto b_nt = random_vec(static_cast<std::size_t>(n) * k, rng);
        std::fill(c1.begin(), c1.end(), 0.0f);
        std::fill(c2.begin(), c2.end(), 0.0f);
        kern::matmul_nt<float>(c1.data(), a.data(), b_nt.data(), m, k, n);
        kern::serial::matmul_nt<float>(c2.data(), a.data(), b_nt.data(), m, k, n);
        CHECK(bit_equal(c1, c2));

        const auto a_tn = random_vec(static_cast<std::size_t>(k) * m, rng);
        std::fill(c1.begin(), c1.end(), 0.0f);
        std::fill(c2.begin(), c2.end(), 0.0f);
        kern::matmul_tn<float>(c1.data(), a_tn.data(), b_nn.data(), m, k, n);
        kern::serial::matmul_tn<float>(c2.data(), a_tn.data(), b_nn.data(), m, k, n);
        CHECK(bit_equal(c1, c2));
    }
}

TEST_CASE("accumulating matmul adds onto existing values") {
    Rng rng(11);
    const int m = 6, k = 7, n = 5;
    const auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
    const auto b = random_vec(static_cast<std::size_t>(k) * n, rng);
    auto c1 = random_vec(static_cast<std::size_t>(m) * n, rng);
    auto c2 = c1;
    kern::matmul_nn<float, true>(c1.data(), a.data(), b.data(), m, k, n);
    kern::serial::matmul_nn<float, true>(c2.data(), a.data(), b.data(), m, k, n);
    CHECK(bit_equal(c1, c2));
}

TEST_CASE("row kernels match the serial reference bit for bit") {
    Rng rng(13);
    for (auto [rows, cols] : {std::array{4, 6}, std::array{63, 129}, std::array{200, 120}}) {
        const auto x = random_vec(static_cast<std::size_t>(rows) * cols, rng);
        std::vector<float> y1(x.size()), y2(x.size());

        kern::softmax_rows<float>(y1.data(), x.data(), rows, cols);
        kern::serial::softmax_rows<float>(y2.data(), x.data(), rows, cols);
        CHECK(bit_equal(y1, y2));

        const auto gamma = random_vec(static_cast<std::size_t>(cols), rng);
        const auto beta = random_vec(static_cast<std::size_t>(cols), rng);
        kern::layer_norm_rows<float>(y1.data(), x.data(), gamma.data(), beta.data(), 1e-5, rows, cols);
        kern::serial::layer_norm_rows<float>(y2.data(), x.data(), gamma.data(), beta.data(), 1e-5,
                                             rows, cols);
        CHECK(bit_equal(y1, y2));

        kern::gelu<float>(y1.data(), x.data(), static_cast<std::int64_t>(x.size()));
        kern::serial::gelu<float>(y2.data(), x.data(), static_cast<std::int64_t>(x.size()));
        CHECK(bit_equal(y1, y2));
    }
}

#ifdef _OPENMP
TEST_CASE("kernel results are independent of the thread count") {
    Rng rng(17);
    const int m = 96, k = 96, n = 96;
    const auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
    const auto b = random_vec(static_cast<std::size_t>(k) * n, rng);
    std::vector<float> reference(static_cast<std::size_t>(m) * n);
    kern::serial::matmul_nn<float>(reference.data(), a.data(), b.data(), m, k, n);
    const int saved = omp_get_max_threads();
    for (int threads : {1, 2, 4}) {
        omp_set_num_threads(threads);
        std::vector<float> c(reference.size());
        kern::matmul_nn<float>(c.data(), a.data(), b.data(), m, k, n);
        CHECK(bit_equal(c, reference));
    }
    omp_set_num_threads(saved);
}
#endif
