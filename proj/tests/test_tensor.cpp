#include <doctest.h>

#include <cmath>

#include "almt/gradcheck.hpp"
#include "almt/ops.hpp"

using namespace almt;

namespace {

Tensor mat(std::initializer_list<std::initializer_list<float>> rows) {
    std::vector<float> flat;
    int r = 0, c = 0;
    for (const auto& row : rows) {
        ++r;
        c = static_cast<int>(row.size());
        for (float v : row) flat.push_back(v);
    }
    return Tensor::from({r, c}, std::move(flat));
}

} // namespace

TEST_CASE("matmul matches hand-computed products") {
    Tape tape(false);
    // identity case
    Tensor a = mat({{1, 2}, {3, 4}});
    Tensor out = matmul(tape, Tensor::identity(2), a);
    CHECK(out.at(0, 0) == 1.0f);
    CHECK(out.at(0, 1) == 2.0f);
    CHECK(out.at(1, 0) == 3.0f);
    CHECK(out.at(1, 1) == 4.0f);

    // [[1,2],[3,4]] x [[5],[6]] = [[17],[39]]
    Tensor b = mat({{5}, {6}});
    Tensor prod = matmul(tape, a, b);
    CHECK(prod.at(0, 0) == 17.0f);
    CHECK(prod.at(1, 0) == 39.0f);

    // shape contract
    Rng rng(1);
    Tensor big = matmul(tape, Tensor::randn({3, 2}, rng), Tensor::randn({2, 5}, rng));
    CHECK(big.rows() == 3);
    CHECK(big.cols() == 5);

    CHECK_THROWS_AS(matmul(tape, Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST_CASE("matmul by identity is exact on both sides") {
    Rng rng(2);
    Tape tape(false);
    Tensor a = Tensor::randn({5, 5}, rng);
    Tensor left = matmul(tape, Tensor::identity(5), a);
    Tensor right = matmul(tape, a, Tensor::identity(5));
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        CHECK(left.data()[i] == a.data()[i]);
        CHECK(right.data()[i] == a.data()[i]);
    }
}

TEST_CASE("softmax_rows oracle values") {
    Tape tape(false);
    Tensor out = softmax_rows(tape, mat({{0, 0}}));
    CHECK(out.at(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(out.at(0, 1) == doctest::Approx(0.5).epsilon(1e-6));

    // direct exp-normalize evaluation of [1, 2, 3]
    Tensor row = softmax_rows(tape, mat({{1, 2, 3}}));
    CHECK(std::abs(row.at(0, 0) - 0.09003f) < 1e-5f);
    CHECK(std::abs(row.at(0, 1) - 0.24473f) < 1e-5f);
    CHECK(std::abs(row.at(0, 2) - 0.66524f) < 1e-5f);

    // dominance without overflow
    Tensor extreme = softmax_rows(tape, mat({{0, 1000}}));
    CHECK(extreme.at(0, 0) == doctest::Approx(0.0));
    CHECK(extreme.at(0, 1) == doctest::Approx(1.0));
    CHECK(extreme.all_finite());
}

TEST_CASE("softmax_rows rows sum to 1 with positive entries on random input") {
    Rng rng(3);
    Tape tape(false);
    for (int trial = 0; trial < 1000; ++trial) {
        const int rows = 1 + static_cast<int>(rng.bounded(6));
        const int cols = 2 + static_cast<int>(rng.bounded(7));
        Tensor out = softmax_rows(tape, Tensor::randn({rows, cols}, rng, 3.0f));
        for (int i = 0; i < rows; ++i) {
            double sum = 0.0;
            for (int j = 0; j < cols; ++j) {
                CHECK(out.at(i, j) > 0.0f);
                sum += out.at(i, j);
            }
            CHECK(std::abs(sum - 1.0) < 1e-5);
        }
    }
}

TEST_CASE("layer_norm_rows standardizes rows") {
    Tape tape(false);
    Tensor gamma = Tensor::full({2}, 1.0f);
    Tensor beta = Tensor::zeros({2});

    // constant row collapses to zero through the eps guard
    Tensor constant = layer_norm_rows(tape, mat({{5, 5}}), gamma, beta);
    CHECK(constant.at(0, 0) == doctest::Approx(0.0));
    CHECK(constant.at(0, 1) == doctest::Approx(0.0));

    // closed-form standardization of [1, 3] as eps -> 0
    Tensor out = layer_norm_rows(tape, mat({{1, 3}}), gamma, beta, 1e-12);
    CHECK(out.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(out.at(0, 1) == doctest::Approx(1.0).epsilon(1e-5));

    CHECK_THROWS_AS(layer_norm_rows(tape, mat({{1, 3}}), gamma, beta, 0.0), ValidationError);
}

TEST_CASE("layer_norm_rows normalization contract on random rows") {
    Rng rng(4);
    Tape tape(false);
    const int rows = 40, cols = 16;
    Tensor gamma = Tensor::full({cols}, 1.0f);
    Tensor beta = Tensor::zeros({cols});
    Tensor x = Tensor::randn({rows, cols}, rng);
    Tensor out = layer_norm_rows(tape, x, gamma, beta);
    for (int i = 0; i < rows; ++i) {
        double mean = 0.0, var = 0.0;
        for (int j = 0; j < cols; ++j) mean += out.at(i, j);
        mean /= cols;
        for (int j = 0; j < cols; ++j) var += (out.at(i, j) - mean) * (out.at(i, j) - mean);
        var /= cols;
        CHECK(std::abs(mean) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-3);
    }
}

TEST_CASE("gelu oracle values and asymptotes") {
    Tape tape(false);
    Tensor out = gelu(tape, mat({{0, 1, 10, -10}}));
    CHECK(out.at(0, 0) == 0.0f);
    // x * Phi(x) at x = 1, evaluated numerically
    CHECK(std::abs(out.at(0, 1) - 0.8413f) < 1e-3f);
    CHECK(out.at(0, 2) == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(std::abs(out.at(0, 3)) < 1e-6f);
}

TEST_CASE("concat_rows stacks and splits") {
    Rng rng(5);
    Tape tape(false);
    Tensor a = Tensor::randn({1, 4}, rng);
    Tensor b = Tensor::randn({1, 4}, rng);
    const std::array<Tensor, 2> parts{a, b};
    Tensor out = concat_rows<float>(tape, parts);
    CHECK(out.rows() == 2);
    CHECK(out.cols() == 4);

    // slicing back is bit-identical
    Tensor a2 = Tensor::randn({3, 5}, rng);
    Tensor b2 = Tensor::randn({2, 5}, rng);
    const std::array<Tensor, 2> parts2{a2, b2};
    Tensor cat = concat_rows<float>(tape, parts2);
    Tensor sa = slice_rows(tape, cat, 0, 3);
    Tensor sb = slice_rows(tape, cat, 3, 2);
    for (std::int64_t i = 0; i < a2.numel(); ++i) CHECK(sa.data()[i] == a2.data()[i]);
    for (std::int64_t i = 0; i < b2.numel(); ++i) CHECK(sb.data()[i] == b2.data()[i]);

    // the fusion concat shape: [1 x d] on top of [T x d]
    Tensor token = Tensor::randn({1, 8}, rng);
    Tensor seq = Tensor::randn({4, 8}, rng);
    const std::array<Tensor, 2> parts3{token, seq};
    CHECK(concat_rows<float>(tape, parts3).rows() == 5);

    const std::array<Tensor, 2> bad{Tensor::zeros({1, 4}), Tensor::zeros({1, 3})};
    CHECK_THROWS_AS(concat_rows<float>(tape, bad), DimensionError);
}

TEST_CASE("concat_cols stacks columns and routes gradients") {
    Rng rng(6);
    Tape tape;
    Tensor a = Tensor::randn({2, 2}, rng);
    Tensor b = Tensor::randn({2, 3}, rng);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    const std::array<Tensor, 2> parts{a, b};
    Tensor cat = concat_cols<float>(tape, parts);
    CHECK(cat.rows() == 2);
    CHECK(cat.cols() == 5);
    CHECK(cat.at(0, 2) == b.at(0, 0));
    Tensor loss = sum_all(tape, cat);
    tape.backward(loss);
    for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a.grad()[i] == 1.0f);
    for (std::int64_t i = 0; i < b.numel(); ++i) CHECK(b.grad()[i] == 1.0f);
}

TEST_CASE("backward of sum is all ones and of x*x is 2x") {
    Tensor x = mat({{1, 2}});
    x.set_requires_grad(true);

    {
        Tape tape;
        Tensor loss = sum_all(tape, x);
        tape.backward(loss);
        CHECK(x.grad()[0] == 1.0f);
        CHECK(x.grad()[1] == 1.0f);
    }
    x.zero_grad();
    {
        Tape tape;
        Tensor loss = sum_all(tape, mul(tape, x, x));
        tape.backward(loss);
        CHECK(x.grad()[0] == 2.0f);
        CHECK(x.grad()[1] == 4.0f);
    }
}

TEST_CASE("backward accumulates until explicitly zeroed") {
    Tensor x = mat({{3}});
    x.set_requires_grad(true);
    Tape tape;
    Tensor loss = sum_all(tape, x);
    tape.backward(loss);
    CHECK(x.grad()[0] == 1.0f);
    x.zero_grad();
    tape.backward(loss); // replay on the same tape
    CHECK(x.grad()[0] == 1.0f);
    tape.backward(loss);
    CHECK(x.grad()[0] == 2.0f);
}

TEST_CASE("backward rejects non-scalar losses") {
    Tensor x = mat({{1, 2}});
    x.set_requires_grad(true);
    Tape tape;
    Tensor y = mul(tape, x, x);
    CHECK_THROWS_AS(tape.backward(y), ValidationError);
}

TEST_CASE("finite_diff_check recovers the derivative of x squared") {
    Tensor x = Tensor::scalar(3.0f);
    auto f = [&x](Tape& tape) { return mul(tape, x, x); };
    // analytic 6 vs central difference at h = 1e-3
    auto result = finite_diff_check<float>(f, {x}, 1e-3);
    CHECK(std::abs(result.worst_numeric - 6.0) < 1e-4);
    CHECK(result.max_rel_err < 1e-4);
    CHECK_THROWS_AS(finite_diff_check<float>(f, {x}, 0.5), ValidationError);
}

TEST_CASE("gradients of a linear layer MSE match finite differences") {
    // run in double so the oracle noise floor is far below the tolerance
    Rng rng(8);
    TensorT<double> w = TensorT<double>::randn({4, 3}, rng, 0.5);
    TensorT<double> b = TensorT<double>::randn({3}, rng, 0.5);
    TensorT<double> x = TensorT<double>::randn({5, 4}, rng);
    TensorT<double> target = TensorT<double>::randn({5, 3}, rng);
    auto f = [&](TapeT<double>& tape) {
        TensorT<double> pred = add_row_broadcast(tape, matmul(tape, x, w), b);
        TensorT<double> diff = sub(tape, pred, target);
        return scale(tape, sum_all(tape, mul(tape, diff, diff)), 1.0 / 15.0);
    };
    auto result = finite_diff_check<double>(f, {w, b}, 1e-3);
    CHECK(result.max_rel_err < 1e-4);
}

TEST_CASE("gradients of an op composite match finite differences in f32") {
    Rng rng(9);
    Tensor w1 = Tensor::randn({6, 8}, rng, 0.4f);
    Tensor w2 = Tensor::randn({8, 4}, rng, 0.4f);
    Tensor gamma = Tensor::full({8}, 1.0f);
    Tensor beta = Tensor::zeros({8});
    Tensor x = Tensor::randn({3, 6}, rng);

    // double-precision mirror at the exact same parameter values; finite
    // differences of the mirror keep the oracle's noise below the tolerance
    auto mirror = [](const Tensor& t) {
        TensorT<double> m = TensorT<double>::zeros(t.shape());
        for (std::int64_t i = 0; i < t.numel(); ++i)
            m.data()[i] = static_cast<double>(t.data()[i]);
        return m;
    };
    TensorT<double> w1d = mirror(w1), w2d = mirror(w2), gd = mirror(gamma), bd = mirror(beta),
                    xd = mirror(x);

    auto f32 = [&](Tape& tape) {
        Tensor h = layer_norm_rows(tape, matmul(tape, x, w1), gamma, beta);
        Tensor att = softmax_rows(tape, matmul_nt(tape, h, h));
        Tensor out = matmul(tape, gelu(tape, matmul(tape, att, h)), w2);
        return scale(tape, sum_all(tape, mul(tape, out, out)), 0.1);
    };
    auto f64 = [&](TapeT<double>& tape) {
        TensorT<double> h = layer_norm_rows(tape, matmul(tape, xd, w1d), gd, bd);
        TensorT<double> att = softmax_rows(tape, matmul_nt(tape, h, h));
        TensorT<double> out = matmul(tape, gelu(tape, matmul(tape, att, h)), w2d);
        return scale(tape, sum_all(tape, mul(tape, out, out)), 0.1);
    };
    auto result = finite_diff_check_against<float, double>(f32, {w1, w2, gamma, beta}, f64,
                                                           {w1d, w2d, gd, bd}, 1e-3);
    CHECK(result.max_rel_err < 1e-3);
}

TEST_CASE("ops refuse to produce non-finite values") {
    Tape tape(false);
    Tensor huge = Tensor::full({1, 2}, 3e38f);
    CHECK_THROWS_AS(add(tape, huge, huge), NumericError);
}
