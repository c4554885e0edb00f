#include <doctest.h>

#include <array>
#include <cmath>

#include "almt/gradcheck.hpp"
#include "almt/layers.hpp"

using namespace almt;

namespace {

void zero_tensor(Tensor& t) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = 0.0f;
}

// zeroed attention output projection and second FFN linear make the pre-norm
// block an exact identity
void zero_residual_writes(EncoderLayer& layer) {
    zero_tensor(layer.attn.out_proj.weight);
    zero_tensor(layer.attn.out_proj.bias);
    zero_tensor(layer.ffn2.weight);
    zero_tensor(layer.ffn2.bias);
}

} // namespace

TEST_CASE("linear layer applies xW + b") {
    Rng rng(1);
    Tape tape(false);

    LinearLayer ident;
    ident.weight = Tensor::identity(3);
    ident.bias = Tensor::zeros({3});
    Tensor x = Tensor::randn({4, 3}, rng);
    Tensor out = ident.forward(tape, x);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(out.data()[i] == x.data()[i]);

    LinearLayer biased;
    biased.weight = Tensor::identity(2);
    biased.bias = Tensor::from({2}, {3, 4});
    Tensor r = biased.forward(tape, Tensor::from({1, 2}, {1, 2}));
    CHECK(r.at(0, 0) == 4.0f);
    CHECK(r.at(0, 1) == 6.0f);

    // random case against a hand matmul+add oracle
    LinearLayer l = LinearLayer::init(3, 2, rng, 0.5f);
    Tensor xin = Tensor::randn({2, 3}, rng);
    Tensor got = l.forward(tape, xin);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            double expect = l.bias.data()[j];
            for (int k = 0; k < 3; ++k)
                expect += static_cast<double>(xin.at(i, k)) * static_cast<double>(l.weight.at(k, j));
            CHECK(std::abs(got.at(i, j) - expect) < 1e-6);
        }

    CHECK_THROWS_AS(l.forward(tape, Tensor::zeros({2, 4})), DimensionError);
}

TEST_CASE("attention weights are uniform when all scores are equal") {
    Rng rng(2);
    Tape tape(false);
    AttentionConfig cfg{2, 3, 6};
    MultiHeadAttention mha = MultiHeadAttention::init(cfg, rng);
    // constant rows make every query-key score identical
    Tensor x = Tensor::full({4, 6}, 0.25f);
    std::vector<Tensor> weights;
    mha.forward(tape, x, x, x, &weights);
    CHECK(weights.size() == 2);
    for (const Tensor& w : weights)
        for (int i = 0; i < w.rows(); ++i)
            for (int j = 0; j < w.cols(); ++j)
                CHECK(w.at(i, j) == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("single key attention weight is exactly one") {
    Rng rng(3);
    Tape tape(false);
    AttentionConfig cfg{2, 4, 8};
    MultiHeadAttention mha = MultiHeadAttention::init(cfg, rng);
    Tensor q = Tensor::randn({1, 8}, rng);
    Tensor kv = Tensor::randn({1, 8}, rng);
    std::vector<Tensor> weights;
    mha.forward(tape, q, kv, kv, &weights);
    for (const Tensor& w : weights) {
        CHECK(w.numel() == 1);
        CHECK(w.at(0, 0) == 1.0f);
    }
}

TEST_CASE("single-head attention matches a scalar-by-scalar reference") {
    // t = 2, d = d_k = 2, hand-set projections, no bias, computed step by
    // step with plain doubles
    Tape tape(false);
    AttentionConfig cfg{1, 2, 2};
    MultiHeadAttention mha;
    mha.cfg = cfg;
    mha.w_q = {Tensor::from({2, 2}, {1.0f, 0.5f, -0.5f, 1.0f})};
    mha.w_k = {Tensor::from({2, 2}, {0.5f, -1.0f, 1.0f, 0.25f})};
    mha.w_v = {Tensor::from({2, 2}, {1.0f, 2.0f, -1.0f, 0.5f})};
    mha.b_q = {Tensor::zeros({2})};
    mha.b_k = {Tensor::zeros({2})};
    mha.b_v = {Tensor::zeros({2})};
    mha.out_proj.weight = Tensor::identity(2);
    mha.out_proj.bias = Tensor::zeros({2});

    const double x[2][2] = {{0.2, -0.4}, {0.7, 0.1}};
    Tensor xt = Tensor::from({2, 2}, {0.2f, -0.4f, 0.7f, 0.1f});

    // reference: q = x Wq, k = x Wk, v = x Wv, scores = q k^T / sqrt(2)
    double q[2][2], k[2][2], v[2][2];
    const double wq[2][2] = {{1.0, 0.5}, {-0.5, 1.0}};
    const double wk[2][2] = {{0.5, -1.0}, {1.0, 0.25}};
    const double wv[2][2] = {{1.0, 2.0}, {-1.0, 0.5}};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            q[i][j] = x[i][0] * wq[0][j] + x[i][1] * wq[1][j];
            k[i][j] = x[i][0] * wk[0][j] + x[i][1] * wk[1][j];
            v[i][j] = x[i][0] * wv[0][j] + x[i][1] * wv[1][j];
        }
    double expect[2][2];
    for (int i = 0; i < 2; ++i) {
        double s0 = (q[i][0] * k[0][0] + q[i][1] * k[0][1]) / std::sqrt(2.0);
        double s1 = (q[i][0] * k[1][0] + q[i][1] * k[1][1]) / std::sqrt(2.0);
        const double mx = std::max(s0, s1);
        const double e0 = std::exp(s0 - mx), e1 = std::exp(s1 - mx);
        const double a0 = e0 / (e0 + e1), a1 = e1 / (e0 + e1);
        for (int j = 0; j < 2; ++j) expect[i][j] = a0 * v[0][j] + a1 * v[1][j];
    }

    std::vector<Tensor> weights;
    Tensor out = mha.forward(tape, xt, xt, xt, &weights);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(std::abs(out.at(i, j) - expect[i][j]) < 1e-5);
}

TEST_CASE("attention output rows are the weight-convex combination of value rows") {
    Rng rng(4);
    Tape tape(false);
    AttentionConfig cfg{2, 4, 8};
    MultiHeadAttention mha = MultiHeadAttention::init(cfg, rng);
    // identity output projection exposes the raw head concatenation
    mha.out_proj.weight = Tensor::identity(8);
    mha.out_proj.bias = Tensor::zeros({8});
    Tensor q = Tensor::randn({3, 8}, rng);
    Tensor kv = Tensor::randn({5, 8}, rng);
    std::vector<Tensor> weights;
    Tensor out = mha.forward(tape, q, kv, kv, &weights);

    for (int h = 0; h < 2; ++h) {
        const Tensor& w = weights[static_cast<std::size_t>(h)];
        // rows sum to one and are non-negative
        for (int i = 0; i < w.rows(); ++i) {
            double sum = 0.0;
            for (int j = 0; j < w.cols(); ++j) {
                CHECK(w.at(i, j) >= 0.0f);
                sum += w.at(i, j);
            }
            CHECK(std::abs(sum - 1.0) < 1e-5);
        }
        // output block h equals weights x projected values
        Tensor v = add_row_broadcast(tape, matmul(tape, kv, mha.w_v[static_cast<std::size_t>(h)]),
                                     mha.b_v[static_cast<std::size_t>(h)]);
        Tensor head = matmul(tape, w, v);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j)
                CHECK(std::abs(out.at(i, h * 4 + j) - head.at(i, j)) < 1e-5);
    }
}

TEST_CASE("encoder layer keeps shape and zeroed projections make it the identity") {
    Rng rng(5);
    Tape tape(false);
    AttentionConfig cfg{2, 4, 8};
    for (int t : {1, 3, 7}) {
        EncoderLayer layer = EncoderLayer::init(cfg, 4, rng);
        Tensor x = Tensor::randn({t, 8}, rng);
        Tensor out = layer.forward(tape, x);
        CHECK(out.rows() == t);
        CHECK(out.cols() == 8);

        zero_residual_writes(layer);
        Tensor same = layer.forward(tape, x);
        for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(same.data()[i] == x.data()[i]);
    }
}

TEST_CASE("self-attention without positions is permutation equivariant") {
    Rng rng(6);
    Tape tape(false);
    AttentionConfig cfg{2, 8, 16};
    EncoderLayer layer = EncoderLayer::init(cfg, 4, rng);
    Tensor x = Tensor::randn({5, 16}, rng);
    Tensor out = layer.forward(tape, x);

    const std::array<int, 5> perm{3, 0, 4, 1, 2};
    Tensor xp = Tensor::zeros({5, 16});
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 16; ++j) xp.at(i, j) = x.at(perm[static_cast<std::size_t>(i)], j);
    Tensor outp = layer.forward(tape, xp);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 16; ++j)
            CHECK(outp.at(i, j) ==
                  doctest::Approx(out.at(perm[static_cast<std::size_t>(i)], j)).epsilon(1e-5));
}

TEST_CASE("cross encoder layer degenerates to self attention when kv == q") {
    Rng rng(7);
    Tape tape(false);
    AttentionConfig cfg{2, 4, 8};
    EncoderLayer layer = EncoderLayer::init(cfg, 4, rng);
    Tensor x = Tensor::randn({4, 8}, rng);
    Tensor self_out = layer.forward(tape, x);
    Tensor cross_out = layer.forward_cross(tape, x, x);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(self_out.data()[i] == cross_out.data()[i]);

    // output keeps the query length whatever the kv length
    for (int tk : {1, 2, 9}) {
        Tensor kv = Tensor::randn({tk, 8}, rng);
        Tensor out = layer.forward_cross(tape, x, kv);
        CHECK(out.rows() == 4);
        CHECK(out.cols() == 8);
    }
}

namespace {

// mirrors an encoder layer's trainable tensors into a double-precision twin
void mirror_encoder(EncoderLayerT<float>& lf, EncoderLayerT<double>& ld, std::vector<Tensor>& pf,
                    std::vector<TensorT<double>>& pd) {
    auto pair_up = [&](Tensor& a, TensorT<double>& b) {
        for (std::int64_t i = 0; i < a.numel(); ++i) b.data()[i] = static_cast<double>(a.data()[i]);
        pf.push_back(a);
        pd.push_back(b);
    };
    pair_up(lf.ln1_gamma, ld.ln1_gamma);
    pair_up(lf.ln1_beta, ld.ln1_beta);
    pair_up(lf.ln2_gamma, ld.ln2_gamma);
    pair_up(lf.ln2_beta, ld.ln2_beta);
    for (std::size_t h = 0; h < lf.attn.w_q.size(); ++h) {
        pair_up(lf.attn.w_q[h], ld.attn.w_q[h]);
        pair_up(lf.attn.b_q[h], ld.attn.b_q[h]);
        pair_up(lf.attn.w_k[h], ld.attn.w_k[h]);
        pair_up(lf.attn.b_k[h], ld.attn.b_k[h]);
        pair_up(lf.attn.w_v[h], ld.attn.w_v[h]);
        pair_up(lf.attn.b_v[h], ld.attn.b_v[h]);
    }
    pair_up(lf.attn.out_proj.weight, ld.attn.out_proj.weight);
    pair_up(lf.attn.out_proj.bias, ld.attn.out_proj.bias);
    pair_up(lf.ffn1.weight, ld.ffn1.weight);
    pair_up(lf.ffn1.bias, ld.ffn1.bias);
    pair_up(lf.ffn2.weight, ld.ffn2.weight);
    pair_up(lf.ffn2.bias, ld.ffn2.bias);
}

} // namespace

TEST_CASE("encoder layer gradients match finite differences") {
    // [3 x 8], 2 heads; the f64 mirror supplies the numeric side
    Rng rng_f(8), rng_d(8);
    AttentionConfig cfg{2, 4, 8};
    EncoderLayerT<float> lf = EncoderLayerT<float>::init(cfg, 4, rng_f);
    EncoderLayerT<double> ld = EncoderLayerT<double>::init(cfg, 4, rng_d);
    std::vector<Tensor> pf;
    std::vector<TensorT<double>> pd;
    mirror_encoder(lf, ld, pf, pd);

    Rng rng_x(99);
    Tensor xf = Tensor::randn({3, 8}, rng_x);
    Tensor tf = Tensor::randn({3, 8}, rng_x);
    TensorT<double> xd = TensorT<double>::zeros({3, 8}), td = TensorT<double>::zeros({3, 8});
    for (std::int64_t i = 0; i < xf.numel(); ++i) xd.data()[i] = static_cast<double>(xf.data()[i]);
    for (std::int64_t i = 0; i < tf.numel(); ++i) td.data()[i] = static_cast<double>(tf.data()[i]);

    // linear probe loss keeps dL/d(out) of order one everywhere
    auto f32 = [&](Tape& tape) {
        Tensor out = lf.forward(tape, xf);
        return sum_all(tape, mul(tape, out, tf));
    };
    auto f64 = [&](TapeT<double>& tape) {
        TensorT<double> out = ld.forward(tape, xd);
        return sum_all(tape, mul(tape, out, td));
    };
    auto result = finite_diff_check_against<float, double>(f32, pf, f64, pd, 1e-3);
    CHECK(result.max_rel_err < 1e-3);
}

TEST_CASE("cross encoder layer gradients match finite differences") {
    Rng rng_f(10), rng_d(10);
    AttentionConfig cfg{2, 4, 8};
    EncoderLayerT<float> lf = EncoderLayerT<float>::init(cfg, 4, rng_f);
    EncoderLayerT<double> ld = EncoderLayerT<double>::init(cfg, 4, rng_d);
    std::vector<Tensor> pf;
    std::vector<TensorT<double>> pd;
    mirror_encoder(lf, ld, pf, pd);

    Rng rng_x(100);
    Tensor qf = Tensor::randn({3, 8}, rng_x);
    Tensor kf = Tensor::randn({5, 8}, rng_x);
    Tensor tf = Tensor::randn({3, 8}, rng_x);
    TensorT<double> qd = TensorT<double>::zeros({3, 8}), kd = TensorT<double>::zeros({5, 8}),
                    td = TensorT<double>::zeros({3, 8});
    for (std::int64_t i = 0; i < qf.numel(); ++i) qd.data()[i] = static_cast<double>(qf.data()[i]);
    for (std::int64_t i = 0; i < kf.numel(); ++i) kd.data()[i] = static_cast<double>(kf.data()[i]);
    for (std::int64_t i = 0; i < tf.numel(); ++i) td.data()[i] = static_cast<double>(tf.data()[i]);

    auto f32 = [&](Tape& tape) {
        Tensor out = lf.forward_cross(tape, qf, kf);
        return sum_all(tape, mul(tape, out, tf));
    };
    auto f64 = [&](TapeT<double>& tape) {
        TensorT<double> out = ld.forward_cross(tape, qd, kd);
        return sum_all(tape, mul(tape, out, td));
    };
    auto result = finite_diff_check_against<float, double>(f32, pf, f64, pd, 1e-3);
    CHECK(result.max_rel_err < 1e-3);

    // the f64 layer alone passes the tight tolerance
    auto result64 = finite_diff_check<double>(f64, pd, 1e-3);
    CHECK(result64.max_rel_err < 1e-6);
}
