// Forward-path checks for every layer kernel against independent
// loop-written oracles and hand-computed cases.
#include <catch2/catch_amalgamated.hpp>

#include "synthaug/kernels.hpp"
#include "synthaug/rng.hpp"

using namespace synthaug;

namespace {

// reference cross-correlation written as plain quadruple loops
template <typename Real>
Tensor<Real> conv_oracle(const Tensor<Real>& x, const Tensor<Real>& k, std::size_t stride, Padding pad) {
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), ci = x.dim(3);
    const std::size_t kh = k.dim(0), kw = k.dim(1), co = k.dim(3);
    std::size_t oh, ow;
    std::ptrdiff_t pt, pl;
    if (pad == Padding::Same) {
        oh = (h + stride - 1) / stride;
        ow = (w + stride - 1) / stride;
        pt = std::max<std::ptrdiff_t>(std::ptrdiff_t((oh - 1) * stride + kh) - std::ptrdiff_t(h), 0) / 2;
        pl = std::max<std::ptrdiff_t>(std::ptrdiff_t((ow - 1) * stride + kw) - std::ptrdiff_t(w), 0) / 2;
    } else {
        oh = (h - kh) / stride + 1;
        ow = (w - kw) / stride + 1;
        pt = pl = 0;
    }
    Tensor<Real> y({n, oh, ow, co});
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox)
                for (std::size_t o = 0; o < co; ++o) {
                    Real acc = 0;
                    for (std::size_t ky = 0; ky < kh; ++ky)
                        for (std::size_t kx = 0; kx < kw; ++kx)
                            for (std::size_t c = 0; c < ci; ++c) {
                                std::ptrdiff_t iy = std::ptrdiff_t(oy * stride + ky) - pt;
                                std::ptrdiff_t ix = std::ptrdiff_t(ox * stride + kx) - pl;
                                if (iy < 0 || iy >= std::ptrdiff_t(h) || ix < 0 ||
                                    ix >= std::ptrdiff_t(w))
                                    continue;
                                acc += x.at4(ni, std::size_t(iy), std::size_t(ix), c) *
                                       k[((ky * kw + kx) * ci + c) * co + o];
                            }
                    y.at4(ni, oy, ox, o) = acc;
                }
    return y;
}

template <typename Real>
Real max_abs_diff(const Tensor<Real>& a, const Tensor<Real>& b) {
    REQUIRE(a.shape() == b.shape());
    Real m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

template <typename Real>
Real inner(const Tensor<Real>& a, const Tensor<Real>& b) {
    Real s = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST_CASE("dense: identity weight is a no-op") {
    Tensor<float> x({1, 2}, {1.f, 2.f});
    Tensor<float> w({2, 2}, {1.f, 0.f, 0.f, 1.f});
    Tensor<float> b({2});
    auto y = dense_forward(x, w, b);
    REQUIRE(y.at2(0, 0) == 1.f);
    REQUIRE(y.at2(0, 1) == 2.f);
}

TEST_CASE("dense: random product matches nested-loop oracle") {
    Rng rng(100);
    Tensor<float> x({3, 4}), w({4, 2}), b({2});
    fill_normal(x, rng);
    fill_normal(w, rng);
    fill_normal(b, rng);
    auto y = dense_forward(x, w, b);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double acc = b[j];
            for (std::size_t k = 0; k < 4; ++k) acc += double(x.at2(i, k)) * double(w.at2(k, j));
            REQUIRE(std::abs(double(y.at2(i, j)) - acc) < 1e-6);
        }
}

TEST_CASE("dense: 50-dim embedding row maps to 49 outputs reshaped 7x7x1") {
    Rng rng(101);
    Tensor<float> x({1, 50}), w({50, 49}), b({49});
    fill_normal(x, rng);
    fill_normal(w, rng);
    auto y = dense_forward(x, w, b).reshaped({1, 7, 7, 1});
    REQUIRE(y.shape() == Shape{1, 7, 7, 1});
}

TEST_CASE("dense: mismatched inner dimensions raise a shape error naming both shapes") {
    Tensor<float> x({2, 3}), w({4, 2}), b({2});
    try {
        dense_forward(x, w, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("[2,3]") != std::string::npos);
        REQUIRE(msg.find("[4,2]") != std::string::npos);
    }
}

TEST_CASE("conv2d: 1x1 scaling kernel doubles a field of ones") {
    Tensor<float> x({1, 3, 3, 1});
    x.fill(1.f);
    Tensor<float> k({1, 1, 1, 1}, {2.f});
    auto y = conv2d_forward(x, k, 1, Padding::Same);
    REQUIRE(y.shape() == Shape{1, 3, 3, 1});
    for (std::size_t i = 0; i < y.numel(); ++i) REQUIRE(y[i] == 2.f);
}

TEST_CASE("conv2d: strided same-padding convolution matches the loop oracle") {
    Rng rng(7);
    for (int seed = 0; seed < 5; ++seed) {
        Tensor<float> x({1, 5, 5, 1}), k({3, 3, 1, 2});
        fill_normal(x, rng);
        fill_normal(k, rng);
        auto y = conv2d_forward(x, k, 2, Padding::Same);
        REQUIRE(y.shape() == Shape{1, 3, 3, 2});
        REQUIRE(max_abs_diff(y, conv_oracle(x, k, 2, Padding::Same)) < 1e-6f);

        auto yv = conv2d_forward(x, k, 1, Padding::Valid);
        REQUIRE(yv.shape() == Shape{1, 3, 3, 2});
        REQUIRE(max_abs_diff(yv, conv_oracle(x, k, 1, Padding::Valid)) < 1e-6f);
    }
}

TEST_CASE("conv2d: same padding at stride 1 preserves the 112x112 extent") {
    Tensor<float> x({1, 112, 112, 3});
    Tensor<float> k({3, 3, 3, 32});
    auto y = conv2d_forward(x, k, 1, Padding::Same);
    REQUIRE(y.shape() == Shape{1, 112, 112, 32});
}

TEST_CASE("conv2d: channel mismatch and zero stride are rejected") {
    Tensor<float> x({1, 4, 4, 3}), k({3, 3, 2, 8});
    REQUIRE_THROWS_AS(conv2d_forward(x, k, 1, Padding::Same), ShapeError);
    Tensor<float> k2({3, 3, 3, 8});
    REQUIRE_THROWS_AS(conv2d_forward(x, k2, 0, Padding::Same), ValueError);
}

TEST_CASE("conv_transpose2d: generator head shape 7x7x1025 -> 14x14x512") {
    Tensor<float> x({1, 7, 7, 1025});
    Tensor<float> k({5, 5, 512, 1025});
    auto y = conv_transpose2d_forward(x, k, 2);
    REQUIRE(y.shape() == Shape{1, 14, 14, 512});
}

TEST_CASE("conv_transpose2d: stride-1 identity kernel reproduces the input") {
    Rng rng(13);
    Tensor<float> x({2, 4, 4, 1});
    fill_normal(x, rng);
    Tensor<float> k({1, 1, 1, 1}, {1.f});
    auto y = conv_transpose2d_forward(x, k, 1);
    REQUIRE(max_abs_diff(y, x) == 0.f);
}

TEST_CASE("conv/transpose-conv adjoint inner-product identity") {
    Rng rng(17);
    struct Cfg {
        std::size_t h, w, ci, co, k, stride;
    };
    // the kernel/stride combinations the models actually use
    const Cfg cfgs[] = {{6, 6, 3, 4, 5, 2}, {8, 6, 2, 3, 3, 1}, {8, 8, 3, 5, 3, 2}, {14, 14, 4, 2, 5, 2}};
    for (const auto& c : cfgs) {
        Tensor<double> a({2, c.h, c.w, c.ci}), k({c.k, c.k, c.ci, c.co});
        fill_normal(a, rng);
        fill_normal(k, rng);
        auto conv_a = conv2d_forward(a, k, c.stride, Padding::Same);
        Tensor<double> b(conv_a.shape());
        fill_normal(b, rng);
        auto adj_b = conv2d_input_grad(b, k, c.stride, Padding::Same, c.h, c.w);
        REQUIRE(std::abs(inner(conv_a, b) - inner(a, adj_b)) < 1e-5);
    }
    // odd extents go through the explicit-extent adjoint as well
    Tensor<double> a({1, 5, 7, 2}), k({3, 3, 2, 3});
    fill_normal(a, rng);
    fill_normal(k, rng);
    auto conv_a = conv2d_forward(a, k, 2, Padding::Same);
    Tensor<double> b(conv_a.shape());
    fill_normal(b, rng);
    auto adj_b = conv2d_input_grad(b, k, 2, Padding::Same, 5, 7);
    REQUIRE(std::abs(inner(conv_a, b) - inner(a, adj_b)) < 1e-5);
}

TEST_CASE("conv_transpose2d equals the adjoint of the stride-matched conv") {
    Rng rng(19);
    Tensor<double> x({2, 4, 4, 3}), k({5, 5, 2, 3});
    fill_normal(x, rng);
    fill_normal(k, rng);
    auto y = conv_transpose2d_forward(x, k, 2);
    REQUIRE(y.shape() == Shape{2, 8, 8, 2});
    Tensor<double> b(y.shape());
    fill_normal(b, rng);
    // <convT(x), b> == <x, conv(b)>
    auto conv_b = conv2d_forward(b, k, 2, Padding::Same);
    REQUIRE(std::abs(inner(y, b) - inner(x, conv_b)) < 1e-5);
}

TEST_CASE("batch_norm: zero-variance batch maps to zeros") {
    Tensor<float> x({4, 3});
    x.fill(5.f);
    Tensor<float> gamma({3}), beta({3}), rm({3}), rv({3});
    gamma.fill(1.f);
    auto y = batch_norm_forward(x, gamma, beta, rm, rv, BnMode::Train, 0.99f, 1e-5f, true, nullptr);
    for (std::size_t i = 0; i < y.numel(); ++i) REQUIRE(y[i] == 0.f);
}

TEST_CASE("batch_norm: train mode normalizes to zero mean and unit variance") {
    Rng rng(23);
    Tensor<float> x({16, 6, 6, 4});
    fill_normal(x, rng, 3.0, 2.0);
    Tensor<float> gamma({4}), beta({4}), rm({4}), rv({4});
    gamma.fill(1.f);
    auto y = batch_norm_forward(x, gamma, beta, rm, rv, BnMode::Train, 0.99f, 1e-5f, true, nullptr);
    const std::size_t rows = y.numel() / 4;
    for (std::size_t c = 0; c < 4; ++c) {
        double mean = 0, var = 0;
        for (std::size_t r = 0; r < rows; ++r) mean += y[r * 4 + c];
        mean /= double(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            double d = y[r * 4 + c] - mean;
            var += d * d;
        }
        var /= double(rows);
        REQUIRE(std::abs(mean) < 1e-5);
        REQUIRE(std::abs(var - 1.0) < 1e-4);
    }
}

TEST_CASE("batch_norm: inference with the batch's own stats matches train output") {
    Rng rng(29);
    Tensor<float> x({8, 5});
    fill_normal(x, rng, -1.0, 1.5);
    Tensor<float> gamma({5}), beta({5});
    fill_normal(gamma, rng, 1.0, 0.1);
    fill_normal(beta, rng, 0.0, 0.1);

    // train from zeroed running stats with momentum 0 copies the batch stats
    Tensor<float> rm({5}), rv({5});
    auto y_train = batch_norm_forward(x, gamma, beta, rm, rv, BnMode::Train, 0.0f, 1e-5f, true, nullptr);
    auto y_infer = batch_norm_forward(x, gamma, beta, rm, rv, BnMode::Infer, 0.0f, 1e-5f, false, nullptr);
    REQUIRE(max_abs_diff(y_train, y_infer) < 1e-5f);
}

TEST_CASE("batch_norm: running stats update only when asked") {
    Rng rng(31);
    Tensor<float> x({8, 3});
    fill_normal(x, rng);
    Tensor<float> gamma({3}), beta({3}), rm({3}), rv({3});
    gamma.fill(1.f);
    auto rm0 = rm, rv0 = rv;
    batch_norm_forward(x, gamma, beta, rm, rv, BnMode::Train, 0.99f, 1e-5f, false, nullptr);
    REQUIRE(bitwise_equal(rm, rm0));
    REQUIRE(bitwise_equal(rv, rv0));
    batch_norm_forward(x, gamma, beta, rm, rv, BnMode::Train, 0.99f, 1e-5f, true, nullptr);
    REQUIRE_FALSE(bitwise_equal(rm, rm0));
}

TEST_CASE("max_pool: 4x4 ramp with 2x2 window and stride 2") {
    Tensor<float> x({1, 4, 4, 1});
    for (std::size_t i = 0; i < 16; ++i) x[i] = float(i);
    auto y = max_pool_forward<float>(x, 2, 2, nullptr);
    REQUIRE(y.shape() == Shape{1, 2, 2, 1});
    REQUIRE(y[0] == 5.f);
    REQUIRE(y[1] == 7.f);
    REQUIRE(y[2] == 13.f);
    REQUIRE(y[3] == 15.f);
}

TEST_CASE("global_avg_pool: constant input returns the constant per channel") {
    Tensor<float> x({2, 3, 5, 4});
    x.fill(7.f);
    auto y = global_avg_pool_forward(x);
    REQUIRE(y.shape() == Shape{2, 4});
    for (std::size_t i = 0; i < y.numel(); ++i) REQUIRE(y[i] == Catch::Approx(7.f));
}

TEST_CASE("max_pool: random input matches a window-extraction oracle") {
    Rng rng(37);
    Tensor<float> x({2, 6, 6, 3});
    fill_normal(x, rng);
    auto y = max_pool_forward<float>(x, 2, 2, nullptr);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t oy = 0; oy < 3; ++oy)
            for (std::size_t ox = 0; ox < 3; ++ox)
                for (std::size_t c = 0; c < 3; ++c) {
                    float best = -1e30f;
                    for (std::size_t ky = 0; ky < 2; ++ky)
                        for (std::size_t kx = 0; kx < 2; ++kx)
                            best = std::max(best, x.at4(n, oy * 2 + ky, ox * 2 + kx, c));
                    REQUIRE(y.at4(n, oy, ox, c) == best);
                }
}

TEST_CASE("max_pool: over-large window is rejected") {
    Tensor<float> x({1, 3, 3, 1});
    REQUIRE_THROWS_AS(max_pool_forward<float>(x, 4, 1, nullptr), ShapeError);
}

TEST_CASE("activations: hand cases") {
    Tensor<float> x({4}, {-1.f, 2.f, 0.f, -3.f});
    auto relu = activation_forward(x, Activation::Relu);
    REQUIRE(relu[0] == 0.f);
    REQUIRE(relu[1] == 2.f);
    auto leaky = activation_forward(x, Activation::LeakyRelu, 0.2f);
    REQUIRE(leaky[0] == Catch::Approx(-0.2f));
    REQUIRE(leaky[3] == Catch::Approx(-0.6f));
    auto sig = activation_forward(x, Activation::Sigmoid);
    REQUIRE(sig[2] == Catch::Approx(0.5f));

    for (float c : {-3.f, 0.f, 7.f}) {
        Tensor<float> row({1, 2}, {c, c});
        auto sm = activation_forward(row, Activation::Softmax);
        REQUIRE(sm[0] == Catch::Approx(0.5f));
        REQUIRE(sm[1] == Catch::Approx(0.5f));
    }
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(41);
    Tensor<float> x({10, 7});
    fill_normal(x, rng, 0.0, 4.0);
    auto y = activation_forward(x, Activation::Softmax);
    for (std::size_t r = 0; r < 10; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 7; ++c) s += y.at2(r, c);
        REQUIRE(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("dropout: degenerate and inference cases are identities") {
    Rng rng(43);
    Tensor<float> x({100});
    fill_normal(x, rng);
    Rng d1(1);
    auto y0 = dropout_forward(x, 0.0f, true, d1, nullptr);
    REQUIRE(bitwise_equal(y0, x));
    auto yi = dropout_forward(x, 0.5f, false, d1, nullptr);
    REQUIRE(bitwise_equal(yi, x));
    REQUIRE_THROWS_AS(dropout_forward(x, 1.0f, true, d1, nullptr), ValueError);
}

TEST_CASE("dropout: p=0.5 zeroes about half and doubles survivors") {
    Tensor<float> x({10000});
    x.fill(1.f);
    Rng rng(4242);
    auto y = dropout_forward(x, 0.5f, true, rng, nullptr);
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        if (y[i] == 0.f)
            ++zeros;
        else
            REQUIRE(y[i] == 2.f);
    }
    const double frac = double(zeros) / double(y.numel());
    REQUIRE(frac > 0.45);
    REQUIRE(frac < 0.55);
}

TEST_CASE("losses: confident correct predictions are near zero") {
    Tensor<float> p({2, 1}, {1.f, 0.f});
    Tensor<float> t({2, 1}, {1.f, 0.f});
    REQUIRE(bce_loss<float>(p, t, nullptr) <= 1e-6f);

    Tensor<float> pred({2, 3}, {1.f, 0.f, 0.f, 0.f, 0.f, 1.f});
    REQUIRE(sparse_ce_loss<float>(pred, {0, 2}, nullptr) <= 1e-6f);
}

TEST_CASE("losses: categorical cross-entropy matches the direct formula") {
    Rng rng(47);
    Tensor<float> logits({8, 4});
    fill_normal(logits, rng);
    auto pred = activation_forward(logits, Activation::Softmax);
    Tensor<float> onehot({8, 4});
    std::vector<std::size_t> labels(8);
    for (std::size_t i = 0; i < 8; ++i) {
        labels[i] = rng.uniform_index(4);
        onehot.at2(i, labels[i]) = 1.f;
    }
    double expect = 0;
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t c = 0; c < 4; ++c)
            expect += -double(onehot.at2(i, c)) * std::log(double(pred.at2(i, c)));
    expect /= 8.0;

    REQUIRE(std::abs(double(categorical_ce_loss<float>(pred, onehot, nullptr)) - expect) < 1e-6);
    REQUIRE(std::abs(double(sparse_ce_loss<float>(pred, labels, nullptr)) - expect) < 1e-6);
}

TEST_CASE("losses: shape and label range validation") {
    Tensor<float> p({2, 2}, {0.5f, 0.5f, 0.5f, 0.5f});
    Tensor<float> bad({3, 2});
    REQUIRE_THROWS_AS(categorical_ce_loss<float>(p, bad, nullptr), ShapeError);
    REQUIRE_THROWS_AS(sparse_ce_loss<float>(p, {0, 5}, nullptr), ValueError);
    REQUIRE_THROWS_AS(sparse_ce_loss<float>(p, {0}, nullptr), ShapeError);
}

TEST_CASE("losses are non-negative on random inputs") {
    Rng rng(53);
    for (int i = 0; i < 20; ++i) {
        Tensor<float> logits({6, 3});
        fill_normal(logits, rng, 0.0, 5.0);
        auto pred = activation_forward(logits, Activation::Softmax);
        std::vector<std::size_t> labels(6);
        for (auto& l : labels) l = rng.uniform_index(3);
        REQUIRE(sparse_ce_loss<float>(pred, labels, nullptr) >= 0.f);

        Tensor<float> p({5, 1}), t({5, 1});
        fill_uniform(p, rng, 0.0, 1.0);
        for (std::size_t j = 0; j < 5; ++j) t[j] = float(rng.uniform_index(2));
        REQUIRE(bce_loss(p, t, nullptr) >= 0.f);
    }
}

TEST_CASE("shape algebra: same padding maps h to ceil(h/s), transpose to h*s") {
    for (std::size_t h : {7u, 8u, 13u, 112u}) {
        for (std::size_t s : {1u, 2u}) {
            REQUIRE(conv_out_extent(h, 3, s, Padding::Same) == (h + s - 1) / s);
        }
    }
    Tensor<float> x({1, 7, 7, 2});
    Tensor<float> k({5, 5, 3, 2});
    REQUIRE(conv_transpose2d_forward(x, k, 2).dim(1) == 14);
    REQUIRE(conv_transpose2d_forward(x, k, 1).dim(1) == 7);
}
