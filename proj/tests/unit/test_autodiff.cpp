#include <cmath>

#include "doctest.h"
#include "drcbench/errors.hpp"
#include "drcbench/ops.hpp"
#include "helpers.hpp"

using namespace drc;
using namespace drc::ad;
using testutil::gradient_check;
using testutil::random_tensor;

namespace {

using V = Var<double>;

V param(const Shape& s, std::uint64_t seed) { return V::leaf(random_tensor(s, seed), true); }

// Scalar loss with random weights so every output cell matters.
V weighted_sum(const V& y, std::uint64_t seed) {
    const auto w = random_tensor(y.shape(), seed);
    return mse_loss(y, V::leaf(w));
}

// Nested-loop cross-correlation, zero padded.
Tensor<double> conv2d_oracle(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>* b,
                             std::size_t sh, std::size_t sw, std::size_t ph, std::size_t pw) {
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t O = k.dim(0), KH = k.dim(2), KW = k.dim(3);
    const std::size_t OH = (H + 2 * ph - KH) / sh + 1, OW = (W + 2 * pw - KW) / sw + 1;
    Tensor<double> y(Shape{N, O, OH, OW});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t i = 0; i < OH; ++i)
                for (std::size_t j = 0; j < OW; ++j) {
                    double acc = b ? (*b)[o] : 0.0;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t u = 0; u < KH; ++u)
                            for (std::size_t v = 0; v < KW; ++v) {
                                const long r = long(i * sh + u) - long(ph), q = long(j * sw + v) - long(pw);
                                if (r < 0 || q < 0 || r >= long(H) || q >= long(W)) continue;
                                acc += x[((n * C + c) * H + r) * W + q] * k[((o * C + c) * KH + u) * KW + v];
                            }
                    y[((n * O + o) * OH + i) * OW + j] = acc;
                }
    return y;
}

}  // namespace

TEST_CASE("tensor basics") {
    Tensor<double> t(Shape{2, 3}, 1.5);
    CHECK(t.numel() == 6);
    CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
    CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
    t[4] = std::nan("");
    CHECK_FALSE(t.all_finite());
    CHECK(shape_str({1, 2, 3}) == "(1, 2, 3)");
}

TEST_CASE("conv size formula") {
    CHECK(conv_out_size(128, 3, 1, 0) == 126);
    CHECK(conv_out_size(248, 3, 1, 0) == 246);
    CHECK(conv_out_size(7, 3, 2, 1) == 4);
    auto x = V::leaf(Tensor<double>(Shape{1, 1, 128, 248}));
    auto k = V::leaf(Tensor<double>(Shape{10, 1, 3, 3}, 0.1));
    CHECK(conv2d(x, k, V{}).shape() == Shape{1, 10, 126, 246});
}

TEST_CASE("conv2d identity kernel and brute-force oracle") {
    const auto xin = random_tensor({2, 1, 5, 6}, 1);
    auto x = V::leaf(xin);
    auto id = V::leaf(Tensor<double>(Shape{1, 1, 1, 1}, 1.0));
    CHECK(conv2d(x, id, V{}).value().storage() == xin.storage());

    Tensor<double> ramp(Shape{1, 1, 5, 5});
    for (std::size_t i = 0; i < 25; ++i) ramp[i] = double(i);
    auto ones = V::leaf(Tensor<double>(Shape{1, 1, 3, 3}, 1.0));
    const auto y = conv2d(V::leaf(ramp), ones, V{}).value();
    REQUIRE(y.shape() == Shape{1, 1, 3, 3});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0;
            for (std::size_t u = 0; u < 3; ++u)
                for (std::size_t v = 0; v < 3; ++v) s += ramp[(i + u) * 5 + j + v];
            CHECK(y[i * 3 + j] == s);
        }

    for (auto [sh, sw, ph, pw] : {std::array<std::size_t, 4>{1, 1, 0, 0}, {1, 1, 1, 1}, {2, 1, 0, 2}, {2, 3, 1, 0}}) {
        const auto xi = random_tensor({2, 3, 7, 9}, 2 + sh);
        const auto ki = random_tensor({4, 3, 3, 2}, 3 + pw);
        const auto bi = random_tensor({4}, 4);
        const auto out = conv2d(V::leaf(xi), V::leaf(ki), V::leaf(bi), Conv2dOptions{sh, sw, ph, pw}).value();
        const auto ref = conv2d_oracle(xi, ki, &bi, sh, sw, ph, pw);
        REQUIRE(out.shape() == ref.shape());
        for (std::size_t i = 0; i < ref.numel(); ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv errors") {
    auto x = V::leaf(Tensor<double>(Shape{1, 2, 4, 4}));
    CHECK_THROWS_AS(conv2d(x, V::leaf(Tensor<double>(Shape{1, 3, 3, 3})), V{}), ShapeError);
    CHECK_THROWS_AS(conv2d(x, V::leaf(Tensor<double>(Shape{1, 2, 5, 3})), V{}), ShapeError);
    CHECK_THROWS_AS(conv1d(V::leaf(Tensor<double>(Shape{1, 1, 2})), V::leaf(Tensor<double>(Shape{1, 1, 3})), V{}),
                    ShapeError);
}

TEST_CASE("conv1d agrees with conv2d on a height-1 input") {
    const auto xi = random_tensor({2, 3, 11}, 5);
    const auto ki = random_tensor({4, 3, 3}, 6);
    const auto y1 = conv1d(V::leaf(xi), V::leaf(ki), V{}, 2, 1).value();
    const auto y2 = conv2d_oracle(xi.reshaped({2, 3, 1, 11}), ki.reshaped({4, 3, 1, 3}), nullptr, 1, 2, 0, 1);
    REQUIRE(y1.numel() == y2.numel());
    for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(y1[i] == doctest::Approx(y2[i]));
}

TEST_CASE("pooling, relu, mse examples") {
    auto x = V::leaf(Tensor<double>(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
    const auto p = maxpool2d(x, 2, 2).value();
    CHECK(p.shape() == Shape{1, 1, 1, 1});
    CHECK(p[0] == 4.0);
    CHECK(maxpool2d(V::leaf(Tensor<double>(Shape{1, 1, 5, 7})), 2, 2).shape() == Shape{1, 1, 2, 3});
    CHECK(maxpool1d(V::leaf(Tensor<double>(Shape{2, 3, 10})), 3).shape() == Shape{2, 3, 3});

    auto r = relu(V::leaf(Tensor<double>(Shape{4}, std::vector<double>{-2, -0.5, 0.5, 3}))).value();
    CHECK(r.storage() == std::vector<double>{0, 0, 0.5, 3});

    auto a = V::leaf(Tensor<double>(Shape{2}, std::vector<double>{1, 2}));
    auto z = V::leaf(Tensor<double>(Shape{2}, 0.0));
    CHECK(mse_loss(a, a).value()[0] == 0.0);
    CHECK(mse_loss(a, z).value()[0] == 2.5);
    auto a1 = V::leaf(Tensor<double>(Shape{2}, std::vector<double>{2, 3}));
    CHECK(mse_loss(a1, a).value()[0] == 1.0);
    CHECK_THROWS_AS(mse_loss(a, V::leaf(Tensor<double>(Shape{3}))), ShapeError);
}

TEST_CASE("backward hand derivatives and contract") {
    auto x = V::leaf(Tensor<double>(Shape{1}, 2.0), true);
    auto loss = mse_loss(x, V::leaf(Tensor<double>(Shape{1}, 0.0)));
    backward(loss);
    CHECK(x.grad()[0] == 4.0);
    CHECK_THROWS_AS(backward(loss), UsageError);

    auto a = V::leaf(random_tensor({3}, 1), true);
    auto s = add(a, a);
    auto l2 = weighted_sum(s, 2);
    const auto up = random_tensor({3}, 2);
    backward(l2);
    for (std::size_t i = 0; i < 3; ++i) {
        const double upstream = 2.0 * (s.value()[i] - up[i]) / 3.0;
        CHECK(a.grad()[i] == doctest::Approx(2.0 * upstream));
    }
    auto v = V::leaf(random_tensor({3}, 4), true);
    auto nonscalar = relu(v);
    CHECK_THROWS_AS(backward(nonscalar), UsageError);
}

TEST_CASE("numeric errors are raised on non-finite values") {
    Tensor<double> bad(Shape{2}, 1.0);
    bad[1] = INFINITY;
    CHECK_THROWS_AS(relu(V::leaf(bad)), NumericError);
}

TEST_CASE("no-grad guard builds constant nodes") {
    auto w = param({2, 2}, 1);
    NoGradGuard guard;
    auto y = dense(V::leaf(random_tensor({1, 2}, 2)), w, V{});
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("gradient check: every layer type") {
    const double tol = 1e-4;
    SUBCASE("conv2d valid, padded, strided") {
        for (auto opt : {Conv2dOptions{1, 1, 0, 0}, Conv2dOptions{1, 1, 1, 1}, Conv2dOptions{2, 1, 1, 0}}) {
            auto x = param({2, 2, 5, 6}, 1), k = param({3, 2, 3, 3}, 2), b = param({3}, 3);
            CHECK(gradient_check({x, k, b}, [&] { return weighted_sum(conv2d(x, k, b, opt), 4); }) < tol);
        }
    }
    SUBCASE("conv1d") {
        auto x = param({2, 3, 9}, 1), k = param({2, 3, 3}, 2), b = param({2}, 3);
        CHECK(gradient_check({x, k, b}, [&] { return weighted_sum(conv1d(x, k, b, 1, 1), 5); }) < tol);
    }
    SUBCASE("maxpool") {
        auto x = param({2, 2, 4, 6}, 7);
        CHECK(gradient_check({x}, [&] { return weighted_sum(maxpool2d(x, 2, 3), 8); }) < tol);
        auto y = param({2, 2, 10}, 9);
        CHECK(gradient_check({y}, [&] { return weighted_sum(maxpool1d(y, 3), 10); }) < tol);
    }
    SUBCASE("batchnorm training and inference") {
        auto x = param({4, 3, 5}, 11), g = param({3}, 12), b = param({3}, 13);
        CHECK(gradient_check({x, g, b},
                             [&] {
                                 BatchNormStats<double> st(3);
                                 return weighted_sum(batchnorm(x, g, b, st, Mode::training), 14);
                             }) < tol);
        BatchNormStats<double> st(3);
        st.mean = random_tensor({3}, 15);
        st.var = random_tensor({3}, 16, 0.5, 2.0);
        CHECK(gradient_check({x, g, b},
                             [&] { return weighted_sum(batchnorm(x, g, b, st, Mode::inference), 17); }) < tol);
    }
    SUBCASE("dense, relu, add, sub") {
        auto x = param({3, 4}, 21), w = param({4, 5}, 22), b = param({5}, 23), c = param({3, 5}, 24);
        CHECK(gradient_check({x, w, b, c},
                             [&] { return weighted_sum(sub(relu(add(dense(x, w, b), c)), c), 25); }) < tol);
    }
    SUBCASE("dropout with a fixed mask") {
        auto x = param({3, 8}, 26);
        CHECK(gradient_check({x},
                             [&] {
                                 Rng rng(5);
                                 return weighted_sum(dropout(x, 0.3, rng, Mode::training), 27);
                             }) < tol);
    }
    SUBCASE("reshape, flatten, pooling and reductions") {
        auto x = param({2, 3, 4, 2}, 31);
        CHECK(gradient_check({x}, [&] { return weighted_sum(flatten(reshape(x, {2, 3, 8})), 32); }) < tol);
        CHECK(gradient_check({x}, [&] { return weighted_sum(global_avg_pool(x), 33); }) < tol);
        CHECK(gradient_check({x}, [&] { return weighted_sum(mean_axis(x, 2), 34); }) < tol);
        CHECK(gradient_check({x}, [&] { return weighted_sum(max_axis(x, 2), 35); }) < tol);
    }
    SUBCASE("concat and crop") {
        auto a = param({2, 2, 6}, 41), b = param({2, 3, 6}, 42);
        CHECK(gradient_check({a, b}, [&] { return weighted_sum(crop_last(concat_channels<double>({a, b}), 4), 43); }) <
              tol);
    }
}

TEST_CASE("batchnorm statistics") {
    auto x = V::leaf(random_tensor({6, 2, 7}, 3, -2.0, 5.0));
    auto g = V::leaf(Tensor<double>(Shape{2}, std::vector<double>{1.5, -0.7}));
    auto b = V::leaf(Tensor<double>(Shape{2}, std::vector<double>{0.3, -1.0}));
    BatchNormStats<double> st(2);
    const auto y = batchnorm(x, g, b, st, Mode::training, 1e-12).value();
    for (std::size_t c = 0; c < 2; ++c) {
        double m = 0, s = 0;
        for (std::size_t n = 0; n < 6; ++n)
            for (std::size_t t = 0; t < 7; ++t) m += y[(n * 2 + c) * 7 + t];
        m /= 42;
        for (std::size_t n = 0; n < 6; ++n)
            for (std::size_t t = 0; t < 7; ++t) s += std::pow(y[(n * 2 + c) * 7 + t] - m, 2);
        CHECK(m == doctest::Approx(b.value()[c]).epsilon(1e-6));
        CHECK(std::sqrt(s / 42) == doctest::Approx(std::abs(g.value()[c])).epsilon(1e-6));
    }
    // running stats move 10% toward the batch
    double bm = 0;
    for (std::size_t n = 0; n < 6; ++n)
        for (std::size_t t = 0; t < 7; ++t) bm += x.value()[n * 14 + t];
    CHECK(st.mean[0] == doctest::Approx(0.1 * bm / 42));

    auto flat = V::leaf(Tensor<double>(Shape{4, 2, 3}, 2.5));
    const auto z = batchnorm(flat, g, b, st, Mode::training).value();
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(z[i] == doctest::Approx(b.value()[(i / 3) % 2]));
}

TEST_CASE("dropout contract") {
    auto x = V::leaf(Tensor<double>(Shape{1, 1000}, 1.0));
    Rng r1(4), r2(4);
    const auto a = dropout(x, 0.1, r1, Mode::training).value();
    const auto b = dropout(x, 0.1, r2, Mode::training).value();
    CHECK(a.storage() == b.storage());
    std::size_t zeros = 0;
    for (double v : a.storage()) {
        CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.9)));
        zeros += v == 0.0;
    }
    CHECK(zeros > 50);
    CHECK(zeros < 150);
    Rng r3(4);
    CHECK(dropout(x, 0.1, r3, Mode::inference).value().storage() == x.value().storage());
}
