#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "dnl/ops.hpp"
#include "dnl/tensor.hpp"
#include "support/oracles.hpp"

using dnl::Tensor;
using dnl::TensorPtr;
using TF = Tensor<float>;
using TD = Tensor<double>;

namespace {

// float forwards are checked against the double reference; gradients are
// checked on the double instantiation where finite differences are clean
template <typename T>
std::vector<double> as_doubles(const TensorPtr<T>& t) {
    return std::vector<double>(t->data().begin(), t->data().end());
}

}  // namespace

TEST_CASE("conv2d all-ones 3x3 against 3x3 kernel sums to 9") {
    auto in = TF::full({1, 1, 3, 3}, 1.0f);
    auto k = TF::full({1, 1, 3, 3}, 1.0f);
    auto out = dnl::conv2d(in, k, 1, 0);
    REQUIRE(out->shape() == std::vector<int>{1, 1, 1, 1});
    CHECK(out->data()[0] == 9.0f);
}

TEST_CASE("conv2d with a 1x1 identity kernel is the identity") {
    std::mt19937_64 eng(3);
    auto in = TF::randn({2, 1, 4, 5}, eng);
    auto k = TF::from_data({1, 1, 1, 1}, {1.0f});
    auto out = dnl::conv2d(in, k, 1, 0);
    REQUIRE(out->shape() == in->shape());
    CHECK(out->data() == in->data());
}

TEST_CASE("conv2d output extent follows floor((H + 2p - K)/s) + 1") {
    auto in = TF::zeros({1, 1, 7, 9});
    auto k = TF::zeros({2, 1, 3, 3});
    CHECK(dnl::conv2d(in, k, 2, 1)->shape() == std::vector<int>{1, 2, 4, 5});
    CHECK(dnl::conv2d(in, k, 1, 1)->shape() == std::vector<int>{1, 2, 7, 9});  // same-padding for odd K
    CHECK(dnl::conv2d(in, k, 3, 0)->shape() == std::vector<int>{1, 2, 2, 3});
}

TEST_CASE("conv2d rejects contract violations") {
    auto in = TF::zeros({1, 2, 4, 4});
    CHECK_THROWS_AS(dnl::conv2d(in, TF::zeros({1, 3, 3, 3}), 1, 1), dnl::ContractViolation);  // channel mismatch
    CHECK_THROWS_AS(dnl::conv2d(in, TF::zeros({1, 2, 3, 3}), 0, 1), dnl::ContractViolation);  // stride < 1
    CHECK_THROWS_AS(dnl::conv2d(in, TF::zeros({1, 2, 3, 3}), 1, -1), dnl::ContractViolation); // negative pad
    CHECK_THROWS_AS(dnl::conv2d(in, TF::zeros({1, 2, 7, 7}), 1, 0), dnl::ContractViolation);  // kernel too big
}

TEST_CASE("conv2d forward matches the scalar double reference") {
    std::mt19937_64 eng(17);
    for (int trial = 0; trial < 5; ++trial) {
        const int stride = 1 + trial % 2, pad = trial % 3;
        auto in = TF::zeros({2, 3, 6, 5});
        auto k = TF::zeros({4, 3, 3, 3});
        oracle::fill_uniform(in, eng);
        oracle::fill_uniform(k, eng);
        auto out = dnl::conv2d(in, k, stride, pad);
        int OH = 0, OW = 0;
        const auto ref = oracle::conv2d_ref(as_doubles(in), 2, 3, 6, 5, as_doubles(k), 4, 3, 3, stride, pad, OH, OW);
        REQUIRE(out->shape() == std::vector<int>{2, 4, OH, OW});
        for (std::size_t i = 0; i < ref.size(); ++i)
            CHECK(static_cast<double>(out->data()[i]) == Catch::Approx(ref[i]).margin(1e-5));
    }
}

TEST_CASE("conv2d gradients match central finite differences") {
    // the spec's conv example: random 1x2x5x5 input, 3x2x3x3 kernel, sum loss
    std::mt19937_64 eng(23);
    auto in = TD::zeros({1, 2, 5, 5}, true);
    auto k = TD::zeros({3, 2, 3, 3}, true);
    oracle::fill_uniform(in, eng);
    oracle::fill_uniform(k, eng);

    auto loss_value = [&] { return static_cast<double>(dnl::sum_all(dnl::conv2d(in, k, 1, 1))->value()); };
    auto loss_graph = dnl::sum_all(dnl::conv2d(in, k, 1, 1));
    dnl::backward(loss_graph);

    const auto fd_in = oracle::fd_gradient(in, loss_value);
    const auto fd_k = oracle::fd_gradient(k, loss_value);
    CHECK(oracle::max_rel_err(oracle::grad_of(in), fd_in) < 1e-4);
    CHECK(oracle::max_rel_err(oracle::grad_of(k), fd_k) < 1e-4);
}

TEST_CASE("conv2d strided gradients match finite differences") {
    std::mt19937_64 eng(29);
    auto in = TD::zeros({2, 2, 6, 6}, true);
    auto k = TD::zeros({3, 2, 4, 4}, true);
    oracle::fill_uniform(in, eng);
    oracle::fill_uniform(k, eng);
    auto loss_value = [&] {
        return static_cast<double>(dnl::mean_all(dnl::square(dnl::conv2d(in, k, 2, 1)))->value());
    };
    auto loss = dnl::mean_all(dnl::square(dnl::conv2d(in, k, 2, 1)));
    dnl::backward(loss);
    CHECK(oracle::max_rel_err(oracle::grad_of(in), oracle::fd_gradient(in, loss_value)) < 1e-4);
    CHECK(oracle::max_rel_err(oracle::grad_of(k), oracle::fd_gradient(k, loss_value)) < 1e-4);
}

TEST_CASE("upsample2x duplicates values in 2x2 blocks") {
    auto in = TF::from_data({1, 1, 2, 2}, {1.f, 2.f, 3.f, 4.f});
    auto out = dnl::upsample2x_nearest(in);
    REQUIRE(out->shape() == std::vector<int>{1, 1, 4, 4});
    const std::vector<float> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    CHECK(out->data() == want);
}

TEST_CASE("upsample2x_conv with identity 1x1 kernel is pure duplication") {
    auto in = TF::from_data({1, 1, 2, 2}, {1.f, 2.f, 3.f, 4.f});
    auto k = TF::from_data({1, 1, 1, 1}, {1.0f});
    auto out = dnl::upsample2x_conv(in, k);
    CHECK(out->data() == dnl::upsample2x_nearest(in)->data());
}

TEST_CASE("upsample2x_conv gradient check") {
    std::mt19937_64 eng(31);
    auto in = TD::zeros({1, 2, 3, 3}, true);
    auto k = TD::zeros({2, 2, 3, 3}, true);
    oracle::fill_uniform(in, eng);
    oracle::fill_uniform(k, eng);
    auto loss_value = [&] { return static_cast<double>(dnl::sum_all(dnl::upsample2x_conv(in, k))->value()); };
    auto loss = dnl::sum_all(dnl::upsample2x_conv(in, k));
    dnl::backward(loss);
    CHECK(oracle::max_rel_err(oracle::grad_of(in), oracle::fd_gradient(in, loss_value)) < 1e-4);
    CHECK(oracle::max_rel_err(oracle::grad_of(k), oracle::fd_gradient(k, loss_value)) < 1e-4);
}

TEST_CASE("instance_norm maps a constant plane to zero with unit affine") {
    auto x = TF::full({1, 1, 4, 4}, 3.7f);
    auto gamma = TF::full({1}, 1.0f);
    auto beta = TF::zeros({1});
    auto out = dnl::instance_norm(x, gamma, beta);
    for (float v : out->data()) CHECK(v == Catch::Approx(0.0f).margin(1e-6));
}

TEST_CASE("instance_norm standardizes each plane") {
    std::mt19937_64 eng(37);
    auto x = TF::randn({2, 3, 8, 8}, eng, 2.0);
    auto gamma = TF::full({3}, 1.0f);
    auto beta = TF::zeros({3});
    auto out = dnl::instance_norm(x, gamma, beta);
    const std::size_t plane = 64;
    for (int nc = 0; nc < 6; ++nc) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < plane; ++i) mean += out->data()[nc * plane + i];
        mean /= plane;
        for (std::size_t i = 0; i < plane; ++i) {
            const double d = out->data()[nc * plane + i] - mean;
            var += d * d;
        }
        var /= plane;
        CHECK(mean == Catch::Approx(0.0).margin(1e-4));
        CHECK(var == Catch::Approx(1.0).margin(1e-3));
    }
}

TEST_CASE("instance_norm with gamma 0 is beta broadcast") {
    std::mt19937_64 eng(41);
    auto x = TF::randn({1, 2, 4, 4}, eng);
    auto gamma = TF::zeros({2});
    auto beta = TF::from_data({2}, {0.25f, -1.5f});
    auto out = dnl::instance_norm(x, gamma, beta);
    for (int c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 16; ++i)
            CHECK(out->data()[static_cast<std::size_t>(c) * 16 + i] == beta->data()[static_cast<std::size_t>(c)]);
}

TEST_CASE("instance_norm gradient check for x, gamma, beta") {
    std::mt19937_64 eng(43);
    auto x = TD::zeros({2, 2, 4, 4}, true);
    auto gamma = TD::zeros({2}, true);
    auto beta = TD::zeros({2}, true);
    oracle::fill_uniform(x, eng, -2.0, 2.0);
    oracle::fill_uniform(gamma, eng, 0.5, 1.5);
    oracle::fill_uniform(beta, eng, -0.5, 0.5);
    auto weights = TD::zeros({2, 2, 4, 4});
    oracle::fill_uniform(weights, eng);  // weighted sum makes the check non-trivial
    auto loss_value = [&] {
        return static_cast<double>(
            dnl::sum_all(dnl::mul(weights, dnl::instance_norm(x, gamma, beta)))->value());
    };
    auto loss = dnl::sum_all(dnl::mul(weights, dnl::instance_norm(x, gamma, beta)));
    dnl::backward(loss);
    CHECK(oracle::max_rel_err(oracle::grad_of(x), oracle::fd_gradient(x, loss_value)) < 1e-3);
    CHECK(oracle::max_rel_err(oracle::grad_of(gamma), oracle::fd_gradient(gamma, loss_value)) < 1e-3);
    CHECK(oracle::max_rel_err(oracle::grad_of(beta), oracle::fd_gradient(beta, loss_value)) < 1e-3);
}

TEST_CASE("leaky_relu values and subgradients") {
    auto x = TF::from_data({3}, {2.0f, -2.0f, 0.0f}, true);
    auto y = dnl::leaky_relu(x, 0.2);
    CHECK(y->data()[0] == 2.0f);
    CHECK(y->data()[1] == Catch::Approx(-0.4f));
    CHECK(y->data()[2] == 0.0f);
    auto loss = dnl::sum_all(y);
    dnl::backward(loss);
    CHECK(x->grad()[0] == 1.0f);
    CHECK(x->grad()[1] == Catch::Approx(0.2f));
    CHECK(x->grad()[2] == Catch::Approx(0.2f));  // subgradient at 0 is the slope
    CHECK_THROWS_AS(dnl::leaky_relu(x, 1.0), dnl::ContractViolation);
    CHECK_THROWS_AS(dnl::leaky_relu(x, -0.1), dnl::ContractViolation);
}

TEST_CASE("gradient at a negative point equals the slope") {
    auto x = TF::from_data({1}, {-1.0f}, true);
    auto loss = dnl::sum_all(dnl::leaky_relu(x, 0.2));
    dnl::backward(loss);
    CHECK(x->grad()[0] == Catch::Approx(0.2f));
}

TEST_CASE("sigmoid and elementwise op gradient checks") {
    std::mt19937_64 eng(47);
    auto x = TD::zeros({2, 7}, true);
    oracle::fill_uniform(x, eng, -2.0, 2.0);
    auto loss_value = [&] {
        auto s = dnl::sigmoid(x);
        return static_cast<double>(dnl::mean_all(dnl::mul(s, dnl::add_scalar(dnl::abs_t(x), 0.5)))->value());
    };
    auto loss = dnl::mean_all(dnl::mul(dnl::sigmoid(x), dnl::add_scalar(dnl::abs_t(x), 0.5)));
    dnl::backward(loss);
    CHECK(oracle::max_rel_err(oracle::grad_of(x), oracle::fd_gradient(x, loss_value)) < 1e-3);
}

TEST_CASE("concat_channels stitches and splits gradients") {
    std::mt19937_64 eng(53);
    auto a = TD::zeros({1, 2, 3, 3}, true);
    auto b = TD::zeros({1, 1, 3, 3}, true);
    oracle::fill_uniform(a, eng);
    oracle::fill_uniform(b, eng);
    auto cat = dnl::concat_channels(a, b);
    REQUIRE(cat->shape() == std::vector<int>{1, 3, 3, 3});
    for (std::size_t i = 0; i < 18; ++i) CHECK(cat->data()[i] == a->data()[i]);
    for (std::size_t i = 0; i < 9; ++i) CHECK(cat->data()[18 + i] == b->data()[i]);

    auto w = TD::zeros({1, 3, 3, 3});
    oracle::fill_uniform(w, eng);
    auto loss_value = [&] {
        return static_cast<double>(dnl::sum_all(dnl::mul(w, dnl::concat_channels(a, b)))->value());
    };
    auto loss = dnl::sum_all(dnl::mul(w, dnl::concat_channels(a, b)));
    dnl::backward(loss);
    CHECK(oracle::max_rel_err(oracle::grad_of(a), oracle::fd_gradient(a, loss_value)) < 1e-6);
    CHECK(oracle::max_rel_err(oracle::grad_of(b), oracle::fd_gradient(b, loss_value)) < 1e-6);
}

TEST_CASE("mul_channel_broadcast scales all channels by the map") {
    std::mt19937_64 eng(59);
    auto x = TD::zeros({2, 3, 2, 2}, true);
    auto m = TD::zeros({2, 1, 2, 2}, true);
    oracle::fill_uniform(x, eng);
    oracle::fill_uniform(m, eng);
    auto loss_value = [&] {
        return static_cast<double>(dnl::sum_all(dnl::square(dnl::mul_channel_broadcast(x, m)))->value());
    };
    auto loss = dnl::sum_all(dnl::square(dnl::mul_channel_broadcast(x, m)));
    dnl::backward(loss);
    CHECK(oracle::max_rel_err(oracle::grad_of(x), oracle::fd_gradient(x, loss_value)) < 1e-4);
    CHECK(oracle::max_rel_err(oracle::grad_of(m), oracle::fd_gradient(m, loss_value)) < 1e-4);
}

TEST_CASE("add_channel_bias broadcasts and reduces correctly") {
    std::mt19937_64 eng(61);
    auto x = TD::zeros({2, 3, 2, 2}, true);
    auto b = TD::zeros({3}, true);
    oracle::fill_uniform(x, eng);
    oracle::fill_uniform(b, eng);
    auto loss_value = [&] {
        return static_cast<double>(dnl::mean_all(dnl::square(dnl::add_channel_bias(x, b)))->value());
    };
    auto loss = dnl::mean_all(dnl::square(dnl::add_channel_bias(x, b)));
    dnl::backward(loss);
    CHECK(oracle::max_rel_err(oracle::grad_of(x), oracle::fd_gradient(x, loss_value)) < 1e-4);
    CHECK(oracle::max_rel_err(oracle::grad_of(b), oracle::fd_gradient(b, loss_value)) < 1e-4);
}

TEST_CASE("three-layer conv + norm + activation composite matches finite differences") {
    // the composite gradient-integrity case, double precision leaves
    std::mt19937_64 eng(67);
    auto x = TD::zeros({1, 1, 8, 8}, true);
    auto k1 = TD::zeros({4, 1, 3, 3}, true);
    auto g1 = TD::full({4}, 1.0, true);
    auto b1 = TD::zeros({4}, true);
    auto k2 = TD::zeros({2, 4, 3, 3}, true);
    auto k3 = TD::zeros({1, 2, 3, 3}, true);
    oracle::fill_uniform(x, eng);
    oracle::fill_uniform(k1, eng, -0.5, 0.5);
    oracle::fill_uniform(k2, eng, -0.5, 0.5);
    oracle::fill_uniform(k3, eng, -0.5, 0.5);

    auto forward = [&] {
        auto h = dnl::leaky_relu(dnl::instance_norm(dnl::conv2d(x, k1, 1, 1), g1, b1), 0.2);
        auto h2 = dnl::leaky_relu(dnl::conv2d(h, k2, 2, 1), 0.2);
        return dnl::mean_all(dnl::square(dnl::conv2d(h2, k3, 1, 1)));
    };
    auto loss_value = [&] { return static_cast<double>(forward()->value()); };
    auto loss = forward();
    dnl::backward(loss);
    for (const auto& leaf : {x, k1, g1, b1, k2, k3}) {
        CHECK(oracle::max_rel_err(oracle::grad_of(leaf), oracle::fd_gradient(leaf, loss_value)) < 1e-3);
    }
}

TEST_CASE("float-pipeline gradients stay within 1e-3 of finite differences on mean losses") {
    // sanity check on the production scalar type; mean-scale losses keep
    // fp32 finite-difference noise inside the tolerance
    std::mt19937_64 eng(71);
    auto x = TF::zeros({1, 2, 5, 5}, true);
    auto k = TF::zeros({2, 2, 3, 3}, true);
    oracle::fill_uniform(x, eng);
    oracle::fill_uniform(k, eng);
    auto loss_value = [&] {
        return static_cast<double>(dnl::mean_all(dnl::square(dnl::conv2d(x, k, 1, 1)))->value());
    };
    auto loss = dnl::mean_all(dnl::square(dnl::conv2d(x, k, 1, 1)));
    dnl::backward(loss);
    CHECK(oracle::max_rel_err(oracle::grad_of(k), oracle::fd_gradient(k, loss_value)) < 1e-3);
}

TEST_CASE("same-padding conv preserves extents for odd K") {
    for (int K : {1, 3, 5}) {
        auto in = TF::zeros({1, 1, 8, 8});
        auto k = TF::zeros({1, 1, K, K});
        CHECK(dnl::conv2d(in, k, 1, (K - 1) / 2)->shape() == in->shape());
    }
}
