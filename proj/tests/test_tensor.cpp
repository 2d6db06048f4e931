#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "dnl/io.hpp"
#include "dnl/ops.hpp"
#include "dnl/tensor.hpp"

using dnl::Tensor;
using TF = Tensor<float>;

TEST_CASE("shape and data length stay consistent") {
    auto t = TF::zeros({2, 3, 4, 5});
    CHECK(t->numel() == 120);
    CHECK_THROWS_AS(TF::from_data({2, 2}, {1.f, 2.f, 3.f}), dnl::ContractViolation);
    CHECK_THROWS_AS(TF::zeros({2, 0}), dnl::ContractViolation);
}

TEST_CASE("grad buffer matches shape and only exists when tracked") {
    auto t = TF::zeros({3, 3}, true);
    CHECK(t->grad().size() == 9);
    auto u = TF::zeros({3, 3});
    CHECK_THROWS_AS(u->grad(), dnl::ContractViolation);
}

TEST_CASE("non-finite values are detectable") {
    auto t = TF::from_data({2}, {1.f, 2.f});
    CHECK(t->all_finite());
    t->data()[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(t->all_finite());
    CHECK_THROWS_AS(t->check_finite("probe"), dnl::NumericError);
}

TEST_CASE("backward requires a scalar tracked loss") {
    auto x = TF::from_data({2}, {1.f, 2.f}, true);
    CHECK_THROWS_AS(dnl::backward(x), dnl::ContractViolation);
    auto untracked = TF::scalar(1.f);
    CHECK_THROWS_AS(dnl::backward(untracked), dnl::ContractViolation);
}

TEST_CASE("loss = sum(x*x) gives grad 2x exactly") {
    auto x = TF::from_data({4}, {0.5f, -1.f, 2.f, 3.f}, true);
    auto loss = dnl::sum_all(dnl::mul(x, x));
    dnl::backward(loss);
    for (std::size_t i = 0; i < 4; ++i) CHECK(x->grad()[i] == 2.0f * x->data()[i]);
}

TEST_CASE("parameters not reachable from the loss get no gradient") {
    auto x = TF::from_data({3}, {1.f, 2.f, 3.f}, true);
    auto p = TF::from_data({3}, {4.f, 5.f, 6.f}, true);
    auto loss = dnl::sum_all(dnl::mul(x, x));
    dnl::backward(loss);
    CHECK_FALSE(p->has_grad());
    p->grad();  // allocates zeros
    for (float g : p->grad()) CHECK(g == 0.0f);
}

TEST_CASE("gradient accumulates linearly over subgraphs") {
    // backward(sum of two subgraphs) == backward of each, summed
    auto x = TF::from_data({3}, {1.f, -2.f, 0.5f}, true);
    auto a = dnl::sum_all(dnl::mul(x, x));
    auto b = dnl::sum_all(dnl::scale(x, 3.0));
    auto total = dnl::add(a, b);
    dnl::backward(total);
    std::vector<float> combined(x->grad());

    x->zero_grad();
    auto a2 = dnl::sum_all(dnl::mul(x, x));
    dnl::backward(a2);
    std::vector<float> ga(x->grad());
    x->zero_grad();
    auto b2 = dnl::sum_all(dnl::scale(x, 3.0));
    dnl::backward(b2);
    for (std::size_t i = 0; i < 3; ++i) CHECK(combined[i] == Catch::Approx(ga[i] + x->grad()[i]).epsilon(1e-6));
}

TEST_CASE("a tensor consumed twice receives both contributions") {
    auto x = TF::from_data({2}, {3.f, 4.f}, true);
    auto y = dnl::add(x, x);  // dy/dx = 2
    auto loss = dnl::sum_all(y);
    dnl::backward(loss);
    for (float g : x->grad()) CHECK(g == 2.0f);
}

TEST_CASE("detach drops history and tracking") {
    auto x = TF::from_data({2}, {1.f, 2.f}, true);
    auto y = dnl::scale(x, 2.0);
    auto d = dnl::detach(y);
    CHECK_FALSE(d->requires_grad());
    CHECK(d->parents().empty());
    CHECK(d->data() == y->data());
}

TEST_CASE("RTF1 round trip is bit exact") {
    std::mt19937_64 eng(7);
    auto t = TF::randn({2, 1, 5, 3}, eng);
    t->data()[0] = -0.0f;  // sign of zero must survive
    const auto path = std::filesystem::temp_directory_path() / "dnl_rtf1_roundtrip.rtf1";
    dnl::save_rtf1(path.string(), t);
    auto back = dnl::load_rtf1<float>(path.string());
    REQUIRE(back->shape() == t->shape());
    for (std::size_t i = 0; i < t->numel(); ++i) {
        const auto a = dnl::detail::f32_bits(t->data()[i]);
        const auto b = dnl::detail::f32_bits(back->data()[i]);
        REQUIRE(a == b);
    }
    std::filesystem::remove(path);
}

TEST_CASE("RTF1 errors are distinct and named") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path();
    SECTION("missing file") {
        try {
            dnl::load_rtf1<float>((dir / "dnl_no_such_file.rtf1").string());
            FAIL("expected IoError");
        } catch (const dnl::IoError& e) {
            CHECK(e.kind() == dnl::IoErrorKind::missing_file);
        }
    }
    SECTION("truncated file is a malformed header") {
        const auto path = dir / "dnl_truncated.rtf1";
        std::ofstream(path, std::ios::binary) << "RTF1\x02";
        try {
            dnl::load_rtf1<float>(path.string());
            FAIL("expected IoError");
        } catch (const dnl::IoError& e) {
            CHECK(e.kind() == dnl::IoErrorKind::malformed_header);
        }
        fs::remove(path);
    }
    SECTION("bad magic") {
        const auto path = dir / "dnl_badmagic.rtf1";
        std::ofstream(path, std::ios::binary) << "NOPEttttttttttttt";
        try {
            dnl::load_rtf1<float>(path.string());
            FAIL("expected IoError");
        } catch (const dnl::IoError& e) {
            CHECK(e.kind() == dnl::IoErrorKind::malformed_header);
        }
        fs::remove(path);
    }
}

TEST_CASE("checkpoint round trip preserves names, shapes, order and bytes") {
    std::mt19937_64 eng(11);
    dnl::NamedTensors<float> entries;
    entries.emplace_back("b/second", TF::randn({3, 2}, eng));
    entries.emplace_back("a/first", TF::randn({1, 4, 2, 2}, eng));
    entries.emplace_back("t", TF::scalar(42.f));
    const auto path = std::filesystem::temp_directory_path() / "dnl_ckpt_roundtrip.dnlc";
    dnl::save_checkpoint(path.string(), entries);
    auto back = dnl::load_checkpoint<float>(path.string());
    REQUIRE(back.size() == entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        CHECK(back[i].first == entries[i].first);
        REQUIRE(back[i].second->shape() == entries[i].second->shape());
        CHECK(back[i].second->data() == entries[i].second->data());
    }
    std::filesystem::remove(path);
}
