#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sora/grad_check.hpp"
#include "sora/ops.hpp"
#include "sora/vten.hpp"

using namespace sora;

namespace {

Tensor rand_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    return Tensor::randn(std::move(shape), rng, scale);
}

}  // namespace

TEST_CASE("matmul identity") {
    auto eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto x = rand_tensor({3, 4}, 7);
    auto y = matmul(eye, x);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("matmul hand arithmetic") {
    auto a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    auto b = Tensor::from_data({2, 1}, {5, 6});
    auto c = matmul(a, b);
    CHECK(c.at({0, 0}) == doctest::Approx(17.0));
    CHECK(c.at({1, 0}) == doctest::Approx(39.0));
}

TEST_CASE("matmul against triple-loop oracle") {
    auto a = rand_tensor({4, 3}, 11);
    auto b = rand_tensor({3, 5}, 12);
    auto c = matmul(a, b);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) {
            double ref = 0.0;
            for (int k = 0; k < 3; ++k)
                ref += static_cast<double>(a.at({i, k})) * static_cast<double>(b.at({k, j}));
            CHECK(c.at({i, j}) == doctest::Approx(ref).epsilon(1e-6));
        }
}

TEST_CASE("matmul shape mismatch") {
    auto a = rand_tensor({2, 3}, 1);
    auto b = rand_tensor({4, 2}, 2);
    CHECK_THROWS_AS((void)matmul(a, b), DimensionError);
}

TEST_CASE("softmax symmetry and sum") {
    auto x = Tensor::from_data({3}, {0, 0, 0});
    auto y = softmax(x, 0);
    for (int i = 0; i < 3; ++i) CHECK(y.at({i}) == doctest::Approx(1.0 / 3.0));

    auto big = Tensor::from_data({2}, {1000.0f, 0.0f});
    auto yb = softmax(big, 0);
    CHECK(yb.at({0}) == doctest::Approx(1.0));
    CHECK(yb.at({1}) == doctest::Approx(0.0).epsilon(1e-12));

    auto r = rand_tensor({5, 7}, 3, 4.0);
    auto yr = softmax(r, 1);
    for (int i = 0; i < 5; ++i) {
        double s = 0.0;
        for (int j = 0; j < 7; ++j) {
            s += yr.at({i, j});
            CHECK(yr.at({i, j}) > 0.0f);
        }
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("softmax against f64 reference") {
    auto r = rand_tensor({9}, 42, 3.0);
    auto y = softmax(r, 0);
    double denom = 0.0;
    double mx = -1e300;
    for (int i = 0; i < 9; ++i) mx = std::max(mx, static_cast<double>(r.at({i})));
    for (int i = 0; i < 9; ++i) denom += std::exp(static_cast<double>(r.at({i})) - mx);
    for (int i = 0; i < 9; ++i) {
        double ref = std::exp(static_cast<double>(r.at({i})) - mx) / denom;
        CHECK(y.at({i}) == doctest::Approx(ref).epsilon(1e-6));
    }
}

TEST_CASE("softmax bad axis") {
    auto x = rand_tensor({3}, 1);
    CHECK_THROWS_AS((void)softmax(x, 2), DimensionError);
}

TEST_CASE("layer_norm closed forms") {
    auto gamma = Tensor::full({3}, 1.0);
    auto beta = Tensor::zeros({3});

    auto constant = Tensor::full({3}, 4.2);
    auto yc = layer_norm(constant, gamma, beta, 1e-5);
    for (int i = 0; i < 3; ++i) CHECK(yc.at({i}) == doctest::Approx(0.0));

    auto x = Tensor::from_data({3}, {1, 2, 3});
    auto y = layer_norm(x, gamma, beta, 1e-10);
    CHECK(y.at({0}) == doctest::Approx(-1.224744871).epsilon(1e-4));
    CHECK(y.at({1}) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(y.at({2}) == doctest::Approx(1.224744871).epsilon(1e-4));

    auto zero_gamma = Tensor::zeros({3});
    auto beta2 = Tensor::from_data({3}, {0.5f, -1.0f, 2.0f});
    auto y2 = layer_norm(x, zero_gamma, beta2, 1e-5);
    CHECK(y2.at({0}) == doctest::Approx(0.5));
    CHECK(y2.at({1}) == doctest::Approx(-1.0));
    CHECK(y2.at({2}) == doctest::Approx(2.0));
}

TEST_CASE("grad_check quadratic") {
    auto x = Tensor::from_data({1}, {3.0f});
    auto f = [](auto t) { return sum_all(square(t)); };
    double err = grad_check(f, x, 1e-4);
    CHECK(err < 1e-6);

    auto leaf = x.detached(true);
    auto out = sum_all(square(leaf));
    backward(out);
    CHECK(leaf.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("grad_check constant function") {
    auto x = rand_tensor({4}, 5);
    auto f = [](auto t) {
        using T = decltype(t);
        (void)t;
        return T::scalar(2.5);
    };
    double err = grad_check(f, x, 1e-4);
    CHECK(err == 0.0);
}

TEST_CASE("grad_check composite softmax->layer_norm->sum") {
    auto x = rand_tensor({6}, 9, 2.5);
    auto f = [](auto t) {
        using R = typename decltype(t)::Scalar;
        auto gamma = rand_tensor({6}, 91).template cast<R>();
        auto beta = rand_tensor({6}, 92).template cast<R>();
        return sum_all(layer_norm(softmax(t, 0), gamma, beta, 1e-5));
    };
    CHECK(grad_check(f, x, 1e-4) < 1e-4);
}

TEST_CASE("grad_check eps domain") {
    auto x = rand_tensor({2}, 1);
    auto f = [](auto t) { return sum_all(t); };
    CHECK_THROWS_AS((void)grad_check(f, x, 1e-2), DomainError);
}

TEST_CASE("backward of every differentiable op") {
    // Each op wrapped into a scalar objective; relative error < 1e-4 at eps 1e-4.
    auto x = rand_tensor({2, 3}, 21, 0.8);
    auto other = rand_tensor({2, 3}, 22, 0.7);
    auto positive = [](auto t) { return add_scalar(sigmoid(t), 0.5); };

    auto check = [&](auto f) { CHECK(grad_check(f, x, 1e-4) < 1e-4); };

    check([](auto t) { return sum_all(mul(add(t, t), t)); });
    check([&](auto t) {
        using R = typename decltype(t)::Scalar;
        auto o = other.cast<R>();
        return sum_all(square(sub(t, o)));
    });
    check([&](auto t) {
        using R = typename decltype(t)::Scalar;
        auto o = other.cast<R>();
        return sum_all(div(t, add_scalar(sigmoid(o), 1.0)));
    });
    check([&](auto t) { return sum_all(neg(mul_scalar(t, 1.7))); });
    check([&](auto t) { return sum_all(sora::exp(mul_scalar(t, 0.5))); });
    check([&positive](auto t) { return sum_all(sora::log(positive(t))); });
    check([&positive](auto t) { return sum_all(sora::sqrt(positive(t))); });
    check([](auto t) { return sum_all(square(t)); });
    check([](auto t) { return sum_all(sigmoid(t)); });
    check([](auto t) { return sum_all(silu(t)); });
    check([](auto t) { return sum_all(gelu(t)); });
    check([](auto t) { return sum_all(sora::tanh(t)); });
    check([](auto t) { return mean_all(square(reshape(t, {3, 2}))); });
    check([](auto t) { return sum_all(square(permute(t, {1, 0}))); });
    check([](auto t) { return sum_all(square(slice(t, 1, 1, 2))); });
    check([](auto t) {
        std::vector<decltype(t)> parts{t, t};
        return sum_all(square(concat(parts, 0)));
    });
    check([](auto t) { return sum_all(square(pad_axis(t, 0, 1, 2))); });
    check([](auto t) { return sum_all(square(broadcast_to(slice(t, 0, 0, 1), {4, 2, 3}))); });
    check([](auto t) { return sum_all(square(sum_axis(t, 1))); });
    check([](auto t) {
        using R = typename decltype(t)::Scalar;
        auto w = rand_tensor({3, 2}, 55).template cast<R>();
        return sum_all(square(matmul(t, w)));
    });
    check([](auto t) { return sum_all(square(softmax(t, 1))); });
    check([](auto t) {
        using R = typename decltype(t)::Scalar;
        auto gamma = rand_tensor({3}, 66).template cast<R>();
        auto beta = rand_tensor({3}, 67).template cast<R>();
        return sum_all(square(layer_norm(t, gamma, beta, 1e-5)));
    });

    auto x4 = rand_tensor({2, 4, 4, 3}, 30);
    CHECK(grad_check([](auto t) { return sum_all(square(patchify(t, 2))); }, x4, 1e-4) < 1e-4);
    auto tok = rand_tensor({2, 4, 12}, 31);
    CHECK(grad_check([](auto t) { return sum_all(square(unpatchify(t, 2, 2, 2, 3))); }, tok,
                     1e-4) < 1e-4);
}

TEST_CASE("ops are deterministic") {
    auto run = [] {
        Rng rng(123);
        auto a = Tensor::randn({8, 8}, rng);
        auto b = Tensor::randn({8, 8}, rng);
        auto c = softmax(matmul(a, b), 1);
        return std::vector<float>(c.data().begin(), c.data().end());
    };
    auto r1 = run();
    auto r2 = run();
    CHECK(r1 == r2);
}

TEST_CASE("finite checks catch NaN") {
    auto x = Tensor::from_data({2}, {-1.0f, 4.0f});
    CHECK_THROWS_AS((void)sora::sqrt(x), NumericError);
    CHECK_THROWS_AS((void)sora::log(x), NumericError);
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS((void)Tensor::from_data({2, 2}, {1, 2, 3}), DimensionError);
    CHECK_THROWS_AS((void)Tensor::zeros({0, 3}), DimensionError);
    CHECK_THROWS_AS((void)Tensor::from_data(
                        {1}, {std::numeric_limits<float>::quiet_NaN()}),
                    NumericError);
}

TEST_CASE("backward visits shared subgraph once") {
    auto x = Tensor::from_data({2}, {1.0f, 2.0f}, true);
    auto y = mul_scalar(x, 3.0);
    auto z = add(y, y);  // diamond
    auto out = sum_all(z);
    backward(out);
    CHECK(x.grad()[0] == doctest::Approx(6.0));
    CHECK(x.grad()[1] == doctest::Approx(6.0));
}

TEST_CASE("no-grad mode records nothing") {
    auto x = Tensor::from_data({2}, {1.0f, 2.0f}, true);
    NoGradGuard ng;
    auto y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("rng determinism and fork independence") {
    Rng a(99), b(99);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng base(7);
    Rng s1 = base.fork("weights");
    Rng s2 = base.fork("noise");
    CHECK(s1.next_u64() != s2.next_u64());

    Rng replay(7);
    Rng s1b = replay.fork("weights");
    Rng s1c = base.fork("weights");
    CHECK(s1b.next_u64() == s1c.next_u64());

    // state round-trip
    Rng r(5);
    r.next_u64();
    r.next_u64();
    Rng restored(0);
    restored.restore(r.key(), r.counter());
    CHECK(restored.next_u64() == r.next_u64());
}

TEST_CASE("rng moments sanity") {
    Rng rng(2024);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double v = rng.normal();
        sum += v;
        sq += v * v;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("vten round trip") {
    auto dir = std::filesystem::temp_directory_path() / "sora_vten_test";
    std::filesystem::create_directories(dir);
    auto path = dir / "t.vten";
    auto t = rand_tensor({3, 5, 2}, 77);
    vten_save(path, t);
    auto back = vten_load_tensor(path);
    CHECK(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(back.data()[i] == t.data()[i]);

    // header is bit-exact little-endian
    std::ifstream is(path, std::ios::binary);
    char head[4];
    is.read(head, 4);
    CHECK(std::string(head, 4) == "VTEN");
    unsigned char v[4];
    is.read(reinterpret_cast<char*>(v), 4);
    CHECK(v[0] == 1);
    CHECK(v[1] == 0);

    std::filesystem::remove_all(dir);
}

TEST_CASE("vten rejects garbage") {
    auto dir = std::filesystem::temp_directory_path() / "sora_vten_bad";
    std::filesystem::create_directories(dir);
    auto path = dir / "bad.vten";
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE";
    }
    CHECK_THROWS_AS((void)vten_load(path), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("layer_norm rejects non-positive eps") {
    auto x = Tensor::from_data({3}, {1, 2, 3});
    auto gamma = Tensor::full({3}, 1.0);
    auto beta = Tensor::zeros({3});
    CHECK_THROWS_AS((void)layer_norm(x, gamma, beta, 0.0), DomainError);
    CHECK_THROWS_AS((void)layer_norm(x, gamma, beta, -1.0), DomainError);
}

TEST_CASE("grad_check rejects non-finite evaluations") {
    // exp overflows to +inf inside the op, which the finite checks turn
    // into an error before the checker ever sees it
    auto x = Tensor::from_data({1}, {200.0f});
    auto f = [](auto t) { return sum_all(sora::exp(t)); };
    CHECK_THROWS_AS((void)grad_check(f, x, 1e-4), Error);
}
