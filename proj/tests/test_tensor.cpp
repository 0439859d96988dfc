#include "doctest.h"

#include <cmath>

#include "dualinf/tensor.hpp"

using namespace dualinf;

TEST_CASE("matmul hand arithmetic") {
    TensorF a({2, 2}, {1, 2, 3, 4});
    TensorF b({2, 1}, {5, 6});
    auto c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c.data()[0] == 17.0f);
    CHECK(c.data()[1] == 39.0f);
}

TEST_CASE("matmul identity") {
    TensorF eye({2, 2}, {1, 0, 0, 1});
    TensorF x({2, 2}, {3.5f, -1, 2, 7});
    auto y = matmul(eye, x);
    for (int i = 0; i < 4; ++i) CHECK(y.data()[static_cast<std::size_t>(i)] == x.data()[static_cast<std::size_t>(i)]);
}

TEST_CASE("matmul 1x1") {
    TensorF a({1, 1}, {2});
    TensorF b({1, 1}, {3});
    CHECK(matmul(a, b).item() == 6.0f);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    TensorF a({2, 3}, std::vector<float>(6, 0.f));
    TensorF b({2, 2}, std::vector<float>(4, 0.f));
    CHECK_THROWS_WITH_AS(matmul(a, b) /* 3 vs 2 */,
                         doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("backward d(x^2)/dx at 3 is 6") {
    TensorF x({}, {3.0f}, true);
    auto loss = x * x;
    backward(loss);
    CHECK(x.grad().item() == doctest::Approx(6.0f));
}

TEST_CASE("backward d(sigmoid)/dx at 0 is 0.25") {
    TensorF x({}, {0.0f}, true);
    backward(sigmoid(x));
    CHECK(x.grad().item() == doctest::Approx(0.25f));
}

TEST_CASE("backward requires scalar loss") {
    TensorF x({2}, {1, 2}, true);
    CHECK_THROWS_AS(backward(x * x), ContractError);
}

TEST_CASE("grads accumulate across backward calls, reset clears") {
    TensorF x({}, {3.0f}, true);
    auto l1 = x * x;
    backward(l1);
    backward(l1);
    CHECK(x.grad().item() == doctest::Approx(12.0f));
    x.zero_grad();
    backward(x * x);
    CHECK(x.grad().item() == doctest::Approx(6.0f));
}

TEST_CASE("shared subexpression is visited once") {
    // loss = y + y with y = 2x: dy is applied through two edges but the
    // node itself backpropagates once; d(loss)/dx = 4.
    TensorF x({}, {1.0f}, true);
    auto y = x * 2.0f;
    backward(y + y);
    CHECK(x.grad().item() == doctest::Approx(4.0f));
}

TEST_CASE("broadcast add over rows with reduce-backward") {
    TensorF a({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    TensorF b({1, 3}, {10, 20, 30}, true);
    auto y = a + b;
    CHECK(y.data() == std::vector<float>{11, 22, 33, 14, 25, 36});
    backward(sum(y));
    CHECK(b.grad().data() == std::vector<float>{2, 2, 2});
    CHECK(a.grad().data() == std::vector<float>(6, 1.0f));
}

TEST_CASE("softmax rows are a distribution") {
    Rng rng(17);
    auto x = randn<float>({5, 7}, rng);
    auto s = softmax_lastdim(x);
    for (i64 r = 0; r < 5; ++r) {
        float total = 0;
        for (i64 j = 0; j < 7; ++j) {
            const float v = s.data()[static_cast<std::size_t>(r * 7 + j)];
            CHECK(v >= 0.0f);
            total += v;
        }
        CHECK(total == doctest::Approx(1.0f).epsilon(1e-6));
    }
}

TEST_CASE("log_softmax equals log of softmax") {
    Rng rng(18);
    auto x = randn<float>({4, 6}, rng);
    auto a = log_softmax_lastdim(x);
    auto b = log_(softmax_lastdim(x));
    for (std::size_t i = 0; i < a.data().size(); ++i)
        CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-5));
}

TEST_CASE("reshape and transpose round-trip exactly") {
    Rng rng(19);
    auto x = randn<float>({3, 4, 5}, rng);
    auto rt = reshape(reshape(x, {5, 12}), {3, 4, 5});
    CHECK(rt.data() == x.data());
    auto tt = transpose(transpose(x, {2, 0, 1}), {1, 2, 0});
    CHECK(tt.data() == x.data());
}

TEST_CASE("reshape infers one extent") {
    TensorF x({2, 6}, std::vector<float>(12, 1.f));
    CHECK(reshape(x, {4, -1}).shape() == Shape{4, 3});
    CHECK_THROWS_AS(reshape(x, {5, -1}), ShapeError);
}

TEST_CASE("concat/slice inverse pair") {
    TensorF a({2, 2}, {1, 2, 3, 4}, true);
    TensorF b({2, 3}, {5, 6, 7, 8, 9, 10}, true);
    auto c = concat<float>({a, b}, 1);
    CHECK(c.shape() == Shape{2, 5});
    CHECK(c.data() == std::vector<float>{1, 2, 5, 6, 7, 3, 4, 8, 9, 10});
    auto back = slice(c, 1, 2, 3);
    CHECK(back.data() == b.data());
    backward(sum(slice(c, 1, 0, 2)));
    CHECK(a.grad().data() == std::vector<float>(4, 1.0f));
    CHECK(b.grad().data() == std::vector<float>(6, 0.0f));
}

TEST_CASE("sum over axes with keepdim") {
    TensorF x({2, 3}, {1, 2, 3, 4, 5, 6});
    auto s0 = sum(x, {0}, false);
    CHECK(s0.shape() == Shape{3});
    CHECK(s0.data() == std::vector<float>{5, 7, 9});
    auto s1 = sum(x, {1}, true);
    CHECK(s1.shape() == Shape{2, 1});
    CHECK(s1.data() == std::vector<float>{6, 15});
    CHECK(mean(x).item() == doctest::Approx(3.5f));
}

TEST_CASE("detach blocks gradient flow") {
    TensorF x({}, {2.0f}, true);
    auto y = x * x;
    auto z = y.detach() * x;
    backward(z);
    CHECK(x.grad().item() == doctest::Approx(4.0f));  // only the direct factor
}

TEST_CASE("sampling with fixed seed is byte-identical") {
    Rng r1(123), r2(123);
    auto a = randn<float>({64}, r1);
    auto b = randn<float>({64}, r2);
    CHECK(a.data() == b.data());
}

TEST_CASE("one_hot layout and range check") {
    auto h = one_hot<float>({1, 0, 2}, 3);
    CHECK(h.data() == std::vector<float>{0, 1, 0, 1, 0, 0, 0, 0, 1});
    CHECK_THROWS_AS(one_hot<float>({3}, 3), ContractError);
}

TEST_CASE("conv2d identity via 1x1 unit kernel, on the tape") {
    Rng rng(31);
    auto x = randn<float>({2, 3, 4, 4}, rng);
    TensorF w({3, 3, 1, 1}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto y = conv2d(x, w, 1, 0);
    for (std::size_t i = 0; i < y.data().size(); ++i)
        CHECK(y.data()[i] == doctest::Approx(x.data()[i]));
}
