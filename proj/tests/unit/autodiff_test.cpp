#include <cmath>
#include <random>

#include "../support/gradcheck.hpp"
#include "atxf/autodiff.hpp"
#include "doctest.h"

using namespace atxf;
using ad::Tape;
using ad::Var;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<double> t(std::move(shape));
    for (auto& x : t.data()) x = dist(rng);
    return t;
}

// Naive triple loop, written independently of the kernels.
Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<double> c(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0;
            for (std::size_t p = 0; p < k; ++p) s += a.at({i, p}) * b.at({p, j});
            c.at({i, j}) = s;
        }
    return c;
}

}  // namespace

TEST_CASE("matmul examples") {
    Tape<double> tape;
    auto id = tape.constant(Tensor<double>::from({2, 2}, {1, 0, 0, 1}));
    auto m = tape.constant(Tensor<double>::from({2, 2}, {5, 6, 7, 8}));
    CHECK(ad::matmul(id, m).value() == Tensor<double>::from({2, 2}, {5, 6, 7, 8}));

    auto row = tape.constant(Tensor<double>::from({1, 2}, {1, 2}));
    auto col = tape.constant(Tensor<double>::from({2, 1}, {3, 4}));
    CHECK(ad::matmul(row, col).value() == Tensor<double>::from({1, 1}, {11}));

    auto a = random_tensor({3, 4}, 1);
    auto b = random_tensor({4, 2}, 2);
    auto c = ad::matmul(tape.constant(a), tape.constant(b)).value();
    CHECK(max_abs_diff(c, naive_matmul(a, b)) < 1e-6);
}

TEST_CASE("matmul agrees with the naive oracle for random sizes up to 16x16") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t m = 1 + rng() % 16, k = 1 + rng() % 16, n = 1 + rng() % 16;
        auto a = random_tensor({m, k}, rng());
        auto b = random_tensor({k, n}, rng());
        Tape<double> tape;
        auto c = ad::matmul(tape.constant(a), tape.constant(b)).value();
        CHECK(max_abs_diff(c, naive_matmul(a, b)) < 1e-6);

        Tape<float> ftape;
        auto cf = ad::matmul(ftape.constant(a.cast<float>()), ftape.constant(b.cast<float>())).value();
        CHECK(max_abs_diff(cf.cast<double>(), naive_matmul(a, b)) < 1e-5);
    }
}

TEST_CASE("batched matmul broadcasts the batch dimensions") {
    auto a = random_tensor({2, 3, 4}, 7);
    auto b = random_tensor({4, 5}, 8);
    auto bb = random_tensor({1, 4, 5}, 9);
    Tape<double> tape;
    auto c = ad::matmul(tape.constant(a), tape.constant(b)).value();
    auto c2 = ad::matmul(tape.constant(a), tape.constant(bb)).value();
    REQUIRE(c.shape() == Shape{2, 3, 5});
    for (std::size_t batch = 0; batch < 2; ++batch) {
        Tensor<double> slice(Shape{3, 4});
        std::copy_n(a.data().data() + batch * 12, 12, slice.data().data());
        auto expect = naive_matmul(slice, b);
        auto expect2 = naive_matmul(slice, bb.reshaped({4, 5}));
        for (std::size_t i = 0; i < 15; ++i) {
            CHECK(c[batch * 15 + i] == doctest::Approx(expect[i]).epsilon(1e-12));
            CHECK(c2[batch * 15 + i] == doctest::Approx(expect2[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tape<double> tape;
    auto a = tape.constant(Tensor<double>(Shape{2, 3}));
    auto b = tape.constant(Tensor<double>(Shape{4, 2}));
    try {
        ad::matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string what = e.what();
        CHECK(what.find("[2,3]") != std::string::npos);
        CHECK(what.find("[4,2]") != std::string::npos);
    }
}

TEST_CASE("softmax examples") {
    Tape<double> tape;
    auto s = ad::softmax(tape.constant(Tensor<double>::from({2}, {0, 0})), 0).value();
    CHECK(s[0] == doctest::Approx(0.5));
    CHECK(s[1] == doctest::Approx(0.5));

    auto big = ad::softmax(tape.constant(Tensor<double>::from({2}, {1000, 1000})), 0).value();
    CHECK(big[0] == doctest::Approx(0.5));
    CHECK(big[1] == doctest::Approx(0.5));

    // e^{ln 1} : e^{ln 3} = 1 : 3
    auto q = ad::softmax(tape.constant(Tensor<double>::from({2}, {std::log(1.0), std::log(3.0)})), 0).value();
    CHECK(q[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(q[1] == doctest::Approx(0.75).epsilon(1e-12));

    Tape<float> ftape;
    auto big_f = ad::softmax(ftape.constant(Tensor<float>::from({2}, {1000.f, 1000.f})), 0).value();
    CHECK(big_f[0] == 0.5f);
}

TEST_CASE("softmax rejects non-finite input") {
    Tape<double> tape;
    Tensor<double> bad(Shape{2});
    bad[0] = std::nan("");
    CHECK_THROWS_AS(tape.constant(bad), NumericError);
}

TEST_CASE("property: softmax slices sum to one along any axis") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const Shape shape{1 + rng() % 4, 1 + rng() % 5, 1 + rng() % 6};
        const std::size_t axis = rng() % 3;
        Tape<float> tape;
        auto x = tape.constant(random_tensor(shape, rng(), -50, 50).cast<float>());
        const auto y = ad::softmax(x, axis).value();
        const auto strides = strides_of(shape);
        for (std::size_t i = 0; i < y.size(); ++i) {
            REQUIRE(y[i] > 0.0f - 1e-30f);
            REQUIRE(y[i] <= 1.0f);
            if ((i / strides[axis]) % shape[axis] != 0) continue;
            double total = 0;
            for (std::size_t j = 0; j < shape[axis]; ++j) total += y[i + j * strides[axis]];
            REQUIRE(std::abs(total - 1.0) < 1e-5);
        }
    }
}

TEST_CASE("backward examples") {
    {
        Tape<double> tape;
        auto w = tape.parameter(random_tensor({2, 3}, 3));
        tape.backward(ad::sum(w));
        CHECK(tape.grad(w) == Tensor<double>(Shape{2, 3}, 1.0));
    }
    {
        Tape<double> tape;
        auto w = tape.parameter(Tensor<double>::from({3}, {1, 2, 3}));
        tape.backward(ad::sum(ad::mul(w, w)));
        CHECK(tape.grad(w) == Tensor<double>::from({3}, {2, 4, 6}));
    }
}

TEST_CASE("backward requires a scalar loss") {
    Tape<double> tape;
    auto w = tape.parameter(Tensor<double>(Shape{2}, 1.0));
    CHECK_THROWS_AS(tape.backward(ad::relu(w)), ContractError);
}

TEST_CASE("backward visits each recorded node at most once") {
    Tape<double> tape;
    auto w = tape.parameter(random_tensor({3}, 4));
    auto y = ad::mul(w, w);
    auto z = ad::add(y, w);
    auto loss = ad::sum(ad::add(z, y));
    tape.backward(loss);
    CHECK(tape.backward_visits() == 4);  // mul, add, add, sum
}

TEST_CASE("gradient check for every primitive op (64-bit)") {
    using testing::gradient_check;
    const double tol = 1e-4;
    ad::Mask mask{{1, 3}, {0, 1, 0}};

    struct Case {
        const char* name;
        testing::LossFn fn;
        std::vector<Tensor<double>> params;
    };
    // Weighted sums keep every output element's gradient distinct.
    auto weighted = [](Tape<double>& t, Var<double> v) {
        Tensor<double> w(v.shape());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.1 * double(i % 7);
        return ad::sum(ad::mul(v, t.constant(w)));
    };

    std::vector<Case> cases{
        {"matmul", [&](auto& t, auto& p) { return weighted(t, ad::matmul(p[0], p[1])); },
         {random_tensor({3, 4}, 1), random_tensor({4, 2}, 2)}},
        {"batched matmul", [&](auto& t, auto& p) { return weighted(t, ad::matmul(p[0], p[1])); },
         {random_tensor({2, 3, 4}, 3), random_tensor({2, 4, 2}, 4)}},
        {"broadcast matmul", [&](auto& t, auto& p) { return weighted(t, ad::matmul(p[0], p[1])); },
         {random_tensor({2, 2, 3, 4}, 5), random_tensor({1, 4, 2}, 6)}},
        {"add broadcast", [&](auto& t, auto& p) { return weighted(t, ad::add(p[0], p[1])); },
         {random_tensor({2, 3}, 7), random_tensor({3}, 8)}},
        {"sub broadcast", [&](auto& t, auto& p) { return weighted(t, ad::sub(p[0], p[1])); },
         {random_tensor({2, 1, 3}, 9), random_tensor({4, 1}, 10)}},
        {"mul broadcast", [&](auto& t, auto& p) { return weighted(t, ad::mul(p[0], p[1])); },
         {random_tensor({2, 3}, 11), random_tensor({2, 1}, 12)}},
        {"scale", [&](auto& t, auto& p) { return weighted(t, ad::scale(p[0], 2.5)); }, {random_tensor({4}, 13)}},
        {"relu", [&](auto& t, auto& p) { return weighted(t, ad::relu(p[0])); }, {random_tensor({6}, 14, 0.1, 1)}},
        {"relu negative side", [&](auto& t, auto& p) { return weighted(t, ad::relu(p[0])); },
         {random_tensor({6}, 15, -1, -0.1)}},
        {"softmax last axis", [&](auto& t, auto& p) { return weighted(t, ad::softmax(p[0], 1)); },
         {random_tensor({2, 5}, 16)}},
        {"softmax inner axis", [&](auto& t, auto& p) { return weighted(t, ad::softmax(p[0], 0)); },
         {random_tensor({3, 4}, 17)}},
        {"layer_norm",
         [&](auto& t, auto& p) { return weighted(t, ad::layer_norm(p[0], p[1], p[2], 1e-6)); },
         {random_tensor({3, 4}, 18), random_tensor({4}, 19, 0.5, 1.5), random_tensor({4}, 20)}},
        {"embedding",
         [&](auto& t, auto& p) { return weighted(t, ad::embedding(p[0], {2, 0, 2, 1}, Shape{2, 2})); },
         {random_tensor({3, 4}, 21)}},
        {"masked_fill", [&](auto& t, auto& p) { return weighted(t, ad::masked_fill(p[0], mask, -5.0)); },
         {random_tensor({2, 3}, 22)}},
        {"reshape", [&](auto& t, auto& p) { return weighted(t, ad::reshape(p[0], Shape{3, 2})); },
         {random_tensor({2, 3}, 23)}},
        {"permute", [&](auto& t, auto& p) { return weighted(t, ad::permute(p[0], {2, 0, 1})); },
         {random_tensor({2, 3, 4}, 24)}},
        {"transpose", [&](auto& t, auto& p) { return weighted(t, ad::transpose(p[0])); }, {random_tensor({3, 2}, 25)}},
        {"mean", [&](auto&, auto& p) { return ad::mean(ad::mul(p[0], p[0])); }, {random_tensor({5}, 26)}},
        {"sparse_cross_entropy",
         [&](auto&, auto& p) { return ad::sparse_cross_entropy(p[0], {1, 0, 3, 2}, 0); },
         {random_tensor({2, 2, 5}, 27, -2, 2)}},
    };
    for (const auto& c : cases) {
        const std::string name = c.name;
        CAPTURE(name);
        const auto result = gradient_check(c.fn, c.params);
        CHECK(result.checked > 0);
        CHECK(result.worst_relative_error < tol);
    }
}

TEST_CASE("masked_fill blocks broadcast positions") {
    Tape<double> tape;
    auto x = tape.constant(Tensor<double>::from({2, 2}, {1, 2, 3, 4}));
    ad::Mask m{{1, 2}, {0, 1}};
    CHECK(ad::masked_fill(x, m, -9.0).value() == Tensor<double>::from({2, 2}, {1, -9, 3, -9}));
}

TEST_CASE("embedding rejects ids outside the table") {
    Tape<float> tape;
    auto table = tape.parameter(Tensor<float>(Shape{3, 2}));
    CHECK_THROWS_AS(ad::embedding(table, {3}, Shape{1}), EncodingError);
    CHECK_THROWS_AS(ad::embedding(table, {-1}, Shape{1}), EncodingError);
}

TEST_CASE("cross entropy over padding only is zero with no gradient") {
    Tape<double> tape;
    auto logits = tape.parameter(random_tensor({2, 3}, 30));
    auto loss = ad::sparse_cross_entropy(logits, {0, 0}, 0);
    CHECK(loss.value().item() == 0.0);
    tape.backward(loss);
    CHECK(tape.grad(logits) == Tensor<double>(Shape{2, 3}));
}

TEST_CASE("determinism: same inputs and op sequence give bitwise-identical results") {
    auto run = [] {
        Tape<float> tape;
        auto a = tape.parameter(random_tensor({4, 8}, 40).cast<float>());
        auto b = tape.parameter(random_tensor({8, 8}, 41).cast<float>());
        auto h = ad::softmax(ad::matmul(a, b), 1);
        auto loss = ad::sparse_cross_entropy(h, {1, 2, 3, 4}, 0);
        tape.backward(loss);
        return std::pair{tape.grad(a), tape.grad(b)};
    };
    const auto first = run();
    const auto second = run();
    CHECK(first.first == second.first);
    CHECK(first.second == second.second);
}

TEST_CASE("dropout with rate zero is the identity and rate one is rejected") {
    Tape<float> tape;
    std::mt19937_64 rng(1);
    auto x = tape.constant(Tensor<float>(Shape{4}, 2.f));
    CHECK(ad::dropout(x, 0.f, rng).id() == x.id());
    CHECK_THROWS_AS(ad::dropout(x, 1.f, rng), ConfigError);
    auto y = ad::dropout(x, 0.5f, rng).value();
    for (auto v : y.data()) CHECK((v == 0.f || v == 4.f));
}
