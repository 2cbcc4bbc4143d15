// Scalar reference vs SIMD equivalence for every kernel.

#include <random>
#include <vector>

#include "atxf/kernels.hpp"
#include "doctest.h"

using namespace atxf::kernels;

namespace {

template <typename T>
std::vector<T> random_vector(std::size_t n, std::uint64_t seed, T lo = T(-1), T hi = T(1)) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return v;
}

template <typename T>
double max_diff(const std::vector<T>& a, const std::vector<T>& b) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
    return worst;
}

template <typename T>
void check_equivalence(const KernelTable<T>& ref, const KernelTable<T>& simd, double tol) {
    // Odd sizes exercise every SIMD tail path.
    const std::size_t dims[][3] = {{1, 1, 1}, {3, 5, 7}, {17, 33, 9}, {8, 32, 16}, {2, 67, 31}};
    std::uint64_t seed = 11;
    for (const auto& d : dims) {
        const std::size_t m = d[0], n = d[1], k = d[2];
        const auto a = random_vector<T>(m * k, seed++);
        const auto b = random_vector<T>(k * n, seed++);
        const auto bt = random_vector<T>(n * k, seed++);
        const auto at = random_vector<T>(k * m, seed++);
        const auto c0 = random_vector<T>(m * n, seed++);

        auto c_ref = c0, c_simd = c0;
        ref.gemm_nn(m, n, k, a.data(), b.data(), c_ref.data());
        simd.gemm_nn(m, n, k, a.data(), b.data(), c_simd.data());
        CHECK(max_diff(c_ref, c_simd) < tol);

        c_ref = c0, c_simd = c0;
        ref.gemm_nt(m, n, k, a.data(), bt.data(), c_ref.data());
        simd.gemm_nt(m, n, k, a.data(), bt.data(), c_simd.data());
        CHECK(max_diff(c_ref, c_simd) < tol);

        c_ref = c0, c_simd = c0;
        ref.gemm_tn(m, n, k, at.data(), b.data(), c_ref.data());
        simd.gemm_tn(m, n, k, at.data(), b.data(), c_simd.data());
        CHECK(max_diff(c_ref, c_simd) < tol);

        std::vector<T> y_ref(m * n), y_simd(m * n);
        const auto logits = random_vector<T>(m * n, seed++, T(-20), T(20));
        ref.softmax_rows(m, n, logits.data(), y_ref.data());
        simd.softmax_rows(m, n, logits.data(), y_simd.data());
        CHECK(y_ref == y_simd);

        auto y1 = c0, y2 = c0;
        ref.axpy(m * n, T(0.37), a.data() + 0, y1.data());
        simd.axpy(m * n, T(0.37), a.data() + 0, y2.data());
        // a has m*k elements; only compare when it covers m*n.
        if (m * k >= m * n) CHECK(max_diff(y1, y2) < tol);
    }

    const std::size_t n = 37;
    auto w1 = random_vector<T>(n, 91), w2 = w1;
    std::vector<T> m1(n, 0), m2(n, 0), v1(n, 0), v2(n, 0);
    for (int step = 1; step <= 3; ++step) {
        const auto g = random_vector<T>(n, 100 + step);
        const AdamCoefficients<T> c{T(1e-3), T(0.9), T(0.98), T(1e-9), T(1) - std::pow(T(0.9), T(step)),
                                    T(1) - std::pow(T(0.98), T(step))};
        ref.adam_update(n, w1.data(), g.data(), m1.data(), v1.data(), c);
        simd.adam_update(n, w2.data(), g.data(), m2.data(), v2.data(), c);
    }
    CHECK(w1 == w2);
    CHECK(m1 == m2);
    CHECK(v1 == v2);
}

}  // namespace

TEST_CASE("isa names round trip") {
    CHECK(parse_isa(name(Isa::scalar)) == Isa::scalar);
    CHECK(parse_isa(name(Isa::avx2)) == Isa::avx2);
    CHECK_FALSE(parse_isa("sse9").has_value());
}

TEST_CASE("scalar table is always available") {
    CHECK(table_for<float>(Isa::scalar) == &scalar_table<float>());
    CHECK(table_for<double>(Isa::scalar) == &scalar_table<double>());
}

TEST_CASE("scalar gemm matches a hand product") {
    const auto& k = scalar_table<double>();
    const std::vector<double> a{1, 2, 3, 4};  // [[1,2],[3,4]]
    const std::vector<double> b{5, 6, 7, 8};
    std::vector<double> c(4, 0);
    k.gemm_nn(2, 2, 2, a.data(), b.data(), c.data());
    CHECK(c == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("simd kernels agree with the scalar reference") {
    const auto* f = table_for<float>(Isa::avx2);
    const auto* d = table_for<double>(Isa::avx2);
    if (!f || !d) {
        MESSAGE("AVX2 not available on this host; equivalence test skipped");
        return;
    }
    check_equivalence(scalar_table<float>(), *f, 1e-4);
    check_equivalence(scalar_table<double>(), *d, 1e-12);
}

TEST_CASE("selection can be switched and restored") {
    const Isa original = active_isa();
    CHECK(select(Isa::scalar));
    CHECK(active_isa() == Isa::scalar);
    CHECK(&active<float>() == &scalar_table<float>());
    select(original);
    CHECK(active_isa() == original);
}
