// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma and
// only ever called after detect_isa() confirmed CPU support.

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "kernels_impl.hpp"

namespace atxf::kernels::avx2 {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
    using reg = __m256;
    static constexpr std::size_t width = 8;
    static reg load(const float* p) { return _mm256_loadu_ps(p); }
    static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
    static reg broadcast(float x) { return _mm256_set1_ps(x); }
    static reg zero() { return _mm256_setzero_ps(); }
    static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
    static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
    static reg sub(reg a, reg b) { return _mm256_sub_ps(a, b); }
    static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
    static reg div(reg a, reg b) { return _mm256_div_ps(a, b); }
    static reg sqrt(reg a) { return _mm256_sqrt_ps(a); }
    static reg max(reg a, reg b) { return _mm256_max_ps(a, b); }
    static float hsum(reg v) {
        __m128 lo = _mm256_castps256_ps128(v);
        __m128 hi = _mm256_extractf128_ps(v, 1);
        lo = _mm_add_ps(lo, hi);
        __m128 shuf = _mm_movehdup_ps(lo);
        __m128 sums = _mm_add_ps(lo, shuf);
        shuf = _mm_movehl_ps(shuf, sums);
        sums = _mm_add_ss(sums, shuf);
        return _mm_cvtss_f32(sums);
    }
    static float hmax(reg v) {
        alignas(32) float lanes[width];
        _mm256_store_ps(lanes, v);
        return *std::max_element(lanes, lanes + width);
    }
};

template <>
struct Vec<double> {
    using reg = __m256d;
    static constexpr std::size_t width = 4;
    static reg load(const double* p) { return _mm256_loadu_pd(p); }
    static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
    static reg broadcast(double x) { return _mm256_set1_pd(x); }
    static reg zero() { return _mm256_setzero_pd(); }
    static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
    static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
    static reg sub(reg a, reg b) { return _mm256_sub_pd(a, b); }
    static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
    static reg div(reg a, reg b) { return _mm256_div_pd(a, b); }
    static reg sqrt(reg a) { return _mm256_sqrt_pd(a); }
    static reg max(reg a, reg b) { return _mm256_max_pd(a, b); }
    static double hsum(reg v) {
        __m128d lo = _mm256_castpd256_pd128(v);
        __m128d hi = _mm256_extractf128_pd(v, 1);
        lo = _mm_add_pd(lo, hi);
        __m128d high64 = _mm_unpackhi_pd(lo, lo);
        return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
    }
    static double hmax(reg v) {
        alignas(32) double lanes[width];
        _mm256_store_pd(lanes, v);
        return *std::max_element(lanes, lanes + width);
    }
};

// One output row segment: crow[j..j+4W) += sum_p a[p*astride] * b[p*n + j..]
template <typename T>
void row_block(std::size_t n, std::size_t k, const T* a, std::size_t astride, const T* b, T* crow) {
    using V = Vec<T>;
    constexpr std::size_t W = V::width;
    std::size_t j = 0;
    for (; j + 4 * W <= n; j += 4 * W) {
        auto c0 = V::load(crow + j);
        auto c1 = V::load(crow + j + W);
        auto c2 = V::load(crow + j + 2 * W);
        auto c3 = V::load(crow + j + 3 * W);
        for (std::size_t p = 0; p < k; ++p) {
            const auto av = V::broadcast(a[p * astride]);
            const T* brow = b + p * n + j;
            c0 = V::fmadd(av, V::load(brow), c0);
            c1 = V::fmadd(av, V::load(brow + W), c1);
            c2 = V::fmadd(av, V::load(brow + 2 * W), c2);
            c3 = V::fmadd(av, V::load(brow + 3 * W), c3);
        }
        V::store(crow + j, c0);
        V::store(crow + j + W, c1);
        V::store(crow + j + 2 * W, c2);
        V::store(crow + j + 3 * W, c3);
    }
    for (; j + W <= n; j += W) {
        auto c0 = V::load(crow + j);
        for (std::size_t p = 0; p < k; ++p) c0 = V::fmadd(V::broadcast(a[p * astride]), V::load(b + p * n + j), c0);
        V::store(crow + j, c0);
    }
    for (; j < n; ++j) {
        T acc = crow[j];
        for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[p * astride], b[p * n + j], acc);
        crow[j] = acc;
    }
}

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < m; ++i) row_block(n, k, a + i * k, 1, b, c + i * n);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < m; ++i) row_block(n, k, a + i, m, b, c + i * n);
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    using V = Vec<T>;
    constexpr std::size_t W = V::width;
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            auto acc = V::zero();
            std::size_t p = 0;
            for (; p + W <= k; p += W) acc = V::fmadd(V::load(arow + p), V::load(brow + p), acc);
            T sum = V::hsum(acc);
            for (; p < k; ++p) sum = std::fma(arow[p], brow[p], sum);
            c[i * n + j] += sum;
        }
    }
}

template <typename T>
void softmax_rows(std::size_t rows, std::size_t cols, const T* in, T* out) {
    using V = Vec<T>;
    constexpr std::size_t W = V::width;
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = in + r * cols;
        T* y = out + r * cols;
        T peak = x[0];
        std::size_t j = 0;
        if (cols >= W) {
            auto vmax = V::load(x);
            for (j = W; j + W <= cols; j += W) vmax = V::max(vmax, V::load(x + j));
            peak = V::hmax(vmax);
        }
        for (; j < cols; ++j) peak = std::max(peak, x[j]);
        // exp and the running sum stay scalar so the result matches the
        // reference bit for bit.
        T total = 0;
        for (j = 0; j < cols; ++j) {
            y[j] = std::exp(x[j] - peak);
            total += y[j];
        }
        const T inv = T(1) / total;
        const auto vinv = V::broadcast(inv);
        for (j = 0; j + W <= cols; j += W) V::store(y + j, V::mul(V::load(y + j), vinv));
        for (; j < cols; ++j) y[j] *= inv;
    }
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
    using V = Vec<T>;
    constexpr std::size_t W = V::width;
    const auto va = V::broadcast(alpha);
    std::size_t i = 0;
    for (; i + W <= n; i += W) V::store(y + i, V::fmadd(va, V::load(x + i), V::load(y + i)));
    for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

// Uses separate mul/add (no FMA) so the update is bitwise identical to the
// scalar reference.
template <typename T>
void adam_update(std::size_t n, T* w, const T* g, T* m, T* v, const AdamCoefficients<T>& c) {
    using V = Vec<T>;
    constexpr std::size_t W = V::width;
    const auto b1 = V::broadcast(c.beta1);
    const auto b2 = V::broadcast(c.beta2);
    const auto one_b1 = V::broadcast(T(1) - c.beta1);
    const auto one_b2 = V::broadcast(T(1) - c.beta2);
    const auto bc1 = V::broadcast(c.bias_correction1);
    const auto bc2 = V::broadcast(c.bias_correction2);
    const auto lr = V::broadcast(c.learning_rate);
    const auto eps = V::broadcast(c.epsilon);
    std::size_t i = 0;
    for (; i + W <= n; i += W) {
        const auto gv = V::load(g + i);
        const auto mv = V::add(V::mul(b1, V::load(m + i)), V::mul(one_b1, gv));
        const auto vv = V::add(V::mul(b2, V::load(v + i)), V::mul(V::mul(one_b2, gv), gv));
        V::store(m + i, mv);
        V::store(v + i, vv);
        const auto m_hat = V::div(mv, bc1);
        const auto v_hat = V::div(vv, bc2);
        const auto step = V::div(V::mul(lr, m_hat), V::add(V::sqrt(v_hat), eps));
        V::store(w + i, V::sub(V::load(w + i), step));
    }
    for (; i < n; ++i) {
        m[i] = c.beta1 * m[i] + (T(1) - c.beta1) * g[i];
        v[i] = c.beta2 * v[i] + (T(1) - c.beta2) * g[i] * g[i];
        const T m_hat = m[i] / c.bias_correction1;
        const T v_hat = v[i] / c.bias_correction2;
        w[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

}  // namespace

template <typename T>
const KernelTable<T>& table() {
    static const KernelTable<T> t{Isa::avx2,       &gemm_nn<T>, &gemm_nt<T>, &gemm_tn<T>,
                                  &softmax_rows<T>, &axpy<T>,    &adam_update<T>};
    return t;
}

template const KernelTable<float>& table<float>();
template const KernelTable<double>& table<double>();

}  // namespace atxf::kernels::avx2
