#include <algorithm>
#include <cmath>

#include "kernels_impl.hpp"

namespace atxf::kernels::scalar {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            T acc = 0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            c[i * n + j] += acc;
        }
    }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    for (std::size_t p = 0; p < k; ++p) {
        const T* arow = a + p * m;
        const T* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T av = arow[i];
            T* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void softmax_rows(std::size_t rows, std::size_t cols, const T* in, T* out) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = in + r * cols;
        T* y = out + r * cols;
        const T peak = *std::max_element(x, x + cols);
        T total = 0;
        for (std::size_t j = 0; j < cols; ++j) {
            y[j] = std::exp(x[j] - peak);
            total += y[j];
        }
        const T inv = T(1) / total;
        for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
    }
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void adam_update(std::size_t n, T* w, const T* g, T* m, T* v, const AdamCoefficients<T>& c) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = c.beta1 * m[i] + (T(1) - c.beta1) * g[i];
        v[i] = c.beta2 * v[i] + (T(1) - c.beta2) * g[i] * g[i];
        const T m_hat = m[i] / c.bias_correction1;
        const T v_hat = v[i] / c.bias_correction2;
        w[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

template <typename T>
const KernelTable<T>& table() {
    static const KernelTable<T> t{Isa::scalar,  &gemm_nn<T>, &gemm_nt<T>, &gemm_tn<T>,
                                  &softmax_rows<T>, &axpy<T>, &adam_update<T>};
    return t;
}

template const KernelTable<float>& table<float>();
template const KernelTable<double>& table<double>();

}  // namespace atxf::kernels::scalar
