#pragma once

// Data-parallel inner loops used by the autodiff layer. Every kernel has a
// scalar reference implementation; SIMD variants are selected at runtime from
// CPU features and must agree with the reference (see tests/unit/kernels_test).
//
// All gemm variants accumulate into C (C += ...), row-major, contiguous.
// gemm_nn/gemm_tn reduce over k in increasing order in every variant, so
// SIMD and scalar differ only by FMA rounding; gemm_nt's SIMD variant uses
// lane-wise partial sums. softmax_rows and adam_update are bitwise identical
// across variants.

#include <cstddef>
#include <optional>
#include <string_view>

namespace atxf::kernels {

enum class Isa { scalar, avx2 };

std::string_view name(Isa isa);
std::optional<Isa> parse_isa(std::string_view text);

template <typename T>
struct AdamCoefficients {
    T learning_rate;
    T beta1;
    T beta2;
    T epsilon;
    T bias_correction1;  // 1 - beta1^t
    T bias_correction2;  // 1 - beta2^t
};

template <typename T>
struct KernelTable {
    Isa isa;
    // C[m,n] += A[m,k] * B[k,n]
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
    // C[m,n] += A[m,k] * B[n,k]^T
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
    // C[m,n] += A[k,m]^T * B[k,n]
    void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
    // Row-wise numerically stable softmax over `cols` contiguous values.
    void (*softmax_rows)(std::size_t rows, std::size_t cols, const T* in, T* out);
    // y += alpha * x
    void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
    // In-place bias-corrected Adam update of n parameters.
    void (*adam_update)(std::size_t n, T* weights, const T* grads, T* m, T* v, const AdamCoefficients<T>& c);
};

// Reference implementation; always available.
template <typename T>
const KernelTable<T>& scalar_table();

// Table for `isa`, or nullopt when this build/CPU cannot run it.
template <typename T>
const KernelTable<T>* table_for(Isa isa);

// Best ISA the running CPU supports, honouring the ATXF_KERNELS environment
// variable ("scalar" or "avx2") when set.
Isa detect_isa();

// Currently selected table. Selection happens once on first use; `select`
// overrides it (tests use this to run both paths in one process).
template <typename T>
const KernelTable<T>& active();

Isa active_isa();
// Returns false (and leaves the selection unchanged) if `isa` is unsupported.
bool select(Isa isa);

}  // namespace atxf::kernels
