#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "atxf/tensor.hpp"

namespace atxf {

template <typename T>
struct AdamConfig {
    T learning_rate = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.98);
    T epsilon = T(1e-9);
};

// Moment estimates for one parameter set. Moments are created lazily on the
// first step so a fresh state carries no shape assumptions.
template <typename T>
struct AdamState {
    AdamConfig<T> config;
    std::vector<Tensor<T>> first_moment;
    std::vector<Tensor<T>> second_moment;
    std::uint64_t step = 0;
};

// One bias-corrected Adam update applied in place to `params`.
// Throws DimensionError when a gradient (or existing moment) does not match
// its parameter's shape and ConfigError for non-positive hyperparameters.
template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads, AdamState<T>& state);

enum class InitScheme { glorot_uniform, zeros, ones };

// Accepts "uniform-glorot" (alias "glorot"), "zeros", "ones".
InitScheme parse_init_scheme(std::string_view name);

// Deterministic for fixed (shape, scheme, seed). Glorot bounds use
// fan_in = shape[rank-2], fan_out = shape[rank-1] (both = shape[0] for rank 1).
template <typename T>
Tensor<T> seeded_init(const Shape& shape, InitScheme scheme, std::uint64_t seed);

// SplitMix64 step; used to derive independent per-tensor seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace atxf
