#include "atxf/optim.hpp"

#include <cmath>
#include <random>
#include <string>

#include "atxf/kernels.hpp"

namespace atxf {

template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads, AdamState<T>& state) {
    const auto& cfg = state.config;
    if (!(cfg.learning_rate > 0 && cfg.beta1 > 0 && cfg.beta2 > 0 && cfg.epsilon > 0 && cfg.beta1 < 1 &&
          cfg.beta2 < 1))
        throw ConfigError("Adam hyperparameters must be positive with betas below 1");
    if (params.size() != grads.size())
        throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                             std::to_string(grads.size()) + " gradients");
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.shape());
            state.second_moment.emplace_back(p.shape());
        }
    }
    if (state.first_moment.size() != params.size())
        throw DimensionError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                             " tensors, got " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].shape() != params[i].shape() || state.first_moment[i].shape() != params[i].shape())
            throw DimensionError("adam_step: gradient " + to_string(grads[i].shape()) + " vs parameter " +
                                 to_string(params[i].shape()));
    }

    ++state.step;
    const auto t = static_cast<T>(state.step);
    const kernels::AdamCoefficients<T> coef{cfg.learning_rate,
                                            cfg.beta1,
                                            cfg.beta2,
                                            cfg.epsilon,
                                            T(1) - std::pow(cfg.beta1, t),
                                            T(1) - std::pow(cfg.beta2, t)};
    const auto& kt = kernels::active<T>();
    for (std::size_t i = 0; i < params.size(); ++i) {
        kt.adam_update(params[i].size(), params[i].data().data(), grads[i].data().data(),
                       state.first_moment[i].data().data(), state.second_moment[i].data().data(), coef);
    }
}

InitScheme parse_init_scheme(std::string_view name) {
    if (name == "uniform-glorot" || name == "glorot") return InitScheme::glorot_uniform;
    if (name == "zeros") return InitScheme::zeros;
    if (name == "ones") return InitScheme::ones;
    throw ConfigError("unknown init scheme '" + std::string(name) + "'");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

template <typename T>
Tensor<T> seeded_init(const Shape& shape, InitScheme scheme, std::uint64_t seed) {
    switch (scheme) {
        case InitScheme::zeros: return Tensor<T>(shape, T(0));
        case InitScheme::ones: return Tensor<T>(shape, T(1));
        case InitScheme::glorot_uniform: break;
    }
    if (shape.empty()) throw DimensionError("glorot init needs a non-empty shape");
    const double fan_in = static_cast<double>(shape.size() >= 2 ? shape[shape.size() - 2] : shape[0]);
    const double fan_out = static_cast<double>(shape.back());
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::mt19937_64 rng(seed);
    Tensor<T> out(shape);
    for (auto& x : out.data()) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
        x = static_cast<T>((2.0 * u - 1.0) * bound);
    }
    return out;
}

template void adam_step(std::span<Tensor<float>>, std::span<const Tensor<float>>, AdamState<float>&);
template void adam_step(std::span<Tensor<double>>, std::span<const Tensor<double>>, AdamState<double>&);
template Tensor<float> seeded_init(const Shape&, InitScheme, std::uint64_t);
template Tensor<double> seeded_init(const Shape&, InitScheme, std::uint64_t);

}  // namespace atxf
