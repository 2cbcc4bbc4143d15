#pragma once

// Encoder-decoder transformer built on the autodiff tape.
//
// Layout (post-norm, as in the original transformer):
//   x = embed(ids) * sqrt(d_model) + sinusoidal position
//   encoder layer:  x = LN(x + MHA(x, x, x)); x = LN(x + FFN(x))
//   decoder layer:  y = LN(y + MHA(y, y, y | causal)); y = LN(y + MHA(y, mem, mem));
//                   y = LN(y + FFN(y))
//   logits = y * W_out + b_out
// Input and output embeddings are untied; the token embedding is shared by the
// encoder and decoder inputs.

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "atxf/autodiff.hpp"
#include "atxf/optim.hpp"
#include "atxf/tensor.hpp"
#include "atxf/vocabulary.hpp"

namespace atxf::model {

struct ModelConfig {
    std::size_t vocab_size = kDefaultVocabularyCapacity;
    std::size_t d_model = 256;
    std::size_t num_heads = 8;
    std::size_t d_ff = 256;
    std::size_t num_encoder_layers = 2;
    std::size_t num_decoder_layers = 2;
    std::size_t max_len = 42;  // longest sequence the position table covers
    double dropout = 0.0;

    std::size_t d_k() const { return d_model / num_heads; }
    // Throws ConfigError. Layer counts may be zero (degenerate embedding-only model).
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ParamSpec {
    std::string name;
    Shape shape;
    InitScheme init;
};

// Every learnable tensor, in the fixed order used for storage and checkpoints.
std::vector<ParamSpec> parameter_specs(const ModelConfig& config);

// Closed form: vocab * (2 d_model + 1) plus per-layer attention, feed-forward
// and layer-norm terms. Sinusoidal positions contribute nothing.
std::uint64_t count_parameters(const ModelConfig& config);

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T> value;
};

template <typename T>
class ModelParameters {
public:
    // Glorot-uniform weights, zero biases, unit layer-norm scales. Each tensor
    // draws from its own stream derived from `seed`.
    static ModelParameters initialize(const ModelConfig& config, std::uint64_t seed);
    // Validates that `tensors` matches parameter_specs(config) name-for-name and
    // shape-for-shape; throws DimensionError / ContractError otherwise.
    static ModelParameters from_tensors(const ModelConfig& config, std::vector<NamedTensor<T>> tensors);

    const ModelConfig& config() const noexcept { return config_; }
    std::size_t size() const noexcept { return tensors_.size(); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    std::size_t index_of(const std::string& name) const;
    const Tensor<T>& get(const std::string& name) const { return tensors_[index_of(name)]; }
    Tensor<T>& get(const std::string& name) { return tensors_[index_of(name)]; }
    std::vector<Tensor<T>>& tensors() noexcept { return tensors_; }
    const std::vector<Tensor<T>>& tensors() const noexcept { return tensors_; }
    std::uint64_t element_count() const;

    template <typename U>
    ModelParameters<U> cast() const {
        std::vector<NamedTensor<U>> out;
        for (std::size_t i = 0; i < tensors_.size(); ++i) out.push_back({names_[i], tensors_[i].template cast<U>()});
        return ModelParameters<U>::from_tensors(config_, std::move(out));
    }

    friend bool operator==(const ModelParameters& a, const ModelParameters& b) {
        return a.config_ == b.config_ && a.names_ == b.names_ && a.tensors_ == b.tensors_;
    }

private:
    ModelConfig config_;
    std::vector<std::string> names_;
    std::vector<Tensor<T>> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Row-major [batch, length] token ids.
struct TokenBatch {
    std::size_t batch = 0;
    std::size_t length = 0;
    std::vector<TokenId> ids;

    static TokenBatch from_rows(const std::vector<std::vector<TokenId>>& rows);
    TokenId at(std::size_t b, std::size_t t) const { return ids[b * length + t]; }
};

struct AttentionMask {
    enum class Kind { padding, look_ahead };
    Kind kind;
    ad::Mask mask;  // true = blocked
};

struct MaskSet {
    AttentionMask encoder_padding;  // [B,1,1,L_in]; also used by cross-attention
    AttentionMask decoder_self;     // [B,1,L_t,L_t]: look-ahead OR target padding
};

MaskSet make_masks(const TokenBatch& input, const TokenBatch& target, TokenId pad_id = kPad);
// [n, n] strictly upper-triangular block.
AttentionMask look_ahead_mask(std::size_t n);

// Additive stand-in for -inf on blocked scores; finite so every tensor stays finite.
inline constexpr double kMaskedScore = -1e9;

template <typename T>
struct AttentionResult {
    ad::Var<T> output;
    ad::Var<T> weights;
};

// softmax(Q K^T / sqrt(d_k) + mask) V with d_k = Q.shape[-1].
// Q:[..,n,d_k] K:[..,m,d_k] V:[..,m,d_v]; mask may be null.
template <typename T>
AttentionResult<T> scaled_dot_product_attention(ad::Var<T> q, ad::Var<T> k, ad::Var<T> v, const ad::Mask* mask);

template <typename T>
struct AttentionParams {
    ad::Var<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

// Concat(head_1..head_h) W_o + b_o, head_i attending over its d_model/h slice
// of the projected queries, keys and values. Inputs are [n, d] or [B, n, d].
template <typename T>
ad::Var<T> multi_head_attention(ad::Var<T> xq, ad::Var<T> xk, ad::Var<T> xv, const AttentionParams<T>& p,
                                std::size_t num_heads, const ad::Mask* mask);

template <typename T>
Tensor<T> positional_encoding(std::size_t max_len, std::size_t d_model);

// ModelParameters placed on a tape.
template <typename T>
class BoundModel {
public:
    BoundModel(ad::Tape<T>& tape, const ModelParameters<T>& params, bool trainable);

    ad::Var<T> operator[](const std::string& name) const { return vars_[params_->index_of(name)]; }
    const std::vector<ad::Var<T>>& vars() const noexcept { return vars_; }
    const ModelConfig& config() const { return params_->config(); }
    ad::Tape<T>& tape() const { return *tape_; }

private:
    ad::Tape<T>* tape_;
    const ModelParameters<T>* params_;
    std::vector<ad::Var<T>> vars_;
};

struct ForwardOptions {
    // Dropout is applied only when a generator is supplied and config.dropout > 0.
    std::mt19937_64* dropout_rng = nullptr;
};

// Encoder output [B, L_in, d_model].
template <typename T>
ad::Var<T> encode_memory(const BoundModel<T>& model, const TokenBatch& input, const ForwardOptions& options = {});

// Logits [B, L_t, vocab] given encoder memory for `input`.
template <typename T>
ad::Var<T> decode_logits(const BoundModel<T>& model, ad::Var<T> memory, const TokenBatch& input,
                         const TokenBatch& target_in, const ForwardOptions& options = {});

template <typename T>
ad::Var<T> forward(const BoundModel<T>& model, const TokenBatch& input, const TokenBatch& target_in,
                   const ForwardOptions& options = {});

// Inference convenience: logits as a plain tensor.
template <typename T>
Tensor<T> forward(const ModelParameters<T>& params, const TokenBatch& input, const TokenBatch& target_in);

}  // namespace atxf::model
