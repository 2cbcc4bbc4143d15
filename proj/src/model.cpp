#include "atxf/model.hpp"

#include <cmath>

#include "atxf/errors.hpp"

namespace atxf::model {

void ModelConfig::validate() const {
    if (vocab_size < kNumSpecials + 1) throw ConfigError("vocab_size must be at least 5");
    if (d_model == 0 || num_heads == 0 || d_ff == 0 || max_len == 0)
        throw ConfigError("d_model, num_heads, d_ff and max_len must be positive");
    if (d_model % num_heads != 0)
        throw ConfigError("d_model (" + std::to_string(d_model) + ") is not divisible by num_heads (" +
                          std::to_string(num_heads) + ")");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

namespace {

void add_attention(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t d) {
    for (const char* proj : {"q", "k", "v", "o"}) {
        out.push_back({prefix + "." + proj + ".weight", {d, d}, InitScheme::glorot_uniform});
        out.push_back({prefix + "." + proj + ".bias", {d}, InitScheme::zeros});
    }
}

void add_norm(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t d) {
    out.push_back({prefix + ".gamma", {d}, InitScheme::ones});
    out.push_back({prefix + ".beta", {d}, InitScheme::zeros});
}

void add_ffn(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t d, std::size_t dff) {
    out.push_back({prefix + ".in.weight", {d, dff}, InitScheme::glorot_uniform});
    out.push_back({prefix + ".in.bias", {dff}, InitScheme::zeros});
    out.push_back({prefix + ".out.weight", {dff, d}, InitScheme::glorot_uniform});
    out.push_back({prefix + ".out.bias", {d}, InitScheme::zeros});
}

std::string layer_prefix(const char* stack, std::size_t l) { return std::string(stack) + "." + std::to_string(l); }

}  // namespace

std::vector<ParamSpec> parameter_specs(const ModelConfig& c) {
    c.validate();
    const std::size_t d = c.d_model;
    std::vector<ParamSpec> out;
    out.push_back({"embedding.weight", {c.vocab_size, d}, InitScheme::glorot_uniform});
    for (std::size_t l = 0; l < c.num_encoder_layers; ++l) {
        const auto p = layer_prefix("encoder", l);
        add_attention(out, p + ".self_attn", d);
        add_norm(out, p + ".norm1", d);
        add_ffn(out, p + ".ffn", d, c.d_ff);
        add_norm(out, p + ".norm2", d);
    }
    for (std::size_t l = 0; l < c.num_decoder_layers; ++l) {
        const auto p = layer_prefix("decoder", l);
        add_attention(out, p + ".self_attn", d);
        add_norm(out, p + ".norm1", d);
        add_attention(out, p + ".cross_attn", d);
        add_norm(out, p + ".norm2", d);
        add_ffn(out, p + ".ffn", d, c.d_ff);
        add_norm(out, p + ".norm3", d);
    }
    out.push_back({"output.weight", {d, c.vocab_size}, InitScheme::glorot_uniform});
    out.push_back({"output.bias", {c.vocab_size}, InitScheme::zeros});
    return out;
}

std::uint64_t count_parameters(const ModelConfig& c) {
    c.validate();
    const std::uint64_t v = c.vocab_size, d = c.d_model, f = c.d_ff;
    const std::uint64_t attention = 4 * (d * d + d);
    const std::uint64_t ffn = 2 * d * f + f + d;
    const std::uint64_t norm = 2 * d;
    const std::uint64_t encoder = c.num_encoder_layers * (attention + ffn + 2 * norm);
    const std::uint64_t decoder = c.num_decoder_layers * (2 * attention + ffn + 3 * norm);
    return v * (2 * d + 1) + encoder + decoder;
}

// ---- parameters ---------------------------------------------------------

template <typename T>
ModelParameters<T> ModelParameters<T>::initialize(const ModelConfig& config, std::uint64_t seed) {
    std::vector<NamedTensor<T>> tensors;
    const auto specs = parameter_specs(config);
    for (std::size_t i = 0; i < specs.size(); ++i)
        tensors.push_back({specs[i].name, seeded_init<T>(specs[i].shape, specs[i].init, mix_seed(seed, i))});
    return from_tensors(config, std::move(tensors));
}

template <typename T>
ModelParameters<T> ModelParameters<T>::from_tensors(const ModelConfig& config, std::vector<NamedTensor<T>> tensors) {
    const auto specs = parameter_specs(config);
    if (tensors.size() != specs.size())
        throw ContractError("expected " + std::to_string(specs.size()) + " parameter tensors, got " +
                            std::to_string(tensors.size()));
    ModelParameters p;
    p.config_ = config;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (tensors[i].name != specs[i].name)
            throw ContractError("parameter " + std::to_string(i) + " is '" + tensors[i].name + "', expected '" +
                                specs[i].name + "'");
        if (tensors[i].value.shape() != specs[i].shape)
            throw DimensionError("parameter '" + specs[i].name + "' has shape " + to_string(tensors[i].value.shape()) +
                                 ", expected " + to_string(specs[i].shape));
        p.index_.emplace(specs[i].name, i);
        p.names_.push_back(std::move(tensors[i].name));
        p.tensors_.push_back(std::move(tensors[i].value));
    }
    return p;
}

template <typename T>
std::size_t ModelParameters<T>::index_of(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw LookupError("no parameter named '" + name + "'");
    return it->second;
}

template <typename T>
std::uint64_t ModelParameters<T>::element_count() const {
    std::uint64_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
}

// ---- batches and masks ----------------------------------------------------

TokenBatch TokenBatch::from_rows(const std::vector<std::vector<TokenId>>& rows) {
    if (rows.empty()) throw DimensionError("token batch needs at least one row");
    TokenBatch b;
    b.batch = rows.size();
    b.length = rows.front().size();
    if (b.length == 0) throw DimensionError("token rows must be non-empty");
    for (const auto& r : rows) {
        if (r.size() != b.length)
            throw DimensionError("ragged token batch: rows of length " + std::to_string(b.length) + " and " +
                                 std::to_string(r.size()));
        b.ids.insert(b.ids.end(), r.begin(), r.end());
    }
    return b;
}

MaskSet make_masks(const TokenBatch& input, const TokenBatch& target, TokenId pad_id) {
    if (input.batch != target.batch)
        throw DimensionError("input batch " + std::to_string(input.batch) + " != target batch " +
                             std::to_string(target.batch));
    MaskSet m;
    m.encoder_padding.kind = AttentionMask::Kind::padding;
    m.encoder_padding.mask.shape = {input.batch, 1, 1, input.length};
    m.encoder_padding.mask.blocked.resize(input.ids.size());
    for (std::size_t i = 0; i < input.ids.size(); ++i) m.encoder_padding.mask.blocked[i] = input.ids[i] == pad_id;

    const std::size_t n = target.length;
    m.decoder_self.kind = AttentionMask::Kind::look_ahead;
    m.decoder_self.mask.shape = {target.batch, 1, n, n};
    m.decoder_self.mask.blocked.resize(target.batch * n * n);
    for (std::size_t b = 0; b < target.batch; ++b)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                m.decoder_self.mask.blocked[(b * n + i) * n + j] = j > i || target.at(b, j) == pad_id;
    return m;
}

AttentionMask look_ahead_mask(std::size_t n) {
    AttentionMask m{AttentionMask::Kind::look_ahead, {{n, n}, std::vector<std::uint8_t>(n * n)}};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) m.mask.blocked[i * n + j] = 1;
    return m;
}

// ---- attention ------------------------------------------------------------

template <typename T>
AttentionResult<T> scaled_dot_product_attention(ad::Var<T> q, ad::Var<T> k, ad::Var<T> v, const ad::Mask* mask) {
    const std::size_t dk = q.shape().back();
    if (k.shape().back() != dk)
        throw DimensionError("attention: query depth " + std::to_string(dk) + " != key depth " +
                             std::to_string(k.shape().back()));
    auto scores = ad::scale(ad::matmul(q, ad::transpose(k)), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk))));
    if (mask) scores = ad::masked_fill(scores, *mask, static_cast<T>(kMaskedScore));
    auto weights = ad::softmax(scores, scores.shape().size() - 1);
    return {ad::matmul(weights, v), weights};
}

namespace {

template <typename T>
ad::Var<T> project(ad::Var<T> x, ad::Var<T> w, ad::Var<T> b) {
    return ad::add(ad::matmul(x, w), b);
}

// [B, n, d] -> [B, h, n, d/h]
template <typename T>
ad::Var<T> split_heads(ad::Var<T> x, std::size_t h) {
    const auto& s = x.shape();
    return ad::permute(ad::reshape(x, {s[0], s[1], h, s[2] / h}), {0, 2, 1, 3});
}

// [B, h, n, dk] -> [B, n, h*dk]
template <typename T>
ad::Var<T> merge_heads(ad::Var<T> x) {
    const auto s = x.shape();
    return ad::reshape(ad::permute(x, {0, 2, 1, 3}), {s[0], s[2], s[1] * s[3]});
}

template <typename T>
ad::Var<T> as_batched(ad::Var<T> x) {
    if (x.shape().size() == 3) return x;
    if (x.shape().size() == 2) return ad::reshape(x, {1, x.shape()[0], x.shape()[1]});
    throw DimensionError("attention input must be [n, d] or [B, n, d], got " + to_string(x.shape()));
}

}  // namespace

template <typename T>
ad::Var<T> multi_head_attention(ad::Var<T> xq, ad::Var<T> xk, ad::Var<T> xv, const AttentionParams<T>& p,
                                std::size_t num_heads, const ad::Mask* mask) {
    const bool unbatched = xq.shape().size() == 2;
    const Shape query_shape = xq.shape();
    const std::size_t d = query_shape.back();
    if (num_heads == 0 || d % num_heads != 0)
        throw ConfigError("d_model (" + std::to_string(d) + ") is not divisible by num_heads (" +
                          std::to_string(num_heads) + ")");
    auto q = split_heads(project(as_batched(xq), p.wq, p.bq), num_heads);
    auto k = split_heads(project(as_batched(xk), p.wk, p.bk), num_heads);
    auto v = split_heads(project(as_batched(xv), p.wv, p.bv), num_heads);
    auto heads = scaled_dot_product_attention(q, k, v, mask).output;
    auto out = project(merge_heads(heads), p.wo, p.bo);
    return unbatched ? ad::reshape(out, query_shape) : out;
}

template <typename T>
Tensor<T> positional_encoding(std::size_t max_len, std::size_t d_model) {
    Tensor<T> pe({max_len, d_model});
    for (std::size_t pos = 0; pos < max_len; ++pos)
        for (std::size_t j = 0; j < d_model; ++j) {
            const double pair = static_cast<double>(j - j % 2);
            const double angle = static_cast<double>(pos) / std::pow(10000.0, pair / static_cast<double>(d_model));
            pe[pos * d_model + j] = static_cast<T>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    return pe;
}

// ---- model ------------------------------------------------------------------

template <typename T>
BoundModel<T>::BoundModel(ad::Tape<T>& tape, const ModelParameters<T>& params, bool trainable)
    : tape_(&tape), params_(&params) {
    vars_.reserve(params.size());
    for (const auto& t : params.tensors()) vars_.push_back(trainable ? tape.parameter(t) : tape.constant(t));
}

namespace {

constexpr double kLayerNormEps = 1e-6;

template <typename T>
AttentionParams<T> attention_params(const BoundModel<T>& m, const std::string& prefix) {
    auto g = [&](const char* proj, const char* kind) { return m[prefix + "." + proj + "." + kind]; };
    return {g("q", "weight"), g("q", "bias"), g("k", "weight"), g("k", "bias"),
            g("v", "weight"), g("v", "bias"), g("o", "weight"), g("o", "bias")};
}

template <typename T>
ad::Var<T> norm(const BoundModel<T>& m, const std::string& prefix, ad::Var<T> x) {
    return ad::layer_norm(x, m[prefix + ".gamma"], m[prefix + ".beta"], static_cast<T>(kLayerNormEps));
}

template <typename T>
ad::Var<T> ffn(const BoundModel<T>& m, const std::string& prefix, ad::Var<T> x) {
    auto hidden = ad::relu(project(x, m[prefix + ".in.weight"], m[prefix + ".in.bias"]));
    return project(hidden, m[prefix + ".out.weight"], m[prefix + ".out.bias"]);
}

template <typename T>
ad::Var<T> maybe_dropout(const BoundModel<T>& m, ad::Var<T> x, const ForwardOptions& o) {
    if (!o.dropout_rng || m.config().dropout <= 0.0) return x;
    return ad::dropout(x, static_cast<T>(m.config().dropout), *o.dropout_rng);
}

template <typename T>
ad::Var<T> embed(const BoundModel<T>& m, const TokenBatch& tokens, const ForwardOptions& o) {
    const auto& c = m.config();
    if (tokens.length > c.max_len)
        throw DimensionError("sequence length " + std::to_string(tokens.length) + " exceeds max_len " +
                             std::to_string(c.max_len));
    auto x = ad::embedding(m["embedding.weight"], tokens.ids, {tokens.batch, tokens.length});
    x = ad::scale(x, static_cast<T>(std::sqrt(static_cast<double>(c.d_model))));
    auto pe = m.tape().constant(positional_encoding<T>(tokens.length, c.d_model));
    return maybe_dropout(m, ad::add(x, pe), o);
}

}  // namespace

template <typename T>
ad::Var<T> encode_memory(const BoundModel<T>& m, const TokenBatch& input, const ForwardOptions& o) {
    const auto& c = m.config();
    const auto masks = make_masks(input, input);
    auto x = embed(m, input, o);
    for (std::size_t l = 0; l < c.num_encoder_layers; ++l) {
        const auto p = layer_prefix("encoder", l);
        auto a = multi_head_attention(x, x, x, attention_params(m, p + ".self_attn"), c.num_heads,
                                      &masks.encoder_padding.mask);
        x = norm(m, p + ".norm1", ad::add(x, maybe_dropout(m, a, o)));
        x = norm(m, p + ".norm2", ad::add(x, maybe_dropout(m, ffn(m, p + ".ffn", x), o)));
    }
    return x;
}

template <typename T>
ad::Var<T> decode_logits(const BoundModel<T>& m, ad::Var<T> memory, const TokenBatch& input,
                         const TokenBatch& target_in, const ForwardOptions& o) {
    const auto& c = m.config();
    const auto masks = make_masks(input, target_in);
    auto y = embed(m, target_in, o);
    for (std::size_t l = 0; l < c.num_decoder_layers; ++l) {
        const auto p = layer_prefix("decoder", l);
        auto a1 = multi_head_attention(y, y, y, attention_params(m, p + ".self_attn"), c.num_heads,
                                       &masks.decoder_self.mask);
        y = norm(m, p + ".norm1", ad::add(y, maybe_dropout(m, a1, o)));
        auto a2 = multi_head_attention(y, memory, memory, attention_params(m, p + ".cross_attn"), c.num_heads,
                                       &masks.encoder_padding.mask);
        y = norm(m, p + ".norm2", ad::add(y, maybe_dropout(m, a2, o)));
        y = norm(m, p + ".norm3", ad::add(y, maybe_dropout(m, ffn(m, p + ".ffn", y), o)));
    }
    return project(y, m["output.weight"], m["output.bias"]);
}

template <typename T>
ad::Var<T> forward(const BoundModel<T>& m, const TokenBatch& input, const TokenBatch& target_in,
                   const ForwardOptions& o) {
    return decode_logits(m, encode_memory(m, input, o), input, target_in, o);
}

template <typename T>
Tensor<T> forward(const ModelParameters<T>& params, const TokenBatch& input, const TokenBatch& target_in) {
    ad::Tape<T> tape;
    BoundModel<T> m(tape, params, false);
    return forward(m, input, target_in).value();
}

#define ATXF_INSTANTIATE(T)                                                                                       \
    template class ModelParameters<T>;                                                                            \
    template class BoundModel<T>;                                                                                 \
    template AttentionResult<T> scaled_dot_product_attention(ad::Var<T>, ad::Var<T>, ad::Var<T>, const ad::Mask*); \
    template ad::Var<T> multi_head_attention(ad::Var<T>, ad::Var<T>, ad::Var<T>, const AttentionParams<T>&,       \
                                             std::size_t, const ad::Mask*);                                       \
    template Tensor<T> positional_encoding<T>(std::size_t, std::size_t);                                          \
    template ad::Var<T> encode_memory(const BoundModel<T>&, const TokenBatch&, const ForwardOptions&);            \
    template ad::Var<T> decode_logits(const BoundModel<T>&, ad::Var<T>, const TokenBatch&, const TokenBatch&,     \
                                      const ForwardOptions&);                                                     \
    template ad::Var<T> forward(const BoundModel<T>&, const TokenBatch&, const TokenBatch&, const ForwardOptions&); \
    template Tensor<T> forward(const ModelParameters<T>&, const TokenBatch&, const TokenBatch&);

ATXF_INSTANTIATE(float)
ATXF_INSTANTIATE(double)

}  // namespace atxf::model
