#include <cmath>
#include <random>
#include <set>

#include "atxf/errors.hpp"
#include "atxf/model.hpp"
#include "doctest.h"

using namespace atxf;
using namespace atxf::model;

namespace {

Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<double> t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

Tensor<double> identity(std::size_t n) {
    Tensor<double> t({n, n});
    for (std::size_t i = 0; i < n; ++i) t[i * n + i] = 1.0;
    return t;
}

// Direct softmax(q k^T / sqrt(dk)) v over plain arrays.
std::vector<double> attention_oracle(const std::vector<double>& q, const std::vector<double>& k,
                                     const std::vector<double>& v, std::size_t n, std::size_t m, std::size_t dk,
                                     std::size_t dv) {
    std::vector<double> out(n * dv, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> s(m);
        double mx = -1e300;
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0;
            for (std::size_t c = 0; c < dk; ++c) acc += q[i * dk + c] * k[j * dk + c];
            s[j] = acc / std::sqrt(static_cast<double>(dk));
            mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (auto& x : s) z += (x = std::exp(x - mx));
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t c = 0; c < dv; ++c) out[i * dv + c] += s[j] / z * v[j * dv + c];
    }
    return out;
}

std::vector<double> matmul_oracle(const std::vector<double>& a, const std::vector<double>& b, std::size_t n,
                                  std::size_t k, std::size_t m) {
    std::vector<double> out(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t c = 0; c < k; ++c) out[i * m + j] += a[i * k + c] * b[c * m + j];
    return out;
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.vocab_size = 11;
    c.d_model = 8;
    c.num_heads = 2;
    c.d_ff = 12;
    c.num_encoder_layers = 1;
    c.num_decoder_layers = 1;
    c.max_len = 6;
    return c;
}

}  // namespace

TEST_CASE("scaled dot-product attention examples") {
    ad::Tape<double> tape;
    SUBCASE("single key") {
        auto q = tape.constant(Tensor<double>::from({1, 2}, {0.3, -0.2}));
        auto v = tape.constant(Tensor<double>::from({1, 3}, {4, 5, 6}));
        auto r = scaled_dot_product_attention(q, q, v, nullptr);
        CHECK(r.weights.value()[0] == 1.0);
        CHECK(r.output.value().values() == std::vector<double>{4, 5, 6});
    }
    SUBCASE("identical keys average the values") {
        auto q = tape.constant(Tensor<double>::from({1, 2}, {0.7, 0.1}));
        auto k = tape.constant(Tensor<double>::from({2, 2}, {1, 1, 1, 1}));
        auto v = tape.constant(Tensor<double>::from({2, 2}, {2, 0, 4, 8}));
        auto r = scaled_dot_product_attention(q, k, v, nullptr);
        CHECK(r.weights.value()[0] == doctest::Approx(0.5));
        CHECK(r.output.value()[0] == doctest::Approx(3.0));
        CHECK(r.output.value()[1] == doctest::Approx(4.0));
    }
    SUBCASE("hand-evaluated two-key case") {
        auto q = tape.constant(Tensor<double>::from({1, 2}, {1, 0}));
        auto k = tape.constant(Tensor<double>::from({2, 2}, {1, 0, 0, 1}));
        auto r = scaled_dot_product_attention(q, k, k, nullptr);
        const double e = std::exp(1.0 / std::sqrt(2.0));
        CHECK(std::abs(r.weights.value()[0] - e / (e + 1)) < 1e-12);
        CHECK(std::abs(r.weights.value()[0] - 0.6698) < 1e-4);
        CHECK(std::abs(r.weights.value()[1] - 0.3302) < 1e-4);
        CHECK(std::abs(r.output.value()[0] - 0.6698) < 1e-4);
        CHECK(std::abs(r.output.value()[1] - 0.3302) < 1e-4);
    }
    SUBCASE("depth mismatch") {
        auto q = tape.constant(Tensor<double>({1, 2}));
        auto k = tape.constant(Tensor<double>({2, 3}));
        CHECK_THROWS_AS(scaled_dot_product_attention(q, k, k, nullptr), DimensionError);
    }
}

TEST_CASE("property: attention rows sum to one over unmasked keys") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 1 + rng() % 5, m = 1 + rng() % 6, dk = 1 + rng() % 4;
        ad::Tape<double> tape;
        auto q = tape.constant(random_tensor({n, dk}, rng, -3, 3));
        auto k = tape.constant(random_tensor({m, dk}, rng, -3, 3));
        auto v = tape.constant(random_tensor({m, 2}, rng));
        ad::Mask mask{{1, m}, std::vector<std::uint8_t>(m)};
        for (std::size_t j = 1; j < m; ++j) mask.blocked[j] = rng() % 2;  // key 0 always open
        const auto w = scaled_dot_product_attention(q, k, v, &mask).weights.value();
        for (std::size_t i = 0; i < n; ++i) {
            double open = 0;
            for (std::size_t j = 0; j < m; ++j) {
                if (mask.blocked[j]) CHECK(w[i * m + j] < 1e-12);
                else open += w[i * m + j];
            }
            CHECK(std::abs(open - 1.0) < 1e-5);
        }
    }
}

TEST_CASE("multi-head attention with h=1 and identity projections is plain attention, bit for bit") {
    std::mt19937_64 rng(3);
    const std::size_t n = 4, m = 5, d = 6;
    ad::Tape<double> tape;
    auto xq = tape.constant(random_tensor({n, d}, rng));
    auto xk = tape.constant(random_tensor({m, d}, rng));
    auto xv = tape.constant(random_tensor({m, d}, rng));
    auto eye = tape.constant(identity(d));
    auto zero = tape.constant(Tensor<double>({d}));
    AttentionParams<double> p{eye, zero, eye, zero, eye, zero, eye, zero};
    const auto mha = multi_head_attention(xq, xk, xv, p, 1, nullptr).value();
    const auto plain = scaled_dot_product_attention(xq, xk, xv, nullptr).output.value();
    CHECK(mha.shape() == Shape{n, d});
    CHECK(mha == plain);
}

TEST_CASE("multi-head attention with h=2 matches a per-head oracle") {
    std::mt19937_64 rng(8);
    const std::size_t n = 3, m = 4, d = 6, h = 2, dk = d / h;
    const auto xq = random_tensor({n, d}, rng), xk = random_tensor({m, d}, rng), xv = random_tensor({m, d}, rng);
    std::vector<Tensor<double>> w, b;
    for (int i = 0; i < 4; ++i) {
        w.push_back(random_tensor({d, d}, rng));
        b.push_back(random_tensor({d}, rng));
    }
    ad::Tape<double> tape;
    AttentionParams<double> p{tape.constant(w[0]), tape.constant(b[0]), tape.constant(w[1]), tape.constant(b[1]),
                              tape.constant(w[2]), tape.constant(b[2]), tape.constant(w[3]), tape.constant(b[3])};
    const auto got = multi_head_attention(tape.constant(xq), tape.constant(xk), tape.constant(xv), p, h, nullptr).value();
    CHECK(got.shape() == Shape{n, d});

    auto proj = [&](const Tensor<double>& x, std::size_t rows, int which) {
        auto y = matmul_oracle(x.values(), w[which].values(), rows, d, d);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < d; ++c) y[r * d + c] += b[which][c];
        return y;
    };
    const auto Q = proj(xq, n, 0), K = proj(xk, m, 1), V = proj(xv, m, 2);
    std::vector<double> concat(n * d);
    for (std::size_t head = 0; head < h; ++head) {
        auto slice = [&](const std::vector<double>& x, std::size_t rows) {
            std::vector<double> s(rows * dk);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < dk; ++c) s[r * dk + c] = x[r * d + head * dk + c];
            return s;
        };
        const auto o = attention_oracle(slice(Q, n), slice(K, m), slice(V, m), n, m, dk, dk);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < dk; ++c) concat[r * d + head * dk + c] = o[r * dk + c];
    }
    auto expect = matmul_oracle(concat, w[3].values(), n, d, d);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) CHECK(std::abs(got[r * d + c] - (expect[r * d + c] + b[3][c])) < 1e-6);
}

TEST_CASE("multi-head attention rejects a head count that does not divide the width") {
    ad::Tape<double> tape;
    auto x = tape.constant(Tensor<double>({2, 6}));
    auto w = tape.constant(identity(6));
    auto z = tape.constant(Tensor<double>({6}));
    AttentionParams<double> p{w, z, w, z, w, z, w, z};
    CHECK_THROWS_AS(multi_head_attention(x, x, x, p, 4, nullptr), ConfigError);
}

TEST_CASE("positional encoding") {
    const auto pe = positional_encoding<double>(10, 8);
    for (std::size_t j = 0; j < 8; ++j) CHECK(pe[j] == (j % 2 == 0 ? 0.0 : 1.0));
    CHECK(std::abs(pe[8] - 0.8415) < 1e-4);
    CHECK(pe[8] == std::sin(1.0));
    CHECK(pe[1 * 8 + 3] == doctest::Approx(std::cos(1.0 / std::pow(10000.0, 2.0 / 8.0))));
    for (auto x : pe.values()) CHECK((x >= -1.0 && x <= 1.0));
}

TEST_CASE("masks") {
    SUBCASE("look-ahead without padding") {
        const auto m = look_ahead_mask(3);
        std::size_t blocked = 0;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                blocked += m.mask.blocked[i * 3 + j];
                CHECK(static_cast<bool>(m.mask.blocked[i * 3 + j]) == (j > i));
            }
        CHECK(blocked == 3);
        const auto set = make_masks(TokenBatch::from_rows({{5, 6, 7}}), TokenBatch::from_rows({{1, 5, 6}}));
        CHECK(set.decoder_self.mask.blocked == m.mask.blocked);
    }
    SUBCASE("all-PAD input blocks every key") {
        const auto set = make_masks(TokenBatch::from_rows({{0, 0, 0}}), TokenBatch::from_rows({{1, 0}}));
        CHECK(set.encoder_padding.mask.shape == Shape{1, 1, 1, 3});
        for (auto b : set.encoder_padding.mask.blocked) CHECK(b == 1);
    }
    SUBCASE("mixed fixture") {
        const auto set =
            make_masks(TokenBatch::from_rows({{1, 7, 2, 0}, {1, 2, 0, 0}}), TokenBatch::from_rows({{1, 9, 0}, {1, 0, 0}}));
        CHECK(set.encoder_padding.mask.blocked == std::vector<std::uint8_t>{0, 0, 0, 1, 0, 0, 1, 1});
        CHECK(set.decoder_self.mask.shape == Shape{2, 1, 3, 3});
        // clang-format off
        CHECK(set.decoder_self.mask.blocked == std::vector<std::uint8_t>{
            0, 1, 1,
            0, 0, 1,
            0, 0, 1,

            0, 1, 1,
            0, 1, 1,
            0, 1, 1});
        // clang-format on
    }
}

TEST_CASE("config validation") {
    ModelConfig c = tiny_config();
    c.num_heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.d_model = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.num_encoder_layers = c.num_decoder_layers = 0;
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("parameter count") {
    ModelConfig c;
    c.vocab_size = 10000;
    const auto base = count_parameters(c);
    c.vocab_size = 15000;
    CHECK(count_parameters(c) - base == 2565000u);
    CHECK((count_parameters(c) - base) / 5000 == 2 * 256 + 1);

    SUBCASE("zero-layer model is embedding plus projection") {
        ModelConfig z = tiny_config();
        z.num_encoder_layers = z.num_decoder_layers = 0;
        CHECK(count_parameters(z) == z.vocab_size * z.d_model + z.d_model * z.vocab_size + z.vocab_size);
    }
}

TEST_CASE("property: vocabulary delta law and allocation self-consistency") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        ModelConfig c;
        c.num_heads = 1 + rng() % 4;
        c.d_model = c.num_heads * (1 + rng() % 4);
        c.d_ff = 1 + rng() % 9;
        c.num_encoder_layers = rng() % 3;
        c.num_decoder_layers = rng() % 3;
        c.vocab_size = 5 + rng() % 50;
        const std::uint64_t delta = rng() % 40;
        ModelConfig bigger = c;
        bigger.vocab_size += delta;
        CHECK(count_parameters(bigger) - count_parameters(c) == delta * (2 * c.d_model + 1));

        const auto params = ModelParameters<float>::initialize(c, trial);
        CHECK(params.element_count() == count_parameters(c));
        std::set<std::string> names(params.names().begin(), params.names().end());
        CHECK(names.size() == params.size());
        for (const auto& t : params.tensors()) CHECK(t.all_finite());
    }
}

TEST_CASE("parameters: deterministic init and validated reassembly") {
    const auto c = tiny_config();
    const auto a = ModelParameters<double>::initialize(c, 42);
    const auto b = ModelParameters<double>::initialize(c, 42);
    const auto other = ModelParameters<double>::initialize(c, 43);
    CHECK(a == b);
    CHECK_FALSE(a == other);
    CHECK(a.get("decoder.0.norm3.gamma").values() == std::vector<double>(8, 1.0));
    CHECK_THROWS_AS(a.get("nope"), LookupError);

    std::vector<NamedTensor<double>> parts;
    for (std::size_t i = 0; i < a.size(); ++i) parts.push_back({a.name(i), a.tensors()[i]});
    CHECK(ModelParameters<double>::from_tensors(c, parts) == a);
    parts[1].value = Tensor<double>({3, 3});
    CHECK_THROWS_AS(ModelParameters<double>::from_tensors(c, parts), DimensionError);
    parts.pop_back();
    CHECK_THROWS_AS(ModelParameters<double>::from_tensors(c, parts), ContractError);
}

TEST_CASE("forward: shape, determinism and id range") {
    const auto c = tiny_config();
    const auto params = ModelParameters<double>::initialize(c, 7);
    const auto input = TokenBatch::from_rows({{1, 5, 6, 2, 0, 0}, {1, 5, 6, 2, 0, 0}});
    const auto target = TokenBatch::from_rows({{1, 7, 8, 9, 2, 0}, {1, 7, 8, 9, 2, 0}});
    const auto logits = forward(params, input, target);
    CHECK(logits.shape() == Shape{2, 6, 11});
    const std::size_t row = 6 * 11;
    for (std::size_t i = 0; i < row; ++i) CHECK(logits[i] == logits[row + i]);

    const auto single = forward(params, TokenBatch::from_rows({{1, 5, 6, 2, 0, 0}}), TokenBatch::from_rows({{1, 7, 8, 9, 2, 0}}));
    CHECK(single.shape() == Shape{1, 6, 11});

    CHECK_THROWS_AS(forward(params, TokenBatch::from_rows({{1, 11}}), TokenBatch::from_rows({{1}})), EncodingError);
    CHECK_THROWS_AS(forward(params, TokenBatch::from_rows({{1, 2, 3, 4, 5, 6, 7}}), TokenBatch::from_rows({{1}})),
                    DimensionError);
}

TEST_CASE("property: decoder position t ignores later target tokens") {
    const auto c = tiny_config();
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 25; ++trial) {
        const auto params = ModelParameters<double>::initialize(c, 100 + trial);
        std::vector<TokenId> in(6), tgt(6);
        for (auto& x : in) x = static_cast<TokenId>(rng() % c.vocab_size);
        for (auto& x : tgt) x = static_cast<TokenId>(rng() % c.vocab_size);
        const auto base = forward(params, TokenBatch::from_rows({in}), TokenBatch::from_rows({tgt}));
        const std::size_t t = rng() % 5;  // edit decoder input t+1, i.e. the label predicted at t
        auto edited = tgt;
        edited[t + 1] = static_cast<TokenId>((edited[t + 1] + 1 + rng() % (c.vocab_size - 1)) % c.vocab_size);
        const auto after = forward(params, TokenBatch::from_rows({in}), TokenBatch::from_rows({edited}));
        for (std::size_t pos = 0; pos <= t; ++pos)
            for (std::size_t v = 0; v < c.vocab_size; ++v) CHECK(after[pos * c.vocab_size + v] == base[pos * c.vocab_size + v]);
        bool later_changed = false;
        for (std::size_t v = 0; v < c.vocab_size; ++v)
            later_changed |= after[(t + 1) * c.vocab_size + v] != base[(t + 1) * c.vocab_size + v];
        CHECK(later_changed);
    }
}
