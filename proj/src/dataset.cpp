#include "atxf/dataset.hpp"

#include "atxf/errors.hpp"

namespace atxf {

EncodedPairs encode_pairs(std::span<const corpus::ConversationPair> pairs, const Vocabulary& vocab,
                          std::size_t max_content) {
    EncodedPairs out;
    out.count = pairs.size();
    out.length = max_content + 2;
    out.inputs.reserve(out.count * out.length);
    out.targets.reserve(out.count * out.length);
    for (const auto& p : pairs) {
        const auto in = encode(p.context, vocab, max_content);
        const auto tg = encode(p.response, vocab, max_content);
        out.inputs.insert(out.inputs.end(), in.begin(), in.end());
        out.targets.insert(out.targets.end(), tg.begin(), tg.end());
    }
    return out;
}

namespace {

std::size_t used_columns(const std::vector<TokenId>& ids, std::size_t length, std::span<const std::size_t> rows,
                         std::size_t limit) {
    std::size_t used = 1;
    for (auto r : rows)
        for (std::size_t t = limit; t > used; --t)
            if (ids[r * length + t - 1] != kPad) {
                used = t;
                break;
            }
    return used;
}

}  // namespace

Batch make_batch(const EncodedPairs& data, std::span<const std::size_t> rows) {
    if (rows.empty()) throw ContractError("make_batch: no rows selected");
    for (auto r : rows)
        if (r >= data.count) throw ContractError("make_batch: row " + std::to_string(r) + " out of range");
    const std::size_t L = data.length;
    const std::size_t in_len = used_columns(data.inputs, L, rows, L);
    // label column t is target[t+1]; keep columns while any label is non-PAD
    std::size_t dec_len = 1;
    for (auto r : rows)
        for (std::size_t t = L - 1; t > dec_len; --t)
            if (data.targets[r * L + t] != kPad) {
                dec_len = t;
                break;
            }

    Batch b;
    b.input.batch = b.decoder_in.batch = rows.size();
    b.input.length = in_len;
    b.decoder_in.length = dec_len;
    for (auto r : rows) {
        const TokenId* in = &data.inputs[r * L];
        const TokenId* tg = &data.targets[r * L];
        b.input.ids.insert(b.input.ids.end(), in, in + in_len);
        b.decoder_in.ids.insert(b.decoder_in.ids.end(), tg, tg + dec_len);
        b.labels.insert(b.labels.end(), tg + 1, tg + 1 + dec_len);
    }
    return b;
}

}  // namespace atxf
