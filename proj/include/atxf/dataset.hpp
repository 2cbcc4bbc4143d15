#pragma once

// Fixed-length encoded pairs and teacher-forced batches.

#include <span>
#include <vector>

#include "atxf/corpus.hpp"
#include "atxf/model.hpp"
#include "atxf/vocabulary.hpp"

namespace atxf {

struct EncodedPairs {
    std::size_t count = 0;
    std::size_t length = 0;          // max_content + 2, same for inputs and targets
    std::vector<TokenId> inputs;     // [count, length]
    std::vector<TokenId> targets;    // [count, length], START ... END PAD*
};

EncodedPairs encode_pairs(std::span<const corpus::ConversationPair> pairs, const Vocabulary& vocab,
                          std::size_t max_content);

// Decoder input is target[0..L-2], labels are target[1..L-1]. Trailing columns
// that are PAD in every selected row are trimmed; masking makes that exact
// up to summation order.
struct Batch {
    model::TokenBatch input;
    model::TokenBatch decoder_in;
    std::vector<TokenId> labels;  // one per decoder_in position
};

Batch make_batch(const EncodedPairs& data, std::span<const std::size_t> rows);

}  // namespace atxf
