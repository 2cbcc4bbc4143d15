#pragma once

// A small model memorising a synthetic domain, shared by chat and server tests.

#include <string>
#include <vector>

#include "atxf/training.hpp"
#include "support/synthetic.hpp"

namespace atxf::testing {

struct ToyModel {
    std::vector<corpus::ConversationPair> pairs;
    Vocabulary vocab;
    Checkpoint checkpoint;
};

inline Vocabulary toy_vocabulary(const std::vector<corpus::ConversationPair>& pairs) {
    std::vector<std::vector<corpus::ConversationPair>> corpora{pairs};
    return Vocabulary::build(corpora, 200);
}

inline model::ModelConfig toy_config(std::size_t vocab_size) {
    model::ModelConfig c;
    c.vocab_size = vocab_size;
    c.d_model = 32;
    c.num_heads = 4;
    c.d_ff = 64;
    c.num_encoder_layers = c.num_decoder_layers = 1;
    c.max_len = 7;
    return c;
}

inline ToyModel memorised_toy(const std::string& domain = "toy", std::size_t count = 20, std::size_t epochs = 200) {
    ToyModel m{synthetic_pairs(domain, count, 11), Vocabulary::from_tokens({"<pad>", "<start>", "<end>", "<unk>"}), {}};
    m.vocab = toy_vocabulary(m.pairs);
    train::TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = 10;
    tc.patience = 0;
    tc.adam.learning_rate = 3e-3f;
    m.checkpoint = train::train(corpus::SplitCorpus{domain, m.pairs, {}}, m.vocab, toy_config(m.vocab.size()),
                                train::Init::random(1), tc)
                       .checkpoint;
    return m;
}

}  // namespace atxf::testing
