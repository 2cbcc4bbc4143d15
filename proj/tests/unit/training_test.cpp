#include "atxf/errors.hpp"
#include "atxf/training.hpp"
#include "doctest.h"
#include "support/synthetic.hpp"

using namespace atxf;
using train::Init;
using train::TrainConfig;
using train::TrainHooks;

namespace {

struct Setup {
    corpus::SplitCorpus corpus;
    Vocabulary vocab;
    model::ModelConfig config;
};

Setup small_setup(std::size_t pairs = 40) {
    auto all = testing::synthetic_pairs("toy", pairs, 5, 12, 2, 3);
    auto split = corpus::split_70_30(all, 1);
    std::vector<std::vector<corpus::ConversationPair>> corpora{all};
    auto vocab = Vocabulary::build(corpora, 100);
    model::ModelConfig c;
    c.vocab_size = vocab.size();
    c.d_model = 8;
    c.num_heads = 2;
    c.d_ff = 16;
    c.num_encoder_layers = c.num_decoder_layers = 1;
    c.max_len = 6;
    return {std::move(split), std::move(vocab), c};
}

TrainConfig quick(std::size_t epochs) {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = 8;
    tc.seed = 3;
    tc.adam.learning_rate = 5e-3f;
    tc.patience = 0;
    return tc;
}

}  // namespace

TEST_CASE("config validation") {
    TrainConfig tc;
    tc.epochs = 0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    tc = TrainConfig{};
    tc.batch_size = 0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    CHECK_NOTHROW(TrainConfig{}.validate());
    CHECK(TrainConfig{}.epochs == 20);
    CHECK(TrainConfig{}.batch_size == 64);
    CHECK(TrainConfig{}.patience == 3);
}

TEST_CASE("same seed, config and data give identical epoch logs") {
    const auto s = small_setup();
    const auto a = train::train(s.corpus, s.vocab, s.config, Init::random(1), quick(3));
    const auto b = train::train(s.corpus, s.vocab, s.config, Init::random(1), quick(3));
    REQUIRE(a.logs.size() == 3);
    for (std::size_t i = 0; i < a.logs.size(); ++i) {
        CHECK(a.logs[i].epoch == i + 1);
        CHECK(a.logs[i].same_metrics(b.logs[i]));
    }
    CHECK(a.checkpoint == b.checkpoint);
    CHECK(a.logs.back().train_loss < a.logs.front().train_loss);
}

TEST_CASE("transfer starts from the source weights exactly") {
    const auto s = small_setup();
    const auto source = train::train(s.corpus, s.vocab, s.config, Init::random(1), quick(2)).checkpoint;
    corpus::SplitCorpus target = s.corpus;
    target.domain = "other";
    bool called = false;
    TrainHooks hooks;
    hooks.before_first_step = [&](const model::ModelParameters<float>& p) {
        called = true;
        CHECK(p == source.parameters);
    };
    const auto result = train::train(target, s.vocab, s.config, Init::from(source), quick(1), hooks);
    CHECK(called);
    CHECK(result.checkpoint.provenance.domain == "other");
    CHECK(result.checkpoint.provenance.source_domain == std::optional<std::string>("toy"));
    CHECK_FALSE(result.checkpoint.parameters == source.parameters);
}

TEST_CASE("transfer over a different vocabulary is refused") {
    const auto s = small_setup();
    const auto source = train::train(s.corpus, s.vocab, s.config, Init::random(1), quick(1)).checkpoint;
    std::vector<std::vector<corpus::ConversationPair>> other{testing::synthetic_pairs("x", 10, 99, 9)};
    const auto other_vocab = Vocabulary::build(other, 100);
    CHECK_THROWS_AS(train::train(s.corpus, other_vocab, s.config, Init::from(source), quick(1)), TransferError);
    CHECK_THROWS_AS(train::transfer_init(source, other_vocab), TransferError);
    CHECK(train::transfer_init(source, s.vocab) == source.parameters);
}

TEST_CASE("early stopping keeps the best validation epoch") {
    auto s = small_setup();
    auto tc = quick(30);
    tc.patience = 2;
    tc.adam.learning_rate = 0.05f;  // large enough to overshoot and trigger the stop
    const auto r = train::train(s.corpus, s.vocab, s.config, Init::random(2), tc);
    double best = 1e300;
    for (const auto& log : r.logs) best = std::min(best, log.validation.loss);
    CHECK(r.logs[r.best_epoch - 1].validation.loss == best);
    if (r.logs.size() < 30) CHECK(r.logs.size() - r.best_epoch == 2);
    const auto val = encode_pairs(s.corpus.validation, s.vocab, s.config.max_len - 2);
    const auto rescored = eval::evaluate_model(r.checkpoint.parameters, val, 64, "toy");
    CHECK(rescored.loss == doctest::Approx(best).epsilon(1e-6));
}

TEST_CASE("divergence reports the last stable epoch") {
    auto s = small_setup();
    auto tc = quick(5);
    tc.adam.learning_rate = 1e36f;
    try {
        train::train(s.corpus, s.vocab, s.config, Init::random(4), tc);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.last_stable_epoch() >= 0);
        CHECK(e.last_stable_epoch() < 5);
    }
}

TEST_CASE("PAD-only rows leave validation metrics unchanged") {
    const auto s = small_setup();
    const auto params = model::ModelParameters<float>::initialize(s.config, 9);
    auto data = encode_pairs(s.corpus.validation, s.vocab, s.config.max_len - 2);
    const auto before = eval::evaluate_model(params, data, 64, "toy");
    data.count += 3;
    data.inputs.resize(data.count * data.length, kPad);
    data.targets.resize(data.count * data.length, kPad);
    const auto after = eval::evaluate_model(params, data, 64, "toy");
    CHECK(before.token_count == after.token_count);
    CHECK(std::abs(before.loss - after.loss) < 1e-6);
    CHECK(before.accuracy == after.accuracy);
    CHECK(before.top5 == after.top5);
}

TEST_CASE("random start needs a matching vocabulary size") {
    auto s = small_setup();
    s.config.vocab_size += 1;
    CHECK_THROWS_AS(train::train(s.corpus, s.vocab, s.config, Init::random(1), quick(1)), ConfigError);
}
