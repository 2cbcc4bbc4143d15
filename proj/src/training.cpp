#include "atxf/training.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <numeric>
#include <random>

#include "atxf/dataset.hpp"
#include "atxf/errors.hpp"

namespace atxf::train {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (eval_batch_size < 1) throw ConfigError("eval_batch_size must be at least 1");
    if (!(adam.learning_rate > 0) || !(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1) ||
        !(adam.epsilon > 0))
        throw ConfigError("invalid Adam hyperparameters");
}

model::ModelParameters<float> transfer_init(const Checkpoint& source, const Vocabulary& vocab) {
    require_vocabulary(source, vocab);
    return source.parameters;
}

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ull;
constexpr std::uint64_t kDropoutStream = 0x44524f50ull;

struct StepOutcome {
    double loss_sum = 0.0;
    std::size_t tokens = 0;
};

StepOutcome train_step(model::ModelParameters<float>& params, AdamState<float>& adam, const Batch& batch,
                       std::mt19937_64& dropout_rng) {
    const std::size_t tokens =
        static_cast<std::size_t>(std::count_if(batch.labels.begin(), batch.labels.end(), [](TokenId t) { return t != kPad; }));
    if (tokens == 0) return {};
    ad::Tape<float> tape;
    model::BoundModel<float> bound(tape, params, true);
    model::ForwardOptions options{&dropout_rng};
    auto logits = model::forward(bound, batch.input, batch.decoder_in, options);
    auto loss = ad::sparse_cross_entropy(logits, batch.labels, kPad);
    const double value = loss.value().item();
    if (!std::isfinite(value)) throw NumericError("non-finite training loss");
    tape.backward(loss);
    std::vector<Tensor<float>> grads;
    grads.reserve(bound.vars().size());
    for (const auto& v : bound.vars()) grads.push_back(tape.grad(v));
    adam_step<float>(params.tensors(), grads, adam);
    return {value * static_cast<double>(tokens), tokens};
}

}  // namespace

TrainResult train(const corpus::SplitCorpus& corpus, const Vocabulary& vocab, const model::ModelConfig& config,
                  const Init& init, const TrainConfig& tc, const TrainHooks& hooks) {
    tc.validate();
    if (corpus.train.empty()) throw CorpusError("domain '" + corpus.domain + "' has no training pairs");

    Provenance provenance{corpus.domain, std::nullopt};
    model::ModelParameters<float> params;
    if (init.source) {
        params = transfer_init(*init.source, vocab);
        provenance.source_domain = init.source->provenance.domain;
    } else {
        if (config.vocab_size != vocab.size())
            throw ConfigError("model vocab_size " + std::to_string(config.vocab_size) + " != vocabulary size " +
                              std::to_string(vocab.size()));
        params = model::ModelParameters<float>::initialize(config, init.seed.value_or(tc.seed));
    }
    const auto& mc = params.config();
    if (mc.max_len < 3) throw ConfigError("max_len must leave room for START, END and one token");
    const std::size_t max_content = mc.max_len - 2;

    const auto train_data = encode_pairs(corpus.train, vocab, max_content);
    const auto val_data = encode_pairs(corpus.validation, vocab, max_content);
    const bool has_validation = !corpus.validation.empty();

    if (hooks.before_first_step) hooks.before_first_step(params);

    AdamState<float> adam{tc.adam, {}, {}, 0};
    std::mt19937_64 dropout_rng(mix_seed(tc.seed, kDropoutStream));
    std::vector<std::size_t> order(train_data.count);
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        std::mt19937_64 shuffle_rng(mix_seed(mix_seed(tc.seed, kShuffleStream), epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        StepOutcome epoch_total;
        try {
            for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
                const std::span<const std::size_t> rows(order.data() + start,
                                                        std::min(tc.batch_size, order.size() - start));
                const auto s = train_step(params, adam, make_batch(train_data, rows), dropout_rng);
                epoch_total.loss_sum += s.loss_sum;
                epoch_total.tokens += s.tokens;
            }
        } catch (const NumericError& e) {
            throw DivergenceError("training '" + corpus.domain + "' diverged in epoch " + std::to_string(epoch) + ": " +
                                      e.what(),
                                  static_cast<int>(epoch - 1));
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = epoch_total.tokens ? epoch_total.loss_sum / static_cast<double>(epoch_total.tokens) : 0.0;
        if (has_validation)
            log.validation = eval::evaluate_model(params, val_data, tc.eval_batch_size, corpus.domain,
                                                  provenance.source_domain);
        else
            log.validation = eval::MetricsReport{corpus.domain, provenance.source_domain, 0, 0, 0, 0, 0};
        log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.logs.push_back(log);
        if (hooks.on_epoch) hooks.on_epoch(log);

        const double selection = has_validation ? log.validation.loss : log.train_loss;
        if (selection < best_loss) {
            best_loss = selection;
            since_best = 0;
            result.best_epoch = epoch;
            result.checkpoint = Checkpoint{vocab.fingerprint(), provenance, params};
        } else if (tc.patience > 0 && ++since_best >= tc.patience) {
            break;
        }
    }
    if (result.best_epoch == 0) result.checkpoint = Checkpoint{vocab.fingerprint(), provenance, params};
    return result;
}

}  // namespace atxf::train
