#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "atxf/checkpoint.hpp"
#include "atxf/corpus.hpp"
#include "atxf/evaluation.hpp"
#include "atxf/model.hpp"
#include "atxf/optim.hpp"
#include "atxf/vocabulary.hpp"

namespace atxf::train {

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    AdamConfig<float> adam;
    std::size_t patience = 3;  // epochs without validation-loss improvement; 0 disables early stopping
    std::size_t eval_batch_size = 64;

    void validate() const;  // ConfigError
};

struct EpochLog {
    std::size_t epoch = 0;  // from 1
    double train_loss = 0.0;
    eval::MetricsReport validation;
    double wall_seconds = 0.0;

    // Wall time is excluded.
    bool same_metrics(const EpochLog& o) const {
        return epoch == o.epoch && train_loss == o.train_loss && validation == o.validation;
    }
};

// Either a seeded random start or a transfer from an existing checkpoint.
struct Init {
    std::optional<std::uint64_t> seed;
    const Checkpoint* source = nullptr;

    static Init random(std::uint64_t seed) { return {seed, nullptr}; }
    static Init from(const Checkpoint& checkpoint) { return {std::nullopt, &checkpoint}; }
};

struct TrainResult {
    Checkpoint checkpoint;  // parameters of the best-validation epoch
    std::vector<EpochLog> logs;
    std::size_t best_epoch = 0;
};

struct TrainHooks {
    // Called once with the starting parameters, before any update.
    std::function<void(const model::ModelParameters<float>&)> before_first_step;
    std::function<void(const EpochLog&)> on_epoch;
};

// Transfer initialisation: all source weights copied unchanged. Throws
// TransferError when the checkpoint was built over another vocabulary.
model::ModelParameters<float> transfer_init(const Checkpoint& source, const Vocabulary& vocab);

// Teacher-forced training with PAD-masked cross-entropy and fresh Adam state.
// `config` is used only for random starts; transfers take the source's config.
// When the validation split is empty, model selection falls back to train loss.
// Throws TransferError, ConfigError, DivergenceError (non-finite loss).
TrainResult train(const corpus::SplitCorpus& corpus, const Vocabulary& vocab, const model::ModelConfig& config,
                  const Init& init, const TrainConfig& train_config, const TrainHooks& hooks = {});

}  // namespace atxf::train
