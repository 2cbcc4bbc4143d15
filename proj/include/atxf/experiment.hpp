#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atxf/evaluation.hpp"
#include "atxf/training.hpp"

namespace atxf::experiment {

struct Cell {
    std::optional<std::string> source;  // empty for a baseline
    std::string target;

    bool is_baseline() const { return !source.has_value(); }
    // "<source>__<target>", with source = target for a baseline.
    std::string key() const;
    friend bool operator==(const Cell&, const Cell&) = default;
};

// n + n(n - 1)
std::size_t matrix_cell_count(std::size_t domains);

struct ExperimentPlan {
    std::vector<std::string> domains;
    model::ModelConfig model;
    train::TrainConfig baseline;
    train::TrainConfig transfer;
    std::uint64_t seed = 0;  // random-init seed of every baseline

    // Baselines in domain order, then transfers source-major. ConfigError on
    // duplicate or empty domain names.
    std::vector<Cell> cells() const;
};

struct MatrixOptions {
    std::filesystem::path results_dir;     // <key>.json per finished cell
    std::filesystem::path checkpoint_dir;  // <domain>.ckpt per baseline
    bool save_transfer_checkpoints = false;  // also keep <source>__<target>.ckpt
    std::optional<std::size_t> stop_after;   // execute at most this many new cells
    std::function<void(const Cell&, const eval::MetricsReport&)> on_cell;
};

struct MatrixRun {
    std::vector<eval::MetricsReport> reports;  // every finished cell, in plan order
    std::size_t executed = 0;
    std::size_t skipped = 0;  // already finished before this call
    bool complete = false;
};

// Trains one cell and writes its result file. A transfer cell needs the
// source's baseline checkpoint on disk; OrderingError otherwise.
eval::MetricsReport run_cell(const ExperimentPlan& plan, const Cell& cell,
                             const std::map<std::string, corpus::SplitCorpus>& corpora, const Vocabulary& vocab,
                             const MatrixOptions& options);

// Runs every cell without a result file. Re-running after an interruption
// executes only the missing cells.
MatrixRun run_experiment_matrix(const ExperimentPlan& plan, const std::map<std::string, corpus::SplitCorpus>& corpora,
                                const Vocabulary& vocab, const MatrixOptions& options);

// Reads a finished cell's report; nullopt if the file is absent, SchemaError if malformed.
std::optional<eval::MetricsReport> read_cell_result(const std::filesystem::path& results_dir, const Cell& cell);

// ---- topology search --------------------------------------------------------------

struct GridPoint {
    std::size_t heads = 0;
    std::size_t d_ff = 0;
    double validation_loss = 0.0;
};

struct GridResult {
    std::vector<GridPoint> points;  // heads-major
    GridPoint best;                 // lowest loss; ties: fewer heads, then smaller d_ff
};

using GridEvaluator = std::function<double(std::size_t heads, std::size_t d_ff)>;

// ConfigError on an empty axis.
GridResult topology_grid_search(std::span<const std::size_t> heads, std::span<const std::size_t> d_ff,
                                const GridEvaluator& evaluate);

// Trains one model per grid point from the same seed; the score is the best
// validation loss over the run.
GridResult topology_grid_search(const corpus::SplitCorpus& corpus, const Vocabulary& vocab,
                                const model::ModelConfig& base, std::span<const std::size_t> heads,
                                std::span<const std::size_t> d_ff, const train::TrainConfig& config,
                                std::uint64_t seed);

}  // namespace atxf::experiment
