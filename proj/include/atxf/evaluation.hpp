#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atxf/dataset.hpp"
#include "atxf/model.hpp"
#include "atxf/tensor.hpp"

namespace atxf::eval {

// All metrics are means over non-PAD target positions.
struct MetricsReport {
    std::string domain;
    std::optional<std::string> source_domain;  // empty for a baseline
    double loss = 0.0;
    double accuracy = 0.0;
    double top5 = 0.0;
    double top10 = 0.0;
    std::uint64_t token_count = 0;

    // Throws ContractError unless 0 <= accuracy <= top5 <= top10 <= 1 and loss >= 0.
    void validate() const;
    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline constexpr const char* kMaskingConvention = "pad-excluded";

// Running sums; combine over batches then finish() once, which is what keeps
// the result independent of batch size.
struct MetricTotals {
    double loss_sum = 0.0;
    std::uint64_t hits1 = 0, hits5 = 0, hits10 = 0, tokens = 0;

    // logits [.., vocab] with one target per row. Throws EncodingError for an
    // out-of-range non-PAD target.
    template <typename T>
    void add(const Tensor<T>& logits, std::span<const TokenId> targets, TokenId pad_id = kPad);
    MetricsReport finish(std::string domain, std::optional<std::string> source = std::nullopt) const;
};

// Mean over non-PAD rows of -log softmax(logits)[target]; 0 when every row is PAD.
template <typename T>
double sparse_ce_loss(const Tensor<T>& logits, std::span<const TokenId> targets, TokenId pad_id = kPad);

// Fraction of non-PAD rows whose target ranks in the top k; equal logits rank
// the lower id first. Requires 1 <= k <= vocab (ContractError).
template <typename T>
double top_k_accuracy(const Tensor<T>& logits, std::span<const TokenId> targets, std::size_t k,
                      TokenId pad_id = kPad);

// Teacher-forced single pass in fixed row order.
template <typename T>
MetricsReport evaluate_model(const model::ModelParameters<T>& params, const EncodedPairs& data,
                             std::size_t batch_size, std::string domain,
                             std::optional<std::string> source = std::nullopt);

// ---- result tables ----------------------------------------------------------

enum class Metric { loss, accuracy, top5, top10 };
const char* metric_name(Metric m);
double metric_value(const MetricsReport& r, Metric m);
bool higher_is_better(Metric m);
inline constexpr Metric kAllMetrics[] = {Metric::loss, Metric::accuracy, Metric::top5, Metric::top10};

// Row = target domain, column = source domain; the diagonal is the baseline.
struct MetricTable {
    Metric metric;
    std::vector<std::string> domains;
    std::vector<std::vector<std::optional<double>>> cells;  // [target][source]

    bool is_baseline(std::size_t target, std::size_t source) const { return target == source; }
    // Header cell "target\source"; diagonal cells hold baselines; missing cells are empty.
    std::string to_csv() const;
};

struct MatrixTables {
    std::vector<MetricTable> tables;  // one per metric, in kAllMetrics order
    // Per metric, targets whose baseline is beaten by at least one source.
    std::map<std::string, std::vector<std::string>> improved_targets;
    // target,<metric>... with yes/no, empty when the baseline or every transfer is missing.
    std::string summary_csv;
};

MatrixTables render_matrix_tables(std::span<const MetricsReport> reports, std::vector<std::string> domains = {});

}  // namespace atxf::eval
