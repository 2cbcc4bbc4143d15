#include "atxf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "atxf/errors.hpp"

namespace atxf::eval {

void MetricsReport::validate() const {
    const bool ordered = 0.0 <= accuracy && accuracy <= top5 && top5 <= top10 && top10 <= 1.0;
    if (!ordered || !(loss >= 0.0))
        throw ContractError("metrics report for '" + domain + "' violates 0 <= acc <= top5 <= top10 <= 1, loss >= 0");
}

namespace {

template <typename T>
std::size_t rows_of(const Tensor<T>& logits, std::span<const TokenId> targets) {
    if (logits.rank() == 0) throw DimensionError("logits must have a vocabulary axis");
    const std::size_t vocab = logits.shape().back();
    const std::size_t rows = logits.size() / vocab;
    if (rows != targets.size())
        throw DimensionError("logits hold " + std::to_string(rows) + " rows but " + std::to_string(targets.size()) +
                             " targets were given");
    return rows;
}

void check_target(TokenId t, std::size_t vocab) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab)
        throw EncodingError("target id " + std::to_string(t) + " outside vocabulary of size " + std::to_string(vocab));
}

template <typename T>
double row_nll(const T* row, std::size_t vocab, TokenId target) {
    double mx = row[0];
    for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    return std::log(z) + mx - static_cast<double>(row[target]);
}

// Zero-based rank with lower ids winning ties.
template <typename T>
std::size_t row_rank(const T* row, std::size_t vocab, TokenId target) {
    const T v = row[target];
    std::size_t rank = 0;
    for (std::size_t j = 0; j < vocab; ++j)
        if (row[j] > v || (row[j] == v && j < static_cast<std::size_t>(target))) ++rank;
    return rank;
}

}  // namespace

template <typename T>
void MetricTotals::add(const Tensor<T>& logits, std::span<const TokenId> targets, TokenId pad_id) {
    const std::size_t rows = rows_of(logits, targets);
    const std::size_t vocab = logits.shape().back();
    const T* base = logits.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        if (targets[r] == pad_id) continue;
        check_target(targets[r], vocab);
        const T* row = base + r * vocab;
        loss_sum += row_nll(row, vocab, targets[r]);
        const std::size_t rank = row_rank(row, vocab, targets[r]);
        hits1 += rank < 1;
        hits5 += rank < 5;
        hits10 += rank < 10;
        ++tokens;
    }
}

MetricsReport MetricTotals::finish(std::string domain, std::optional<std::string> source) const {
    MetricsReport r;
    r.domain = std::move(domain);
    r.source_domain = std::move(source);
    r.token_count = tokens;
    if (tokens == 0) return r;
    const double n = static_cast<double>(tokens);
    r.loss = loss_sum / n;
    r.accuracy = static_cast<double>(hits1) / n;
    r.top5 = static_cast<double>(hits5) / n;
    r.top10 = static_cast<double>(hits10) / n;
    return r;
}

template <typename T>
double sparse_ce_loss(const Tensor<T>& logits, std::span<const TokenId> targets, TokenId pad_id) {
    MetricTotals t;
    t.add(logits, targets, pad_id);
    return t.tokens ? t.loss_sum / static_cast<double>(t.tokens) : 0.0;
}

template <typename T>
double top_k_accuracy(const Tensor<T>& logits, std::span<const TokenId> targets, std::size_t k, TokenId pad_id) {
    const std::size_t rows = rows_of(logits, targets);
    const std::size_t vocab = logits.shape().back();
    if (k < 1 || k > vocab) throw ContractError("top-k needs 1 <= k <= " + std::to_string(vocab));
    std::size_t hits = 0, counted = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (targets[r] == pad_id) continue;
        check_target(targets[r], vocab);
        hits += row_rank(logits.data().data() + r * vocab, vocab, targets[r]) < k;
        ++counted;
    }
    return counted ? static_cast<double>(hits) / static_cast<double>(counted) : 0.0;
}

template <typename T>
MetricsReport evaluate_model(const model::ModelParameters<T>& params, const EncodedPairs& data,
                             std::size_t batch_size, std::string domain, std::optional<std::string> source) {
    if (batch_size == 0) throw ConfigError("evaluation batch size must be positive");
    MetricTotals totals;
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < data.count; start += batch_size) {
        rows.clear();
        for (std::size_t r = start; r < std::min(data.count, start + batch_size); ++r) rows.push_back(r);
        const auto batch = make_batch(data, rows);
        totals.add(model::forward(params, batch.input, batch.decoder_in), batch.labels);
    }
    auto report = totals.finish(std::move(domain), std::move(source));
    report.validate();
    return report;
}

// ---- tables -------------------------------------------------------------------

const char* metric_name(Metric m) {
    switch (m) {
        case Metric::loss: return "loss";
        case Metric::accuracy: return "accuracy";
        case Metric::top5: return "top5";
        case Metric::top10: return "top10";
    }
    return "?";
}

double metric_value(const MetricsReport& r, Metric m) {
    switch (m) {
        case Metric::loss: return r.loss;
        case Metric::accuracy: return r.accuracy;
        case Metric::top5: return r.top5;
        case Metric::top10: return r.top10;
    }
    return 0.0;
}

bool higher_is_better(Metric m) { return m != Metric::loss; }

namespace {

std::string fixed4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string MetricTable::to_csv() const {
    std::string out = "target\\source";
    for (const auto& d : domains) out += "," + csv_field(d);
    out += "\n";
    for (std::size_t t = 0; t < domains.size(); ++t) {
        out += csv_field(domains[t]);
        for (std::size_t s = 0; s < domains.size(); ++s) {
            out += ",";
            if (cells[t][s]) out += fixed4(*cells[t][s]);
        }
        out += "\n";
    }
    return out;
}

MatrixTables render_matrix_tables(std::span<const MetricsReport> reports, std::vector<std::string> domains) {
    auto note = [&](const std::string& d) {
        if (std::find(domains.begin(), domains.end(), d) == domains.end()) domains.push_back(d);
    };
    for (const auto& r : reports) {
        note(r.domain);
        if (r.source_domain) note(*r.source_domain);
    }
    auto index = [&](const std::string& d) {
        return static_cast<std::size_t>(std::find(domains.begin(), domains.end(), d) - domains.begin());
    };

    MatrixTables out;
    const std::size_t n = domains.size();
    for (Metric m : kAllMetrics) {
        MetricTable table{m, domains, std::vector<std::vector<std::optional<double>>>(n, std::vector<std::optional<double>>(n))};
        for (const auto& r : reports) {
            const std::size_t t = index(r.domain);
            const std::size_t s = r.source_domain ? index(*r.source_domain) : t;
            table.cells[t][s] = metric_value(r, m);
        }
        out.tables.push_back(std::move(table));
    }

    out.summary_csv = "target";
    for (Metric m : kAllMetrics) out.summary_csv += std::string(",") + metric_name(m) + "_improved";
    out.summary_csv += "\n";
    for (std::size_t t = 0; t < n; ++t) {
        out.summary_csv += csv_field(domains[t]);
        for (const auto& table : out.tables) {
            const auto& baseline = table.cells[t][t];
            bool any_transfer = false, improved = false;
            for (std::size_t s = 0; s < n; ++s) {
                if (s == t || !table.cells[t][s]) continue;
                any_transfer = true;
                if (baseline) {
                    const double v = *table.cells[t][s];
                    improved |= higher_is_better(table.metric) ? v > *baseline : v < *baseline;
                }
            }
            out.summary_csv += ",";
            if (baseline && any_transfer) out.summary_csv += improved ? "yes" : "no";
            if (improved) out.improved_targets[metric_name(table.metric)].push_back(domains[t]);
        }
        out.summary_csv += "\n";
    }
    for (Metric m : kAllMetrics) out.improved_targets.try_emplace(metric_name(m));
    return out;
}

#define ATXF_INSTANTIATE(T)                                                                                     \
    template void MetricTotals::add<T>(const Tensor<T>&, std::span<const TokenId>, TokenId);                    \
    template double sparse_ce_loss<T>(const Tensor<T>&, std::span<const TokenId>, TokenId);                     \
    template double top_k_accuracy<T>(const Tensor<T>&, std::span<const TokenId>, std::size_t, TokenId);        \
    template MetricsReport evaluate_model<T>(const model::ModelParameters<T>&, const EncodedPairs&, std::size_t, \
                                             std::string, std::optional<std::string>);

ATXF_INSTANTIATE(float)
ATXF_INSTANTIATE(double)

}  // namespace atxf::eval
