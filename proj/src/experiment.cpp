#include "atxf/experiment.hpp"

#include <fstream>
#include <iterator>
#include <limits>
#include <set>

#include "atxf/errors.hpp"
#include "json.hpp"

namespace atxf::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

std::string Cell::key() const { return source.value_or(target) + "__" + target; }

std::size_t matrix_cell_count(std::size_t n) { return n + n * (n - 1); }

std::vector<Cell> ExperimentPlan::cells() const {
    std::set<std::string> seen;
    for (const auto& d : domains) {
        if (d.empty()) throw ConfigError("empty domain name in experiment plan");
        if (d.find("__") != std::string::npos) throw ConfigError("domain name '" + d + "' may not contain '__'");
        if (!seen.insert(d).second) throw ConfigError("duplicate domain '" + d + "' in experiment plan");
    }
    std::vector<Cell> out;
    for (const auto& d : domains) out.push_back({std::nullopt, d});
    for (const auto& s : domains)
        for (const auto& t : domains)
            if (s != t) out.push_back({s, t});
    return out;
}

namespace {

void write_atomically(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + tmp.string());
        f << text;
        if (!f) throw IoError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

json report_json(const eval::MetricsReport& r) {
    return json{{"domain", r.domain},
                {"source_domain", r.source_domain ? json(*r.source_domain) : json(nullptr)},
                {"loss", r.loss},
                {"accuracy", r.accuracy},
                {"top5", r.top5},
                {"top10", r.top10},
                {"token_count", r.token_count},
                {"masking", eval::kMaskingConvention}};
}

fs::path result_path(const fs::path& dir, const Cell& cell) { return dir / (cell.key() + ".json"); }

const corpus::SplitCorpus& corpus_for(const std::map<std::string, corpus::SplitCorpus>& corpora,
                                      const std::string& domain) {
    const auto it = corpora.find(domain);
    if (it == corpora.end()) throw LookupError("no corpus for domain '" + domain + "'");
    return it->second;
}

}  // namespace

std::optional<eval::MetricsReport> read_cell_result(const fs::path& results_dir, const Cell& cell) {
    const auto path = result_path(results_dir, cell);
    if (!fs::exists(path)) return std::nullopt;
    std::ifstream f(path);
    const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        const auto j = json::parse(text).at("metrics");
        eval::MetricsReport r;
        r.domain = j.at("domain").get<std::string>();
        if (!j.at("source_domain").is_null()) r.source_domain = j["source_domain"].get<std::string>();
        r.loss = j.at("loss").get<double>();
        r.accuracy = j.at("accuracy").get<double>();
        r.top5 = j.at("top5").get<double>();
        r.top10 = j.at("top10").get<double>();
        r.token_count = j.at("token_count").get<std::uint64_t>();
        return r;
    } catch (const json::exception& e) {
        throw SchemaError("malformed result file " + path.string() + ": " + e.what());
    }
}

eval::MetricsReport run_cell(const ExperimentPlan& plan, const Cell& cell,
                             const std::map<std::string, corpus::SplitCorpus>& corpora, const Vocabulary& vocab,
                             const MatrixOptions& options) {
    const auto& corpus = corpus_for(corpora, cell.target);
    train::TrainResult result;
    if (cell.is_baseline()) {
        result = train::train(corpus, vocab, plan.model, train::Init::random(plan.seed), plan.baseline);
        save_checkpoint(result.checkpoint, options.checkpoint_dir / (cell.target + ".ckpt"));
    } else {
        const auto source_path = options.checkpoint_dir / (*cell.source + ".ckpt");
        if (!fs::exists(source_path))
            throw OrderingError("transfer " + cell.key() + " needs the baseline checkpoint of '" + *cell.source +
                                "', which has not been trained");
        const auto source = load_checkpoint(source_path, vocab);
        result = train::train(corpus, vocab, plan.model, train::Init::from(source), plan.transfer);
        if (options.save_transfer_checkpoints)
            save_checkpoint(result.checkpoint, options.checkpoint_dir / (cell.key() + ".ckpt"));
    }

    const auto& best = result.logs.at(result.best_epoch - 1);
    json epochs = json::array();
    for (const auto& log : result.logs)
        epochs.push_back({{"epoch", log.epoch},
                          {"train_loss", log.train_loss},
                          {"validation", report_json(log.validation)},
                          {"wall_seconds", log.wall_seconds}});
    const json doc{{"source", cell.source ? json(*cell.source) : json(nullptr)},
                   {"target", cell.target},
                   {"best_epoch", result.best_epoch},
                   {"metrics", report_json(best.validation)},
                   {"epochs", epochs}};
    write_atomically(result_path(options.results_dir, cell), doc.dump(2));
    if (options.on_cell) options.on_cell(cell, best.validation);
    return best.validation;
}

MatrixRun run_experiment_matrix(const ExperimentPlan& plan, const std::map<std::string, corpus::SplitCorpus>& corpora,
                                const Vocabulary& vocab, const MatrixOptions& options) {
    const auto cells = plan.cells();
    for (const auto& d : plan.domains) corpus_for(corpora, d);
    MatrixRun run;
    for (const auto& cell : cells) {
        if (auto done = read_cell_result(options.results_dir, cell)) {
            run.reports.push_back(*done);
            ++run.skipped;
            continue;
        }
        if (options.stop_after && run.executed >= *options.stop_after) return run;
        run.reports.push_back(run_cell(plan, cell, corpora, vocab, options));
        ++run.executed;
    }
    run.complete = true;
    return run;
}

// ---- grid -------------------------------------------------------------------------

GridResult topology_grid_search(std::span<const std::size_t> heads, std::span<const std::size_t> d_ff,
                                const GridEvaluator& evaluate) {
    if (heads.empty() || d_ff.empty()) throw ConfigError("grid axes must be non-empty");
    GridResult out;
    bool have_best = false;
    for (auto h : heads)
        for (auto f : d_ff) {
            const GridPoint p{h, f, evaluate(h, f)};
            out.points.push_back(p);
            const auto& b = out.best;
            const bool better = !have_best || p.validation_loss < b.validation_loss ||
                                (p.validation_loss == b.validation_loss &&
                                 (p.heads < b.heads || (p.heads == b.heads && p.d_ff < b.d_ff)));
            if (better) {
                out.best = p;
                have_best = true;
            }
        }
    return out;
}

GridResult topology_grid_search(const corpus::SplitCorpus& corpus, const Vocabulary& vocab,
                                const model::ModelConfig& base, std::span<const std::size_t> heads,
                                std::span<const std::size_t> d_ff, const train::TrainConfig& config,
                                std::uint64_t seed) {
    for (auto h : heads) {
        auto c = base;
        c.num_heads = h;
        c.validate();
    }
    return topology_grid_search(heads, d_ff, [&](std::size_t h, std::size_t f) {
        auto c = base;
        c.num_heads = h;
        c.d_ff = f;
        const auto r = train::train(corpus, vocab, c, train::Init::random(seed), config);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& log : r.logs) best = std::min(best, corpus.validation.empty() ? log.train_loss : log.validation.loss);
        return best;
    });
}

}  // namespace atxf::experiment
