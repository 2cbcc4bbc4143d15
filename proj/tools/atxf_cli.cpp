// atxf command-line front end.
//
// Layout on disk:
//   <data-dir>/<domain>/{train,validation}.tsv
//   <model-dir>/vocab.txt, <domain>.ckpt, <source>__<target>.ckpt,
//   <model-dir>/results/<source>__<target>.json, <model-dir>/tables/*.csv

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "atxf/chat.hpp"
#include "atxf/checkpoint.hpp"
#include "atxf/corpus.hpp"
#include "atxf/errors.hpp"
#include "atxf/evaluation.hpp"
#include "atxf/experiment.hpp"
#include "atxf/kernels.hpp"
#include "atxf/server.hpp"
#include "atxf/training.hpp"
#include "atxf/vocabulary.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace atxf;

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string data_dir = "data";
    std::string model_dir;
};

struct Settings {
    model::ModelConfig model;
    train::TrainConfig train;
    std::uint64_t seed = 0;
    std::size_t vocab_capacity = kDefaultVocabularyCapacity;
    double words_per_minute = 152.88;
    fs::path data_dir;
    fs::path model_dir;
};

void apply_train_json(const json& j, train::TrainConfig& t) {
    for (const auto& [key, v] : j.items()) {
        if (key == "epochs") t.epochs = v.get<std::size_t>();
        else if (key == "batch_size") t.batch_size = v.get<std::size_t>();
        else if (key == "eval_batch_size") t.eval_batch_size = v.get<std::size_t>();
        else if (key == "patience") t.patience = v.get<std::size_t>();
        else if (key == "learning_rate") t.adam.learning_rate = v.get<float>();
        else if (key == "beta1") t.adam.beta1 = v.get<float>();
        else if (key == "beta2") t.adam.beta2 = v.get<float>();
        else if (key == "epsilon") t.adam.epsilon = v.get<float>();
        else throw ConfigError("unknown train config key '" + key + "'");
    }
}

Settings resolve(const Globals& g) {
    Settings s;
    if (!g.config_path.empty()) {
        std::ifstream f(g.config_path);
        if (!f) throw IoError("cannot read config " + g.config_path);
        json j;
        try {
            j = json::parse(f);
        } catch (const json::exception& e) {
            throw ConfigError("config " + g.config_path + " is not valid JSON: " + e.what());
        }
        for (const auto& [key, v] : j.items()) {
            if (key == "model") s.model = model_config_from_json(v);
            else if (key == "train") apply_train_json(v, s.train);
            else if (key == "seed") s.seed = v.get<std::uint64_t>();
            else if (key == "vocab_capacity") s.vocab_capacity = v.get<std::size_t>();
            else if (key == "words_per_minute") s.words_per_minute = v.get<double>();
            else throw ConfigError("unknown config key '" + key + "'");
        }
    }
    if (g.seed) s.seed = *g.seed;
    s.train.seed = s.seed;
    s.data_dir = g.data_dir;
    if (!g.model_dir.empty()) s.model_dir = g.model_dir;
    else if (const char* env = std::getenv("ATXF_MODEL_DIR"); env && *env) s.model_dir = env;
    else s.model_dir = "models";
    return s;
}

std::vector<std::string> discover_domains(const fs::path& data_dir) {
    std::vector<std::string> out;
    if (fs::is_directory(data_dir))
        for (const auto& e : fs::directory_iterator(data_dir))
            if (fs::exists(e.path() / "train.tsv")) out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw CorpusError("no domains under " + data_dir.string() + " (run ingest first)");
    return out;
}

corpus::SplitCorpus load_split(const fs::path& data_dir, const std::string& domain) {
    const auto dir = data_dir / domain;
    if (!fs::exists(dir / "train.tsv")) throw LookupError("no corpus for domain '" + domain + "' in " + data_dir.string());
    corpus::SplitCorpus s{domain, corpus::read_pairs_tsv(dir / "train.tsv", domain), {}};
    if (fs::exists(dir / "validation.tsv")) s.validation = corpus::read_pairs_tsv(dir / "validation.tsv", domain);
    return s;
}

Vocabulary load_vocab(const Settings& s) { return Vocabulary::load(s.model_dir / "vocab.txt"); }

model::ModelConfig model_for(const Settings& s, const Vocabulary& v) {
    auto c = s.model;
    c.vocab_size = v.size();
    return c;
}

void print_epoch(const train::EpochLog& l) {
    std::fprintf(stderr, "epoch %zu  train_loss %.4f  val_loss %.4f  acc %.4f  top5 %.4f  top10 %.4f  (%.1fs)\n", l.epoch,
                 l.train_loss, l.validation.loss, l.validation.accuracy, l.validation.top5, l.validation.top10,
                 l.wall_seconds);
}

json report_json(const eval::MetricsReport& r) {
    return {{"domain", r.domain},
            {"source_domain", r.source_domain ? json(*r.source_domain) : json(nullptr)},
            {"loss", r.loss},
            {"accuracy", r.accuracy},
            {"top5", r.top5},
            {"top10", r.top10},
            {"token_count", r.token_count},
            {"masking", eval::kMaskingConvention}};
}

std::vector<std::size_t> parse_sizes(const std::string& list) {
    std::vector<std::size_t> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(std::stoul(item));
    return out;
}

std::vector<std::string> parse_names(const std::string& list) {
    std::vector<std::string> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"atxf: transformer chatbots with cross-domain weight transfer"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON config with model/train sections");
    app.add_option("--seed", g.seed, "Seed for initialisation, shuffling and splits");
    app.add_option("--data-dir", g.data_dir, "Per-domain corpus directory")->capture_default_str();
    app.add_option("--model-dir", g.model_dir, "Vocabulary, checkpoints and results (env ATXF_MODEL_DIR)");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Thread, clean and split one domain's CSV dump");
    std::string csv_path, domain, author, banned, names;
    ingest->add_option("--csv", csv_path, "Tweet CSV dump")->required();
    ingest->add_option("--domain", domain, "Domain name")->required();
    ingest->add_option("--author", author, "Support account that answers customers")->required();
    ingest->add_option("--banned", banned, "Banned-word list")->required();
    ingest->add_option("--names", names, "Optional name list to strip");
    double english_threshold = 0.1;
    std::size_t max_tokens = 40;
    ingest->add_option("--english-threshold", english_threshold)->capture_default_str();
    ingest->add_option("--max-tokens", max_tokens)->capture_default_str();

    // build-vocab
    auto* build_vocab = app.add_subcommand("build-vocab", "Build the shared vocabulary over every domain");
    std::optional<std::size_t> capacity;
    build_vocab->add_option("--capacity", capacity, "Total ids including the four specials");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train one domain from scratch or from another domain");
    std::string from;
    train_cmd->add_option("--domain", domain, "Target domain")->required();
    train_cmd->add_option("--from", from, "Source domain whose checkpoint initialises the weights");
    std::optional<std::size_t> epochs;
    train_cmd->add_option("--epochs", epochs);

    // matrix
    auto* matrix = app.add_subcommand("matrix", "Run every baseline and transfer cell, resumably");
    std::string domain_list;
    std::optional<std::size_t> stop_after;
    bool keep_transfers = false;
    matrix->add_option("--domains", domain_list, "Comma-separated; default: every ingested domain");
    matrix->add_option("--stop-after", stop_after, "Execute at most this many new cells");
    matrix->add_flag("--keep-transfer-checkpoints", keep_transfers);

    // grid
    auto* grid = app.add_subcommand("grid", "Heads x dense-width topology search on one domain");
    std::string heads_list = "2,4,8,16", dff_list = "64,128,256,512";
    grid->add_option("--domain", domain, "Domain")->required();
    grid->add_option("--heads", heads_list)->capture_default_str();
    grid->add_option("--dff", dff_list)->capture_default_str();
    std::size_t grid_epochs = 10;
    grid->add_option("--epochs", grid_epochs)->capture_default_str();

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Validation metrics of a checkpoint");
    std::string checkpoint_path;
    evaluate->add_option("--domain", domain, "Domain whose validation split is scored")->required();
    evaluate->add_option("--checkpoint", checkpoint_path, "Default: <model-dir>/<domain>.ckpt");

    // chat
    auto* chat_cmd = app.add_subcommand("chat", "Terminal chat with one domain model");
    chat_cmd->add_option("--domain", domain, "Domain")->required();
    bool sample = false;
    double temperature = 1.0;
    chat_cmd->add_flag("--sample", sample, "Sample instead of greedy argmax");
    chat_cmd->add_option("--temperature", temperature)->capture_default_str();

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP inference service over every domain checkpoint");
    std::string host = "127.0.0.1", static_dir;
    int port = 8080;
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();
    serve->add_option("--static", static_dir, "Directory served at /");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto s = resolve(g);
        std::cerr << "kernels: " << kernels::name(kernels::active_isa()) << "\n";

        if (*ingest) {
            corpus::CleaningConfig cc;
            cc.banned_words_path = banned;
            if (!names.empty()) cc.name_list_path = names;
            cc.english_stopword_threshold = english_threshold;
            cc.max_sequence_tokens = max_tokens;
            const corpus::Cleaner cleaner(cc);
            const auto raw = corpus::ingest_csv(csv_path, domain);
            corpus::PipelineReport report;
            auto pairs = corpus::build_domain_pairs(raw.records, author, domain, cleaner, &report);
            const auto split = corpus::split_70_30(std::move(pairs), s.seed);
            const auto dir = s.data_dir / domain;
            corpus::write_pairs_tsv(dir / "train.tsv", split.train);
            corpus::write_pairs_tsv(dir / "validation.tsv", split.validation);
            std::cout << json{{"domain", domain},
                              {"records", raw.records.size()},
                              {"skipped_rows", raw.skipped},
                              {"threaded", report.threaded},
                              {"dropped_empty", report.dropped_empty},
                              {"dropped_profanity", report.dropped_profanity},
                              {"dropped_non_english", report.dropped_non_english},
                              {"train", split.train.size()},
                              {"validation", split.validation.size()}}
                             .dump()
                      << "\n";
        } else if (*build_vocab) {
            std::vector<std::vector<corpus::ConversationPair>> corpora;
            for (const auto& d : discover_domains(s.data_dir)) {
                auto split = load_split(s.data_dir, d);
                split.train.insert(split.train.end(), split.validation.begin(), split.validation.end());
                corpora.push_back(std::move(split.train));
            }
            const auto vocab = Vocabulary::build(corpora, capacity.value_or(s.vocab_capacity));
            vocab.save(s.model_dir / "vocab.txt");
            const auto stats = corpus::corpus_stats(corpora);
            std::cout << json{{"size", vocab.size()},
                              {"unique_tokens", stats.unique_tokens},
                              {"coverage", coverage(vocab.content_size(), stats.unique_tokens)},
                              {"fingerprint", vocab.fingerprint()}}
                             .dump()
                      << "\n";
        } else if (*train_cmd) {
            const auto vocab = load_vocab(s);
            auto tc = s.train;
            if (epochs) tc.epochs = *epochs;
            train::TrainHooks hooks;
            hooks.on_epoch = print_epoch;
            const auto corpus = load_split(s.data_dir, domain);
            train::TrainResult r;
            fs::path out;
            if (from.empty()) {
                r = train::train(corpus, vocab, model_for(s, vocab), train::Init::random(s.seed), tc, hooks);
                out = s.model_dir / (domain + ".ckpt");
            } else {
                const auto source = load_checkpoint(s.model_dir / (from + ".ckpt"), vocab);
                r = train::train(corpus, vocab, source.config(), train::Init::from(source), tc, hooks);
                out = s.model_dir / (from + "__" + domain + ".ckpt");
            }
            save_checkpoint(r.checkpoint, out);
            std::cout << json{{"checkpoint", out.string()},
                              {"best_epoch", r.best_epoch},
                              {"validation", report_json(r.logs[r.best_epoch - 1].validation)}}
                             .dump()
                      << "\n";
        } else if (*matrix) {
            const auto vocab = load_vocab(s);
            experiment::ExperimentPlan plan;
            plan.domains = domain_list.empty() ? discover_domains(s.data_dir) : parse_names(domain_list);
            plan.model = model_for(s, vocab);
            plan.baseline = plan.transfer = s.train;
            plan.seed = s.seed;
            std::map<std::string, corpus::SplitCorpus> corpora;
            for (const auto& d : plan.domains) corpora[d] = load_split(s.data_dir, d);
            experiment::MatrixOptions options;
            options.results_dir = s.model_dir / "results";
            options.checkpoint_dir = s.model_dir;
            options.save_transfer_checkpoints = keep_transfers;
            options.stop_after = stop_after;
            options.on_cell = [](const experiment::Cell& c, const eval::MetricsReport& r) {
                std::fprintf(stderr, "cell %s  val_loss %.4f  acc %.4f\n", c.key().c_str(), r.loss, r.accuracy);
            };
            const auto run = experiment::run_experiment_matrix(plan, corpora, vocab, options);
            const auto tables = eval::render_matrix_tables(run.reports, plan.domains);
            fs::create_directories(s.model_dir / "tables");
            for (const auto& t : tables.tables)
                std::ofstream(s.model_dir / "tables" / (std::string(eval::metric_name(t.metric)) + ".csv")) << t.to_csv();
            std::ofstream(s.model_dir / "tables" / "improvement.csv") << tables.summary_csv;
            std::cout << json{{"cells", experiment::matrix_cell_count(plan.domains.size())},
                              {"executed", run.executed},
                              {"skipped", run.skipped},
                              {"complete", run.complete},
                              {"improved_targets", tables.improved_targets}}
                             .dump()
                      << "\n";
        } else if (*grid) {
            const auto vocab = load_vocab(s);
            auto tc = s.train;
            tc.epochs = grid_epochs;
            tc.patience = 0;
            const auto heads = parse_sizes(heads_list), dff = parse_sizes(dff_list);
            const auto r = experiment::topology_grid_search(load_split(s.data_dir, domain), vocab, model_for(s, vocab),
                                                            heads, dff, tc, s.seed);
            json points = json::array();
            for (const auto& p : r.points)
                points.push_back({{"heads", p.heads}, {"d_ff", p.d_ff}, {"validation_loss", p.validation_loss}});
            std::cout << json{{"points", points}, {"best", {{"heads", r.best.heads}, {"d_ff", r.best.d_ff}}}}.dump()
                      << "\n";
        } else if (*evaluate) {
            const auto vocab = load_vocab(s);
            const fs::path path = checkpoint_path.empty() ? s.model_dir / (domain + ".ckpt") : fs::path(checkpoint_path);
            const auto ck = load_checkpoint(path, vocab);
            const auto split = load_split(s.data_dir, domain);
            const auto data = encode_pairs(split.validation, vocab, ck.config().max_len - 2);
            const auto r = eval::evaluate_model(ck.parameters, data, s.train.eval_batch_size, domain,
                                                ck.provenance.source_domain);
            std::cout << report_json(r).dump() << "\n";
        } else if (*chat_cmd) {
            chat::ChatService::Options options;
            options.pacing.words_per_minute = s.words_per_minute;
            if (sample) options.decode.temperature = temperature;
            options.decode.seed = s.seed;
            const auto vocab = load_vocab(s);
            chat::ChatService service(vocab, options);
            service.add_model(load_checkpoint(s.model_dir / (domain + ".ckpt"), vocab));
            chat::run_repl(service, domain, std::cin, std::cout);
        } else if (*serve) {
            chat::ChatService::Options options;
            options.pacing.words_per_minute = s.words_per_minute;
            auto service = server::load_model_dir(s.model_dir, options);
            server::ServerOptions so{host, port, static_dir.empty() ? std::nullopt : std::optional<fs::path>(static_dir)};
            server::HttpServer http(*service, so);
            const int bound = http.bind();
            std::fprintf(stderr, "serving %zu domain(s) on http://%s:%d\n", service->domains().size(), host.c_str(), bound);
            http.run();
        }
    } catch (const Error& e) {
        std::cerr << "error (" << e.kind() << "): " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
