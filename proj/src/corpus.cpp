#include "atxf/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "atxf/errors.hpp"
#include "csv.hpp"

namespace atxf::corpus {

namespace {

constexpr const char* kColumns[] = {"tweet_id",   "author_id",         "inbound",
                                    "created_at", "text",              "response_tweet_id",
                                    "in_response_to_tweet_id"};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::optional<bool> parse_bool(std::string_view s) {
    std::string v = trim(s);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    return std::nullopt;
}

std::vector<std::string> split_ids(std::string_view s) {
    std::vector<std::string> ids;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (auto t = trim(cur); !t.empty()) ids.push_back(t);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (auto t = trim(cur); !t.empty()) ids.push_back(t);
    return ids;
}

bool starts_with_at(std::string_view s, std::size_t i, std::string_view prefix) {
    return s.substr(i, prefix.size()) == prefix;
}

bool is_kept_char(char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == ' '; }

bool handle_char(char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'; }

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

IngestResult ingest_csv(const std::filesystem::path& path, const std::string& domain) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    csv::Reader reader(in);
    auto header = reader.next_row();
    if (!header) throw SchemaError(path.string() + ": empty file, missing columns");

    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < header->size(); ++i) {
        std::string name = trim((*header)[i]);
        if (i == 0 && name.rfind("\xEF\xBB\xBF", 0) == 0) name.erase(0, 3);
        position.emplace(name, i);
    }
    std::string missing;
    for (const char* col : kColumns)
        if (!position.count(col)) missing += (missing.empty() ? "" : ", ") + std::string(col);
    if (!missing.empty()) throw SchemaError(path.string() + ": missing columns: " + missing);

    auto col = [&](const char* name) { return position.at(name); };
    IngestResult result;
    result.domain = domain;
    std::unordered_set<std::string> seen;
    while (auto row = reader.next_row()) {
        if (row->size() == 1 && trim((*row)[0]).empty()) continue;  // blank line
        if (reader.last_row_malformed() || row->size() != header->size()) {
            ++result.skipped;
            continue;
        }
        const auto& r = *row;
        RawRecord rec;
        rec.tweet_id = trim(r[col("tweet_id")]);
        rec.author_id = trim(r[col("author_id")]);
        const auto inbound = parse_bool(r[col("inbound")]);
        rec.created_at = r[col("created_at")];
        rec.text = r[col("text")];
        rec.response_tweet_ids = split_ids(r[col("response_tweet_id")]);
        if (auto parent = trim(r[col("in_response_to_tweet_id")]); !parent.empty()) {
            // The public dump stores ids as floats ("119237.0") in this column.
            if (parent.size() > 2 && parent.compare(parent.size() - 2, 2, ".0") == 0) parent.resize(parent.size() - 2);
            rec.in_response_to_tweet_id = parent;
        }
        if (rec.tweet_id.empty() || !inbound || trim(rec.text).empty() || !seen.insert(rec.tweet_id).second) {
            ++result.skipped;
            continue;
        }
        rec.inbound = *inbound;
        result.records.push_back(std::move(rec));
    }
    return result;
}

std::vector<RawPair> thread_pairs(const std::vector<RawRecord>& records, std::string_view support_author) {
    std::unordered_map<std::string, const RawRecord*> by_id;
    for (const auto& r : records) by_id.emplace(r.tweet_id, &r);
    std::unordered_set<std::string> answered;
    std::vector<RawPair> pairs;
    for (const auto& reply : records) {
        if (reply.inbound || reply.author_id != support_author || !reply.in_response_to_tweet_id) continue;
        const auto it = by_id.find(*reply.in_response_to_tweet_id);
        if (it == by_id.end() || !it->second->inbound) continue;
        if (!answered.insert(it->second->tweet_id).second) continue;
        pairs.push_back({it->second->text, reply.text});
    }
    return pairs;
}

WordSet load_word_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read word list " + path.string());
    WordSet words;
    std::string line;
    while (std::getline(in, line))
        if (auto w = trim(line); !w.empty()) words.insert(std::move(w));
    return words;
}

std::vector<std::string> split_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        const std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        if (i > start) tokens.emplace_back(text.substr(start, i - start));
    }
    return tokens;
}

std::optional<std::string> clean_text(std::string_view text, const WordSet& names) {
    std::string lower(text);
    for (auto& c : lower)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');

    std::string stripped;
    stripped.reserve(lower.size());
    for (std::size_t i = 0; i < lower.size();) {
        if (starts_with_at(lower, i, "http://") || starts_with_at(lower, i, "https://") ||
            starts_with_at(lower, i, "www.")) {
            while (i < lower.size() && !is_space(lower[i])) ++i;
            continue;
        }
        if (lower[i] == '@') {
            ++i;
            while (i < lower.size() && handle_char(lower[i])) ++i;
            continue;
        }
        const char c = is_space(lower[i]) ? ' ' : lower[i];
        if (is_kept_char(c)) stripped.push_back(c);
        ++i;
    }

    std::string out;
    for (auto& tok : split_tokens(stripped)) {
        if (names.count(tok)) continue;
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    if (out.empty()) return std::nullopt;
    return out;
}

std::vector<ConversationPair> filter_profanity(std::vector<ConversationPair> pairs, const WordSet& banned) {
    if (banned.empty()) throw ConfigError("banned-word list is empty");
    auto dirty = [&](const std::string& s) {
        for (const auto& tok : split_tokens(s))
            if (banned.count(tok)) return true;
        return false;
    };
    std::erase_if(pairs, [&](const ConversationPair& p) { return dirty(p.context) || dirty(p.response); });
    return pairs;
}

const WordSet& english_function_words() {
    static const WordSet words{
        "a",      "about",  "above", "after", "again", "against", "all",   "am",    "an",      "and",   "any",
        "are",    "as",     "at",    "be",    "because", "been",  "before", "being", "below",  "between", "both",
        "but",    "by",     "can",   "cant",  "could", "couldnt", "did",   "didnt", "do",      "does",  "doesnt",
        "doing",  "dont",   "down",  "during", "each", "few",     "for",   "from",  "further", "get",   "got",
        "had",    "has",    "hasnt", "have",  "havent", "having", "he",    "her",   "here",    "hers",  "him",
        "his",    "how",    "i",     "if",    "im",    "in",      "into",  "is",    "isnt",    "it",    "its",
        "ive",    "just",   "me",    "more",  "most",  "my",      "myself", "no",   "nor",     "not",   "now",
        "of",     "off",    "on",    "once",  "only",  "or",      "other", "our",   "ours",    "out",   "over",
        "own",    "please", "same",  "she",   "should", "so",     "some",  "still", "such",    "than",  "thank",
        "thanks", "that",   "the",   "their", "them",  "then",    "there", "these", "they",    "this",  "those",
        "through", "to",    "too",   "under", "until", "up",      "us",    "very",  "was",     "wasnt", "we",
        "were",   "what",   "when",  "where", "which", "while",   "who",   "why",   "will",    "with",  "wont",
        "would",  "yes",    "you",   "your",  "youre", "yours",
    };
    return words;
}

std::vector<ConversationPair> filter_non_english(std::vector<ConversationPair> pairs, double threshold) {
    if (threshold < 0.0 || threshold > 1.0) throw ConfigError("english threshold must lie in [0, 1]");
    const auto& fw = english_function_words();
    std::erase_if(pairs, [&](const ConversationPair& p) {
        const auto tokens = split_tokens(p.context);
        if (tokens.empty()) return true;
        const auto hits = std::count_if(tokens.begin(), tokens.end(), [&](const std::string& t) { return fw.count(t) > 0; });
        return static_cast<double>(hits) / static_cast<double>(tokens.size()) < threshold;
    });
    return pairs;
}

ConversationPair truncate_pair(ConversationPair pair, std::size_t max_tokens) {
    auto cut = [max_tokens](const std::string& s) {
        auto tokens = split_tokens(s);
        if (tokens.size() <= max_tokens) return s;
        std::string out;
        for (std::size_t i = 0; i < max_tokens; ++i) {
            if (i) out.push_back(' ');
            out += tokens[i];
        }
        return out;
    };
    pair.context = cut(pair.context);
    pair.response = cut(pair.response);
    return pair;
}

std::size_t train_count_70_30(std::size_t n) {
    // Integer form of floor(0.7 n); avoids 0.7 * n rounding error.
    return (7 * n) / 10;
}

SplitCorpus split_70_30(std::vector<ConversationPair> pairs, std::uint64_t seed) {
    if (pairs.size() < 2) throw CorpusError("need at least 2 pairs to split, got " + std::to_string(pairs.size()));
    std::mt19937_64 rng(seed);
    for (std::size_t i = pairs.size() - 1; i > 0; --i) std::swap(pairs[i], pairs[rng() % (i + 1)]);
    SplitCorpus split;
    split.domain = pairs.front().domain;
    const auto n_train = static_cast<std::ptrdiff_t>(train_count_70_30(pairs.size()));
    split.train.assign(std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.begin() + n_train));
    split.validation.assign(std::make_move_iterator(pairs.begin() + n_train), std::make_move_iterator(pairs.end()));
    return split;
}

CorpusStats corpus_stats(std::span<const std::vector<ConversationPair>> corpora) {
    CorpusStats stats;
    std::unordered_set<std::string> vocab;
    for (const auto& corpus : corpora) {
        for (const auto& p : corpus) {
            ++stats.pairs_per_domain[p.domain];
            for (auto& t : split_tokens(p.context)) vocab.insert(std::move(t));
            for (auto& t : split_tokens(p.response)) vocab.insert(std::move(t));
        }
    }
    stats.unique_tokens = vocab.size();
    return stats;
}

Cleaner::Cleaner(const CleaningConfig& config)
    : Cleaner(config, load_word_list(config.banned_words_path),
              config.name_list_path ? load_word_list(*config.name_list_path) : WordSet{}) {}

Cleaner::Cleaner(CleaningConfig config, WordSet banned, WordSet names)
    : config_(std::move(config)), banned_(std::move(banned)), names_(std::move(names)) {
    if (banned_.empty()) throw ConfigError("banned-word list is empty");
    if (config_.english_stopword_threshold < 0.0 || config_.english_stopword_threshold > 1.0)
        throw ConfigError("english threshold must lie in [0, 1]");
    if (config_.max_sequence_tokens == 0) throw ConfigError("max_sequence_tokens must be positive");
}

std::vector<ConversationPair> build_domain_pairs(const std::vector<RawRecord>& records, std::string_view support_author,
                                                 const std::string& domain, const Cleaner& cleaner,
                                                 PipelineReport* report) {
    PipelineReport local;
    const auto raw = thread_pairs(records, support_author);
    local.threaded = raw.size();
    std::vector<ConversationPair> pairs;
    for (const auto& r : raw) {
        auto ctx = cleaner.clean(r.context);
        auto rsp = cleaner.clean(r.response);
        if (!ctx || !rsp) {
            ++local.dropped_empty;
            continue;
        }
        pairs.push_back({domain, std::move(*ctx), std::move(*rsp)});
    }
    std::size_t before = pairs.size();
    pairs = filter_profanity(std::move(pairs), cleaner.banned());
    local.dropped_profanity = before - pairs.size();
    before = pairs.size();
    pairs = filter_non_english(std::move(pairs), cleaner.config().english_stopword_threshold);
    local.dropped_non_english = before - pairs.size();
    for (auto& p : pairs) p = truncate_pair(std::move(p), cleaner.config().max_sequence_tokens);
    if (report) *report = local;
    return pairs;
}

std::vector<ConversationPair> read_pairs_tsv(const std::filesystem::path& path, const std::string& domain) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<ConversationPair> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
            throw CorpusError(path.string() + ":" + std::to_string(lineno) + ": expected context<TAB>response");
        pairs.push_back({domain, line.substr(0, tab), line.substr(tab + 1)});
    }
    return pairs;
}

void write_pairs_tsv(const std::filesystem::path& path, const std::vector<ConversationPair>& pairs) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& p : pairs) out << p.context << '\t' << p.response << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace atxf::corpus
