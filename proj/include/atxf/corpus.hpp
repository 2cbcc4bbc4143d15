#pragma once

// Customer-support corpus pipeline: CSV ingest, threading of customer tweets
// to the brand's replies, text cleaning, profanity and language filters,
// truncation and the seeded 70:30 split.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace atxf::corpus {

struct RawRecord {
    std::string tweet_id;
    std::string author_id;
    bool inbound = false;  // true = written by a customer
    std::string created_at;
    std::string text;
    std::vector<std::string> response_tweet_ids;
    std::optional<std::string> in_response_to_tweet_id;
};

struct IngestResult {
    std::string domain;
    std::vector<RawRecord> records;
    std::size_t skipped = 0;
};

// Reads the seven-column dump. Rows with a wrong field count, empty text, an
// unparseable `inbound` flag or a duplicate tweet id are skipped and counted.
// Throws SchemaError when header columns are missing, IoError if unreadable.
IngestResult ingest_csv(const std::filesystem::path& path, const std::string& domain);

struct RawPair {
    std::string context;
    std::string response;
};

// Links each inbound customer tweet to the first reply from `support_author`
// whose in_response_to_tweet_id names it. Output follows reply order.
std::vector<RawPair> thread_pairs(const std::vector<RawRecord>& records, std::string_view support_author);

struct ConversationPair {
    std::string domain;
    std::string context;
    std::string response;

    friend bool operator==(const ConversationPair&, const ConversationPair&) = default;
};

struct CleaningConfig {
    std::filesystem::path banned_words_path;
    std::optional<std::filesystem::path> name_list_path;
    double english_stopword_threshold = 0.1;
    std::size_t max_sequence_tokens = 40;
};

using WordSet = std::unordered_set<std::string>;

// One lower-case token per line; blank lines and surrounding whitespace ignored.
WordSet load_word_list(const std::filesystem::path& path);

// Lower-cases, strips @handles and URLs, drops name-list tokens, removes every
// character outside [a-z0-9 ] and collapses whitespace. nullopt = DROP.
std::optional<std::string> clean_text(std::string_view text, const WordSet& names = {});

// Whole-word match; throws ConfigError for an empty banned list.
std::vector<ConversationPair> filter_profanity(std::vector<ConversationPair> pairs, const WordSet& banned);

// Bundled English function words used by the language heuristic.
const WordSet& english_function_words();

// Keeps a pair iff the share of customer-side tokens that are English
// function words is >= threshold.
std::vector<ConversationPair> filter_non_english(std::vector<ConversationPair> pairs, double threshold);

// Keeps the first `max_tokens` tokens of each side.
ConversationPair truncate_pair(ConversationPair pair, std::size_t max_tokens);

struct SplitCorpus {
    std::string domain;
    std::vector<ConversationPair> train;
    std::vector<ConversationPair> validation;
};

// Seeded Fisher-Yates shuffle, then the first floor(0.7 N) pairs train.
// Throws CorpusError for fewer than two pairs.
SplitCorpus split_70_30(std::vector<ConversationPair> pairs, std::uint64_t seed);

std::size_t train_count_70_30(std::size_t n);

struct CorpusStats {
    std::map<std::string, std::size_t> pairs_per_domain;
    std::size_t unique_tokens = 0;
};

CorpusStats corpus_stats(std::span<const std::vector<ConversationPair>> corpora);

// Loaded form of CleaningConfig.
class Cleaner {
public:
    explicit Cleaner(const CleaningConfig& config);
    Cleaner(CleaningConfig config, WordSet banned, WordSet names);

    std::optional<std::string> clean(std::string_view text) const { return clean_text(text, names_); }
    const CleaningConfig& config() const noexcept { return config_; }
    const WordSet& banned() const noexcept { return banned_; }
    const WordSet& names() const noexcept { return names_; }

private:
    CleaningConfig config_;
    WordSet banned_;
    WordSet names_;
};

struct PipelineReport {
    std::size_t threaded = 0;
    std::size_t dropped_empty = 0;
    std::size_t dropped_profanity = 0;
    std::size_t dropped_non_english = 0;
};

// thread -> clean -> profanity -> language -> truncate.
std::vector<ConversationPair> build_domain_pairs(const std::vector<RawRecord>& records, std::string_view support_author,
                                                 const std::string& domain, const Cleaner& cleaner,
                                                 PipelineReport* report = nullptr);

// `context<TAB>response` per line.
std::vector<ConversationPair> read_pairs_tsv(const std::filesystem::path& path, const std::string& domain);
void write_pairs_tsv(const std::filesystem::path& path, const std::vector<ConversationPair>& pairs);

std::vector<std::string> split_tokens(std::string_view text);

}  // namespace atxf::corpus
