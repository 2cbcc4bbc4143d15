#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "atxf/corpus.hpp"

namespace atxf {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kStart = 1;
inline constexpr TokenId kEnd = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kNumSpecials = 4;

// Default capacity keeps 30000 content tokens on top of the four specials.
inline constexpr std::size_t kDefaultVocabularyCapacity = 30000 + kNumSpecials;

// Shared token <-> id map. Immutable once built; ids are dense, specials take
// 0..3, content tokens follow in descending frequency (ties lexicographic).
class Vocabulary {
public:
    // Counts every whitespace token on both sides of every pair in every corpus.
    // Throws CorpusError if no tokens exist, ConfigError if capacity < 5.
    static Vocabulary build(std::span<const std::vector<corpus::ConversationPair>> corpora,
                            std::size_t capacity = kDefaultVocabularyCapacity);

    // Reads the one-token-per-line file format.
    static Vocabulary load(const std::filesystem::path& path);
    static Vocabulary from_tokens(std::vector<std::string> id_to_token);

    void save(const std::filesystem::path& path) const;
    // Exact bytes of the vocabulary file.
    std::string serialize() const;

    std::size_t size() const noexcept { return id_to_token_.size(); }
    std::size_t content_size() const noexcept { return size() - kNumSpecials; }
    TokenId id(std::string_view token) const;  // kUnk when absent
    bool contains(std::string_view token) const;
    const std::string& token(TokenId id) const;
    const std::vector<std::string>& tokens() const noexcept { return id_to_token_; }

    // Hex SHA-256 of serialize().
    const std::string& fingerprint() const noexcept { return fingerprint_; }

private:
    explicit Vocabulary(std::vector<std::string> id_to_token);

    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, TokenId> token_to_id_;
    std::string fingerprint_;
};

// START + ids + END, truncated to max_content tokens, PAD-suffixed to a fixed
// length of max_content + 2.
std::vector<TokenId> encode(std::string_view text, const Vocabulary& vocab, std::size_t max_content);

// Inverse of encode: skips START and PAD, stops at END.
std::string decode(std::span<const TokenId> ids, const Vocabulary& vocab);

// Share of the global token inventory that the vocabulary covers.
// Throws ContractError on a zero denominator.
double coverage(std::size_t vocab_content_size, std::size_t global_unique);

}  // namespace atxf
