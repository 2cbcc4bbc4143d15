#include "atxf/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "atxf/errors.hpp"
#include "atxf/sha256.hpp"

namespace atxf {

namespace {
const char* const kSpecialNames[kNumSpecials] = {"<pad>", "<start>", "<end>", "<unk>"};
}

Vocabulary::Vocabulary(std::vector<std::string> id_to_token) : id_to_token_(std::move(id_to_token)) {
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
        if (!token_to_id_.emplace(id_to_token_[i], static_cast<TokenId>(i)).second)
            throw CorpusError("duplicate vocabulary token '" + id_to_token_[i] + "'");
    }
    fingerprint_ = to_hex(sha256(serialize()));
}

Vocabulary Vocabulary::build(std::span<const std::vector<corpus::ConversationPair>> corpora, std::size_t capacity) {
    if (capacity < kNumSpecials + 1) throw ConfigError("vocabulary capacity must be at least 5");
    std::unordered_map<std::string, std::uint64_t> counts;
    for (const auto& c : corpora)
        for (const auto& p : c) {
            for (auto& t : corpus::split_tokens(p.context)) ++counts[std::move(t)];
            for (auto& t : corpus::split_tokens(p.response)) ++counts[std::move(t)];
        }
    if (counts.empty()) throw CorpusError("cannot build a vocabulary from empty corpora");

    std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    const std::size_t keep = std::min(ranked.size(), capacity - kNumSpecials);
    std::vector<std::string> tokens(kSpecialNames, kSpecialNames + kNumSpecials);
    for (std::size_t i = 0; i < keep; ++i) tokens.push_back(std::move(ranked[i].first));
    return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_to_token) {
    if (id_to_token.size() < kNumSpecials)
        throw CorpusError("vocabulary must start with the four special tokens");
    for (std::size_t i = 0; i < kNumSpecials; ++i)
        if (id_to_token[i] != kSpecialNames[i])
            throw CorpusError("vocabulary id " + std::to_string(i) + " must be " + kSpecialNames[i]);
    return Vocabulary(std::move(id_to_token));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read vocabulary " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) tokens.push_back(line);
    return from_tokens(std::move(tokens));
}

std::string Vocabulary::serialize() const {
    std::string out;
    for (const auto& t : id_to_token_) {
        out += t;
        out.push_back('\n');
    }
    return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write vocabulary " + path.string());
    out << serialize();
    if (!out) throw IoError("write failed for " + path.string());
}

TokenId Vocabulary::id(std::string_view token) const {
    const auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return token_to_id_.count(std::string(token)) > 0; }

const std::string& Vocabulary::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
        throw EncodingError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(id_to_token_.size()));
    return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> encode(std::string_view text, const Vocabulary& vocab, std::size_t max_content) {
    std::vector<TokenId> ids;
    ids.reserve(max_content + 2);
    ids.push_back(kStart);
    for (const auto& tok : corpus::split_tokens(text)) {
        if (ids.size() > max_content) break;
        ids.push_back(vocab.id(tok));
    }
    ids.push_back(kEnd);
    ids.resize(max_content + 2, kPad);
    return ids;
}

std::string decode(std::span<const TokenId> ids, const Vocabulary& vocab) {
    std::string out;
    for (auto id : ids) {
        if (id == kEnd) break;
        if (id == kStart || id == kPad) continue;
        if (!out.empty()) out.push_back(' ');
        out += vocab.token(id);
    }
    return out;
}

double coverage(std::size_t vocab_content_size, std::size_t global_unique) {
    if (global_unique == 0) throw ContractError("coverage: global unique-token count is zero");
    return static_cast<double>(vocab_content_size) / static_cast<double>(global_unique);
}

}  // namespace atxf
