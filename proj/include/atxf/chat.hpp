#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "atxf/checkpoint.hpp"
#include "atxf/corpus.hpp"
#include "atxf/vocabulary.hpp"

namespace atxf::chat {

// ---- pacing -------------------------------------------------------------------

struct PacingConfig {
    double words_per_minute = 152.88;
    void validate() const;  // ConfigError unless > 0
};

// Whitespace word count / WPM * 60.
double tts_wait_seconds(std::string_view text, const PacingConfig& pacing = {});

// ---- decoding -------------------------------------------------------------------

struct TokenScore {
    TokenId id;
    std::string token;
    double probability;
};

struct DecodeOptions {
    std::size_t max_tokens = 0;  // 0 = as many as the model's max_len allows
    // Sampling instead of argmax; off unless set.
    std::optional<double> temperature;
    std::uint64_t seed = 0;
    std::size_t top_tokens = 5;
};

struct DecodeResult {
    std::string reply;
    std::vector<TokenId> ids;                // emitted tokens, END excluded
    std::vector<TokenScore> first_step_top;  // highest-probability first tokens
};

// Cleans `input` like the corpus pipeline, feeds START + emitted tokens, takes
// the argmax (lower id on ties) until END or the length limit.
// Throws InputError if nothing survives cleaning, TransferError on a vocabulary mismatch.
DecodeResult greedy_decode(const Checkpoint& checkpoint, const Vocabulary& vocab, std::string_view input,
                           const DecodeOptions& options = {}, const corpus::WordSet& names = {});

// ---- sessions -------------------------------------------------------------------

struct Turn {
    std::string user;
    std::string bot;
};

struct ChatSession {
    std::string id;
    std::string domain;
    std::deque<Turn> history;  // newest last, at most the service's bound
};

struct ChatReply {
    std::string session;
    std::string domain;
    std::string reply;
    double wait_seconds = 0.0;
    std::vector<TokenScore> top_tokens;
    std::size_t history_length = 0;
};

// Serves read-only domain models to many sessions. Safe to call concurrently;
// turns on one session are serialised, different sessions run in parallel.
class ChatService {
public:
    struct Options {
        PacingConfig pacing;
        std::size_t history_bound = 1;
        DecodeOptions decode;
        corpus::WordSet names;
    };

    explicit ChatService(Vocabulary vocab);
    ChatService(Vocabulary vocab, Options options);

    // TransferError when the checkpoint's vocabulary differs; later loads of
    // the same domain replace earlier ones.
    void add_model(Checkpoint checkpoint);
    std::vector<std::string> domains() const;
    bool has_domain(const std::string& domain) const;
    const Vocabulary& vocabulary() const noexcept { return vocab_; }

    // LookupError for an unknown domain.
    std::string create_session(const std::string& domain);
    ChatSession session(const std::string& id) const;  // LookupError

    // LookupError for an unknown session.
    ChatReply chat_turn(const std::string& session_id, const std::string& message);
    // Creates `session_id` bound to `domain` on first use. LookupError for an
    // unknown domain or a session bound to another domain.
    ChatReply chat(const std::string& domain, const std::string& session_id, const std::string& message);

private:
    struct SessionSlot {
        std::mutex turn_lock;
        ChatSession state;
    };

    std::shared_ptr<SessionSlot> slot(const std::string& id) const;
    ChatReply run_turn(SessionSlot& slot, const std::string& message);

    Vocabulary vocab_;
    Options options_;
    mutable std::mutex lock_;
    std::map<std::string, std::shared_ptr<const Checkpoint>> models_;
    std::map<std::string, std::shared_ptr<SessionSlot>> sessions_;
    std::uint64_t next_session_ = 1;
};

// Terminal loop: one message per line, replies prefixed with "bot> ".
// Input errors are reported inline and the loop continues; EOF or "/quit" ends it.
void run_repl(ChatService& service, const std::string& domain, std::istream& in, std::ostream& out);

// ---- speech -------------------------------------------------------------------

// Adapter for an external speech-to-text engine. None ships; the service
// itself only accepts text.
class SpeechRecognizer {
public:
    virtual ~SpeechRecognizer() = default;
    virtual std::string transcribe(std::span<const std::byte> audio, std::string_view format) = 0;
};

}  // namespace atxf::chat
