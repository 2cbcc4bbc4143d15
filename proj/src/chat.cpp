#include "atxf/chat.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>

#include "atxf/errors.hpp"
#include "atxf/model.hpp"

namespace atxf::chat {

void PacingConfig::validate() const {
    if (!(words_per_minute > 0.0) || !std::isfinite(words_per_minute))
        throw ConfigError("words_per_minute must be positive");
}

double tts_wait_seconds(std::string_view text, const PacingConfig& pacing) {
    pacing.validate();
    return static_cast<double>(corpus::split_tokens(text).size()) / pacing.words_per_minute * 60.0;
}

namespace {

// Softmax in double over one logit row.
std::vector<double> probabilities(const float* row, std::size_t vocab, double temperature = 1.0) {
    double mx = row[0];
    for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    std::vector<double> p(vocab);
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) z += p[j] = std::exp((static_cast<double>(row[j]) - mx) / temperature);
    for (auto& x : p) x /= z;
    return p;
}

TokenId argmax(const float* row, std::size_t vocab) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < vocab; ++j)
        if (row[j] > row[best]) best = j;
    return static_cast<TokenId>(best);
}

}  // namespace

DecodeResult greedy_decode(const Checkpoint& ck, const Vocabulary& vocab, std::string_view input,
                           const DecodeOptions& options, const corpus::WordSet& names) {
    require_vocabulary(ck, vocab);
    const auto cleaned = corpus::clean_text(input, names);
    if (!cleaned || cleaned->empty()) throw InputError("message is empty after cleaning");
    if (options.temperature && !(*options.temperature > 0.0)) throw ConfigError("temperature must be positive");

    const auto& config = ck.config();
    const std::size_t max_content = config.max_len - 2;
    const std::size_t limit = options.max_tokens ? std::min(options.max_tokens, max_content) : max_content;

    auto encoded = encode(*cleaned, vocab, max_content);
    while (encoded.size() > 1 && encoded.back() == kPad) encoded.pop_back();
    const auto source = model::TokenBatch::from_rows({encoded});

    ad::Tape<float> tape;
    model::BoundModel<float> bound(tape, ck.parameters, false);
    const auto memory = model::encode_memory(bound, source);
    const std::size_t encoded_nodes = tape.size();
    std::mt19937_64 rng(options.seed);

    DecodeResult result;
    std::vector<TokenId> prefix{kStart};
    const std::size_t V = config.vocab_size;
    while (result.ids.size() < limit) {
        const auto logits = model::decode_logits(bound, memory, source, model::TokenBatch::from_rows({prefix}));
        const float* row = logits.value().data().data() + (prefix.size() - 1) * V;
        if (prefix.size() == 1) {
            const auto p = probabilities(row, V);
            std::vector<std::size_t> order(V);
            for (std::size_t j = 0; j < V; ++j) order[j] = j;
            const std::size_t k = std::min(options.top_tokens, V);
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                              [&](std::size_t a, std::size_t b) { return p[a] != p[b] ? p[a] > p[b] : a < b; });
            for (std::size_t j = 0; j < k; ++j)
                result.first_step_top.push_back(
                    {static_cast<TokenId>(order[j]), vocab.token(static_cast<TokenId>(order[j])), p[order[j]]});
        }
        TokenId next;
        if (options.temperature) {
            const auto p = probabilities(row, V, *options.temperature);
            next = static_cast<TokenId>(std::discrete_distribution<std::size_t>(p.begin(), p.end())(rng));
        } else {
            next = argmax(row, V);
        }
        if (next == kEnd) break;
        result.ids.push_back(next);
        prefix.push_back(next);
        tape.truncate(encoded_nodes);
    }
    result.reply = decode(result.ids, vocab);
    return result;
}

// ---- service --------------------------------------------------------------------

ChatService::ChatService(Vocabulary vocab) : ChatService(std::move(vocab), Options{}) {}

ChatService::ChatService(Vocabulary vocab, Options options) : vocab_(std::move(vocab)), options_(std::move(options)) {
    options_.pacing.validate();
    if (options_.history_bound == 0) throw ConfigError("history bound must be at least 1");
}

void ChatService::add_model(Checkpoint checkpoint) {
    require_vocabulary(checkpoint, vocab_);
    auto shared = std::make_shared<const Checkpoint>(std::move(checkpoint));
    std::lock_guard guard(lock_);
    models_[shared->provenance.domain] = std::move(shared);
}

std::vector<std::string> ChatService::domains() const {
    std::lock_guard guard(lock_);
    std::vector<std::string> out;
    for (const auto& [name, _] : models_) out.push_back(name);
    return out;
}

bool ChatService::has_domain(const std::string& domain) const {
    std::lock_guard guard(lock_);
    return models_.count(domain) > 0;
}

std::string ChatService::create_session(const std::string& domain) {
    std::lock_guard guard(lock_);
    if (!models_.count(domain)) throw LookupError("unknown domain '" + domain + "'");
    std::string id;
    do {
        id = "s" + std::to_string(next_session_++);
    } while (sessions_.count(id));
    auto s = std::make_shared<SessionSlot>();
    s->state = {id, domain, {}};
    sessions_.emplace(id, std::move(s));
    return id;
}

std::shared_ptr<ChatService::SessionSlot> ChatService::slot(const std::string& id) const {
    std::lock_guard guard(lock_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw LookupError("unknown session '" + id + "'");
    return it->second;
}

ChatSession ChatService::session(const std::string& id) const {
    auto s = slot(id);
    std::lock_guard turn(s->turn_lock);
    return s->state;
}

ChatReply ChatService::run_turn(SessionSlot& s, const std::string& message) {
    std::shared_ptr<const Checkpoint> model;
    {
        std::lock_guard guard(lock_);
        const auto it = models_.find(s.state.domain);
        if (it == models_.end()) throw LookupError("unknown domain '" + s.state.domain + "'");
        model = it->second;
    }
    auto decoded = greedy_decode(*model, vocab_, message, options_.decode, options_.names);
    s.state.history.push_back({message, decoded.reply});
    while (s.state.history.size() > options_.history_bound) s.state.history.pop_front();

    ChatReply reply;
    reply.session = s.state.id;
    reply.domain = s.state.domain;
    reply.wait_seconds = tts_wait_seconds(decoded.reply, options_.pacing);
    reply.reply = std::move(decoded.reply);
    reply.top_tokens = std::move(decoded.first_step_top);
    reply.history_length = s.state.history.size();
    return reply;
}

ChatReply ChatService::chat_turn(const std::string& session_id, const std::string& message) {
    auto s = slot(session_id);
    std::lock_guard turn(s->turn_lock);
    return run_turn(*s, message);
}

ChatReply ChatService::chat(const std::string& domain, const std::string& session_id, const std::string& message) {
    std::shared_ptr<SessionSlot> s;
    {
        std::lock_guard guard(lock_);
        if (!models_.count(domain)) throw LookupError("unknown domain '" + domain + "'");
        auto& entry = sessions_[session_id];
        if (!entry) {
            entry = std::make_shared<SessionSlot>();
            entry->state = {session_id, domain, {}};
        }
        s = entry;
    }
    std::lock_guard turn(s->turn_lock);
    if (s->state.domain != domain)
        throw LookupError("session '" + session_id + "' belongs to domain '" + s->state.domain + "'");
    return run_turn(*s, message);
}

void run_repl(ChatService& service, const std::string& domain, std::istream& in, std::ostream& out) {
    const auto id = service.create_session(domain);
    std::string line;
    out << "you> " << std::flush;
    while (std::getline(in, line)) {
        if (line == "/quit") break;
        try {
            const auto r = service.chat_turn(id, line);
            out << "bot> " << r.reply << "\n";
        } catch (const InputError& e) {
            out << "error: " << e.what() << "\n";
        }
        out << "you> " << std::flush;
    }
    out << "\n";
}

}  // namespace atxf::chat
