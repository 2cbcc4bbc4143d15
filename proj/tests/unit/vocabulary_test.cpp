#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "atxf/errors.hpp"
#include "atxf/vocabulary.hpp"
#include "doctest.h"

using namespace atxf;
using corpus::ConversationPair;

namespace {

std::vector<std::vector<ConversationPair>> one_corpus(std::string context, std::string response = "") {
    return {{ConversationPair{"d", std::move(context), std::move(response)}}};
}

}  // namespace

TEST_CASE("build: frequency order then lexicographic tie-break") {
    const auto corpora = one_corpus("a b a");
    const auto v = Vocabulary::build(corpora, 10);
    REQUIRE(v.size() == 6);
    CHECK(v.token(kPad) == "<pad>");
    CHECK(v.token(kStart) == "<start>");
    CHECK(v.token(kEnd) == "<end>");
    CHECK(v.token(kUnk) == "<unk>");
    CHECK(v.id("a") == 4);
    CHECK(v.id("b") == 5);

    const auto ties = Vocabulary::build(one_corpus("zeta alpha mid"), 10);
    CHECK(ties.token(4) == "alpha");
    CHECK(ties.token(5) == "mid");
    CHECK(ties.token(6) == "zeta");
}

TEST_CASE("build: capacity cut keeps the most frequent tokens") {
    const auto v = Vocabulary::build(one_corpus("x y y z z z"), 5);
    CHECK(v.size() == 5);
    CHECK(v.token(4) == "z");
    CHECK(v.id("y") == kUnk);
}

TEST_CASE("build: errors") {
    std::vector<std::vector<ConversationPair>> empty{{}};
    CHECK_THROWS_AS(Vocabulary::build(empty, 10), CorpusError);
    CHECK_THROWS_AS(Vocabulary::build(one_corpus("a"), 4), ConfigError);
}

TEST_CASE("fingerprint is deterministic and content-sensitive") {
    const auto a = Vocabulary::build(one_corpus("hello world", "hi"), 10);
    const auto b = Vocabulary::build(one_corpus("hello world", "hi"), 10);
    const auto c = Vocabulary::build(one_corpus("hello world", "hey"), 10);
    CHECK(a.fingerprint() == b.fingerprint());
    CHECK(a.fingerprint() != c.fingerprint());
    CHECK(a.fingerprint().size() == 64);
}

TEST_CASE("property: build is insensitive to corpus order") {
    std::mt19937_64 rng(4);
    const std::vector<std::string> words{"a", "b", "c", "d", "e", "f", "g", "h"};
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::vector<ConversationPair>> corpora(3);
        for (auto& c : corpora)
            for (int i = 0; i < 5; ++i) {
                std::string s;
                for (int w = 0; w < 4; ++w) s += words[rng() % words.size()] + " ";
                c.push_back({"d", s, words[rng() % words.size()]});
            }
        const std::size_t cap = 5 + rng() % 6;
        const auto base = Vocabulary::build(corpora, cap);
        std::reverse(corpora.begin(), corpora.end());
        for (auto& c : corpora) std::shuffle(c.begin(), c.end(), rng);
        const auto permuted = Vocabulary::build(corpora, cap);
        CHECK(base.tokens() == permuted.tokens());
        CHECK(base.fingerprint() == permuted.fingerprint());
        std::set<std::string> unique(base.tokens().begin(), base.tokens().end());
        CHECK(unique.size() == base.size());
        for (std::size_t i = 0; i < base.size(); ++i) CHECK(base.id(base.tokens()[i]) == static_cast<TokenId>(i));
    }
}

TEST_CASE("encode and decode") {
    const auto v = Vocabulary::build(one_corpus("a b a"), 10);
    const auto ids = encode("a b", v, 4);
    CHECK(ids == std::vector<TokenId>{kStart, v.id("a"), v.id("b"), kEnd, kPad, kPad});

    const auto with_oov = encode("a zzz b", v, 4);
    CHECK(with_oov[2] == kUnk);
    CHECK(decode(with_oov, v) == "a <unk> b");

    const auto truncated = encode("a b a b a b", v, 3);
    CHECK(truncated.size() == 5);
    CHECK(truncated.back() == kEnd);
}

TEST_CASE("property: decode(encode(s)) == s for in-vocabulary text") {
    const auto v = Vocabulary::build(one_corpus("one two three four five six seven"), 100);
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        std::string s;
        const std::size_t len = 1 + rng() % 10;
        for (std::size_t i = 0; i < len; ++i) {
            if (i) s += ' ';
            s += v.token(static_cast<TokenId>(kNumSpecials + rng() % v.content_size()));
        }
        const auto ids = encode(s, v, 10);
        CHECK(ids.size() == 12);
        CHECK(ids.front() == kStart);
        CHECK(decode(ids, v) == s);
        // PAD only as a suffix
        const auto first_pad = std::find(ids.begin(), ids.end(), kPad);
        CHECK(std::all_of(first_pad, ids.end(), [](TokenId t) { return t == kPad; }));
    }
}

TEST_CASE("save/load reproduces tokens and fingerprint") {
    const auto v = Vocabulary::build(one_corpus("the cat sat on the mat"), 100);
    const auto path = std::filesystem::temp_directory_path() / "atxf_vocab_test.txt";
    v.save(path);
    const auto loaded = Vocabulary::load(path);
    CHECK(loaded.tokens() == v.tokens());
    CHECK(loaded.fingerprint() == v.fingerprint());
    std::filesystem::remove(path);
    CHECK_THROWS_AS(Vocabulary::from_tokens({"a", "b", "c", "d"}), CorpusError);
}

TEST_CASE("coverage") {
    CHECK(coverage(30000, 91967) == doctest::Approx(0.3262).epsilon(0.0001 / 0.3262));
    CHECK(std::abs(coverage(30000, 91967) - 0.3262) <= 0.0001);
    CHECK(coverage(500, 500) == 1.0);
    CHECK(std::abs(coverage(10000, 91967) - 0.1087) <= 0.0001);
    CHECK_THROWS_AS(coverage(1, 0), ContractError);
}
