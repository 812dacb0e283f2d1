#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nebula/tokenize.hpp"

#include <regex>

#include "nebula/errors.hpp"
#include "nebula/rng.hpp"
#include "test_support.hpp"

using namespace nebula;

namespace {

// Reference wordpunct splitter built on std::regex, independent of the
// scanner in the implementation.
std::vector<std::string> wordpunct_reference(const std::string& text) {
    static const std::regex pattern(R"([A-Za-z0-9_]+|[^\sA-Za-z0-9_]+)");
    std::vector<std::string> tokens;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), pattern);
         it != std::sregex_iterator(); ++it)
        tokens.push_back(it->str());
    return tokens;
}

std::string random_word(Rng& rng) {
    static const char alphabet[] = "abcxyz0189._\\<>%-";
    const std::size_t len = 1 + rng.uniform_u64(12);
    std::string word;
    for (std::size_t i = 0; i < len; ++i)
        word.push_back(alphabet[rng.uniform_u64(sizeof(alphabet) - 1)]);
    return word;
}

}  // namespace

TEST_CASE("whitespace tokenizer") {
    CHECK(tokenize_whitespace("0x0 0x1 kernel32.getprocaddress") ==
          std::vector<std::string>{"0x0", "0x1", "kernel32.getprocaddress"});
    CHECK(tokenize_whitespace("").empty());
    CHECK(tokenize_whitespace("a\t b\n") == std::vector<std::string>{"a", "b"});
    CHECK(tokenize_whitespace("  \n\t ").empty());
}

TEST_CASE("wordpunct tokenizer matches the regex reference") {
    CHECK(tokenize_wordpunct("kernel32.getprocaddress") ==
          std::vector<std::string>{"kernel32", ".", "getprocaddress"});
    CHECK(tokenize_wordpunct("abc") == std::vector<std::string>{"abc"});
    CHECK(tokenize_wordpunct("<drive>\\x") ==
          std::vector<std::string>{"<", "drive", ">\\", "x"});

    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        std::string text;
        const std::size_t words = rng.uniform_u64(6);
        for (std::size_t w = 0; w < words; ++w) {
            if (w) text.push_back(rng.uniform() < 0.3 ? '\t' : ' ');
            text += random_word(rng);
        }
        CHECK(tokenize_wordpunct(text) == wordpunct_reference(text));
    }
}

TEST_CASE("bpe training: hand-traced merge on aaab") {
    // Pairs in "aaab": (a,a) twice, (a,b) once -> merge (a,a); afterwards no
    // pair repeats, so training stops with a single merge.
    const BpeModel model = BpeModel::train({"aaab"}, 5);
    REQUIRE(model.merges().size() == 1);
    CHECK(model.merges()[0] == std::pair<std::string, std::string>{"a", "a"});
    CHECK(model.segment_word("aaab") == std::vector<std::string>{"aa", "a", "b"});
}

TEST_CASE("bpe training: degenerate corpora") {
    // Target at or below the alphabet size: zero merges.
    const BpeModel tiny = BpeModel::train({"aaab"}, 2);
    CHECK(tiny.merges().empty());
    CHECK(tiny.segment_word("aaab") ==
          std::vector<std::string>{"a", "a", "a", "b"});

    // Distinct single characters: no repeating pair.
    const BpeModel flat = BpeModel::train({"ab cd ef"}, 100);
    CHECK(flat.merges().empty());

    CHECK_THROWS_AS(BpeModel::train({}, 10), EmptyCorpus);
}

TEST_CASE("bpe training: tie broken by lexicographic concatenation") {
    // "abab": pairs (a,b) x2 and (b,a) x1 -> (a,b) wins on count.
    // "xyxy zwzw": (x,y) and (z,w) both occur twice; "xy" < "zw".
    const BpeModel model = BpeModel::train({"xyxy zwzw"}, 7);
    REQUIRE(model.merges().size() >= 1);
    CHECK(model.merges()[0] == std::pair<std::string, std::string>{"x", "y"});
}

TEST_CASE("bpe: segmentation is lossless on 1000 fuzzed strings") {
    Rng rng(1234);
    std::vector<std::string> corpus;
    for (int i = 0; i < 40; ++i) {
        std::string doc;
        for (int w = 0; w < 8; ++w) {
            if (w) doc.push_back(' ');
            doc += random_word(rng);
        }
        corpus.push_back(doc);
    }
    const BpeModel model = BpeModel::train(corpus, 300);

    for (int i = 0; i < 1000; ++i) {
        const std::string word = random_word(rng);
        const auto pieces = model.segment_word(word);
        std::string joined;
        for (const auto& piece : pieces) joined += piece;
        REQUIRE(joined == word);
    }
    CHECK(model.tokenize("").empty());
}

TEST_CASE("bpe: model round-trips through its merge-list file") {
    const BpeModel model = BpeModel::train({"aaab aaac aaad"}, 8);
    test_support::TempDir dir;
    model.save(dir.path() / "merges.txt");
    const BpeModel loaded = BpeModel::load(dir.path() / "merges.txt");
    CHECK(loaded.merges() == model.merges());
    CHECK(loaded.segment_word("aaab") == model.segment_word("aaab"));
}

TEST_CASE("vocabulary: frequency ranking with lexicographic ties") {
    const std::vector<std::vector<std::string>> corpus = {{"a", "a", "b"}, {"a", "c"}};
    const Vocabulary vocab = Vocabulary::build(corpus, 4);
    CHECK(vocab.size() == 4);
    CHECK(vocab.lookup("<pad>") == Vocabulary::kPadId);
    CHECK(vocab.lookup("<unk>") == Vocabulary::kUnkId);
    CHECK(vocab.lookup("a") == 2);
    CHECK(vocab.lookup("b") == 3);  // tie with c broken lexicographically
    CHECK(vocab.lookup("c") == Vocabulary::kUnkId);

    const Vocabulary all = Vocabulary::build(corpus, 100);
    CHECK(all.size() == 5);

    const Vocabulary empty = Vocabulary::build({}, 10);
    CHECK(empty.size() == 2);
}

TEST_CASE("vocabulary: deterministic across runs and through persistence") {
    Rng rng(77);
    std::vector<std::vector<std::string>> corpus;
    for (int d = 0; d < 30; ++d) {
        std::vector<std::string> doc;
        for (int t = 0; t < 50; ++t) doc.push_back(random_word(rng));
        corpus.push_back(doc);
    }
    const Vocabulary a = Vocabulary::build(corpus, 64);
    const Vocabulary b = Vocabulary::build(corpus, 64);
    REQUIRE(a.size() == b.size());
    for (std::uint32_t id = 0; id < a.size(); ++id) CHECK(a.token(id) == b.token(id));

    test_support::TempDir dir;
    a.save(dir.path() / "vocab.json", "whitespace");
    const auto loaded = load_vocabulary(dir.path() / "vocab.json");
    CHECK(loaded.tokenizer_name == "whitespace");
    REQUIRE(loaded.vocab.size() == a.size());
    for (std::uint32_t id = 0; id < a.size(); ++id) {
        CHECK(loaded.vocab.token(id) == a.token(id));
        CHECK(loaded.vocab.frequency(id) == a.frequency(id));
    }
}

TEST_CASE("encode: truncation, padding and the mask prefix") {
    const Vocabulary vocab = Vocabulary::build({{"a", "a", "b"}}, 10);
    const TokenSequence seq = encode({"a", "b"}, vocab, 4);
    CHECK(seq.ids == std::vector<std::uint32_t>{2, 3, 0, 0});
    CHECK(seq.mask == std::vector<bool>{true, true, false, false});
    CHECK(seq.content_length() == 2);

    // Unknown token maps to unk at its position.
    const TokenSequence unk = encode({"zzz"}, vocab, 2);
    CHECK(unk.ids[0] == Vocabulary::kUnkId);

    // 600 tokens, N=512: exactly the first 512 encoded.
    std::vector<std::string> many(600, "a");
    const TokenSequence truncated = encode(many, vocab, 512);
    CHECK(truncated.length() == 512);
    CHECK(truncated.content_length() == 512);
}

TEST_CASE("encode: totality and monotone truncation over a property sweep") {
    Rng rng(9);
    const Vocabulary vocab = Vocabulary::build({{"a", "b", "c", "d"}}, 5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t len = rng.uniform_u64(40);
        const std::size_t n_small = 1 + rng.uniform_u64(24);
        const std::size_t n_large = n_small + rng.uniform_u64(24);
        std::vector<std::string> tokens;
        for (std::size_t i = 0; i < len; ++i) tokens.push_back(random_word(rng));

        const TokenSequence small = encode(tokens, vocab, n_small);
        const TokenSequence large = encode(tokens, vocab, n_large);
        REQUIRE(small.length() == n_small);
        REQUIRE(large.length() == n_large);

        // Mask is a contiguous prefix; pads carry pad_id.
        for (std::size_t i = 0; i < n_small; ++i) {
            if (i < small.content_length()) {
                CHECK(small.mask[i]);
            } else {
                CHECK_FALSE(small.mask[i]);
                CHECK(small.ids[i] == Vocabulary::kPadId);
            }
            CHECK(small.ids[i] < vocab.size());
        }
        // Prefix-consistent restriction.
        for (std::size_t i = 0; i < n_small; ++i)
            if (small.mask[i]) CHECK(small.ids[i] == large.ids[i]);
    }
}
