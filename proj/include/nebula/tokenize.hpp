#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace nebula {

enum class TokenizerKind { Whitespace, Wordpunct, Bpe };

TokenizerKind tokenizer_kind_from_name(const std::string& name);
std::string tokenizer_kind_name(TokenizerKind kind);

std::vector<std::string> tokenize_whitespace(std::string_view text);

// Alternating maximal alphanumeric/underscore runs and maximal punctuation
// runs; whitespace is discarded.
std::vector<std::string> tokenize_wordpunct(std::string_view text);

// Byte pair encoding trained within whitespace-delimited words: merges never
// cross word boundaries, so segmentation is deterministic per word.
class BpeModel {
public:
    BpeModel() = default;

    // Greedy merge loop: start from single-byte symbols, repeatedly merge the
    // globally most frequent adjacent pair until `target_vocab` symbols
    // (alphabet + merges) exist or no pair occurs twice. Ties break on the
    // lexicographically smallest concatenated pair, then smallest left part.
    static BpeModel train(const std::vector<std::string>& corpus, std::size_t target_vocab);

    std::vector<std::string> tokenize(std::string_view text) const;
    std::vector<std::string> segment_word(std::string_view word) const;

    const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
    std::size_t alphabet_size() const { return alphabet_size_; }

    void save(const std::filesystem::path& path) const;
    static BpeModel load(const std::filesystem::path& path);

private:
    std::vector<std::pair<std::string, std::string>> merges_;
    std::size_t alphabet_size_ = 0;
};

struct LoadedVocabulary;

// Frequency-ranked token <-> id bijection with reserved specials.
class Vocabulary {
public:
    static constexpr std::uint32_t kPadId = 0;
    static constexpr std::uint32_t kUnkId = 1;
    static constexpr const char* kPadToken = "<pad>";
    static constexpr const char* kUnkToken = "<unk>";

    Vocabulary();

    // Top (V-2) tokens by descending corpus frequency, ties broken by
    // lexicographically ascending token.
    static Vocabulary build(const std::vector<std::vector<std::string>>& tokenized_corpus,
                            std::size_t max_size);

    std::uint32_t lookup(std::string_view token) const;  // unk for unseen tokens
    const std::string& token(std::uint32_t id) const;
    std::size_t size() const { return id_to_token_.size(); }
    std::uint64_t frequency(std::uint32_t id) const { return frequencies_[id]; }

    void save(const std::filesystem::path& path, const std::string& tokenizer_name) const;

private:
    friend LoadedVocabulary load_vocabulary(const std::filesystem::path& path);
    std::unordered_map<std::string, std::uint32_t> token_to_id_;
    std::vector<std::string> id_to_token_;
    std::vector<std::uint64_t> frequencies_;
};

struct LoadedVocabulary {
    Vocabulary vocab;
    std::string tokenizer_name;
};

LoadedVocabulary load_vocabulary(const std::filesystem::path& path);

struct TokenSequence {
    std::vector<std::uint32_t> ids;  // length N
    std::vector<bool> mask;          // true = real token; contiguous prefix

    std::size_t length() const { return ids.size(); }
    std::size_t content_length() const;
};

// First min(len, N) tokens mapped to ids (unknown -> unk), right-padded with
// pad; the mask marks real tokens.
TokenSequence encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                     std::size_t seq_len);

}  // namespace nebula
