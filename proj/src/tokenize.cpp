#include "nebula/tokenize.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "nebula/errors.hpp"
#include "nebula/ingest.hpp"

namespace nebula {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

struct PairHash {
    std::size_t operator()(const std::pair<std::string, std::string>& p) const {
        std::size_t h1 = std::hash<std::string>{}(p.first);
        std::size_t h2 = std::hash<std::string>{}(p.second);
        return h1 ^ (h2 * 0x9e3779b97f4a7c15ULL + (h1 << 6) + (h1 >> 2));
    }
};

std::vector<std::string> split_bytes(std::string_view word) {
    std::vector<std::string> symbols;
    symbols.reserve(word.size());
    for (char c : word) symbols.emplace_back(1, c);
    return symbols;
}

// One left-to-right, non-overlapping merge pass.
void apply_merge(std::vector<std::string>& symbols, const std::string& left,
                 const std::string& right) {
    std::size_t write = 0;
    std::size_t read = 0;
    while (read < symbols.size()) {
        if (read + 1 < symbols.size() && symbols[read] == left && symbols[read + 1] == right) {
            symbols[write] = left + right;
            read += 2;
        } else {
            if (write != read) symbols[write] = std::move(symbols[read]);
            ++read;
        }
        ++write;
    }
    symbols.resize(write);
}

}  // namespace

TokenizerKind tokenizer_kind_from_name(const std::string& name) {
    if (name == "whitespace") return TokenizerKind::Whitespace;
    if (name == "wordpunct") return TokenizerKind::Wordpunct;
    if (name == "bpe") return TokenizerKind::Bpe;
    throw UserError("unknown tokenizer: " + name + " (expected whitespace, wordpunct, or bpe)");
}

std::string tokenizer_kind_name(TokenizerKind kind) {
    switch (kind) {
        case TokenizerKind::Whitespace: return "whitespace";
        case TokenizerKind::Wordpunct: return "wordpunct";
        case TokenizerKind::Bpe: return "bpe";
    }
    return "whitespace";
}

std::vector<std::string> tokenize_whitespace(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j])) ++j;
        if (j > i) tokens.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return tokens;
}

std::vector<std::string> tokenize_wordpunct(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        if (is_space(text[i])) {
            ++i;
            continue;
        }
        const bool word = is_word_char(text[i]);
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j]) && is_word_char(text[j]) == word) ++j;
        tokens.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return tokens;
}

BpeModel BpeModel::train(const std::vector<std::string>& corpus, std::size_t target_vocab) {
    if (corpus.empty()) throw EmptyCorpus();

    // Collapse the corpus into distinct words with counts; merges operate on
    // word types, weighted by frequency.
    std::unordered_map<std::string, std::uint64_t> word_counts;
    for (const std::string& text : corpus)
        for (std::string& word : tokenize_whitespace(text)) word_counts[std::move(word)] += 1;

    struct Word {
        std::vector<std::string> symbols;
        std::uint64_t count;
    };
    std::vector<Word> words;
    words.reserve(word_counts.size());
    std::unordered_map<std::string, bool> alphabet;
    for (const auto& [word, count] : word_counts) {
        for (char c : word) alphabet[std::string(1, c)] = true;
        words.push_back(Word{split_bytes(word), count});
    }

    BpeModel model;
    model.alphabet_size_ = alphabet.size();

    std::size_t symbol_count = model.alphabet_size_;
    while (symbol_count < target_vocab) {
        std::unordered_map<std::pair<std::string, std::string>, std::uint64_t, PairHash> pair_counts;
        for (const Word& word : words) {
            for (std::size_t i = 0; i + 1 < word.symbols.size(); ++i)
                pair_counts[{word.symbols[i], word.symbols[i + 1]}] += word.count;
        }
        const std::pair<std::string, std::string>* best = nullptr;
        std::uint64_t best_count = 0;
        std::string best_concat;
        for (const auto& [pair, count] : pair_counts) {
            if (count < 2) continue;
            std::string concat = pair.first + pair.second;
            const bool better =
                best == nullptr || count > best_count ||
                (count == best_count &&
                 (concat < best_concat || (concat == best_concat && pair.first < best->first)));
            if (better) {
                best = &pair;
                best_count = count;
                best_concat = std::move(concat);
            }
        }
        if (best == nullptr) break;  // no pair repeats
        model.merges_.push_back(*best);
        for (Word& word : words) apply_merge(word.symbols, best->first, best->second);
        ++symbol_count;
    }
    return model;
}

std::vector<std::string> BpeModel::segment_word(std::string_view word) const {
    std::vector<std::string> symbols = split_bytes(word);
    for (const auto& [left, right] : merges_) apply_merge(symbols, left, right);
    return symbols;
}

std::vector<std::string> BpeModel::tokenize(std::string_view text) const {
    std::vector<std::string> tokens;
    for (const std::string& word : tokenize_whitespace(text)) {
        std::vector<std::string> pieces = segment_word(word);
        tokens.insert(tokens.end(), std::make_move_iterator(pieces.begin()),
                      std::make_move_iterator(pieces.end()));
    }
    return tokens;
}

void BpeModel::save(const std::filesystem::path& path) const {
    std::ostringstream oss;
    for (const auto& [left, right] : merges_) oss << left << ' ' << right << '\n';
    write_file(path, oss.str());
}

BpeModel BpeModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile(path.string());
    BpeModel model;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto space = line.find(' ');
        if (space == std::string::npos || space == 0 || space + 1 >= line.size())
            throw UserError("bad merge at line " + std::to_string(line_no) + " in " +
                            path.string());
        model.merges_.emplace_back(line.substr(0, space), line.substr(space + 1));
    }
    return model;
}

Vocabulary::Vocabulary() {
    id_to_token_ = {kPadToken, kUnkToken};
    frequencies_ = {0, 0};
    token_to_id_[kPadToken] = kPadId;
    token_to_id_[kUnkToken] = kUnkId;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& tokenized_corpus,
                             std::size_t max_size) {
    std::unordered_map<std::string, std::uint64_t> counts;
    for (const auto& doc : tokenized_corpus)
        for (const std::string& token : doc) {
            if (token == kPadToken || token == kUnkToken) continue;
            counts[token] += 1;
        }

    std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary vocab;
    const std::size_t budget = max_size >= 2 ? max_size - 2 : 0;
    const std::size_t take = std::min(budget, ranked.size());
    for (std::size_t i = 0; i < take; ++i) {
        const auto id = static_cast<std::uint32_t>(vocab.id_to_token_.size());
        vocab.token_to_id_[ranked[i].first] = id;
        vocab.id_to_token_.push_back(ranked[i].first);
        vocab.frequencies_.push_back(ranked[i].second);
    }
    return vocab;
}

std::uint32_t Vocabulary::lookup(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(std::uint32_t id) const {
    if (id >= id_to_token_.size())
        throw IdOutOfRange("token id " + std::to_string(id) + " out of range");
    return id_to_token_[id];
}

void Vocabulary::save(const std::filesystem::path& path, const std::string& tokenizer_name) const {
    ojson doc;
    doc["tokenizer"] = tokenizer_name;
    doc["pad_id"] = kPadId;
    doc["unk_id"] = kUnkId;
    ojson tokens = ojson::array();
    for (std::size_t id = 2; id < id_to_token_.size(); ++id) {
        tokens.push_back(ojson::array({id_to_token_[id], id, frequencies_[id]}));
    }
    doc["tokens"] = std::move(tokens);
    write_file(path, doc.dump(2) + "\n");
}

LoadedVocabulary load_vocabulary(const std::filesystem::path& path) {
    ojson doc;
    try {
        doc = ojson::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw MalformedJson(std::string("vocabulary: ") + e.what(), e.byte);
    }
    LoadedVocabulary loaded;
    loaded.tokenizer_name = doc.value("tokenizer", std::string("whitespace"));
    for (const ojson& entry : doc["tokens"]) {
        const std::string token = entry[0].get<std::string>();
        const auto id = entry[1].get<std::uint32_t>();
        if (id != loaded.vocab.id_to_token_.size())
            throw UserError("vocabulary ids must be dense and ordered in " + path.string());
        loaded.vocab.token_to_id_[token] = id;
        loaded.vocab.id_to_token_.push_back(token);
        loaded.vocab.frequencies_.push_back(entry[2].get<std::uint64_t>());
    }
    return loaded;
}

std::size_t TokenSequence::content_length() const {
    std::size_t n = 0;
    while (n < mask.size() && mask[n]) ++n;
    return n;
}

TokenSequence encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                     std::size_t seq_len) {
    TokenSequence seq;
    seq.ids.assign(seq_len, Vocabulary::kPadId);
    seq.mask.assign(seq_len, false);
    const std::size_t count = std::min(tokens.size(), seq_len);
    for (std::size_t i = 0; i < count; ++i) {
        seq.ids[i] = vocab.lookup(tokens[i]);
        seq.mask[i] = true;
    }
    return seq;
}

}  // namespace nebula
