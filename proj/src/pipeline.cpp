#include "nebula/pipeline.hpp"

#include <algorithm>
#include <ostream>

#include <json.hpp>

#include "nebula/errors.hpp"
#include "nebula/normalize.hpp"

namespace nebula {

void PipelineConfig::validate() const {
    tokenizer_kind_from_name(tokenizer);  // throws on unknown names
    if (vocab_size < 3) throw UserError("vocab_size must be >= 3");
    if (seq_len == 0) throw UserError("seq_len must be positive");
    if (target_fpr < 0.0 || target_fpr > 1.0) throw UserError("target_fpr must be in [0, 1]");
    if (seq_len % model.span != 0) throw UserError("span must divide seq_len");
    train.validate();
    ModelConfig probe = model;
    probe.vocab_size = std::max<std::size_t>(vocab_size, 3);
    probe.seq_len = seq_len;
    probe.validate();
}

PipelineConfig PipelineConfig::from_json_file(const std::filesystem::path& path) {
    ojson doc;
    try {
        doc = ojson::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw MalformedJson(std::string("pipeline config: ") + e.what(), e.byte);
    }
    PipelineConfig c;
    c.filter_profile = doc.value("filter_profile", c.filter_profile);
    c.filter_enabled = doc.value("filter_enabled", c.filter_enabled);
    c.tokenizer = doc.value("tokenizer", c.tokenizer);
    c.vocab_size = doc.value("vocab_size", c.vocab_size);
    c.seq_len = doc.value("seq_len", c.seq_len);
    c.target_fpr = doc.value("target_fpr", c.target_fpr);
    c.out_dir = doc.value("out_dir", c.out_dir);
    if (doc.contains("model")) {
        const ojson& m = doc["model"];
        c.model.embed_dim = m.value("embed_dim", c.model.embed_dim);
        c.model.num_layers = m.value("num_layers", c.model.num_layers);
        c.model.num_heads = m.value("num_heads", c.model.num_heads);
        c.model.span = m.value("span", c.model.span);
        c.model.ffn_dim = m.value("ffn_dim", c.model.ffn_dim);
        c.model.classifier_hidden = m.value("classifier_hidden", c.model.classifier_hidden);
        c.model.dropout = m.value("dropout", c.model.dropout);
    }
    if (doc.contains("train")) {
        const ojson& t = doc["train"];
        c.train.lr = t.value("lr", c.train.lr);
        c.train.beta1 = t.value("beta1", c.train.beta1);
        c.train.beta2 = t.value("beta2", c.train.beta2);
        c.train.eps = t.value("eps", c.train.eps);
        c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        c.train.budget_seconds = t.value("budget_seconds", c.train.budget_seconds);
        c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
        c.train.folds = t.value("folds", c.train.folds);
        c.train.seed = t.value("seed", c.train.seed);
    }
    return c;
}

std::vector<CleanedRecord> clean_dataset(const std::filesystem::path& manifest,
                                         const FieldFilter& filter,
                                         const NormalizerConfig& normalizer, bool strict,
                                         std::ostream* warnings, CleanStats* stats) {
    const auto entries = load_manifest(manifest);
    const auto base = manifest.parent_path();
    std::vector<CleanedRecord> out;
    out.reserve(entries.size());
    for (const ManifestEntry& entry : entries) {
        std::filesystem::path path = entry.path;
        if (path.is_relative()) path = base / path;
        try {
            if (!std::filesystem::exists(path)) throw MissingFile(path.string());
            const RawReport raw = parse_report(read_file(path), entry.path);
            const RawReport filtered = apply_field_filter(raw, filter);
            const CleanReport clean = flatten_to_text(filtered);
            CleanedRecord record;
            record.id = entry.path;
            record.text = normalize(clean.text, normalizer);
            record.label = entry.label;
            if (stats) {
                ++stats->reports;
                stats->records += clean.record_count;
            }
            out.push_back(std::move(record));
        } catch (const UserError& e) {
            if (strict) throw;
            if (stats) ++stats->skipped;
            if (warnings) (*warnings) << "warning: skipping " << entry.path << ": " << e.what()
                                      << "\n";
        }
    }
    return out;
}

void write_cleaned_jsonl(const std::filesystem::path& path,
                         const std::vector<CleanedRecord>& records) {
    std::string out;
    for (const CleanedRecord& record : records) {
        ojson line;
        line["id"] = record.id;
        line["text"] = record.text;
        line["label"] = record.label;
        out += line.dump();
        out.push_back('\n');
    }
    write_file(path, out);
}

std::vector<CleanedRecord> read_cleaned_jsonl(const std::filesystem::path& path) {
    const std::string contents = read_file(path);
    std::vector<CleanedRecord> records;
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < contents.size()) {
        std::size_t end = contents.find('\n', start);
        if (end == std::string::npos) end = contents.size();
        ++line_no;
        if (end > start) {
            ojson line;
            try {
                line = ojson::parse(contents.substr(start, end - start));
            } catch (const nlohmann::json::parse_error& e) {
                throw BadLabel("cleaned JSONL line " + std::to_string(line_no) + ": " + e.what(),
                               line_no);
            }
            CleanedRecord record;
            record.id = line.value("id", std::string{});
            record.text = line.at("text").get<std::string>();
            record.label = line.at("label").get<int>();
            if (record.label < 0)
                throw BadLabel("cleaned JSONL line " + std::to_string(line_no) + ": negative label",
                               line_no);
            records.push_back(std::move(record));
        }
        start = end + 1;
    }
    return records;
}

std::vector<std::vector<std::string>> tokenize_corpus(const std::vector<std::string>& texts,
                                                      TokenizerKind kind, const BpeModel* bpe) {
    std::vector<std::vector<std::string>> tokens;
    tokens.reserve(texts.size());
    for (const std::string& text : texts) {
        switch (kind) {
            case TokenizerKind::Whitespace: tokens.push_back(tokenize_whitespace(text)); break;
            case TokenizerKind::Wordpunct: tokens.push_back(tokenize_wordpunct(text)); break;
            case TokenizerKind::Bpe:
                if (!bpe) throw UserError("BPE tokenizer selected but no merges provided");
                tokens.push_back(bpe->tokenize(text));
                break;
        }
    }
    return tokens;
}

Dataset encode_dataset(const std::vector<CleanedRecord>& records, const Vocabulary& vocab,
                       TokenizerKind kind, const BpeModel* bpe, std::size_t seq_len) {
    std::vector<std::string> texts;
    texts.reserve(records.size());
    for (const CleanedRecord& r : records) texts.push_back(r.text);
    const auto tokens = tokenize_corpus(texts, kind, bpe);
    Dataset data;
    data.sequences.reserve(records.size());
    data.labels.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        data.sequences.push_back(encode(tokens[i], vocab, seq_len));
        data.labels.push_back(records[i].label);
    }
    return data;
}

int max_label(const std::vector<CleanedRecord>& records) {
    int m = 0;
    for (const CleanedRecord& r : records) m = std::max(m, r.label);
    return m;
}

}  // namespace nebula
