#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nebula/ingest.hpp"
#include "nebula/model.hpp"
#include "nebula/normalize.hpp"
#include "nebula/tokenize.hpp"
#include "nebula/train.hpp"

namespace nebula {

struct PipelineConfig {
    std::string filter_profile = "speakeasy";
    bool filter_enabled = true;
    std::string tokenizer = "whitespace";
    std::size_t vocab_size = 50000;
    std::size_t seq_len = 512;
    ModelConfig model;  // vocab_size/seq_len/num_classes are overwritten at train time
    TrainConfig train;
    double target_fpr = 1e-3;
    std::string out_dir = "out";

    void validate() const;
    static PipelineConfig from_json_file(const std::filesystem::path& path);
};

struct CleanedRecord {
    std::string id;
    std::string text;
    int label = 0;
};

struct CleanStats {
    std::size_t reports = 0;
    std::size_t records = 0;
    std::size_t skipped = 0;
};

// psi: filter + flatten + normalize over every manifest entry. In strict
// mode the first malformed report throws; otherwise it is skipped with a
// warning on `warnings`.
std::vector<CleanedRecord> clean_dataset(const std::filesystem::path& manifest,
                                         const FieldFilter& filter,
                                         const NormalizerConfig& normalizer, bool strict,
                                         std::ostream* warnings, CleanStats* stats = nullptr);

void write_cleaned_jsonl(const std::filesystem::path& path,
                         const std::vector<CleanedRecord>& records);
std::vector<CleanedRecord> read_cleaned_jsonl(const std::filesystem::path& path);

std::vector<std::vector<std::string>> tokenize_corpus(const std::vector<std::string>& texts,
                                                      TokenizerKind kind,
                                                      const BpeModel* bpe);

// Encodes cleaned records with a trained vocabulary into a Dataset.
Dataset encode_dataset(const std::vector<CleanedRecord>& records, const Vocabulary& vocab,
                       TokenizerKind kind, const BpeModel* bpe, std::size_t seq_len);

int max_label(const std::vector<CleanedRecord>& records);

}  // namespace nebula
