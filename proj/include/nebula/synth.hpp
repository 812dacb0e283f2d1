#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nebula {

// Synthetic emulator-style behavior reports for desk-scale experiments.
// Each class carries its own API-call motifs planted early in the call
// sequence; shared calls, randomized hex arguments, hashes, IPs, domains and
// user paths fill the rest, so cleaning and normalization have real work.
struct SynthOptions {
    std::size_t count = 200;
    std::size_t num_classes = 2;  // up to 8
    std::uint64_t seed = 7;
};

struct SynthReport {
    std::string id;
    std::string json_text;
    int label = 0;
};

std::vector<SynthReport> generate_corpus(const SynthOptions& options);

// Writes report_XXXXX.json files plus manifest.jsonl into `dir`.
std::filesystem::path write_corpus(const std::filesystem::path& dir, const SynthOptions& options);

}  // namespace nebula
