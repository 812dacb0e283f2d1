#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace nebula {

// One substitution applied at a fixed pipeline stage. Stages run in strictly
// ascending rank; within a stage the text is scanned left to right.
struct NormalizationRule {
    std::string name;
    std::string pattern;      // literal or structural match, depending on stage
    std::string replacement;  // placeholder token or expansion template
    int stage = 0;
};

// The closed set of placeholder tokens normalization may emit.
const std::array<std::string_view, 10>& placeholder_set();
bool is_known_placeholder(std::string_view token);

struct NormalizerConfig {
    std::vector<std::string> tlds;
    std::vector<NormalizationRule> env_rules;  // %var% -> expansion, stage 2

    static NormalizerConfig defaults();
    static NormalizerConfig from_json_file(const std::filesystem::path& path);
};

// Stage 1: maximal hex runs of exactly 64/40/32 chars -> <sha256>/<sha1>/<md5>.
std::string normalize_hashes(const std::string& text);
// Stage 2: %var% expansion from the configured table; unknown vars untouched.
std::string expand_path_variables(const std::string& text, const NormalizerConfig& config);
std::string expand_path_variables(const std::string& text);
// Stage 3: drive letters -> <drive>, \users\<name>\ segments -> \users\<user>\.
std::string normalize_paths(const std::string& text);
// Stage 4: IPv6 literals -> <ipv6>; dotted quads -> loopback/private/public.
std::string normalize_ip(const std::string& text);
// Stage 5: dotted names ending in a configured TLD -> <domain>.
std::string normalize_domains(const std::string& text, const NormalizerConfig& config);
std::string normalize_domains(const std::string& text);

// Full pipeline in stage order: hashes, variable expansion, paths, IPs,
// domains. Expects lowercase input (flatten_to_text guarantees it).
std::string normalize(const std::string& text, const NormalizerConfig& config);
std::string normalize(const std::string& text);

}  // namespace nebula
