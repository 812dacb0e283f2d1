#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nebula/errors.hpp"

namespace nebula {

// Behavior reports are parsed into ordered JSON so that key order follows the
// document; flattening and filtering both depend on document order.
using ojson = nlohmann::ordered_json;

struct RawReport {
    ojson root;
    std::string source_id;
};

// One step of a field-filter path: a key name, or "*" matching any array
// index / object key.
struct FilterStep {
    enum class Kind { Key, Any };
    Kind kind = Kind::Key;
    std::string key;
};

// Ordered list of path patterns selecting the sub-trees to retain. Patterns
// use '.'-separated steps, e.g. "apis.*.api_name". A rule that is exhausted
// at a node retains that node's entire sub-tree.
class FieldFilter {
public:
    FieldFilter() = default;
    explicit FieldFilter(std::vector<std::string> rules);

    static FieldFilter identity() { return FieldFilter({"*"}); }

    const std::vector<std::string>& rules() const { return rules_; }
    bool empty() const { return rules_.empty(); }

    ojson apply(const ojson& root) const;

private:
    std::vector<std::string> rules_;
    std::vector<std::vector<FilterStep>> parsed_;
};

struct CleanReport {
    std::string text;
    std::size_t record_count = 0;
};

RawReport parse_report(std::string_view bytes, std::string source_id = {});

RawReport apply_field_filter(const RawReport& report, const FieldFilter& filter);

// Depth-first, document-order flattening. Scalar values are lowercased and
// emitted without key names; container-valued array elements become records,
// one line each; scalars within a record are space-joined. Numbers keep their
// shortest round-trip spelling, booleans print true/false, nulls vanish.
CleanReport flatten_to_text(const RawReport& filtered);

struct ManifestEntry {
    std::string path;
    int label = 0;
};

// Manifest is JSONL ({"path": ..., "label": ...} per line) or CSV
// (path,label). Labels must be non-negative integers.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& manifest);

struct DatasetRecord {
    std::string id;
    std::string bytes;
    int label = 0;
};

// Reads every file referenced by the manifest, in manifest order. Throws
// MissingFile on the first absent report.
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& manifest);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Built-in filter profiles: "speakeasy", "cape", "api_only", "identity".
// Unknown names are treated as a path to a profile JSON file of the form
// {"name": ..., "rules": [...]}.
FieldFilter load_filter_profile(const std::string& name_or_path);
std::vector<std::string> builtin_filter_profiles();

}  // namespace nebula
