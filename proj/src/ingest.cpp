#include "nebula/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace nebula {

namespace {

std::vector<FilterStep> parse_rule(const std::string& rule) {
    std::vector<FilterStep> steps;
    std::string current;
    auto push = [&] {
        FilterStep step;
        if (current == "*") {
            step.kind = FilterStep::Kind::Any;
        } else {
            step.kind = FilterStep::Kind::Key;
            step.key = current;
        }
        steps.push_back(std::move(step));
        current.clear();
    };
    for (char c : rule) {
        if (c == '.')
            push();
        else
            current.push_back(c);
    }
    push();
    return steps;
}

// Rule cursors: (rule index, next step index). A cursor whose steps are
// exhausted retains the whole node.
using Cursor = std::pair<std::size_t, std::size_t>;

bool filter_node(const ojson& node, const std::vector<std::vector<FilterStep>>& rules,
                 const std::vector<Cursor>& cursors, ojson& out) {
    for (const Cursor& c : cursors) {
        if (c.second == rules[c.first].size()) {
            out = node;  // rule fully matched: keep the sub-tree as-is
            return true;
        }
    }
    if (node.is_object()) {
        ojson result = ojson::object();
        for (auto it = node.begin(); it != node.end(); ++it) {
            std::vector<Cursor> advanced;
            for (const Cursor& c : cursors) {
                const FilterStep& step = rules[c.first][c.second];
                if (step.kind == FilterStep::Kind::Any || step.key == it.key())
                    advanced.emplace_back(c.first, c.second + 1);
            }
            if (advanced.empty()) continue;
            ojson child;
            if (filter_node(it.value(), rules, advanced, child))
                result[it.key()] = std::move(child);
        }
        if (result.empty()) return false;
        out = std::move(result);
        return true;
    }
    if (node.is_array()) {
        ojson result = ojson::array();
        std::vector<Cursor> advanced;
        for (const Cursor& c : cursors) {
            if (rules[c.first][c.second].kind == FilterStep::Kind::Any)
                advanced.emplace_back(c.first, c.second + 1);
        }
        if (advanced.empty()) return false;
        for (const ojson& element : node) {
            ojson child;
            if (filter_node(element, rules, advanced, child))
                result.push_back(std::move(child));
        }
        if (result.empty()) return false;
        out = std::move(result);
        return true;
    }
    // Scalar reached with unconsumed steps: no match.
    return false;
}

std::string lowercase_ascii(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s)
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

void append_scalar(const ojson& node, std::string& line) {
    std::string token;
    if (node.is_string())
        token = lowercase_ascii(node.get_ref<const std::string&>());
    else if (node.is_null())
        return;
    else
        token = node.dump();  // numbers and booleans keep their JSON spelling
    if (token.empty()) return;
    if (!line.empty()) line.push_back(' ');
    line.append(token);
}

void flatten_node(const ojson& node, std::vector<std::string>& lines, std::string& current) {
    auto flush = [&] {
        if (!current.empty()) {
            lines.push_back(std::move(current));
            current.clear();
        }
    };
    if (node.is_object()) {
        for (const auto& item : node.items()) flatten_node(item.value(), lines, current);
    } else if (node.is_array()) {
        for (const ojson& element : node) {
            if (element.is_object() || element.is_array()) {
                // Container elements are records: one line each.
                flush();
                flatten_node(element, lines, current);
                flush();
            } else {
                append_scalar(element, current);
            }
        }
    } else {
        append_scalar(node, current);
    }
}

const std::vector<std::string>& speakeasy_rules() {
    static const std::vector<std::string> rules = {
        "apis.*.ret_val",
        "apis.*.args",
        "apis.*.api_name",
        "file_access.*.event",
        "file_access.*.path",
        "network_events.dns.*.query",
        "network_events.dns.*.response",
        "network_events.traffic.*.server",
        "network_events.traffic.*.port",
        "network_events.traffic.*.proto",
        "registry_access.*.event",
        "registry_access.*.path",
    };
    return rules;
}

const std::vector<std::string>& cape_rules() {
    static const std::vector<std::string> rules = {
        "behavior.processes.*.calls.*.return",
        "behavior.processes.*.calls.*.arguments",
        "behavior.processes.*.calls.*.api",
        "behavior.summary.files",
        "behavior.summary.keys",
        "network.dns.*.request",
        "network.dns.*.answers",
        "network.hosts",
    };
    return rules;
}

}  // namespace

FieldFilter::FieldFilter(std::vector<std::string> rules) : rules_(std::move(rules)) {
    parsed_.reserve(rules_.size());
    for (const std::string& rule : rules_) parsed_.push_back(parse_rule(rule));
}

ojson FieldFilter::apply(const ojson& root) const {
    std::vector<Cursor> cursors;
    cursors.reserve(parsed_.size());
    for (std::size_t i = 0; i < parsed_.size(); ++i) cursors.emplace_back(i, 0);
    ojson out;
    if (cursors.empty() || !filter_node(root, parsed_, cursors, out)) {
        if (root.is_array()) return ojson::array();
        return ojson::object();
    }
    return out;
}

RawReport parse_report(std::string_view bytes, std::string source_id) {
    try {
        ojson root = ojson::parse(bytes);
        return RawReport{std::move(root), std::move(source_id)};
    } catch (const nlohmann::json::parse_error& e) {
        throw MalformedJson(e.what(), e.byte);
    }
}

RawReport apply_field_filter(const RawReport& report, const FieldFilter& filter) {
    return RawReport{filter.apply(report.root), report.source_id};
}

CleanReport flatten_to_text(const RawReport& filtered) {
    std::vector<std::string> lines;
    std::string current;
    flatten_node(filtered.root, lines, current);
    if (!current.empty()) lines.push_back(std::move(current));
    CleanReport report;
    report.record_count = lines.size();
    std::string text;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) text.push_back('\n');
        text.append(lines[i]);
    }
    report.text = std::move(text);
    return report;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile(path.string());
    std::ostringstream oss;
    oss << in.rdbuf();
    return oss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UserError("cannot write file: " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw MissingFile(manifest.string());
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    const bool csv = manifest.extension() == ".csv";
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ManifestEntry entry;
        if (csv) {
            if (line_no == 1 && line == "path,label") continue;
            const auto comma = line.rfind(',');
            if (comma == std::string::npos)
                throw BadLabel("manifest line " + std::to_string(line_no) + ": expected path,label",
                               line_no);
            entry.path = line.substr(0, comma);
            const std::string label_str = line.substr(comma + 1);
            try {
                std::size_t consumed = 0;
                entry.label = std::stoi(label_str, &consumed);
                if (consumed != label_str.size()) throw std::invalid_argument(label_str);
            } catch (const std::exception&) {
                throw BadLabel("manifest line " + std::to_string(line_no) + ": bad label '" +
                                   label_str + "'",
                               line_no);
            }
        } else {
            ojson record;
            try {
                record = ojson::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw BadLabel("manifest line " + std::to_string(line_no) + ": " + e.what(),
                               line_no);
            }
            if (!record.contains("path") || !record["path"].is_string())
                throw BadLabel("manifest line " + std::to_string(line_no) + ": missing path",
                               line_no);
            if (!record.contains("label") || !record["label"].is_number_integer())
                throw BadLabel("manifest line " + std::to_string(line_no) + ": missing label",
                               line_no);
            entry.path = record["path"].get<std::string>();
            entry.label = record["label"].get<int>();
        }
        if (entry.label < 0)
            throw BadLabel("manifest line " + std::to_string(line_no) + ": negative label",
                           line_no);
        entries.push_back(std::move(entry));
    }
    return entries;
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& manifest) {
    const auto base = manifest.parent_path();
    std::vector<DatasetRecord> records;
    for (const ManifestEntry& entry : load_manifest(manifest)) {
        std::filesystem::path path = entry.path;
        if (path.is_relative()) path = base / path;
        if (!std::filesystem::exists(path)) throw MissingFile(path.string());
        records.push_back(DatasetRecord{entry.path, read_file(path), entry.label});
    }
    return records;
}

FieldFilter load_filter_profile(const std::string& name_or_path) {
    if (name_or_path == "speakeasy") return FieldFilter(speakeasy_rules());
    if (name_or_path == "cape") return FieldFilter(cape_rules());
    if (name_or_path == "api_only")
        return FieldFilter({"apis.*.ret_val", "apis.*.args", "apis.*.api_name"});
    if (name_or_path == "identity" || name_or_path == "none") return FieldFilter::identity();
    ojson profile;
    try {
        profile = ojson::parse(read_file(name_or_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw MalformedJson(std::string("filter profile: ") + e.what(), e.byte);
    }
    if (!profile.contains("rules") || !profile["rules"].is_array())
        throw UserError("filter profile " + name_or_path + " lacks a rules array");
    std::vector<std::string> rules;
    for (const ojson& rule : profile["rules"]) rules.push_back(rule.get<std::string>());
    return FieldFilter(std::move(rules));
}

std::vector<std::string> builtin_filter_profiles() {
    return {"speakeasy", "cape", "api_only", "identity"};
}

}  // namespace nebula
