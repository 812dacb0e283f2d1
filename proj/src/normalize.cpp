#include "nebula/normalize.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

#include <json.hpp>

#include "nebula/errors.hpp"
#include "nebula/ingest.hpp"

namespace nebula {

namespace {

bool is_hex(char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_alnum(char c) { return is_digit(c) || is_lower(c); }

// Validates a run of [0-9a-f:] as an IPv6 literal: at most one "::", groups
// of 1..4 hex digits, 8 groups without compression or <= 7 with it. Requires
// at least one decimal digit so that identifier fragments like "d::" (from
// scoped names) never match.
bool is_ipv6_literal(std::string_view run) {
    if (run.find(':') == std::string_view::npos) return false;
    std::size_t colon_count = std::count(run.begin(), run.end(), ':');
    if (colon_count < 2) return false;
    if (run.find_first_of("0123456789") == std::string_view::npos) return false;

    std::size_t compress_pos = run.find("::");
    if (compress_pos != std::string_view::npos &&
        run.find("::", compress_pos + 1) != std::string_view::npos)
        return false;
    if (run.find(":::") != std::string_view::npos) return false;

    // Split into groups; "::" contributes empty tokens that we skip.
    std::size_t groups = 0;
    std::size_t start = 0;
    bool has_compression = compress_pos != std::string_view::npos;
    while (start <= run.size()) {
        std::size_t end = run.find(':', start);
        if (end == std::string_view::npos) end = run.size();
        std::size_t len = end - start;
        if (len > 4) return false;
        if (len > 0) {
            for (std::size_t i = start; i < end; ++i)
                if (!is_hex(run[i])) return false;
            ++groups;
        }
        if (end == run.size()) break;
        start = end + 1;
    }
    if (!has_compression && (run.front() == ':' || run.back() == ':')) return false;
    if (has_compression) return groups <= 7;
    return groups == 8;
}

enum class Ipv4Class { Invalid, Loopback, Private, Public };

Ipv4Class classify_ipv4(std::string_view run) {
    int octets[4];
    std::size_t part = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= run.size(); ++i) {
        if (i == run.size() || run[i] == '.') {
            if (i == start || part == 4) return Ipv4Class::Invalid;
            std::size_t len = i - start;
            if (len > 3) return Ipv4Class::Invalid;
            int value = 0;
            for (std::size_t j = start; j < i; ++j) value = value * 10 + (run[j] - '0');
            if (value > 255) return Ipv4Class::Invalid;
            octets[part++] = value;
            start = i + 1;
        }
    }
    if (part != 4) return Ipv4Class::Invalid;
    if (octets[0] == 127) return Ipv4Class::Loopback;
    if (octets[0] == 10) return Ipv4Class::Private;
    if (octets[0] == 172 && octets[1] >= 16 && octets[1] <= 31) return Ipv4Class::Private;
    if (octets[0] == 192 && octets[1] == 168) return Ipv4Class::Private;
    return Ipv4Class::Public;
}

// Generic scanner: walks the text, extracts maximal runs over `in_run`, and
// lets `rewrite` decide the replacement (empty optional keeps the run).
template <typename InRun, typename Rewrite>
std::string scan_runs(const std::string& text, InRun in_run, Rewrite rewrite) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (!in_run(text[i])) {
            out.push_back(text[i]);
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && in_run(text[j])) ++j;
        std::string_view run(text.data() + i, j - i);
        if (auto replaced = rewrite(run); replaced.has_value())
            out.append(*replaced);
        else
            out.append(run);
        i = j;
    }
    return out;
}

}  // namespace

const std::array<std::string_view, 10>& placeholder_set() {
    static const std::array<std::string_view, 10> tokens = {
        "<sha256>", "<sha1>",   "<md5>",  "<ip_loopback>", "<ip_private>",
        "<ip_public>", "<ipv6>", "<domain>", "<drive>",       "<user>",
    };
    return tokens;
}

bool is_known_placeholder(std::string_view token) {
    const auto& set = placeholder_set();
    return std::find(set.begin(), set.end(), token) != set.end();
}

NormalizerConfig NormalizerConfig::defaults() {
    NormalizerConfig config;
    config.tlds = {"com", "net", "org", "edu", "gov", "info", "biz", "io", "ru", "cn", "co.uk"};
    const std::pair<const char*, const char*> table[] = {
        {"windir", "c:\\windows"},
        {"systemroot", "c:\\windows"},
        {"systemdrive", "c:"},
        {"userprofile", "c:\\users\\<user>"},
        {"homepath", "\\users\\<user>"},
        {"temp", "c:\\users\\<user>\\appdata\\local\\temp"},
        {"tmp", "c:\\users\\<user>\\appdata\\local\\temp"},
        {"appdata", "c:\\users\\<user>\\appdata\\roaming"},
        {"localappdata", "c:\\users\\<user>\\appdata\\local"},
        {"programfiles", "c:\\program files"},
        {"programfiles(x86)", "c:\\program files (x86)"},
        {"programdata", "c:\\programdata"},
        {"allusersprofile", "c:\\programdata"},
        {"public", "c:\\users\\public"},
        {"commonprogramfiles", "c:\\program files\\common files"},
        {"comspec", "c:\\windows\\system32\\cmd.exe"},
    };
    for (const auto& [name, expansion] : table) {
        config.env_rules.push_back(NormalizationRule{
            name, std::string("%") + name + "%", expansion, 2});
    }
    return config;
}

NormalizerConfig NormalizerConfig::from_json_file(const std::filesystem::path& path) {
    ojson doc;
    try {
        doc = ojson::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw MalformedJson(std::string("normalizer config: ") + e.what(), e.byte);
    }
    NormalizerConfig config = defaults();
    if (doc.contains("tlds")) {
        config.tlds.clear();
        for (const auto& tld : doc["tlds"]) config.tlds.push_back(tld.get<std::string>());
    }
    if (doc.contains("env_vars")) {
        config.env_rules.clear();
        for (const auto& item : doc["env_vars"].items()) {
            config.env_rules.push_back(NormalizationRule{
                item.key(), "%" + item.key() + "%", item.value().get<std::string>(), 2});
        }
    }
    return config;
}

std::string normalize_hashes(const std::string& text) {
    return scan_runs(text, is_hex, [](std::string_view run) -> std::optional<std::string> {
        switch (run.size()) {
            case 64: return "<sha256>";
            case 40: return "<sha1>";
            case 32: return "<md5>";
            default: return std::nullopt;
        }
    });
}

std::string expand_path_variables(const std::string& text, const NormalizerConfig& config) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '%') {
            out.push_back(text[i]);
            ++i;
            continue;
        }
        std::size_t close = text.find('%', i + 1);
        if (close == std::string::npos) {
            out.append(text, i, std::string::npos);
            break;
        }
        std::string_view name(text.data() + i + 1, close - i - 1);
        const NormalizationRule* hit = nullptr;
        for (const NormalizationRule& rule : config.env_rules) {
            if (rule.name == name) {
                hit = &rule;
                break;
            }
        }
        if (hit) {
            out.append(hit->replacement);
            i = close + 1;
        } else {
            // Unknown variable: emit the opening '%' and rescan from the next
            // character, so adjacent variables still resolve.
            out.push_back('%');
            ++i;
        }
    }
    return out;
}

std::string expand_path_variables(const std::string& text) {
    static const NormalizerConfig config = NormalizerConfig::defaults();
    return expand_path_variables(text, config);
}

std::string normalize_paths(const std::string& text) {
    // Drive letters first: a lone [a-z] followed by ":\" at a token boundary.
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size();) {
        const bool boundary = i == 0 || !is_alnum(text[i - 1]);
        if (boundary && is_lower(text[i]) && i + 2 < text.size() && text[i + 1] == ':' &&
            text[i + 2] == '\\') {
            out.append("<drive>");
            i += 2;  // keep the backslash
            continue;
        }
        out.push_back(text[i]);
        ++i;
    }
    // User segments: the path component right after "\users\".
    static const std::string marker = "\\users\\";
    std::string result;
    result.reserve(out.size());
    std::size_t pos = 0;
    while (pos < out.size()) {
        std::size_t hit = out.find(marker, pos);
        if (hit == std::string::npos) {
            result.append(out, pos, std::string::npos);
            break;
        }
        std::size_t name_start = hit + marker.size();
        std::size_t name_end = name_start;
        while (name_end < out.size() && out[name_end] != '\\' && out[name_end] != '/' &&
               !std::isspace(static_cast<unsigned char>(out[name_end])))
            ++name_end;
        result.append(out, pos, name_start - pos);
        std::string_view name(out.data() + name_start, name_end - name_start);
        if (name.empty() || name == "<user>")
            result.append(name);
        else
            result.append("<user>");
        pos = name_end;
    }
    return result;
}

std::string normalize_ip(const std::string& text) {
    // IPv6 first so colon-joined literals are not chopped by the quad pass.
    // Runs glued to '.' on either side (decimals, v4-mapped forms) are left
    // for the quad pass.
    auto in_v6 = [](char c) { return is_hex(c) || c == ':'; };
    std::string pass1;
    pass1.reserve(text.size());
    for (std::size_t i = 0; i < text.size();) {
        if (!in_v6(text[i])) {
            pass1.push_back(text[i]);
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && in_v6(text[j])) ++j;
        std::string_view run(text.data() + i, j - i);
        const bool dot_before = i > 0 && text[i - 1] == '.';
        const bool dot_after = j < text.size() && text[j] == '.';
        if (!dot_before && !dot_after && is_ipv6_literal(run))
            pass1.append("<ipv6>");
        else
            pass1.append(run);
        i = j;
    }
    auto in_v4 = [](char c) { return is_digit(c) || c == '.'; };
    return scan_runs(pass1, in_v4, [](std::string_view run) -> std::optional<std::string> {
        switch (classify_ipv4(run)) {
            case Ipv4Class::Loopback: return "<ip_loopback>";
            case Ipv4Class::Private: return "<ip_private>";
            case Ipv4Class::Public: return "<ip_public>";
            case Ipv4Class::Invalid: return std::nullopt;
        }
        return std::nullopt;
    });
}

std::string normalize_domains(const std::string& text, const NormalizerConfig& config) {
    auto in_domain = [](char c) { return is_alnum(c) || c == '.' || c == '-'; };
    return scan_runs(text, in_domain, [&](std::string_view run) -> std::optional<std::string> {
        if (run.find('.') == std::string_view::npos) return std::nullopt;
        if (run.front() == '.' || run.back() == '.' || run.front() == '-' || run.back() == '-')
            return std::nullopt;
        if (run.find("..") != std::string_view::npos) return std::nullopt;
        // Longest-suffix match over the configured TLD list.
        std::size_t best = 0;
        for (const std::string& tld : config.tlds) {
            if (run.size() <= tld.size() + 1) continue;
            if (run.substr(run.size() - tld.size()) != tld) continue;
            if (run[run.size() - tld.size() - 1] != '.') continue;
            best = std::max(best, tld.size());
        }
        if (best == 0) return std::nullopt;
        return "<domain>";
    });
}

std::string normalize_domains(const std::string& text) {
    static const NormalizerConfig config = NormalizerConfig::defaults();
    return normalize_domains(text, config);
}

std::string normalize(const std::string& text, const NormalizerConfig& config) {
    std::string t = normalize_hashes(text);
    t = expand_path_variables(t, config);
    t = normalize_paths(t);
    t = normalize_ip(t);
    t = normalize_domains(t, config);
    return t;
}

std::string normalize(const std::string& text) {
    static const NormalizerConfig config = NormalizerConfig::defaults();
    return normalize(text, config);
}

}  // namespace nebula
