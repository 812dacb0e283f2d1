#include "nebula/synth.hpp"

#include <array>
#include <cstdio>

#include <json.hpp>

#include "nebula/errors.hpp"
#include "nebula/ingest.hpp"
#include "nebula/rng.hpp"

namespace nebula {

namespace {

using ojson = nlohmann::ordered_json;

const std::vector<std::string>& common_apis() {
    static const std::vector<std::string> apis = {
        "kernel32.getprocaddress",     "kernel32.loadlibrarya",
        "kernel32.getmodulehandlea",   "kernel32.closehandle",
        "kernel32.virtualalloc",       "kernel32.virtualfree",
        "kernel32.getlasterror",       "kernel32.heapalloc",
        "kernel32.tlsgetvalue",        "kernel32.exitprocess",
        "ntdll.rtlallocateheap",       "msvcrt.malloc",
        "msvcrt.free",                 "user32.getsystemmetrics",
        "kernel32.getcurrentprocess",  "kernel32.queryperformancecounter",
    };
    return apis;
}

// One motif set per class; motif calls appear only in that class.
const std::array<std::vector<std::string>, 8>& class_motifs() {
    static const std::array<std::vector<std::string>, 8> motifs = {{
        {"kernel32.getsystemtimeasfiletime", "user32.loadicona", "gdi32.createfontindirecta"},
        {"kernel32.writeprocessmemory", "kernel32.createremotethread",
         "advapi32.adjusttokenprivileges"},
        {"advapi32.cryptencrypt", "kernel32.findfirstfilea", "kernel32.movefileexa"},
        {"urlmon.urldownloadtofilea", "wininet.internetopenurla", "kernel32.winexec"},
        {"user32.getasynckeystate", "user32.getforegroundwindow", "user32.mapvirtualkeya"},
        {"ws2_32.socket", "ws2_32.connect", "ws2_32.send"},
        {"kernel32.gettickcount", "ntdll.ntqueryinformationprocess",
         "kernel32.isdebuggerpresent"},
        {"advapi32.regsetvalueexa", "advapi32.regcreatekeyexa", "shell32.shellexecutea"},
    }};
    return motifs;
}

std::string hex_string(Rng& rng, std::size_t length) {
    static const char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(length);
    for (std::size_t i = 0; i < length; ++i) out.push_back(digits[rng.uniform_u64(16)]);
    return out;
}

std::string random_user(Rng& rng) {
    static const std::vector<std::string> users = {"bob",   "alice", "admin",
                                                   "j.doe", "svc01", "guest7"};
    return users[rng.uniform_u64(users.size())];
}

std::string random_domain(Rng& rng, bool malicious) {
    static const std::vector<std::string> benign = {"update.example.com", "cdn.files.net",
                                                    "time.sync.org", "static.assets.io"};
    static const std::vector<std::string> bad = {"c2.drop-zone.ru", "beacon.exfil.biz",
                                                 "pool.mine-fast.cn", "evil-c2.com"};
    const auto& pool = malicious ? bad : benign;
    return pool[rng.uniform_u64(pool.size())];
}

std::string random_ip(Rng& rng) {
    static const std::vector<std::string> ips = {"10.0.0.5",    "192.168.4.7", "8.8.8.8",
                                                 "172.16.9.30", "93.184.216.34", "127.0.0.1"};
    return ips[rng.uniform_u64(ips.size())];
}

ojson make_api(Rng& rng, const std::string& name) {
    ojson record;
    record["ret_val"] = "0x" + hex_string(rng, 1 + rng.uniform_u64(2));
    ojson args = ojson::array();
    const std::size_t n_args = 1 + rng.uniform_u64(3);
    for (std::size_t a = 0; a < n_args; ++a)
        args.push_back("0x" + hex_string(rng, 1 + rng.uniform_u64(4)));
    record["args"] = std::move(args);
    record["api_name"] = name;
    return record;
}

}  // namespace

std::vector<SynthReport> generate_corpus(const SynthOptions& options) {
    if (options.num_classes < 2 || options.num_classes > class_motifs().size())
        throw UserError("synthetic corpus supports 2..8 classes");
    if (options.count == 0) throw UserError("synthetic corpus count must be positive");

    Rng rng(options.seed);
    std::vector<SynthReport> reports;
    reports.reserve(options.count);

    for (std::size_t n = 0; n < options.count; ++n) {
        const int label = static_cast<int>(n % options.num_classes);
        const auto& motifs = class_motifs()[static_cast<std::size_t>(label)];
        const bool malicious = label != 0;

        ojson doc;
        doc["apihash"] = hex_string(rng, 10 + rng.uniform_u64(12));
        doc["start_addr"] = "0x" + hex_string(rng, 6);
        doc["ep_type"] = rng.uniform() < 0.8 ? "exe" : "dll";
        doc["error"] = ojson::object();

        ojson apis = ojson::array();
        const std::size_t n_calls = 24 + rng.uniform_u64(24);
        for (std::size_t i = 0; i < n_calls; ++i) {
            // Plant motifs densely among the early calls so short sequence
            // prefixes still carry the class signal.
            const bool motif_slot = (i < 16 && i % 3 == 1) || rng.uniform() < 0.12;
            const std::string& name =
                motif_slot ? motifs[rng.uniform_u64(motifs.size())]
                           : common_apis()[rng.uniform_u64(common_apis().size())];
            apis.push_back(make_api(rng, name));
        }
        doc["apis"] = std::move(apis);

        ojson files = ojson::array();
        const std::size_t n_files = rng.uniform_u64(3);
        for (std::size_t i = 0; i < n_files; ++i) {
            ojson f;
            f["event"] = rng.uniform() < 0.5 ? "read" : "write";
            if (malicious && rng.uniform() < 0.5)
                f["path"] = "c:\\windows\\temp\\" + hex_string(rng, 6) + ".ini";
            else
                f["path"] = "c:\\users\\" + random_user(rng) + "\\appdata\\local\\" +
                            hex_string(rng, 5) + ".dat";
            files.push_back(std::move(f));
        }
        if (!files.empty()) doc["file_access"] = std::move(files);

        ojson registry = ojson::array();
        if (rng.uniform() < 0.4) {
            ojson r;
            r["event"] = "read";
            r["path"] = "hklm\\software\\microsoft\\windows\\currentversion\\" +
                        hex_string(rng, 4);
            registry.push_back(std::move(r));
        }
        if (!registry.empty()) doc["registry_access"] = std::move(registry);

        ojson network = ojson::object();
        if (rng.uniform() < (malicious ? 0.7 : 0.4)) {
            ojson dns = ojson::array();
            ojson q;
            q["query"] = random_domain(rng, malicious);
            q["response"] = random_ip(rng);
            dns.push_back(std::move(q));
            network["dns"] = std::move(dns);
            ojson traffic = ojson::array();
            ojson t;
            t["server"] = random_ip(rng);
            t["port"] = static_cast<int>(malicious ? 4444 : 443);
            t["proto"] = "tcp";
            traffic.push_back(std::move(t));
            network["traffic"] = std::move(traffic);
        }
        if (!network.empty()) doc["network_events"] = std::move(network);

        char id[32];
        std::snprintf(id, sizeof(id), "report_%05zu", n);
        reports.push_back(SynthReport{id, doc.dump(1), label});
    }
    return reports;
}

std::filesystem::path write_corpus(const std::filesystem::path& dir, const SynthOptions& options) {
    std::filesystem::create_directories(dir);
    const auto reports = generate_corpus(options);
    std::string manifest;
    for (const SynthReport& report : reports) {
        const std::string filename = report.id + ".json";
        write_file(dir / filename, report.json_text);
        ojson line;
        line["path"] = filename;
        line["label"] = report.label;
        manifest += line.dump();
        manifest.push_back('\n');
    }
    const auto manifest_path = dir / "manifest.jsonl";
    write_file(manifest_path, manifest);
    return manifest_path;
}

}  // namespace nebula
