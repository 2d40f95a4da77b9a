#include "relscan/feeds.hpp"

#include "relscan/http.hpp"
#include "relscan/purl.hpp"
#include "relscan/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <mutex>
#include <sstream>

namespace relscan::feeds {

namespace fs = std::filesystem;
using nlohmann::json;

// -- sources -----------------------------------------------------------------

LocalDirectorySource::LocalDirectorySource(fs::path dir) : dir_(std::move(dir)) {}

std::string LocalDirectorySource::fetch(const std::string& name) {
    if (!fs::is_directory(dir_)) throw Error(ErrorKind::Io, "feed directory unreachable: " + dir_.string());
    const auto path = dir_ / name;
    if (!fs::exists(path)) throw Error(ErrorKind::NotFound, "feed file missing: " + path.string());
    return util::read_file(path);
}

std::string LocalDirectorySource::describe() const { return dir_.string(); }

HttpSource::HttpSource(std::string base_url) : base_url_(std::move(base_url)) {}

std::string HttpSource::fetch(const std::string& name) {
    http::Client client(base_url_, std::chrono::seconds{120});
    const auto res = client.get("/" + name);
    if (res.status == 404) throw Error(ErrorKind::NotFound, "feed missing: " + base_url_ + "/" + name);
    if (res.status != 200)
        throw Error(ErrorKind::Io, "feed fetch " + base_url_ + "/" + name + " returned HTTP " + std::to_string(res.status));
    return res.body;
}

std::string HttpSource::describe() const { return base_url_; }

std::unique_ptr<FeedSource> open_source(const std::string& locator) {
    if (util::starts_with(locator, "http://") || util::starts_with(locator, "https://"))
        return std::make_unique<HttpSource>(locator);
    return std::make_unique<LocalDirectorySource>(locator);
}

// -- CPE -----------------------------------------------------------------------

std::optional<Cpe> parse_cpe23(const std::string& text) {
    std::vector<std::string> fields;
    std::string cur;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\\' && i + 1 < text.size()) {
            cur.push_back(text[++i]);
        } else if (c == ':') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    if (fields.size() < 6 || fields[0] != "cpe" || fields[1] != "2.3") return std::nullopt;
    return Cpe{fields[2], fields[3], fields[4], fields[5], fields.size() > 6 ? fields[6] : "*"};
}

CpeAliasTable CpeAliasTable::builtin() {
    CpeAliasTable t;
    static const std::vector<std::array<const char*, 3>> kAliases = {
        {"apache", "log4j", "maven:org.apache.logging.log4j/log4j-core"},
        {"apache", "commons_text", "maven:org.apache.commons/commons-text"},
        {"fasterxml", "jackson-databind", "maven:com.fasterxml.jackson.core/jackson-databind"},
        {"vmware", "spring_framework", "maven:org.springframework/spring-core"},
        {"prometheus", "client_golang", "golang:github.com/prometheus/client_golang"},
        {"golang", "text", "golang:golang.org/x/text"},
        {"golang", "protobuf", "golang:github.com/golang/protobuf"},
        {"gogo", "protobuf", "golang:github.com/gogo/protobuf"},
        {"tokio", "tokio", "cargo:tokio"},
        {"hyper", "hyper", "cargo:hyper"},
        {"smallvec_project", "smallvec", "cargo:smallvec"},
        {"lodash", "lodash", "npm:lodash"},
        {"minimist_project", "minimist", "npm:minimist"},
        {"nokogiri", "nokogiri", "gem:nokogiri"},
        {"rack_project", "rack", "gem:rack"},
        {"djangoproject", "django", "pypi:django"},
        {"palletsprojects", "flask", "pypi:flask"},
        {"python", "requests", "pypi:requests"},
        {"guzzlephp", "guzzle", "composer:guzzlehttp/guzzle"},
    };
    for (const auto& [v, p, k] : kAliases) t.add(v, p, k);
    return t;
}

void CpeAliasTable::load_json(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(util::read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, "alias table " + path.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw Error(ErrorKind::Parse, "alias table " + path.string() + ": expected an array");
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& e = doc[i];
        if (!e.is_object() || !e.contains("vendor") || !e.contains("product") || !e.contains("product_key"))
            throw Error(ErrorKind::Parse, "alias table " + path.string() + ": entry [" + std::to_string(i) +
                                              "] needs vendor, product, product_key");
        add(e["vendor"].get<std::string>(), e["product"].get<std::string>(), e["product_key"].get<std::string>());
    }
}

void CpeAliasTable::add(const std::string& vendor, const std::string& product, const std::string& product_key) {
    auto& keys = table_[util::to_lower(vendor) + ":" + util::to_lower(product)];
    const std::string key = util::to_lower(product_key);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
}

const std::vector<std::string>* CpeAliasTable::lookup(const std::string& vendor, const std::string& product) const {
    auto it = table_.find(util::to_lower(vendor) + ":" + util::to_lower(product));
    return it == table_.end() ? nullptr : &it->second;
}

// -- NVD entries ------------------------------------------------------------------

namespace {

[[noreturn]] void schema(const std::string& id, const std::string& what) {
    throw Error(ErrorKind::Ingestion, "entry " + id + ": " + what);
}

const json* find(const json& j, std::initializer_list<const char*> path) {
    const json* cur = &j;
    for (const char* k : path) {
        if (!cur->is_object()) return nullptr;
        auto it = cur->find(k);
        if (it == cur->end()) return nullptr;
        cur = &*it;
    }
    return cur;
}

Timestamp timestamp_field(const json& item, const char* field, const std::string& id) {
    const json* v = find(item, {field});
    if (!v || !v->is_string()) schema(id, std::string(field) + " missing");
    const auto t = parse_iso8601(v->get<std::string>());
    if (!t) schema(id, std::string(field) + " unparseable '" + v->get<std::string>() + "'");
    return *t;
}

std::optional<double> score_field(const json& item, std::initializer_list<const char*> path, const std::string& id) {
    const json* v = find(item, path);
    if (!v || v->is_null()) return std::nullopt;
    if (!v->is_number()) schema(id, "CVSS baseScore is not a number");
    const double s = v->get<double>();
    if (!(s >= 0.0 && s <= 10.0)) schema(id, "CVSS baseScore out of range");
    return s;
}

bool bad_bound(const std::string& s) {
    return s.empty() || s == "*" || s == "-" ||
           std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) || std::iscntrl(c); });
}

struct CpeVisit {
    const CpeAliasTable& aliases;
    const std::string& id;
    ParsedEntry& out;
    std::set<std::string> seen_specs;

    void node(const json& n) {
        if (!n.is_object()) schema(id, "configuration node is not an object");
        if (const json* matches = find(n, {"cpe_match"})) {
            if (!matches->is_array()) schema(id, "cpe_match is not an array");
            for (const auto& m : *matches) cpe_match(m);
        }
        if (const json* children = find(n, {"children"})) {
            if (!children->is_array()) schema(id, "children is not an array");
            for (const auto& c : *children) node(c);
        }
    }

    void cpe_match(const json& m) {
        if (!m.is_object()) schema(id, "cpe_match element is not an object");
        const json* vulnerable = find(m, {"vulnerable"});
        if (vulnerable && vulnerable->is_boolean() && !vulnerable->get<bool>()) return;
        const json* uri = find(m, {"cpe23Uri"});
        if (!uri) uri = find(m, {"criteria"});
        if (!uri || !uri->is_string()) schema(id, "cpe_match without cpe23Uri");
        const std::string text = uri->get<std::string>();
        const auto cpe = parse_cpe23(text);
        if (!cpe) {
            ++out.dropped_specs;
            return;
        }
        if (cpe->part != "a") return;
        const auto* keys = aliases.lookup(cpe->vendor, cpe->product);
        if (!keys) {
            if (std::find(out.unmatched_cpes.begin(), out.unmatched_cpes.end(), text) == out.unmatched_cpes.end())
                out.unmatched_cpes.push_back(text);
            return;
        }

        auto str = [&](const char* k) -> std::optional<std::string> {
            const json* v = find(m, {k});
            if (!v || v->is_null()) return std::nullopt;
            if (!v->is_string()) return std::string();
            return v->get<std::string>();
        };
        const auto si = str("versionStartIncluding"), se = str("versionStartExcluding");
        const auto ei = str("versionEndIncluding"), ee = str("versionEndExcluding");
        const bool bounded = si || se || ei || ee;

        VersionRange range;
        if (bounded) {
            if ((si && se) || (ei && ee)) {
                ++out.dropped_specs;
                return;
            }
            for (const auto* b : {&si, &se, &ei, &ee})
                if (*b && bad_bound(**b)) {
                    ++out.dropped_specs;
                    return;
                }
            if (si) range.start = VersionBound{*si, true};
            if (se) range.start = VersionBound{*se, false};
            if (ei) range.end = VersionBound{*ei, true};
            if (ee) range.end = VersionBound{*ee, false};
        } else if (cpe->version == "-") {
            // Not applicable: nothing version-specific to match against.
            ++out.dropped_specs;
            return;
        } else if (cpe->version != "*") {
            std::string v = cpe->version;
            if (!cpe->update.empty() && cpe->update != "*" && cpe->update != "-") v += "-" + cpe->update;
            if (bad_bound(v)) {
                ++out.dropped_specs;
                return;
            }
            range.exact.push_back(v);
        }

        for (const auto& key : *keys) {
            const auto colon = key.find(':');
            const std::string eco = colon == std::string::npos ? key : key.substr(0, colon);
            try {
                purl::validate_range(eco, range);
            } catch (const Error&) {
                ++out.dropped_specs;
                continue;
            }
            AffectedSpec spec{key, range, SourceForm::Cpe};
            const std::string sig = key + "|" + json{{"s", range.start ? range.start->version : ""},
                                                     {"si", range.start && range.start->inclusive},
                                                     {"e", range.end ? range.end->version : ""},
                                                     {"ei", range.end && range.end->inclusive},
                                                     {"x", range.exact}}
                                                        .dump();
            if (seen_specs.insert(sig).second) out.vuln.affected.push_back(std::move(spec));
        }
    }
};

} // namespace

ParsedEntry parse_nvd_entry(const json& item, const CpeAliasTable& aliases) {
    if (!item.is_object()) throw Error(ErrorKind::Validation, "entry is not an object");
    const json* idj = find(item, {"cve", "CVE_data_meta", "ID"});
    if (!idj || !idj->is_string() || idj->get<std::string>().empty())
        throw Error(ErrorKind::Validation, "entry without CVE id");
    const std::string id = idj->get<std::string>();
    if (!is_valid_cve_id(id)) schema(id, "malformed CVE id");

    ParsedEntry out;
    Vulnerability& v = out.vuln;
    v.cve_id = id;
    v.published = timestamp_field(item, "publishedDate", id);
    v.last_modified = timestamp_field(item, "lastModifiedDate", id);
    if (v.last_modified < v.published) schema(id, "lastModifiedDate precedes publishedDate");
    v.cvss_v3_base = score_field(item, {"impact", "baseMetricV3", "cvssV3", "baseScore"}, id);
    v.cvss_v2_base = score_field(item, {"impact", "baseMetricV2", "cvssV2", "baseScore"}, id);
    const auto sev = derive_severity(v.cvss_v3_base, v.cvss_v2_base);
    v.severity = sev.severity;
    v.severity_source = sev.source;

    if (const json* descs = find(item, {"cve", "description", "description_data"})) {
        if (!descs->is_array()) schema(id, "description_data is not an array");
        for (const auto& d : *descs) {
            const json* lang = find(d, {"lang"});
            const json* value = find(d, {"value"});
            if (value && value->is_string() && (!lang || (lang->is_string() && lang->get<std::string>() == "en"))) {
                v.description = value->get<std::string>();
                break;
            }
        }
    }

    if (const json* nodes = find(item, {"configurations", "nodes"})) {
        if (!nodes->is_array()) schema(id, "configurations.nodes is not an array");
        CpeVisit visit{aliases, id, out, {}};
        for (const auto& n : *nodes) visit.node(n);
    }
    return out;
}

ParsedFeed parse_nvd_feed(const std::string& text, const CpeAliasTable& aliases) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Ingestion, std::string("feed is not valid JSON: ") + e.what());
    }
    const json* items = find(doc, {"CVE_Items"});
    if (!items || !items->is_array()) throw Error(ErrorKind::Ingestion, "feed has no CVE_Items array");

    ParsedFeed out;
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < items->size(); ++i) {
        ParsedEntry e;
        try {
            e = parse_nvd_entry((*items)[i], aliases);
        } catch (const Error& err) {
            if (err.kind() != ErrorKind::Validation) throw;
            ++out.rejected;
            out.problems.push_back("CVE_Items[" + std::to_string(i) + "]: " + err.what());
            continue;
        }
        auto it = index.find(e.vuln.cve_id);
        if (it == index.end()) {
            index.emplace(e.vuln.cve_id, out.entries.size());
            out.entries.push_back(std::move(e));
            continue;
        }
        ++out.duplicates;
        auto& kept = out.entries[it->second];
        if (e.vuln.last_modified >= kept.vuln.last_modified) kept = std::move(e);
    }
    return out;
}

// -- sync ---------------------------------------------------------------------------

std::string IngestionReport::line() const {
    std::ostringstream s;
    s << "feed_key=" << feed_key << " ingested=" << ingested << " replaced=" << replaced << " rejected=" << rejected
      << " unchanged=" << unchanged << " duplicates=" << duplicates << " dropped_specs=" << dropped_specs
      << " unmatched_cpes=" << unmatched_cpes << " skipped=" << (skipped ? "true" : "false");
    return s.str();
}

std::string annual_feed_key(int year) { return "nvd-" + std::to_string(year); }

namespace {

std::mutex& feed_lock(const std::string& feed_key) {
    static std::mutex guard;
    static std::map<std::string, std::unique_ptr<std::mutex>> locks;
    std::lock_guard lock(guard);
    auto& m = locks[feed_key];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
}

std::string fetch_feed(FeedSource& source, const std::string& stem) {
    try {
        return source.fetch(stem + ".json.gz");
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::NotFound) throw;
    }
    return source.fetch(stem + ".json");
}

IngestionReport ingest_nvd_payload(store::Store& store, const std::string& feed_key, const std::string& raw,
                                   bool prefer_on_tie, bool skip_if_unchanged, const CpeAliasTable& aliases,
                                   const Clock& clock, std::optional<FeedSnapshot>& snapshot_out) {
    std::lock_guard serial(feed_lock(feed_key));
    IngestionReport report;
    report.feed_key = feed_key;
    const std::string checksum = util::sha256_hex(raw);
    const auto previous = store.get_snapshot(feed_key);
    if (skip_if_unchanged && previous && previous->checksum == checksum) {
        report.skipped = true;
        snapshot_out = previous;
        return report;
    }

    std::string text;
    try {
        text = util::gunzip(raw);
    } catch (const Error& e) {
        throw Error(ErrorKind::Ingestion, feed_key + ": " + e.what());
    }
    ParsedFeed feed;
    try {
        feed = parse_nvd_feed(text, aliases);
    } catch (const Error& e) {
        throw Error(ErrorKind::Ingestion, feed_key + ": " + e.what());
    }
    report.rejected = feed.rejected;
    report.duplicates = feed.duplicates;
    report.problems = feed.problems;
    if (feed.duplicates > 0)
        report.problems.push_back(std::to_string(feed.duplicates) +
                                  " repeated CVE ids resolved by newest lastModifiedDate");

    store.transaction([&] {
        for (const auto& e : feed.entries) {
            report.dropped_specs += e.dropped_specs;
            const auto counts = store.ingest_vulnerabilities({e.vuln}, prefer_on_tie);
            report.ingested += counts.inserted;
            report.replaced += counts.replaced;
            report.unchanged += counts.unchanged;
            if (counts.inserted + counts.replaced > 0) {
                store.record_unmatched_cpes(e.vuln.cve_id, e.unmatched_cpes);
                report.unmatched_cpes += e.unmatched_cpes.size();
            }
        }
        // Snapshot rows only move when the payload does, so an identical
        // re-sync leaves the store unchanged.
        if (!previous || previous->checksum != checksum) {
            FeedSnapshot snap{feed_key, checksum, clock.wall_now(), static_cast<std::int64_t>(feed.entries.size())};
            store.put_snapshot(snap);
            snapshot_out = snap;
        } else {
            snapshot_out = previous;
        }
    });
    return report;
}

} // namespace

SyncResult sync_nvd(store::Store& store, FeedSource& source, int first_year, int last_year,
                    const CpeAliasTable& aliases, const Clock& clock) {
    const int current_year =
        civil_from_days(std::chrono::floor<std::chrono::days>(clock.wall_now()).time_since_epoch().count()).year;
    if (first_year < kFirstFeedYear || last_year > current_year || first_year > last_year)
        throw Error(ErrorKind::Usage, "feed years must lie within [" + std::to_string(kFirstFeedYear) + ", " +
                                          std::to_string(current_year) + "]");
    SyncResult result;
    for (int year = first_year; year <= last_year; ++year) {
        const std::string raw = fetch_feed(source, "nvdcve-1.1-" + std::to_string(year));
        std::optional<FeedSnapshot> snap;
        result.reports.push_back(
            ingest_nvd_payload(store, annual_feed_key(year), raw, false, true, aliases, clock, snap));
        if (snap) result.snapshots.push_back(*snap);
    }
    const std::string raw = fetch_feed(source, "nvdcve-1.1-modified");
    std::optional<FeedSnapshot> snap;
    result.reports.push_back(ingest_nvd_payload(store, kModifiedFeedKey, raw, true, false, aliases, clock, snap));
    if (snap) result.snapshots.push_back(*snap);
    return result;
}

// -- EPSS ---------------------------------------------------------------------------

EpssParse parse_epss_csv(const std::string& text, Date fallback_date) {
    EpssParse out;
    Date model_date = fallback_date;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = util::trim(line);
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto pos = line.find("score_date:");
            if (pos != std::string::npos) {
                if (const auto t = parse_iso8601(line.substr(pos + 11, 10))) model_date = std::chrono::floor<std::chrono::days>(*t);
            }
            continue;
        }
        const auto cols = util::split(line, ',');
        if (cols.size() < 3) {
            ++out.rejected;
            out.problems.push_back("line " + std::to_string(lineno) + ": expected 3 columns");
            continue;
        }
        if (util::to_lower(util::trim(cols[0])) == "cve") continue;
        EpssEntry e;
        e.cve_id = util::trim(cols[0]);
        e.model_date = model_date;
        try {
            std::size_t used = 0;
            const std::string s = util::trim(cols[1]), p = util::trim(cols[2]);
            e.score = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument("score");
            e.percentile = std::stod(p, &used);
            if (used != p.size()) throw std::invalid_argument("percentile");
            if (!is_valid_cve_id(e.cve_id)) throw Error(ErrorKind::Validation, "malformed CVE id '" + e.cve_id + "'");
            validate(e);
        } catch (const std::exception& ex) {
            ++out.rejected;
            out.problems.push_back("line " + std::to_string(lineno) + ": " + ex.what());
            continue;
        }
        out.entries.push_back(std::move(e));
    }
    return out;
}

IngestionReport sync_epss(store::Store& store, FeedSource& source, const std::string& name, const Clock& clock) {
    std::lock_guard serial(feed_lock(kEpssFeedKey));
    std::string raw;
    try {
        raw = source.fetch(name);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::NotFound || !util::ends_with(name, ".gz")) throw;
        raw = source.fetch(name.substr(0, name.size() - 3));
    }
    IngestionReport report;
    report.feed_key = kEpssFeedKey;
    const std::string checksum = util::sha256_hex(raw);
    std::string text;
    try {
        text = util::gunzip(raw);
    } catch (const Error& e) {
        throw Error(ErrorKind::Ingestion, std::string(kEpssFeedKey) + ": " + e.what());
    }
    const auto parsed = parse_epss_csv(text, std::chrono::floor<std::chrono::days>(clock.wall_now()));
    report.rejected = parsed.rejected;
    report.problems = parsed.problems;
    store.transaction([&] {
        for (const auto& e : parsed.entries) {
            switch (store.upsert_epss(e)) {
            case store::UpsertOutcome::Inserted: ++report.ingested; break;
            case store::UpsertOutcome::Replaced: ++report.replaced; break;
            case store::UpsertOutcome::Unchanged: ++report.unchanged; break;
            }
        }
        const auto previous = store.get_snapshot(kEpssFeedKey);
        if (!previous || previous->checksum != checksum)
            store.put_snapshot({kEpssFeedKey, checksum, clock.wall_now(), static_cast<std::int64_t>(parsed.entries.size())});
    });
    return report;
}

} // namespace relscan::feeds
