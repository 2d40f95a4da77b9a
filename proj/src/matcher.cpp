#include "relscan/matcher.hpp"

#include "relscan/purl.hpp"
#include "relscan/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>

namespace relscan::matcher {

using nlohmann::json;
using steady = std::chrono::steady_clock;

// -- registration ---------------------------------------------------------------

RegisterResult register_components(store::Store& store, const Release& release, const sbom::Sbom& bom) {
    const auto graph = sbom::build_graph(bom);
    const auto depths = sbom::compute_depths(graph);
    RegisterResult result;
    store.transaction([&] {
        for (const auto& c : bom.components) {
            Component stored = c;
            stored.analysis_state = AnalysisState::New;
            if (store.insert_component(stored)) ++result.inserted;
            std::optional<int> depth;
            if (auto it = depths.depth.find(c.bom_ref); it != depths.depth.end()) depth = it->second;
            store.link_release_component(release.repo_id, release.tag, component_key(c), depth);
            ++result.linked;
        }
    });
    return result;
}

// -- offline index ----------------------------------------------------------------

VulnIndex VulnIndex::load(const store::Store& store) {
    VulnIndex index;
    for (const auto& row : store.list_affected()) index.add(row.cve_id, row.spec);
    return index;
}

void VulnIndex::add(const std::string& cve_id, const AffectedSpec& spec) {
    by_product_[util::to_lower(spec.product_key)].emplace_back(cve_id, spec.range);
    ++specs_;
}

bool VulnIndex::knows_product(const std::string& product_key) const { return by_product_.count(product_key) > 0; }

std::vector<std::string> VulnIndex::match(const Component& component) const {
    std::vector<std::string> out;
    if (!component.purl || !component.purl->version) return out;
    auto it = by_product_.find(purl::product_key(*component.purl));
    if (it == by_product_.end()) return out;
    for (const auto& [cve, range] : it->second)
        if (purl::version_in_range(component.purl->ecosystem, *component.purl->version, range)) out.push_back(cve);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::string> match_offline(const Component& component, const VulnIndex& index) {
    return index.match(component);
}

// -- rate limiting / cache ------------------------------------------------------------

TokenBucket::TokenBucket(double per_minute, double capacity, Clock& clock) : clock_(clock) {
    if (!(per_minute > 0.0)) throw Error(ErrorKind::Validation, "rate limit must be positive");
    if (!(capacity >= 1.0)) throw Error(ErrorKind::Validation, "bucket capacity must be at least 1");
    interval_ = std::chrono::duration_cast<steady::duration>(std::chrono::duration<double>(60.0 / per_minute));
    tolerance_ = std::chrono::duration_cast<steady::duration>(interval_ * (capacity - 1.0));
}

void TokenBucket::acquire() {
    steady::time_point slot;
    {
        std::lock_guard lock(mutex_);
        const auto now = clock_.now();
        // Generic cell rate: each grant pushes the theoretical arrival time
        // one interval further; bursts may run ahead of it by the tolerance.
        const auto tat = tat_ ? std::max(*tat_, now) : now;
        slot = std::max(now, tat - tolerance_);
        tat_ = std::max(tat, slot) + interval_;
        ++granted_;
    }
    if (slot > clock_.now()) clock_.sleep_until(slot);
}

std::size_t TokenBucket::granted() const {
    std::lock_guard lock(mutex_);
    return granted_;
}

ResultCache::ResultCache(std::chrono::seconds ttl, bool enabled, Clock& clock)
    : ttl_(ttl), enabled_(enabled), clock_(clock) {}

std::optional<std::vector<RemoteVuln>> ResultCache::get(const std::string& purl) const {
    if (!enabled_) return std::nullopt;
    std::lock_guard lock(mutex_);
    auto it = entries_.find(purl);
    if (it == entries_.end() || clock_.now() >= it->second.first) return std::nullopt;
    return it->second.second;
}

void ResultCache::put(const std::string& purl, const std::vector<RemoteVuln>& vulns) {
    if (!enabled_) return;
    std::lock_guard lock(mutex_);
    entries_[purl] = {clock_.now() + ttl_, vulns};
}

// -- remote index --------------------------------------------------------------------

RemoteIndexClient::RemoteIndexClient(RemoteIndexConfig config, TokenBucket& bucket, Clock& clock)
    : config_(std::move(config)), bucket_(bucket), clock_(clock) {}

std::size_t RemoteIndexClient::requests_issued() const {
    std::lock_guard lock(mutex_);
    return requests_;
}

namespace {

std::map<std::string, std::vector<RemoteVuln>> parse_report(const std::string& body) {
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("component report is not JSON: ") + e.what());
    }
    if (!doc.is_array()) throw Error(ErrorKind::Parse, "component report: expected an array");
    std::map<std::string, std::vector<RemoteVuln>> out;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& entry = doc[i];
        const std::string where = "component report [" + std::to_string(i) + "]";
        if (!entry.is_object() || !entry.contains("coordinates") || !entry["coordinates"].is_string())
            throw Error(ErrorKind::Parse, where + ": missing coordinates");
        std::string key;
        try {
            key = purl::format(purl::parse(entry["coordinates"].get<std::string>()));
        } catch (const Error& e) {
            throw Error(ErrorKind::Parse, where + ": " + e.what());
        }
        auto& list = out[key];
        if (!entry.contains("vulnerabilities")) continue;
        for (const auto& v : entry["vulnerabilities"]) {
            RemoteVuln rv;
            if (v.contains("cve") && v["cve"].is_string()) rv.cve_id = v["cve"];
            else if (v.contains("id") && v["id"].is_string()) rv.cve_id = v["id"];
            if (!is_valid_cve_id(rv.cve_id)) continue;
            if (v.contains("cvssScore") && v["cvssScore"].is_number()) rv.cvss = v["cvssScore"].get<double>();
            list.push_back(rv);
        }
    }
    return out;
}

std::optional<std::chrono::seconds> retry_after(const http::Response& res, Timestamp now) {
    if (const auto h = res.header("Retry-After")) {
        try {
            return std::chrono::seconds{std::stoll(*h)};
        } catch (const std::exception&) {
        }
    }
    if (const auto h = res.header("X-RateLimit-Reset")) {
        try {
            return std::max(std::chrono::seconds{0}, from_unix(std::stoll(*h)) - now);
        } catch (const std::exception&) {
        }
    }
    return std::nullopt;
}

} // namespace

std::map<std::string, std::vector<RemoteVuln>> RemoteIndexClient::report(const std::vector<std::string>& purls) {
    const std::string body = json{{"coordinates", purls}}.dump();
    http::Headers headers{{"Accept", "application/json"}};
    if (config_.username && config_.token)
        headers.emplace("Authorization", "Basic " + util::base64(*config_.username + ":" + *config_.token));

    std::string last_error;
    for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
        bucket_.acquire();
        {
            std::lock_guard lock(mutex_);
            ++requests_;
        }
        auto backoff = std::min<std::chrono::milliseconds>(config_.base_backoff * (1LL << std::min(attempt, 20)),
                                                           config_.max_backoff);
        try {
            http::Client client(config_.base_url, config_.timeout);
            const auto res = client.post(config_.path, body, "application/json", headers);
            if (res.status == 200) return parse_report(res.body);
            last_error = "HTTP " + std::to_string(res.status);
            if (res.status == 429) {
                if (const auto wait = retry_after(res, clock_.wall_now()))
                    backoff = std::max<std::chrono::milliseconds>(backoff, *wait);
            } else if (res.status < 500) {
                throw Error(ErrorKind::Io, "component report rejected: " + last_error);
            }
        } catch (const Error& e) {
            if (!e.retryable()) throw;
            last_error = e.what();
        }
        if (attempt + 1 < config_.max_attempts) clock_.sleep_until(clock_.now() + backoff);
    }
    throw Error(ErrorKind::Io, "component report failed after " + std::to_string(config_.max_attempts) +
                                   " attempts: " + last_error);
}

// -- analysis -------------------------------------------------------------------------

Analyzer::Analyzer(store::Store& store, Clock& clock, RemoteIndexClient* remote, ResultCache* cache)
    : store_(store), clock_(clock), remote_(remote), cache_(cache) {}

BatchResult Analyzer::analyze_batch(const BatchOptions& options, const std::string& worker_token) {
    if (options.chunk == 0) throw Error(ErrorKind::Validation, "chunk size must be positive");
    if (options.mode == Mode::Remote && !remote_) throw Error(ErrorKind::Usage, "remote mode needs a remote index");
    BatchResult result;
    const auto claimed = store_.claim_new_components(options.limit, worker_token);
    result.claimed = claimed.size();
    if (claimed.empty()) return result;
    const Timestamp now = clock_.wall_now();

    std::vector<std::string> done;
    std::vector<const store::StoredComponent*> pending;
    for (const auto& c : claimed) {
        // Purl-less components cannot be looked up anywhere.
        if (!c.has_purl) done.push_back(c.key);
        else pending.push_back(&c);
    }

    if (options.mode == Mode::Offline) {
        const auto index = VulnIndex::load(store_);
        for (const auto* c : pending) {
            if (!index.knows_product(c->product_key)) ++result.unindexed;
            for (const auto& cve : index.match(c->component))
                result.matches.push_back({c->key, cve, MatchSource::OfflineFeed, now});
            done.push_back(c->key);
        }
        store_.complete_claim(done, result.matches);
        result.analyzed = done.size();
        return result;
    }

    const auto known = [&](const std::string& cve) { return store_.get_vulnerability(cve).has_value(); };
    auto add_remote = [&](const std::string& key, const std::vector<RemoteVuln>& vulns, std::vector<VulnMatch>& out) {
        std::set<std::string> seen;
        for (const auto& v : vulns) {
            if (!seen.insert(v.cve_id).second) continue;
            if (!known(v.cve_id)) {
                ++result.remote_unresolved;
                continue;
            }
            out.push_back({key, v.cve_id, MatchSource::RemoteIndex, now});
        }
    };

    std::vector<VulnMatch> early;
    std::vector<const store::StoredComponent*> to_query;
    for (const auto* c : pending) {
        if (cache_) {
            if (auto hit = cache_->get(c->key)) {
                ++result.cache_hits;
                add_remote(c->key, *hit, early);
                done.push_back(c->key);
                continue;
            }
        }
        to_query.push_back(c);
    }
    if (!done.empty()) {
        store_.complete_claim(done, early);
        result.analyzed += done.size();
        result.matches.insert(result.matches.end(), early.begin(), early.end());
    }

    for (std::size_t start = 0; start < to_query.size(); start += options.chunk) {
        const std::size_t end = std::min(start + options.chunk, to_query.size());
        std::vector<std::string> keys;
        for (std::size_t i = start; i < end; ++i) keys.push_back(to_query[i]->key);
        const std::size_t before = remote_->requests_issued();
        std::map<std::string, std::vector<RemoteVuln>> reply;
        try {
            reply = remote_->report(keys);
        } catch (const Error& e) {
            result.requests += remote_->requests_issued() - before;
            store_.release_claim(keys);
            result.left_new += keys.size();
            continue;
        }
        result.requests += remote_->requests_issued() - before;
        std::vector<VulnMatch> chunk_matches;
        for (const auto& key : keys) {
            auto it = reply.find(key);
            const std::vector<RemoteVuln> vulns = it == reply.end() ? std::vector<RemoteVuln>{} : it->second;
            if (cache_) cache_->put(key, vulns);
            add_remote(key, vulns, chunk_matches);
        }
        store_.complete_claim(keys, chunk_matches);
        result.analyzed += keys.size();
        result.matches.insert(result.matches.end(), chunk_matches.begin(), chunk_matches.end());
    }
    return result;
}

std::size_t schedule_reanalysis(store::Store& store) { return store.reset_analyzed_to_new(); }

// -- release-date filtering and reports --------------------------------------------------

std::vector<VulnMatch> known_at(const Release& release, const std::vector<VulnMatch>& matches,
                                const std::map<std::string, Timestamp>& published) {
    std::vector<VulnMatch> out;
    for (const auto& m : matches) {
        auto it = published.find(m.cve_id);
        if (it != published.end() && it->second <= release.release_date) out.push_back(m);
    }
    return out;
}

std::vector<VulnMatch> known_at(const Release& release, const std::vector<VulnMatch>& matches,
                                const store::Store& store) {
    std::map<std::string, Timestamp> published;
    for (const auto& m : matches)
        if (!published.count(m.cve_id))
            if (auto v = store.get_vulnerability(m.cve_id)) published.emplace(m.cve_id, v->published);
    return known_at(release, matches, published);
}

std::vector<MatchReportRow> match_report(const store::Store& store, const std::string& repo_id, const std::string& tag) {
    const auto release = store.get_release(repo_id, tag);
    if (!release) throw Error(ErrorKind::NotFound, "release " + repo_id + "@" + tag);
    std::map<std::pair<std::string, std::string>, MatchReportRow> rows;
    std::map<std::string, std::optional<Vulnerability>> vulns;
    for (const auto& link : store.list_release_components(repo_id, tag)) {
        for (const auto& m : store.list_matches_for(link.component_key)) {
            auto& v = vulns[m.cve_id];
            if (!v) v = store.get_vulnerability(m.cve_id);
            if (!v) continue;
            auto [it, fresh] = rows.try_emplace({link.component_key, m.cve_id});
            auto& row = it->second;
            const std::string src(to_string(m.source));
            if (fresh) {
                row.purl = link.component_key;
                row.cve_id = m.cve_id;
                row.severity = v->severity;
                row.cvss = v->cvss_v3_base ? v->cvss_v3_base : v->cvss_v2_base;
                if (const auto e = store.get_epss(m.cve_id)) row.epss_score = e->score;
                row.source = src;
                row.known_at_release = v->published <= release->release_date;
                row.depth = link.depth;
            } else if (row.source.find(src) == std::string::npos) {
                auto parts = util::split(row.source, '+');
                parts.push_back(src);
                std::sort(parts.begin(), parts.end());
                row.source.clear();
                for (const auto& p : parts) row.source += (row.source.empty() ? "" : "+") + p;
            }
        }
    }
    std::vector<MatchReportRow> out;
    for (auto& [k, row] : rows) out.push_back(std::move(row));
    return out;
}

} // namespace relscan::matcher
