#pragma once

// Component registration and vulnerability matching against the local feed
// mirror or a remote batch index.

#include "relscan/http.hpp"
#include "relscan/model.hpp"
#include "relscan/sbom.hpp"
#include "relscan/store.hpp"

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace relscan::matcher {

struct RegisterResult {
    std::size_t inserted = 0;
    std::size_t linked = 0;
};

/// Inserts unseen components as NEW and links every component to the release
/// with its dependency depth (none when unreachable from the roots).
RegisterResult register_components(store::Store& store, const Release& release, const sbom::Sbom& bom);

/// product_key -> (cve_id, range) built from the stored affected specs.
class VulnIndex {
public:
    static VulnIndex load(const store::Store& store);
    void add(const std::string& cve_id, const AffectedSpec& spec);

    /// Sorted, distinct CVE ids whose spec covers the component.
    std::vector<std::string> match(const Component& component) const;
    bool knows_product(const std::string& product_key) const;
    std::size_t spec_count() const { return specs_; }

private:
    std::map<std::string, std::vector<std::pair<std::string, VersionRange>>> by_product_;
    std::size_t specs_ = 0;
};

std::vector<std::string> match_offline(const Component& component, const VulnIndex& index);

/// Shared request pacer: `per_minute` sustained rate with bursts of up to
/// `capacity` requests. acquire() blocks on the injected clock.
class TokenBucket {
public:
    explicit TokenBucket(double per_minute = 120.0, double capacity = 1.0, Clock& clock = SystemClock::instance());
    void acquire();
    std::size_t granted() const;

private:
    mutable std::mutex mutex_;
    Clock& clock_;
    std::chrono::steady_clock::duration interval_;
    std::chrono::steady_clock::duration tolerance_;
    std::optional<std::chrono::steady_clock::time_point> tat_;
    std::size_t granted_ = 0;
};

struct RemoteVuln {
    std::string cve_id;
    std::optional<double> cvss;

    bool operator==(const RemoteVuln&) const = default;
};

/// Remote results keyed by canonical purl. Thread-safe.
class ResultCache {
public:
    explicit ResultCache(std::chrono::seconds ttl = std::chrono::hours(24), bool enabled = true,
                         Clock& clock = SystemClock::instance());
    std::optional<std::vector<RemoteVuln>> get(const std::string& purl) const;
    void put(const std::string& purl, const std::vector<RemoteVuln>& vulns);
    bool enabled() const { return enabled_; }

private:
    mutable std::mutex mutex_;
    std::chrono::seconds ttl_;
    bool enabled_;
    Clock& clock_;
    std::map<std::string, std::pair<std::chrono::steady_clock::time_point, std::vector<RemoteVuln>>> entries_;
};

struct RemoteIndexConfig {
    std::string base_url;
    std::string path = "/api/v3/component-report";
    std::optional<std::string> username;
    std::optional<std::string> token;
    int max_attempts = 4;
    std::chrono::milliseconds base_backoff{500};
    std::chrono::milliseconds max_backoff{std::chrono::seconds{30}};
    std::chrono::seconds timeout{30};
};

/// POSTs {"coordinates": [purl...]} and reads back a list of
/// {"coordinates", "vulnerabilities": [{"id"|"cve", "cvssScore"}]}.
class RemoteIndexClient {
public:
    RemoteIndexClient(RemoteIndexConfig config, TokenBucket& bucket, Clock& clock = SystemClock::instance());

    /// Retries 429 (honouring Retry-After) and 5xx with exponential backoff;
    /// throws a retryable Error once attempts are exhausted.
    std::map<std::string, std::vector<RemoteVuln>> report(const std::vector<std::string>& purls);
    std::size_t requests_issued() const;

private:
    RemoteIndexConfig config_;
    TokenBucket& bucket_;
    Clock& clock_;
    mutable std::mutex mutex_;
    std::size_t requests_ = 0;
};

enum class Mode { Offline, Remote };

struct BatchOptions {
    std::size_t limit = 500;
    std::size_t chunk = 25;
    Mode mode = Mode::Offline;
};

struct BatchResult {
    std::vector<VulnMatch> matches;
    std::size_t claimed = 0;
    std::size_t analyzed = 0;
    std::size_t left_new = 0;
    std::size_t requests = 0;
    std::size_t cache_hits = 0;
    /// Components whose product is absent from the offline index.
    std::size_t unindexed = 0;
    /// Remote CVE ids that are not in the local mirror (not persisted).
    std::size_t remote_unresolved = 0;
};

class Analyzer {
public:
    explicit Analyzer(store::Store& store, Clock& clock = SystemClock::instance(), RemoteIndexClient* remote = nullptr,
                      ResultCache* cache = nullptr);

    /// Claims up to options.limit NEW components, matches them and moves them
    /// to ANALYZED. Components in a failed remote chunk return to NEW.
    BatchResult analyze_batch(const BatchOptions& options, const std::string& worker_token);

private:
    store::Store& store_;
    Clock& clock_;
    RemoteIndexClient* remote_;
    ResultCache* cache_;
};

/// Bulk ANALYZED -> NEW so the next pass sees newly ingested CVEs.
std::size_t schedule_reanalysis(store::Store& store);

/// Keeps matches whose CVE was published no later than the release date.
std::vector<VulnMatch> known_at(const Release& release, const std::vector<VulnMatch>& matches,
                                const std::map<std::string, Timestamp>& published);
std::vector<VulnMatch> known_at(const Release& release, const std::vector<VulnMatch>& matches,
                                const store::Store& store);

struct MatchReportRow {
    std::string purl;
    std::string cve_id;
    Severity severity = Severity::None;
    std::optional<double> cvss;
    std::optional<double> epss_score;
    /// Sorted provenance, joined with '+' when both sources matched.
    std::string source;
    bool known_at_release = false;
    std::optional<int> depth;

    bool operator==(const MatchReportRow&) const = default;
};

/// One row per (purl, cve_id) for the release's components, sorted.
std::vector<MatchReportRow> match_report(const store::Store& store, const std::string& repo_id,
                                         const std::string& tag);

} // namespace relscan::matcher
