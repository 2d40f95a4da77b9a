#pragma once

// Embedded transactional store (single SQLite file, versioned schema).
//
// All public methods are thread-safe. Writers are serialized; every
// multi-row write runs in one transaction, so concurrent readers observe
// either the state before or after it.

#include "relscan/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

struct sqlite3;

namespace relscan::store {

inline constexpr int kSchemaVersion = 1;

enum class UpsertOutcome { Inserted, Replaced, Unchanged };

struct StoredComponent {
    std::string key;
    std::string product_key;
    bool has_purl = false;
    Component component;

    bool operator==(const StoredComponent&) const = default;
};

struct ReleaseComponent {
    std::string component_key;
    /// nullopt when unreachable from any root.
    std::optional<int> depth;

    bool operator==(const ReleaseComponent&) const = default;
};

struct DeadLetter {
    std::int64_t id = 0;
    std::string routing_key;
    std::string payload;
    int attempts = 0;
    std::string reason;
    Timestamp parked_at{};
};

struct AffectedRow {
    std::string cve_id;
    AffectedSpec spec;
};

struct VulnIngestCounts {
    std::size_t inserted = 0;
    std::size_t replaced = 0;
    std::size_t unchanged = 0;
};

class Store {
public:
    /// Opens (creating if needed) and migrates to kSchemaVersion. ":memory:" is
    /// accepted. Stale component claims left by a crashed process are released.
    static Store open(const std::filesystem::path& path);

    Store(Store&&) noexcept;
    Store& operator=(Store&&) noexcept;
    ~Store();

    int schema_version() const;

    /// Runs fn inside one transaction; rolls back if fn throws. Nested calls
    /// join the outer transaction.
    void transaction(const std::function<void()>& fn);

    // Repositories
    /// True when the row was newly inserted.
    bool upsert_repository(const Repository& repo);
    std::optional<Repository> get_repository(const std::string& id) const;
    std::vector<Repository> list_repositories() const;

    // Releases
    /// Inserts when (repo_id, tag) is absent; true if inserted.
    bool insert_release(const Release& release);
    /// Updates metric columns only; the state column is owned by transition_release.
    void update_release_metrics(const Release& release);
    std::optional<Release> get_release(const std::string& repo_id, const std::string& tag) const;
    /// Ordered by (release_date, tag).
    std::vector<Release> list_releases(const std::string& repo_id) const;
    /// Throws Error(Conflict) unless the row is currently in `from`, and
    /// Error(Validation) for an illegal transition.
    void transition_release(const std::string& repo_id, const std::string& tag, ReleaseState from,
                            ReleaseState to, const std::string& reason = {});

    // Components
    bool insert_component(const Component& component);
    std::optional<StoredComponent> get_component(const std::string& key) const;
    std::vector<StoredComponent> list_components() const;
    std::size_t count_components(std::optional<AnalysisState> state = std::nullopt) const;
    void link_release_component(const std::string& repo_id, const std::string& tag,
                                const std::string& component_key, std::optional<int> depth);
    std::vector<ReleaseComponent> list_release_components(const std::string& repo_id,
                                                          const std::string& tag) const;

    /// Atomically marks up to `limit` unclaimed NEW components as claimed by
    /// `token`; concurrent claimers receive disjoint sets. Ordered by key.
    std::vector<StoredComponent> claim_new_components(std::size_t limit, const std::string& token);
    /// Persists matches and moves the claimed components to ANALYZED in one transaction.
    void complete_claim(const std::vector<std::string>& keys, const std::vector<VulnMatch>& matches);
    /// Returns claimed components to unclaimed NEW.
    void release_claim(const std::vector<std::string>& keys);
    /// Bulk ANALYZED -> NEW for scheduled re-analysis. Returns rows reset.
    std::size_t reset_analyzed_to_new();

    // Vulnerabilities
    /// Applies entries with the modified-precedence rule: replace iff the
    /// incoming last_modified is newer, or equal and prefer_on_tie is set.
    VulnIngestCounts ingest_vulnerabilities(const std::vector<Vulnerability>& vulns, bool prefer_on_tie);
    std::optional<Vulnerability> get_vulnerability(const std::string& cve_id) const;
    std::vector<Vulnerability> list_vulnerabilities() const;
    std::vector<AffectedRow> list_affected() const;
    std::size_t count_vulnerabilities() const;

    // EPSS
    /// Newest model_date wins; equal dates replace.
    UpsertOutcome upsert_epss(const EpssEntry& entry);
    void ingest_epss(const std::vector<EpssEntry>& entries, std::size_t& inserted, std::size_t& replaced);
    std::optional<EpssEntry> get_epss(const std::string& cve_id) const;

    // Feed snapshots
    std::optional<FeedSnapshot> get_snapshot(const std::string& feed_key) const;
    void put_snapshot(const FeedSnapshot& snapshot);
    std::vector<FeedSnapshot> list_snapshots() const;

    void record_unmatched_cpes(const std::string& cve_id, const std::vector<std::string>& cpes);
    std::vector<std::pair<std::string, std::string>> list_unmatched_cpes() const;

    // Matches
    void insert_matches(const std::vector<VulnMatch>& matches);
    std::vector<VulnMatch> list_matches() const;
    std::vector<VulnMatch> list_matches_for(const std::string& component_key) const;

    // Dead letters
    std::int64_t park_dead_letter(const DeadLetter& letter);
    std::vector<DeadLetter> list_dead_letters() const;
    std::optional<DeadLetter> take_dead_letter(std::int64_t id);

    /// Throws Error(Integrity) naming the first offending entity.
    void check_integrity() const;

    /// Deterministic text dump of every table (sorted rows), for comparisons.
    std::string dump() const;
    /// One CSV per table into dir.
    void export_csv(const std::filesystem::path& dir) const;

private:
    struct Impl;
    explicit Store(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

} // namespace relscan::store
