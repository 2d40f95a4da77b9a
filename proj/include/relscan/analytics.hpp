#pragma once

// Longitudinal metrics over releases and their matches, plus the JSON/CSV
// report documents built from them.
//
// "Reported in a release" always means known at the release date unless a
// field says otherwise.

#include "relscan/model.hpp"
#include "relscan/sbom.hpp"
#include "relscan/store.hpp"

#include <array>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace relscan::analytics {

/// One release with what was matched against it.
struct ReleaseView {
    Release release;
    Language language = Language::Other;
    /// CVEs published no later than the release date.
    std::set<std::string> known_cves;
    /// Every matched CVE regardless of publication date.
    std::set<std::string> all_cves;
    /// Reachable components with their depth, and whether each carries a
    /// known-at match.
    std::vector<std::pair<int, bool>> component_depths;
};

struct Dataset {
    std::vector<Repository> repositories;
    /// Ordered by (repo_id, release_date, tag).
    std::vector<ReleaseView> releases;
    std::map<std::string, Severity> severity;
};

/// Reads repositories, releases, links and matches. With `repo_id` set only
/// that repository is loaded.
Dataset load_dataset(const store::Store& store, const std::optional<std::string>& repo_id = std::nullopt);

// ---- persistence ----------------------------------------------------------

struct ReleaseCves {
    std::string tag;
    Timestamp date{};
    std::set<std::string> cves;
};

/// Per CVE: the first release reporting it and the first later release that
/// no longer does. CVEs never absent afterwards produce no record. Releases
/// are sorted by (date, tag) first.
std::vector<PersistenceRecord> persistence(const std::string& repo_id, std::vector<ReleaseCves> releases);

/// Records for every repository in the dataset, using DONE releases only.
std::vector<PersistenceRecord> persistence(const Dataset& data);

struct CurvePoint {
    std::int64_t days = 0;
    /// Records with persistence in (previous threshold, days].
    std::size_t count = 0;
    double bin_percent = 0.0;
    /// Fraction of records with persistence <= days.
    double cumulative = 0.0;
};

struct PersistenceCurve {
    Severity severity = Severity::None;
    std::size_t records = 0;
    std::vector<CurvePoint> points;
};

/// One curve per severity present in the records (lookup misses count as
/// NONE). With empty `thresholds` the distinct day values are used.
std::vector<PersistenceCurve> persistence_curves(const std::vector<PersistenceRecord>& records,
                                                 const std::map<std::string, Severity>& severity,
                                                 std::vector<std::int64_t> thresholds = {});

// ---- correlation ----------------------------------------------------------

/// Sample Pearson coefficient. Throws Error(UndefinedCorrelation) when
/// either vector is constant or shorter than 2, Error(Validation) on a
/// length mismatch.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

enum class Unit { Release, RepositoryLatest };
std::string_view to_string(Unit u);

struct Observation {
    std::string repo_id;
    Language language = Language::Other;
    std::string tag;
    Timestamp date{};
    /// Commits since the previous release of the same repository.
    double commits = 0;
    double contributors = 0;
    double vulnerabilities = 0;
    /// Commit count reachable from the tag.
    double total_commits = 0;
};

struct CorrelationRow {
    Language language = Language::Other;
    Unit unit = Unit::Release;
    std::size_t observations = 0;
    /// nullopt when the coefficient is undefined for the partition.
    std::optional<double> commits_vs_vulns;
    std::optional<double> contributors_vs_vulns;
};

/// Per-release rows from DONE releases against the number of known-at CVEs.
/// Contributors are cumulative at the tag.
std::vector<Observation> observations(const Dataset& data);

/// One row per language with at least two observations, ordered by language.
/// Release rows correlate per-release commits; latest-per-repository rows
/// use total commits.
std::vector<CorrelationRow> correlation_table(const std::vector<Observation>& rows, Unit unit);

// ---- timelines ------------------------------------------------------------

enum class Granularity { Month, Year };
std::string_view to_string(Granularity g);

struct TimelineBucket {
    Language language = Language::Other;
    /// "YYYY" or "YYYY-MM".
    std::string period;
    std::size_t releases = 0;
    /// DONE releases with at least one known-at match.
    std::size_t vulnerable = 0;
};

/// Every period between a language's first and last release is emitted.
std::vector<TimelineBucket> release_timelines(const Dataset& data, Granularity granularity);

struct CveTimelineBucket {
    std::string period;
    std::size_t releases = 0;
    /// Releases containing an affected component (all-time view).
    std::size_t affected = 0;
    /// Releases where the CVE was already published (known-at view).
    std::size_t known = 0;
};

/// Case-study view of one CVE across the dataset's releases.
std::vector<CveTimelineBucket> cve_timeline(const Dataset& data, const std::string& cve_id, Granularity granularity);

// ---- depth ----------------------------------------------------------------

struct DepthHistogram {
    Language language = Language::Other;
    std::array<std::size_t, sbom::kDepthBuckets> all{};
    std::array<std::size_t, sbom::kDepthBuckets> vulnerable{};
    std::array<double, sbom::kDepthBuckets> all_percent{};
    std::array<double, sbom::kDepthBuckets> vulnerable_percent{};
};

/// Counts (release, component) links by depth bucket; unreachable links are
/// excluded. Percentages are zero for an empty histogram.
std::vector<DepthHistogram> depth_report(const Dataset& data);

// ---- documents ------------------------------------------------------------

struct ReportDoc {
    std::string kind;
    nlohmann::json json;
    std::string csv;
};

inline constexpr int kReportSchemaVersion = 1;

ReportDoc timeline_report(const Dataset& data, Granularity granularity = Granularity::Year);
ReportDoc depth_report_doc(const Dataset& data);
/// Both units of observation, labelled.
ReportDoc correlation_report(const Dataset& data);
ReportDoc persistence_report(const Dataset& data, std::vector<std::int64_t> thresholds = {});
ReportDoc release_report(const store::Store& store, const std::string& repo_id, const std::string& tag);
ReportDoc cve_report(const Dataset& data, const std::string& cve_id, Granularity granularity = Granularity::Month);

std::string csv_escape(const std::string& field);

} // namespace relscan::analytics
