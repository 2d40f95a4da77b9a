#pragma once

// Core domain types shared by every module. Values are immutable once
// validated and safe to share between workers.

#include "relscan/error.hpp"
#include "relscan/timeutil.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace relscan {

enum class Language { Java, Go, Rust, Ruby, Python, PHP, JavaScript, Other };
enum class ReleaseState { New, Done, Fail };
enum class AnalysisState { New, Analyzed };
enum class Severity { None, Low, Medium, High, Critical };
enum class SeveritySource { V3, V2, Unscored };
enum class SourceForm { Cpe, Purl };
enum class MatchSource { OfflineFeed, RemoteIndex };

std::string_view to_string(Language v);
std::string_view to_string(ReleaseState v);
std::string_view to_string(AnalysisState v);
std::string_view to_string(Severity v);
std::string_view to_string(SeveritySource v);
std::string_view to_string(SourceForm v);
std::string_view to_string(MatchSource v);

Language language_from_string(std::string_view s);
ReleaseState release_state_from_string(std::string_view s);
AnalysisState analysis_state_from_string(std::string_view s);
Severity severity_from_string(std::string_view s);
SeveritySource severity_source_from_string(std::string_view s);
SourceForm source_form_from_string(std::string_view s);
MatchSource match_source_from_string(std::string_view s);

struct Repository {
    std::string id;
    std::string name;
    std::string clone_url;
    Language primary_language = Language::Other;
    std::int64_t stargazers = 0;
    std::int64_t contributor_count = 0;
    Timestamp first_seen{};

    bool operator==(const Repository&) const = default;
};

struct Release {
    std::string repo_id;
    std::string tag;
    Timestamp release_date{};
    std::int64_t commit_count = 0;
    std::int64_t contributor_count = 0;
    std::int64_t file_count = 0;
    std::int64_t lines_of_code = 0;
    std::int64_t lines_of_comments = 0;
    ReleaseState state = ReleaseState::New;
    /// Machine-readable failure reason when state == Fail (e.g. "TIMEOUT").
    std::string fail_reason;

    bool operator==(const Release&) const = default;
};

/// Only NEW->DONE, NEW->FAIL and FAIL->NEW (explicit retry) are legal.
bool is_legal_transition(ReleaseState from, ReleaseState to);

struct PackageUrl {
    std::string ecosystem;
    std::optional<std::string> namespace_;
    std::string name;
    std::optional<std::string> version;
    std::map<std::string, std::string> qualifiers;
    std::optional<std::string> subpath;

    bool operator==(const PackageUrl&) const = default;
};

struct Component {
    std::optional<PackageUrl> purl;
    std::string bom_ref;
    std::optional<std::string> group;
    std::string display_name;
    std::string version;
    std::map<std::string, std::string> hashes;
    AnalysisState analysis_state = AnalysisState::New;

    bool operator==(const Component&) const = default;
};

/// Store-wide identity: canonical purl, or "nopurl:<name>@<version>".
std::string component_key(const Component& c);

struct VersionBound {
    std::string version;
    bool inclusive = false;

    bool operator==(const VersionBound&) const = default;
};

struct VersionRange {
    std::optional<VersionBound> start;
    std::optional<VersionBound> end;
    std::vector<std::string> exact;

    bool operator==(const VersionRange&) const = default;

    static VersionRange below(std::string version, bool inclusive = false) {
        return VersionRange{std::nullopt, VersionBound{std::move(version), inclusive}, {}};
    }
    static VersionRange exactly(std::vector<std::string> versions) {
        return VersionRange{std::nullopt, std::nullopt, std::move(versions)};
    }
};

struct AffectedSpec {
    /// "<ecosystem>:<namespace>/<name>", lowercased.
    std::string product_key;
    VersionRange range;
    SourceForm source_form = SourceForm::Cpe;

    bool operator==(const AffectedSpec&) const = default;
};

struct Vulnerability {
    std::string cve_id;
    Timestamp published{};
    Timestamp last_modified{};
    std::optional<double> cvss_v3_base;
    std::optional<double> cvss_v2_base;
    Severity severity = Severity::None;
    SeveritySource severity_source = SeveritySource::Unscored;
    std::vector<AffectedSpec> affected;
    std::string description;

    bool operator==(const Vulnerability&) const = default;
};

struct EpssEntry {
    std::string cve_id;
    double score = 0.0;
    double percentile = 0.0;
    Date model_date{};

    bool operator==(const EpssEntry&) const = default;
};

struct VulnMatch {
    std::string component_key;
    std::string cve_id;
    MatchSource source = MatchSource::OfflineFeed;
    Timestamp matched_at{};

    bool operator==(const VulnMatch&) const = default;
};

struct PersistenceRecord {
    std::string repo_id;
    std::string cve_id;
    std::string first_vulnerable_tag;
    Timestamp first_vulnerable_date{};
    std::string first_clean_tag;
    Timestamp first_clean_date{};
    std::int64_t days = 0;

    bool operator==(const PersistenceRecord&) const = default;
};

/// One row per feed key ("nvd-2021", "nvd-modified", "epss"); latest wins.
struct FeedSnapshot {
    std::string feed_key;
    std::string checksum;
    Timestamp fetched_at{};
    std::int64_t entry_count = 0;

    bool operator==(const FeedSnapshot&) const = default;
};

/// CVSS v3.1 qualitative rating. Throws Error(Validation) outside [0, 10].
Severity severity_bucket(double cvss_v3_base);

/// CVSS v2 rating; no CRITICAL tier. Throws Error(Validation) outside [0, 10].
Severity severity_bucket_v2(double cvss_v2_base);

struct DerivedSeverity {
    Severity severity;
    SeveritySource source;
};

/// v3 when present, otherwise the v2 fallback, otherwise NONE/Unscored.
DerivedSeverity derive_severity(std::optional<double> v3, std::optional<double> v2);

bool is_valid_cve_id(std::string_view id);

// Invariant checks; each throws Error(Validation) naming the violated field.
void validate(const PackageUrl& p);
void validate(const Repository& r);
void validate(const Vulnerability& v);
void validate(const EpssEntry& e);
void validate(const PersistenceRecord& r);
void validate(const Component& c);

} // namespace relscan
