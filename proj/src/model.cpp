#include "relscan/model.hpp"

#include "relscan/purl.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <utility>

namespace relscan {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Validation: return "VALIDATION";
    case ErrorKind::Parse: return "PARSE";
    case ErrorKind::Io: return "IO";
    case ErrorKind::Ingestion: return "INGESTION";
    case ErrorKind::Conflict: return "CONFLICT";
    case ErrorKind::Integrity: return "INTEGRITY";
    case ErrorKind::NotFound: return "NOT_FOUND";
    case ErrorKind::RateLimited: return "RATE_LIMITED";
    case ErrorKind::Usage: return "USAGE";
    case ErrorKind::Unsupported: return "UNSUPPORTED";
    case ErrorKind::UndefinedCorrelation: return "UNDEFINED_CORRELATION";
    case ErrorKind::NotEnoughReleases: return "NOT_ENOUGH_RELEASES";
    case ErrorKind::RejectedNoReleases: return "REJECTED_NO_RELEASES";
    }
    return "UNKNOWN";
}

namespace {

template <typename E, std::size_t N>
E lookup(std::string_view s, const std::array<std::pair<E, std::string_view>, N>& table, std::string_view what) {
    for (const auto& [value, name] : table)
        if (name == s) return value;
    throw Error(ErrorKind::Validation, "unknown " + std::string(what) + " '" + std::string(s) + "'");
}

template <typename E, std::size_t N>
std::string_view name_of(E v, const std::array<std::pair<E, std::string_view>, N>& table) {
    for (const auto& [value, name] : table)
        if (value == v) return name;
    return "?";
}

constexpr std::array<std::pair<Language, std::string_view>, 8> kLanguages{{
    {Language::Java, "Java"},
    {Language::Go, "Go"},
    {Language::Rust, "Rust"},
    {Language::Ruby, "Ruby"},
    {Language::Python, "Python"},
    {Language::PHP, "PHP"},
    {Language::JavaScript, "JavaScript"},
    {Language::Other, "Other"},
}};
constexpr std::array<std::pair<ReleaseState, std::string_view>, 3> kReleaseStates{{
    {ReleaseState::New, "NEW"}, {ReleaseState::Done, "DONE"}, {ReleaseState::Fail, "FAIL"}}};
constexpr std::array<std::pair<AnalysisState, std::string_view>, 2> kAnalysisStates{{
    {AnalysisState::New, "NEW"}, {AnalysisState::Analyzed, "ANALYZED"}}};
constexpr std::array<std::pair<Severity, std::string_view>, 5> kSeverities{{
    {Severity::None, "NONE"},
    {Severity::Low, "LOW"},
    {Severity::Medium, "MEDIUM"},
    {Severity::High, "HIGH"},
    {Severity::Critical, "CRITICAL"},
}};
constexpr std::array<std::pair<SeveritySource, std::string_view>, 3> kSeveritySources{{
    {SeveritySource::V3, "v3"}, {SeveritySource::V2, "v2"}, {SeveritySource::Unscored, "none"}}};
constexpr std::array<std::pair<SourceForm, std::string_view>, 2> kSourceForms{{
    {SourceForm::Cpe, "CPE"}, {SourceForm::Purl, "PURL"}}};
constexpr std::array<std::pair<MatchSource, std::string_view>, 2> kMatchSources{{
    {MatchSource::OfflineFeed, "OFFLINE_FEED"}, {MatchSource::RemoteIndex, "REMOTE_INDEX"}}};

} // namespace

std::string_view to_string(Language v) { return name_of(v, kLanguages); }
std::string_view to_string(ReleaseState v) { return name_of(v, kReleaseStates); }
std::string_view to_string(AnalysisState v) { return name_of(v, kAnalysisStates); }
std::string_view to_string(Severity v) { return name_of(v, kSeverities); }
std::string_view to_string(SeveritySource v) { return name_of(v, kSeveritySources); }
std::string_view to_string(SourceForm v) { return name_of(v, kSourceForms); }
std::string_view to_string(MatchSource v) { return name_of(v, kMatchSources); }

Language language_from_string(std::string_view s) { return lookup(s, kLanguages, "language"); }
ReleaseState release_state_from_string(std::string_view s) { return lookup(s, kReleaseStates, "release state"); }
AnalysisState analysis_state_from_string(std::string_view s) {
    return lookup(s, kAnalysisStates, "analysis state");
}
Severity severity_from_string(std::string_view s) { return lookup(s, kSeverities, "severity"); }
SeveritySource severity_source_from_string(std::string_view s) {
    return lookup(s, kSeveritySources, "severity source");
}
SourceForm source_form_from_string(std::string_view s) { return lookup(s, kSourceForms, "source form"); }
MatchSource match_source_from_string(std::string_view s) { return lookup(s, kMatchSources, "match source"); }

bool is_legal_transition(ReleaseState from, ReleaseState to) {
    return (from == ReleaseState::New && (to == ReleaseState::Done || to == ReleaseState::Fail)) ||
           (from == ReleaseState::Fail && to == ReleaseState::New);
}

std::string component_key(const Component& c) {
    if (c.purl) return purl::format(*c.purl);
    return "nopurl:" + c.display_name + "@" + c.version;
}

namespace {

void check_score(double score, std::string_view what) {
    if (!std::isfinite(score) || score < 0.0 || score > 10.0)
        throw Error(ErrorKind::Validation, std::string(what) + " score out of [0,10]: " + std::to_string(score));
}

// Scores carry one decimal; compare at that resolution so 3.9/4.0 etc. are exact.
int tenths(double score) { return static_cast<int>(std::lround(score * 10.0)); }

} // namespace

Severity severity_bucket(double cvss_v3_base) {
    check_score(cvss_v3_base, "CVSS v3");
    if (cvss_v3_base == 0.0) return Severity::None;
    const int t = tenths(cvss_v3_base);
    if (t < 40) return Severity::Low;
    if (t < 70) return Severity::Medium;
    if (t < 90) return Severity::High;
    return Severity::Critical;
}

Severity severity_bucket_v2(double cvss_v2_base) {
    check_score(cvss_v2_base, "CVSS v2");
    if (cvss_v2_base == 0.0) return Severity::None;
    const int t = tenths(cvss_v2_base);
    if (t < 40) return Severity::Low;
    if (t < 70) return Severity::Medium;
    return Severity::High;
}

DerivedSeverity derive_severity(std::optional<double> v3, std::optional<double> v2) {
    if (v3) return {severity_bucket(*v3), SeveritySource::V3};
    if (v2) return {severity_bucket_v2(*v2), SeveritySource::V2};
    return {Severity::None, SeveritySource::Unscored};
}

bool is_valid_cve_id(std::string_view id) {
    if (id.size() < 13 || id.substr(0, 4) != "CVE-" || id[8] != '-') return false;
    for (std::size_t i = 4; i < 8; ++i)
        if (!std::isdigit(static_cast<unsigned char>(id[i]))) return false;
    for (std::size_t i = 9; i < id.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(id[i]))) return false;
    return id.size() - 9 >= 4;
}

void validate(const PackageUrl& p) {
    if (p.ecosystem.empty()) throw Error(ErrorKind::Validation, "purl: empty ecosystem");
    if (p.name.empty()) throw Error(ErrorKind::Validation, "purl: empty name");
}

void validate(const Repository& r) {
    if (r.id.empty()) throw Error(ErrorKind::Validation, "repository: empty id");
    if (r.stargazers < 0) throw Error(ErrorKind::Validation, "repository " + r.id + ": negative stargazers");
    if (r.contributor_count < 0)
        throw Error(ErrorKind::Validation, "repository " + r.id + ": negative contributor_count");
}

void validate(const Vulnerability& v) {
    if (!is_valid_cve_id(v.cve_id)) throw Error(ErrorKind::Validation, "malformed CVE id '" + v.cve_id + "'");
    if (v.last_modified < v.published)
        throw Error(ErrorKind::Validation, v.cve_id + ": last_modified precedes published");
    const DerivedSeverity expected = derive_severity(v.cvss_v3_base, v.cvss_v2_base);
    if (expected.severity != v.severity || expected.source != v.severity_source)
        throw Error(ErrorKind::Validation, v.cve_id + ": severity inconsistent with CVSS scores");
}

void validate(const EpssEntry& e) {
    if (!(e.score >= 0.0 && e.score <= 1.0))
        throw Error(ErrorKind::Validation, e.cve_id + ": EPSS score out of [0,1]");
    if (!(e.percentile >= 0.0 && e.percentile <= 1.0))
        throw Error(ErrorKind::Validation, e.cve_id + ": EPSS percentile out of [0,1]");
}

void validate(const PersistenceRecord& r) {
    if (r.first_clean_date < r.first_vulnerable_date)
        throw Error(ErrorKind::Validation, r.cve_id + ": clean release precedes vulnerable release");
    if (r.days != whole_days_between(r.first_vulnerable_date, r.first_clean_date))
        throw Error(ErrorKind::Validation, r.cve_id + ": days inconsistent with release dates");
}

void validate(const Component& c) {
    if (c.purl) {
        validate(*c.purl);
        if (c.purl->version && !c.version.empty() && *c.purl->version != c.version)
            throw Error(ErrorKind::Validation, "component " + c.display_name + ": version differs from purl");
    }
}

} // namespace relscan
