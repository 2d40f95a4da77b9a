#pragma once

// NVD and EPSS mirroring into the store.

#include "relscan/model.hpp"
#include "relscan/store.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace relscan::feeds {

/// Where feed payloads come from. fetch() returns the raw (possibly gzipped)
/// bytes; a missing file throws Error(NotFound), an unreachable source Error(Io).
class FeedSource {
public:
    virtual ~FeedSource() = default;
    virtual std::string fetch(const std::string& name) = 0;
    virtual std::string describe() const = 0;
};

class LocalDirectorySource final : public FeedSource {
public:
    explicit LocalDirectorySource(std::filesystem::path dir);
    std::string fetch(const std::string& name) override;
    std::string describe() const override;

private:
    std::filesystem::path dir_;
};

class HttpSource final : public FeedSource {
public:
    explicit HttpSource(std::string base_url);
    std::string fetch(const std::string& name) override;
    std::string describe() const override;

private:
    std::string base_url_;
};

/// http(s):// locators give an HttpSource, anything else a directory.
std::unique_ptr<FeedSource> open_source(const std::string& locator);

struct Cpe {
    std::string part;
    std::string vendor;
    std::string product;
    std::string version;
    std::string update;
};

/// Parses a CPE 2.3 formatted string, unescaping quoted characters.
std::optional<Cpe> parse_cpe23(const std::string& text);

/// vendor:product -> product keys ("maven:org.apache.logging.log4j/log4j-core").
/// Unknown pairs deliberately map to nothing.
class CpeAliasTable {
public:
    static CpeAliasTable builtin();
    /// JSON array of {"vendor", "product", "product_key"} objects, merged over the current table.
    void load_json(const std::filesystem::path& path);
    void add(const std::string& vendor, const std::string& product, const std::string& product_key);
    const std::vector<std::string>* lookup(const std::string& vendor, const std::string& product) const;

private:
    std::map<std::string, std::vector<std::string>> table_;
};

struct ParsedEntry {
    Vulnerability vuln;
    std::vector<std::string> unmatched_cpes;
    std::size_t dropped_specs = 0;
};

/// Parses one CVE_Items element. Throws Error(Ingestion) naming the entry on a
/// schema violation; throws Error(Validation) when the CVE id is missing.
ParsedEntry parse_nvd_entry(const nlohmann::json& item, const CpeAliasTable& aliases);

struct ParsedFeed {
    std::vector<ParsedEntry> entries;
    std::size_t rejected = 0;
    std::size_t duplicates = 0;
    std::vector<std::string> problems;
};

/// Parses a whole feed document (already decompressed). Entries without an id
/// are skipped and reported; repeated ids keep the newest last_modified, later
/// position winning ties.
ParsedFeed parse_nvd_feed(const std::string& text, const CpeAliasTable& aliases);

struct IngestionReport {
    std::string feed_key;
    bool skipped = false;
    std::size_t ingested = 0;
    std::size_t replaced = 0;
    std::size_t unchanged = 0;
    std::size_t rejected = 0;
    std::size_t duplicates = 0;
    std::size_t dropped_specs = 0;
    std::size_t unmatched_cpes = 0;
    std::vector<std::string> problems;

    /// "feed_key=... ingested=N replaced=N rejected=N ..." on one line.
    std::string line() const;
};

struct SyncResult {
    std::vector<FeedSnapshot> snapshots;
    std::vector<IngestionReport> reports;
};

std::string annual_feed_key(int year);
inline constexpr const char* kModifiedFeedKey = "nvd-modified";
inline constexpr const char* kEpssFeedKey = "epss";
inline constexpr int kFirstFeedYear = 2002;

/// Ingests annual feeds for [first_year, last_year] in ascending order, then
/// the modified feed. Annual feeds whose checksum matches the stored snapshot
/// are skipped; the modified feed is always merged and wins last_modified ties.
SyncResult sync_nvd(store::Store& store, FeedSource& source, int first_year, int last_year,
                    const CpeAliasTable& aliases, const Clock& clock = SystemClock::instance());

struct EpssParse {
    std::vector<EpssEntry> entries;
    std::size_t rejected = 0;
    std::vector<std::string> problems;
};

/// Parses "cve,epss,percentile" rows; the model date comes from a
/// "#...score_date:YYYY-MM-DD..." comment, else fallback_date.
EpssParse parse_epss_csv(const std::string& text, Date fallback_date);

inline constexpr const char* kEpssFileName = "epss_scores-current.csv.gz";

IngestionReport sync_epss(store::Store& store, FeedSource& source, const std::string& name = kEpssFileName,
                          const Clock& clock = SystemClock::instance());

} // namespace relscan::feeds
