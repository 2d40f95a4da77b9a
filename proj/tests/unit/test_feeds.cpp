#include "../support/fixtures.hpp"

#include "relscan/feeds.hpp"
#include "relscan/util.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace relscan;
using namespace relscan::feeds;
using nlohmann::json;
using relscan::testing::NvdEntrySpec;

namespace {

Timestamp ts(const char* s) { return *parse_iso8601(s); }

LocalDirectorySource fixture_source() { return LocalDirectorySource(relscan::testing::fixture_dir() / "nvd"); }

} // namespace

TEST(Cpe, ParsesAndUnescapes) {
    const auto c = parse_cpe23("cpe:2.3:a:apache:log4j:2.0:beta9:*:*:*:*:*:*");
    ASSERT_TRUE(c);
    EXPECT_EQ(c->vendor, "apache");
    EXPECT_EQ(c->product, "log4j");
    EXPECT_EQ(c->version, "2.0");
    EXPECT_EQ(c->update, "beta9");
    const auto e = parse_cpe23(R"(cpe:2.3:a:vendor:prod\:uct:1\.0:*:*:*:*:*:*:*)");
    ASSERT_TRUE(e);
    EXPECT_EQ(e->product, "prod:uct");
    EXPECT_EQ(e->version, "1.0");
    EXPECT_FALSE(parse_cpe23("cpe:/a:apache:log4j:2.0"));
}

TEST(NvdEntry, Log4ShellFixture) {
    const auto doc = json::parse(util::read_file(relscan::testing::fixture_dir() / "nvd" / "nvdcve-1.1-2021.json"));
    const auto e = parse_nvd_entry(doc["CVE_Items"][0], CpeAliasTable::builtin());
    EXPECT_EQ(e.vuln.cve_id, "CVE-2021-44228");
    EXPECT_EQ(e.vuln.cvss_v3_base, 10.0);
    EXPECT_EQ(e.vuln.severity, Severity::Critical);
    EXPECT_EQ(e.vuln.severity_source, SeveritySource::V3);
    EXPECT_EQ(e.vuln.published, ts("2021-12-10T10:15:00Z"));
    // Two bounded ranges and four exact versions; the webex CPE is unknown and
    // the firmware CPE is not an application.
    ASSERT_EQ(e.vuln.affected.size(), 6u);
    for (const auto& a : e.vuln.affected) EXPECT_EQ(a.product_key, "maven:org.apache.logging.log4j/log4j-core");
    EXPECT_EQ(e.vuln.affected[0].range.start->version, "2.0.1");
    EXPECT_TRUE(e.vuln.affected[0].range.start->inclusive);
    EXPECT_EQ(e.vuln.affected[0].range.end->version, "2.12.2");
    EXPECT_FALSE(e.vuln.affected[0].range.end->inclusive);
    EXPECT_EQ(e.vuln.affected[2].range.exact, std::vector<std::string>{"2.0-beta9"});
    EXPECT_EQ(e.vuln.affected[5].range.exact, std::vector<std::string>{"2.0"});
    EXPECT_EQ(e.unmatched_cpes, std::vector<std::string>{"cpe:2.3:a:cisco:webex_meetings_server:4.0:*:*:*:*:*:*:*"});
}

TEST(NvdEntry, ClientGolangFixture) {
    const auto doc = json::parse(util::read_file(relscan::testing::fixture_dir() / "nvd" / "nvdcve-1.1-2022.json"));
    const auto e = parse_nvd_entry(doc["CVE_Items"][0], CpeAliasTable::builtin());
    EXPECT_EQ(e.vuln.cve_id, "CVE-2022-21698");
    EXPECT_EQ(e.vuln.severity, Severity::High);
    ASSERT_EQ(e.vuln.affected.size(), 1u);
    EXPECT_EQ(e.vuln.affected[0].product_key, "golang:github.com/prometheus/client_golang");
    EXPECT_FALSE(e.vuln.affected[0].range.start);
    EXPECT_EQ(e.vuln.affected[0].range.end->version, "1.11.1");
}

TEST(NvdEntry, V2OnlyFallsBackToMedium) {
    NvdEntrySpec spec;
    spec.cve_id = "CVE-2020-1234";
    spec.v2 = 5.0;
    const auto e = parse_nvd_entry(relscan::testing::nvd_item(spec), CpeAliasTable::builtin());
    EXPECT_EQ(e.vuln.severity, Severity::Medium);
    EXPECT_EQ(e.vuln.severity_source, SeveritySource::V2);
}

TEST(NvdEntry, UnscoredIsNone) {
    NvdEntrySpec spec;
    spec.cve_id = "CVE-2020-1235";
    const auto e = parse_nvd_entry(relscan::testing::nvd_item(spec), CpeAliasTable::builtin());
    EXPECT_EQ(e.vuln.severity, Severity::None);
    EXPECT_EQ(e.vuln.severity_source, SeveritySource::Unscored);
}

TEST(NvdEntry, BadBoundsDroppedAndCounted) {
    NvdEntrySpec spec;
    spec.cve_id = "CVE-2020-1236";
    spec.cpe_matches = json::array({relscan::testing::cpe_range("lodash", "lodash", "4.0.0", "4.17.21"),
                                    relscan::testing::cpe_range("lodash", "lodash", "5.0.0", "1.0.0"),
                                    relscan::testing::cpe_range("lodash", "lodash", "", "bad version"),
                                    relscan::testing::cpe_exact("lodash", "lodash", "-")});
    const auto e = parse_nvd_entry(relscan::testing::nvd_item(spec), CpeAliasTable::builtin());
    EXPECT_EQ(e.vuln.affected.size(), 1u);
    EXPECT_EQ(e.dropped_specs, 3u);
}

TEST(NvdEntry, WildcardWithoutBoundsIsUnbounded) {
    NvdEntrySpec spec;
    spec.cve_id = "CVE-2020-1237";
    spec.cpe_matches = json::array({relscan::testing::cpe_range("lodash", "lodash", "", "")});
    const auto e = parse_nvd_entry(relscan::testing::nvd_item(spec), CpeAliasTable::builtin());
    ASSERT_EQ(e.vuln.affected.size(), 1u);
    EXPECT_FALSE(e.vuln.affected[0].range.start);
    EXPECT_FALSE(e.vuln.affected[0].range.end);
    EXPECT_TRUE(e.vuln.affected[0].range.exact.empty());
}

TEST(NvdEntry, MissingIdIsSkipReportedAndSchemaErrorsNameEntry) {
    json bad = relscan::testing::nvd_item({"CVE-2020-0001"});
    bad["cve"]["CVE_data_meta"].erase("ID");
    json typo = relscan::testing::nvd_item({"CVE-2020-0002"});
    typo["impact"] = {{"baseMetricV3", {{"cvssV3", {{"baseScore", "high"}}}}}};
    const auto feed = parse_nvd_feed(relscan::testing::nvd_feed({bad, relscan::testing::nvd_item({"CVE-2020-0003"})}).dump(),
                                     CpeAliasTable::builtin());
    EXPECT_EQ(feed.rejected, 1u);
    EXPECT_EQ(feed.entries.size(), 1u);
    try {
        parse_nvd_feed(relscan::testing::nvd_feed({typo}).dump(), CpeAliasTable::builtin());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Ingestion);
        EXPECT_NE(std::string(e.what()).find("CVE-2020-0002"), std::string::npos);
    }
}

TEST(NvdEntry, AliasTableLoadsFromJson) {
    util::TempDir dir;
    util::write_file_atomic(dir.path() / "a.json",
                            R"([{"vendor":"cisco","product":"webex_meetings_server","product_key":"npm:webex"}])");
    auto aliases = CpeAliasTable::builtin();
    aliases.load_json(dir.path() / "a.json");
    ASSERT_TRUE(aliases.lookup("Cisco", "webex_meetings_server"));
    EXPECT_EQ(aliases.lookup("cisco", "webex_meetings_server")->front(), "npm:webex");
}

TEST(Sync, FirstSyncThenModifiedOnly) {
    auto store = store::Store::open(":memory:");
    auto src = fixture_source();
    ManualClock clock(ts("2023-06-01T00:00:00Z"));
    const auto first = sync_nvd(store, src, 2021, 2022, CpeAliasTable::builtin(), clock);
    ASSERT_EQ(first.snapshots.size(), 3u);
    EXPECT_EQ(first.snapshots[0].feed_key, "nvd-2021");
    EXPECT_EQ(first.snapshots[1].feed_key, "nvd-2022");
    EXPECT_EQ(first.snapshots[2].feed_key, "nvd-modified");
    EXPECT_EQ(first.snapshots[0].entry_count, 3);
    EXPECT_EQ(store.count_vulnerabilities(), 5u);

    // Modified feed bumps Log4Shell; published date is kept.
    const auto v = store.get_vulnerability("CVE-2021-44228");
    EXPECT_EQ(v->last_modified, ts("2022-04-01T00:00:00Z"));
    EXPECT_EQ(v->published, ts("2021-12-10T10:15:00Z"));
    EXPECT_NE(v->description.find("revised"), std::string::npos);
    EXPECT_EQ(first.reports[2].replaced, 1u);

    const auto before = store.dump();
    const auto second = sync_nvd(store, src, 2021, 2022, CpeAliasTable::builtin(), clock);
    EXPECT_TRUE(second.reports[0].skipped);
    EXPECT_TRUE(second.reports[1].skipped);
    EXPECT_FALSE(second.reports[2].skipped);
    EXPECT_EQ(store.dump(), before);
    EXPECT_EQ(store.list_unmatched_cpes().size(), 1u);
    EXPECT_NO_THROW(store.check_integrity());
}

TEST(Sync, ReportLine) {
    IngestionReport r;
    r.feed_key = "nvd-2021";
    r.ingested = 3;
    r.rejected = 1;
    EXPECT_EQ(r.line().rfind("feed_key=nvd-2021 ingested=3 replaced=0 rejected=1", 0), 0u);
}

TEST(Sync, UnreachableSourceIsRetryable) {
    auto store = store::Store::open(":memory:");
    LocalDirectorySource src("/nonexistent/feeds");
    try {
        sync_nvd(store, src, 2021, 2021, CpeAliasTable::builtin(), ManualClock(ts("2023-01-01T00:00:00Z")));
        FAIL();
    } catch (const Error& e) {
        EXPECT_TRUE(e.retryable());
    }
    EXPECT_THROW(sync_nvd(store, src, 1999, 2021, CpeAliasTable::builtin()), Error);
}

TEST(Sync, HttpSourceUnreachableIsRetryable) {
    HttpSource src("http://127.0.0.1:1");
    try {
        src.fetch("nvdcve-1.1-2021.json.gz");
        FAIL();
    } catch (const Error& e) {
        EXPECT_TRUE(e.retryable());
    }
}

// Sequential-apply oracle: feeds in order; an entry replaces the held one when
// newer, or equally new and coming from the modified feed.
TEST(Sync, RandomOverlapMatchesSequentialOracle) {
    std::mt19937_64 rng(7);
    for (int round = 0; round < 20; ++round) {
        util::TempDir dir;
        std::map<std::string, std::pair<std::string, double>> oracle; // cve -> (last_modified, score)
        std::vector<json> feed_items[3];
        auto make = [&](int n, int year) {
            NvdEntrySpec s;
            s.cve_id = "CVE-" + std::to_string(year) + "-" + std::to_string(1000 + n);
            s.published = std::to_string(year) + "-01-01T00:00Z";
            s.last_modified = std::to_string(year) + "-0" + std::to_string(1 + rng() % 9) + "-1" +
                              std::to_string(rng() % 10) + "T00:00Z";
            s.v3 = static_cast<double>(rng() % 101) / 10.0;
            s.cpe_matches = json::array({relscan::testing::cpe_range("lodash", "lodash", "", "4." + std::to_string(n))});
            return s;
        };
        auto apply = [&](const NvdEntrySpec& s, bool modified) {
            auto it = oracle.find(s.cve_id);
            if (it == oracle.end() || s.last_modified > it->second.first ||
                (modified && s.last_modified == it->second.first))
                oracle[s.cve_id] = {s.last_modified, *s.v3};
        };
        std::vector<NvdEntrySpec> annual;
        for (int i = 0; i < 50; ++i) annual.push_back(make(i, i < 25 ? 2020 : 2021));
        for (const auto& s : annual) {
            feed_items[s.cve_id[7] == '0' ? 0 : 1].push_back(relscan::testing::nvd_item(s));
            apply(s, false);
        }
        std::vector<int> idx(50);
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (int k = 0; k < 10; ++k) {
            NvdEntrySpec m = annual[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
            m.last_modified = k % 3 == 0 ? m.last_modified : "2022-0" + std::to_string(1 + rng() % 9) + "-01T00:00Z";
            m.v3 = static_cast<double>(rng() % 101) / 10.0;
            feed_items[2].push_back(relscan::testing::nvd_item(m));
            apply(m, true);
        }
        relscan::testing::write_gz_json(dir.path() / "nvdcve-1.1-2020.json.gz", relscan::testing::nvd_feed(feed_items[0]));
        relscan::testing::write_gz_json(dir.path() / "nvdcve-1.1-2021.json.gz", relscan::testing::nvd_feed(feed_items[1]));
        relscan::testing::write_gz_json(dir.path() / "nvdcve-1.1-modified.json.gz",
                                        relscan::testing::nvd_feed(feed_items[2]));

        auto store = store::Store::open(dir.path() / "s.db");
        LocalDirectorySource src(dir.path());
        ManualClock clock(ts("2023-01-01T00:00:00Z"));
        sync_nvd(store, src, 2020, 2021, CpeAliasTable::builtin(), clock);
        ASSERT_EQ(store.count_vulnerabilities(), oracle.size());
        for (const auto& [id, expect] : oracle) {
            const auto v = store.get_vulnerability(id);
            ASSERT_TRUE(v) << id;
            EXPECT_EQ(format_iso8601(v->last_modified).substr(0, 16), expect.first.substr(0, 16)) << id;
            EXPECT_DOUBLE_EQ(*v->cvss_v3_base, expect.second) << id;
        }
        const auto before = store.dump();
        clock.advance(std::chrono::hours(24));
        sync_nvd(store, src, 2020, 2021, CpeAliasTable::builtin(), clock);
        EXPECT_EQ(store.dump(), before);
    }
}

TEST(Epss, FixtureRows) {
    auto store = store::Store::open(":memory:");
    auto src = fixture_source();
    const auto report = sync_epss(store, src, kEpssFileName, ManualClock(ts("2023-06-01T00:00:00Z")));
    EXPECT_EQ(report.ingested, 3u);
    EXPECT_EQ(report.rejected, 1u);
    EXPECT_DOUBLE_EQ(store.get_epss("CVE-2021-44228")->score, 0.97095);
    EXPECT_DOUBLE_EQ(store.get_epss("CVE-2022-21698")->score, 0.02686);
    EXPECT_EQ(store.get_epss("CVE-2021-44228")->model_date, Date{std::chrono::days{days_from_civil(2023, 3, 7)}});
    EXPECT_FALSE(store.get_epss("CVE-X"));
}

TEST(Epss, RejectsOutOfRangeAndGarbage) {
    const auto p = parse_epss_csv("cve,epss,percentile\nCVE-2021-0001,1.5,0.5\nCVE-2021-0002,abc,0.1\n"
                                  "CVE-2021-0003,0.2,-0.1\nCVE-2021-0004,0.3,0.4\nshort,row\n",
                                  Date{std::chrono::days{19000}});
    EXPECT_EQ(p.entries.size(), 1u);
    EXPECT_EQ(p.rejected, 4u);
}

TEST(Epss, NewestModelDateWins) {
    auto store = store::Store::open(":memory:");
    util::TempDir dir;
    util::write_file_atomic(dir.path() / "new.csv", "#model_version:v2,score_date:2023-03-07T00:00:00+0000\n"
                                                    "CVE-2021-0001,0.5,0.5\n");
    util::write_file_atomic(dir.path() / "old.csv", "#model_version:v1,score_date:2022-03-07T00:00:00+0000\n"
                                                    "CVE-2021-0001,0.1,0.1\n");
    LocalDirectorySource src(dir.path());
    sync_epss(store, src, "new.csv");
    const auto r = sync_epss(store, src, "old.csv");
    EXPECT_EQ(r.unchanged, 1u);
    EXPECT_DOUBLE_EQ(store.get_epss("CVE-2021-0001")->score, 0.5);
}
