#include "relscan/analytics.hpp"

#include "relscan/error.hpp"
#include "relscan/matcher.hpp"
#include "relscan/purl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace relscan::analytics {

using nlohmann::json;

namespace {

std::string num(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

json opt_num(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json header(const std::string& kind) { return {{"kind", kind}, {"schema_version", kReportSchemaVersion}}; }

bool release_before(const ReleaseView& a, const ReleaseView& b) {
    return std::tie(a.release.repo_id, a.release.release_date, a.release.tag) <
           std::tie(b.release.repo_id, b.release.release_date, b.release.tag);
}

std::pair<int, unsigned> year_month(Timestamp t) {
    const auto c = civil_from_days(utc_date(t).time_since_epoch().count());
    return {c.year, c.month};
}

std::string period_of(Timestamp t, Granularity g) {
    const auto [y, m] = year_month(t);
    char buf[16];
    if (g == Granularity::Year) std::snprintf(buf, sizeof buf, "%04d", y);
    else std::snprintf(buf, sizeof buf, "%04d-%02u", y, m);
    return buf;
}

// Every period label from `from` to `to` inclusive.
std::vector<std::string> periods_between(Timestamp from, Timestamp to, Granularity g) {
    auto [y, m] = year_month(from);
    const auto [ey, em] = year_month(to);
    std::vector<std::string> out;
    char buf[16];
    while (y < ey || (y == ey && (g == Granularity::Year || m <= em))) {
        if (g == Granularity::Year) {
            std::snprintf(buf, sizeof buf, "%04d", y);
            ++y;
        } else {
            std::snprintf(buf, sizeof buf, "%04d-%02u", y, m);
            if (++m > 12) {
                m = 1;
                ++y;
            }
        }
        out.emplace_back(buf);
    }
    return out;
}

} // namespace

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}

std::string_view to_string(Unit u) { return u == Unit::Release ? "release" : "repository_latest"; }
std::string_view to_string(Granularity g) { return g == Granularity::Year ? "year" : "month"; }

Dataset load_dataset(const store::Store& store, const std::optional<std::string>& repo_id) {
    Dataset data;
    if (repo_id) {
        if (auto r = store.get_repository(*repo_id)) data.repositories.push_back(*r);
    } else {
        data.repositories = store.list_repositories();
    }
    std::map<std::string, Timestamp> published;
    for (const auto& v : store.list_vulnerabilities()) {
        published[v.cve_id] = v.published;
        data.severity[v.cve_id] = v.severity;
    }
    std::map<std::string, std::vector<VulnMatch>> by_component;
    for (auto& m : store.list_matches()) by_component[m.component_key].push_back(std::move(m));

    for (const auto& repo : data.repositories) {
        for (const auto& rel : store.list_releases(repo.id)) {
            ReleaseView view;
            view.release = rel;
            view.language = repo.primary_language;
            if (rel.state == ReleaseState::Done) {
                for (const auto& link : store.list_release_components(repo.id, rel.tag)) {
                    const auto it = by_component.find(link.component_key);
                    bool vulnerable = false;
                    if (it != by_component.end()) {
                        for (const auto& m : it->second) view.all_cves.insert(m.cve_id);
                        for (const auto& m : matcher::known_at(rel, it->second, published)) {
                            view.known_cves.insert(m.cve_id);
                            vulnerable = true;
                        }
                    }
                    if (link.depth) view.component_depths.emplace_back(*link.depth, vulnerable);
                }
            }
            data.releases.push_back(std::move(view));
        }
    }
    std::sort(data.releases.begin(), data.releases.end(), release_before);
    return data;
}

// ---- persistence ----------------------------------------------------------

std::vector<PersistenceRecord> persistence(const std::string& repo_id, std::vector<ReleaseCves> releases) {
    std::sort(releases.begin(), releases.end(),
              [](const ReleaseCves& a, const ReleaseCves& b) { return std::tie(a.date, a.tag) < std::tie(b.date, b.tag); });
    std::vector<PersistenceRecord> out;
    std::set<std::string> done;
    for (std::size_t i = 0; i < releases.size(); ++i) {
        for (const auto& cve : releases[i].cves) {
            if (done.count(cve)) continue;
            done.insert(cve);
            for (std::size_t j = i + 1; j < releases.size(); ++j) {
                if (releases[j].cves.count(cve)) continue;
                PersistenceRecord r;
                r.repo_id = repo_id;
                r.cve_id = cve;
                r.first_vulnerable_tag = releases[i].tag;
                r.first_vulnerable_date = releases[i].date;
                r.first_clean_tag = releases[j].tag;
                r.first_clean_date = releases[j].date;
                r.days = whole_days_between(releases[i].date, releases[j].date);
                out.push_back(std::move(r));
                break;
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.cve_id < b.cve_id; });
    return out;
}

std::vector<PersistenceRecord> persistence(const Dataset& data) {
    std::map<std::string, std::vector<ReleaseCves>> per_repo;
    for (const auto& v : data.releases)
        if (v.release.state == ReleaseState::Done)
            per_repo[v.release.repo_id].push_back({v.release.tag, v.release.release_date, v.known_cves});
    std::vector<PersistenceRecord> out;
    for (auto& [repo, rels] : per_repo) {
        auto recs = persistence(repo, std::move(rels));
        out.insert(out.end(), recs.begin(), recs.end());
    }
    return out;
}

std::vector<PersistenceCurve> persistence_curves(const std::vector<PersistenceRecord>& records,
                                                 const std::map<std::string, Severity>& severity,
                                                 std::vector<std::int64_t> thresholds) {
    std::map<Severity, std::vector<std::int64_t>> days_by_severity;
    for (const auto& r : records) {
        const auto it = severity.find(r.cve_id);
        days_by_severity[it == severity.end() ? Severity::None : it->second].push_back(r.days);
    }
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    std::vector<PersistenceCurve> out;
    for (auto& [sev, days] : days_by_severity) {
        std::sort(days.begin(), days.end());
        std::vector<std::int64_t> cuts = thresholds;
        if (cuts.empty()) {
            cuts = days;
            cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        }
        PersistenceCurve curve;
        curve.severity = sev;
        curve.records = days.size();
        const double n = static_cast<double>(days.size());
        std::size_t below = 0;
        for (const auto cut : cuts) {
            const auto upto = static_cast<std::size_t>(std::upper_bound(days.begin(), days.end(), cut) - days.begin());
            CurvePoint p;
            p.days = cut;
            p.count = upto - below;
            p.bin_percent = 100.0 * static_cast<double>(p.count) / n;
            p.cumulative = static_cast<double>(upto) / n;
            below = upto;
            curve.points.push_back(p);
        }
        out.push_back(std::move(curve));
    }
    return out;
}

// ---- correlation ----------------------------------------------------------

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw Error(ErrorKind::Validation, "pearson: vectors differ in length (" + std::to_string(x.size()) + " vs " +
                                               std::to_string(y.size()) + ")");
    if (x.size() < 2) throw Error(ErrorKind::UndefinedCorrelation, "pearson: fewer than two observations");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw Error(ErrorKind::UndefinedCorrelation, "pearson: constant input vector");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<Observation> observations(const Dataset& data) {
    std::vector<Observation> out;
    std::map<std::string, std::int64_t> previous_commits;
    for (const auto& v : data.releases) { // ordered by (repo, date, tag)
        if (v.release.state != ReleaseState::Done) continue;
        Observation o{v.release.repo_id, v.language, v.release.tag, v.release.release_date,
                      0, static_cast<double>(v.release.contributor_count), static_cast<double>(v.known_cves.size()),
                      static_cast<double>(v.release.commit_count)};
        const auto prev = previous_commits.find(v.release.repo_id);
        const std::int64_t base = prev == previous_commits.end() ? 0 : prev->second;
        o.commits = static_cast<double>(std::max<std::int64_t>(0, v.release.commit_count - base));
        previous_commits[v.release.repo_id] = v.release.commit_count;
        out.push_back(o);
    }
    return out;
}

std::vector<CorrelationRow> correlation_table(const std::vector<Observation>& rows, Unit unit) {
    std::vector<Observation> chosen;
    if (unit == Unit::Release) {
        chosen = rows;
    } else {
        std::map<std::string, Observation> latest;
        for (const auto& r : rows) {
            auto [it, fresh] = latest.emplace(r.repo_id, r);
            if (!fresh && std::tie(it->second.date, it->second.tag) < std::tie(r.date, r.tag)) it->second = r;
        }
        for (auto& [id, r] : latest) chosen.push_back(r);
    }
    std::map<Language, std::vector<const Observation*>> parts;
    for (const auto& r : chosen) parts[r.language].push_back(&r);

    std::vector<CorrelationRow> out;
    for (const auto& [lang, obs] : parts) {
        if (obs.size() < 2) continue;
        std::vector<double> commits, contributors, vulns;
        for (const auto* o : obs) {
            commits.push_back(unit == Unit::Release ? o->commits : o->total_commits);
            contributors.push_back(o->contributors);
            vulns.push_back(o->vulnerabilities);
        }
        CorrelationRow row;
        row.language = lang;
        row.unit = unit;
        row.observations = obs.size();
        try {
            row.commits_vs_vulns = pearson(commits, vulns);
        } catch (const Error&) {
        }
        try {
            row.contributors_vs_vulns = pearson(contributors, vulns);
        } catch (const Error&) {
        }
        out.push_back(row);
    }
    return out;
}

// ---- timelines ------------------------------------------------------------

std::vector<TimelineBucket> release_timelines(const Dataset& data, Granularity granularity) {
    std::map<Language, std::map<std::string, TimelineBucket>> buckets;
    std::map<Language, std::pair<Timestamp, Timestamp>> range;
    for (const auto& v : data.releases) {
        const auto d = v.release.release_date;
        auto [it, fresh] = range.emplace(v.language, std::pair{d, d});
        if (!fresh) {
            it->second.first = std::min(it->second.first, d);
            it->second.second = std::max(it->second.second, d);
        }
        auto& b = buckets[v.language][period_of(d, granularity)];
        ++b.releases;
        if (v.release.state == ReleaseState::Done && !v.known_cves.empty()) ++b.vulnerable;
    }
    std::vector<TimelineBucket> out;
    for (const auto& [lang, r] : range) {
        for (const auto& p : periods_between(r.first, r.second, granularity)) {
            TimelineBucket b;
            if (const auto it = buckets[lang].find(p); it != buckets[lang].end()) b = it->second;
            b.language = lang;
            b.period = p;
            out.push_back(b);
        }
    }
    return out;
}

std::vector<CveTimelineBucket> cve_timeline(const Dataset& data, const std::string& cve_id, Granularity granularity) {
    if (data.releases.empty()) return {};
    std::map<std::string, CveTimelineBucket> buckets;
    Timestamp lo = data.releases.front().release.release_date, hi = lo;
    for (const auto& v : data.releases) {
        const auto d = v.release.release_date;
        lo = std::min(lo, d);
        hi = std::max(hi, d);
        auto& b = buckets[period_of(d, granularity)];
        ++b.releases;
        if (v.all_cves.count(cve_id)) ++b.affected;
        if (v.known_cves.count(cve_id)) ++b.known;
    }
    std::vector<CveTimelineBucket> out;
    for (const auto& p : periods_between(lo, hi, granularity)) {
        CveTimelineBucket b = buckets[p];
        b.period = p;
        out.push_back(b);
    }
    return out;
}

// ---- depth ----------------------------------------------------------------

std::vector<DepthHistogram> depth_report(const Dataset& data) {
    std::map<Language, DepthHistogram> by_lang;
    for (const auto& v : data.releases) {
        if (v.component_depths.empty()) continue;
        auto& h = by_lang[v.language];
        h.language = v.language;
        for (const auto& [depth, vulnerable] : v.component_depths) {
            const int b = sbom::depth_bucket(depth);
            ++h.all[b];
            if (vulnerable) ++h.vulnerable[b];
        }
    }
    std::vector<DepthHistogram> out;
    for (auto& [lang, h] : by_lang) {
        const auto total = std::accumulate(h.all.begin(), h.all.end(), std::size_t{0});
        const auto vtotal = std::accumulate(h.vulnerable.begin(), h.vulnerable.end(), std::size_t{0});
        for (int b = 0; b < sbom::kDepthBuckets; ++b) {
            h.all_percent[b] = total ? 100.0 * static_cast<double>(h.all[b]) / static_cast<double>(total) : 0.0;
            h.vulnerable_percent[b] =
                vtotal ? 100.0 * static_cast<double>(h.vulnerable[b]) / static_cast<double>(vtotal) : 0.0;
        }
        out.push_back(h);
    }
    return out;
}

// ---- documents ------------------------------------------------------------

ReportDoc timeline_report(const Dataset& data, Granularity granularity) {
    ReportDoc doc{"timeline", header("timeline"), {}};
    doc.json["granularity"] = to_string(granularity);
    doc.json["vulnerable_view"] = "known_at_release";
    json rows = json::array();
    std::ostringstream csv;
    csv << "language,period,releases,vulnerable_releases\n";
    for (const auto& b : release_timelines(data, granularity)) {
        rows.push_back({{"language", to_string(b.language)},
                        {"period", b.period},
                        {"releases", b.releases},
                        {"vulnerable_releases", b.vulnerable}});
        csv << to_string(b.language) << ',' << b.period << ',' << b.releases << ',' << b.vulnerable << '\n';
    }
    doc.json["rows"] = std::move(rows);
    doc.csv = csv.str();
    return doc;
}

ReportDoc depth_report_doc(const Dataset& data) {
    ReportDoc doc{"depth", header("depth"), {}};
    doc.json["vulnerable_view"] = "known_at_release";
    json rows = json::array();
    std::ostringstream csv;
    csv << "language,histogram,depth_bucket,count,percent\n";
    for (const auto& h : depth_report(data)) {
        json all = json::array(), vuln = json::array();
        for (int b = 0; b < sbom::kDepthBuckets; ++b) {
            all.push_back({{"depth", b}, {"count", h.all[b]}, {"percent", h.all_percent[b]}});
            vuln.push_back({{"depth", b}, {"count", h.vulnerable[b]}, {"percent", h.vulnerable_percent[b]}});
        }
        for (int b = 0; b < sbom::kDepthBuckets; ++b)
            csv << to_string(h.language) << ",all," << (b == sbom::kDepthBuckets - 1 ? "5+" : std::to_string(b)) << ','
                << h.all[b] << ',' << num(h.all_percent[b], 4) << '\n';
        for (int b = 0; b < sbom::kDepthBuckets; ++b)
            csv << to_string(h.language) << ",vulnerable,"
                << (b == sbom::kDepthBuckets - 1 ? "5+" : std::to_string(b)) << ',' << h.vulnerable[b] << ','
                << num(h.vulnerable_percent[b], 4) << '\n';
        rows.push_back({{"language", to_string(h.language)}, {"all", std::move(all)}, {"vulnerable", std::move(vuln)}});
    }
    doc.json["rows"] = std::move(rows);
    doc.csv = csv.str();
    return doc;
}

ReportDoc correlation_report(const Dataset& data) {
    ReportDoc doc{"correlation", header("correlation"), {}};
    doc.json["vulnerability_count"] = "distinct CVEs known at release";
    const auto obs = observations(data);
    json rows = json::array();
    std::ostringstream csv;
    csv << "unit,language,observations,commits_vs_vulns,contributors_vs_vulns\n";
    for (const Unit unit : {Unit::Release, Unit::RepositoryLatest}) {
        for (const auto& r : correlation_table(obs, unit)) {
            rows.push_back({{"unit", to_string(unit)},
                            {"language", to_string(r.language)},
                            {"observations", r.observations},
                            {"commits_vs_vulns", opt_num(r.commits_vs_vulns)},
                            {"contributors_vs_vulns", opt_num(r.contributors_vs_vulns)}});
            csv << to_string(unit) << ',' << to_string(r.language) << ',' << r.observations << ','
                << (r.commits_vs_vulns ? num(*r.commits_vs_vulns) : "") << ','
                << (r.contributors_vs_vulns ? num(*r.contributors_vs_vulns) : "") << '\n';
        }
    }
    doc.json["rows"] = std::move(rows);
    doc.csv = csv.str();
    return doc;
}

ReportDoc persistence_report(const Dataset& data, std::vector<std::int64_t> thresholds) {
    ReportDoc doc{"persistence", header("persistence"), {}};
    const auto records = persistence(data);
    std::map<std::string, Language> lang_of;
    for (const auto& r : data.repositories) lang_of[r.id] = r.primary_language;

    json recs = json::array();
    std::map<Language, std::vector<PersistenceRecord>> by_lang;
    for (const auto& r : records) {
        const auto sev = data.severity.count(r.cve_id) ? data.severity.at(r.cve_id) : Severity::None;
        recs.push_back({{"repo_id", r.repo_id},
                        {"cve_id", r.cve_id},
                        {"severity", to_string(sev)},
                        {"first_vulnerable_tag", r.first_vulnerable_tag},
                        {"first_vulnerable_date", format_date(r.first_vulnerable_date)},
                        {"first_clean_tag", r.first_clean_tag},
                        {"first_clean_date", format_date(r.first_clean_date)},
                        {"days", r.days}});
        by_lang[lang_of[r.repo_id]].push_back(r);
    }
    json curves = json::array();
    std::ostringstream csv;
    csv << "language,severity,days,count,bin_percent,cumulative\n";
    for (const auto& [lang, recs_l] : by_lang) {
        for (const auto& c : persistence_curves(recs_l, data.severity, thresholds)) {
            json pts = json::array();
            for (const auto& p : c.points) {
                pts.push_back({{"days", p.days}, {"count", p.count}, {"bin_percent", p.bin_percent}, {"cumulative", p.cumulative}});
                csv << to_string(lang) << ',' << to_string(c.severity) << ',' << p.days << ',' << p.count << ','
                    << num(p.bin_percent, 4) << ',' << num(p.cumulative) << '\n';
            }
            curves.push_back({{"language", to_string(lang)},
                              {"severity", to_string(c.severity)},
                              {"records", c.records},
                              {"points", std::move(pts)}});
        }
    }
    doc.json["records"] = std::move(recs);
    doc.json["curves"] = std::move(curves);
    doc.csv = csv.str();
    return doc;
}

ReportDoc release_report(const store::Store& store, const std::string& repo_id, const std::string& tag) {
    const auto rel = store.get_release(repo_id, tag);
    if (!rel) throw Error(ErrorKind::NotFound, "release " + repo_id + "@" + tag + " not found");
    ReportDoc doc{"release-" + tag, header("release"), {}};
    doc.json["repo_id"] = repo_id;
    doc.json["tag"] = tag;
    doc.json["release_date"] = format_iso8601(rel->release_date);
    doc.json["state"] = to_string(rel->state);
    if (!rel->fail_reason.empty()) doc.json["fail_reason"] = rel->fail_reason;
    json rows = json::array();
    std::ostringstream csv;
    csv << "purl,cve_id,severity,cvss,epss_score,source,known_at_release,depth\n";
    for (const auto& r : matcher::match_report(store, repo_id, tag)) {
        rows.push_back({{"purl", r.purl},
                        {"cve_id", r.cve_id},
                        {"severity", to_string(r.severity)},
                        {"cvss", opt_num(r.cvss)},
                        {"epss_score", opt_num(r.epss_score)},
                        {"source", r.source},
                        {"known_at_release", r.known_at_release},
                        {"depth", r.depth ? json(*r.depth) : json(nullptr)}});
        csv << csv_escape(r.purl) << ',' << r.cve_id << ',' << to_string(r.severity) << ','
            << (r.cvss ? num(*r.cvss, 1) : "") << ',' << (r.epss_score ? num(*r.epss_score, 5) : "") << ',' << r.source
            << ',' << (r.known_at_release ? "true" : "false") << ',' << (r.depth ? std::to_string(*r.depth) : "") << '\n';
    }
    doc.json["matches"] = std::move(rows);
    doc.csv = csv.str();
    return doc;
}

ReportDoc cve_report(const Dataset& data, const std::string& cve_id, Granularity granularity) {
    ReportDoc doc{"cve-" + cve_id, header("cve"), {}};
    doc.json["cve_id"] = cve_id;
    doc.json["granularity"] = to_string(granularity);
    json rows = json::array();
    std::ostringstream csv;
    csv << "period,releases,affected_releases,known_releases\n";
    for (const auto& b : cve_timeline(data, cve_id, granularity)) {
        rows.push_back({{"period", b.period}, {"releases", b.releases}, {"affected_releases", b.affected}, {"known_releases", b.known}});
        csv << b.period << ',' << b.releases << ',' << b.affected << ',' << b.known << '\n';
    }
    doc.json["rows"] = std::move(rows);
    doc.csv = csv.str();
    return doc;
}

} // namespace relscan::analytics
