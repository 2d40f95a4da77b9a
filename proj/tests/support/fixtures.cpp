#include "fixtures.hpp"

#include "relscan/util.hpp"

namespace relscan::testing {

using nlohmann::json;

std::filesystem::path fixture_dir() { return RELSCAN_FIXTURE_DIR; }

json cpe_range(const std::string& vendor, const std::string& product, const std::string& start_incl,
               const std::string& end_excl) {
    json m = {{"vulnerable", true}, {"cpe23Uri", "cpe:2.3:a:" + vendor + ":" + product + ":*:*:*:*:*:*:*:*"}};
    if (!start_incl.empty()) m["versionStartIncluding"] = start_incl;
    if (!end_excl.empty()) m["versionEndExcluding"] = end_excl;
    return m;
}

json cpe_exact(const std::string& vendor, const std::string& product, const std::string& version) {
    return {{"vulnerable", true}, {"cpe23Uri", "cpe:2.3:a:" + vendor + ":" + product + ":" + version + ":*:*:*:*:*:*:*"}};
}

json nvd_item(const NvdEntrySpec& spec) {
    json impact = json::object();
    if (spec.v3) impact["baseMetricV3"] = {{"cvssV3", {{"baseScore", *spec.v3}}}};
    if (spec.v2) impact["baseMetricV2"] = {{"cvssV2", {{"baseScore", *spec.v2}}}};
    return {{"cve",
             {{"CVE_data_meta", {{"ID", spec.cve_id}}},
              {"description", {{"description_data", json::array({{{"lang", "en"}, {"value", spec.description}}})}}}}},
            {"configurations", {{"nodes", json::array({{{"operator", "OR"}, {"cpe_match", spec.cpe_matches}}})}}},
            {"impact", impact},
            {"publishedDate", spec.published},
            {"lastModifiedDate", spec.last_modified}};
}

json nvd_feed(const std::vector<json>& items) {
    return {{"CVE_data_type", "CVE"}, {"CVE_data_format", "MITRE"}, {"CVE_Items", items}};
}

void write_gz_json(const std::filesystem::path& path, const json& doc) {
    util::write_file_atomic(path, util::gzip(doc.dump()));
}

} // namespace relscan::testing

#include <httplib.h>

namespace relscan::testing {

MockIndexServer::MockIndexServer() : server_(std::make_unique<httplib::Server>()) {
    server_->Post("/api/v3/component-report", [this](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mutex_);
        arrivals_.push_back(std::chrono::steady_clock::now());
        const auto body = json::parse(req.body, nullptr, false);
        const auto coords = body.is_object() && body.contains("coordinates") ? body["coordinates"] : json::array();
        chunks_.push_back(coords.size());
        if (fail_remaining_ > 0) {
            --fail_remaining_;
            res.status = fail_status_;
            if (retry_after_) res.set_header("Retry-After", std::to_string(*retry_after_));
            return;
        }
        json out = json::array();
        for (const auto& c : coords) {
            json vulns = json::array();
            if (auto it = vulns_.find(c.get<std::string>()); it != vulns_.end())
                for (const auto& v : it->second)
                    vulns.push_back({{"id", "sonatype-" + v.cve_id}, {"cve", v.cve_id}, {"cvssScore", v.cvss}});
            out.push_back({{"coordinates", c}, {"vulnerabilities", vulns}});
        }
        res.set_content(out.dump(), "application/json");
    });
    port_ = server_->bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

MockIndexServer::~MockIndexServer() {
    server_->stop();
    thread_.join();
}

std::string MockIndexServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

void MockIndexServer::set_vulns(const std::string& purl, std::vector<Vuln> vulns) {
    std::lock_guard lock(mutex_);
    vulns_[purl] = std::move(vulns);
}

void MockIndexServer::fail_next(int n, int status, std::optional<int> retry_after) {
    std::lock_guard lock(mutex_);
    fail_remaining_ = n;
    fail_status_ = status;
    retry_after_ = retry_after;
}

std::size_t MockIndexServer::request_count() const {
    std::lock_guard lock(mutex_);
    return chunks_.size();
}

std::vector<std::size_t> MockIndexServer::chunk_sizes() const {
    std::lock_guard lock(mutex_);
    return chunks_;
}

std::vector<std::chrono::steady_clock::time_point> MockIndexServer::arrivals() const {
    std::lock_guard lock(mutex_);
    return arrivals_;
}

} // namespace relscan::testing

namespace relscan::testing {

GitRepoBuilder::GitRepoBuilder(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    git({"init", "-q", "-b", "main"});
}

std::string GitRepoBuilder::git(const std::vector<std::string>& args) {
    std::vector<std::string> argv{"git", "-C", dir_.string()};
    argv.insert(argv.end(), args.begin(), args.end());
    util::ProcessOptions opts;
    opts.env = {{"GIT_CONFIG_NOSYSTEM", "1"},          {"GIT_CONFIG_GLOBAL", "/dev/null"},
                {"GIT_COMMITTER_NAME", "Fixture"},     {"GIT_COMMITTER_EMAIL", "fixture@example.org"},
                {"GIT_AUTHOR_NAME", "Fixture"},        {"GIT_AUTHOR_EMAIL", "fixture@example.org"},
                {"GIT_COMMITTER_DATE", last_date_},    {"GIT_AUTHOR_DATE", last_date_}};
    const auto r = util::run_process(argv, opts);
    if (!r.ok()) throw std::runtime_error("fixture git failed: " + r.err);
    return r.out;
}

void GitRepoBuilder::write(const std::string& rel, const std::string& content) {
    const auto p = dir_ / rel;
    std::filesystem::create_directories(p.parent_path());
    util::write_file_atomic(p, content);
}

void GitRepoBuilder::remove(const std::string& rel) { std::filesystem::remove_all(dir_ / rel); }

std::string GitRepoBuilder::commit(const std::string& message, const std::string& author_email, const std::string& date) {
    last_date_ = date;
    git({"add", "-A"});
    git({"-c", "user.name=Fixture", "-c", "user.email=" + author_email, "commit", "-q", "--allow-empty", "-m", message,
         "--author=" + author_email.substr(0, author_email.find('@')) + " <" + author_email + ">"});
    return util::trim(git({"rev-parse", "HEAD"}));
}

void GitRepoBuilder::tag(const std::string& name, bool annotated) {
    if (annotated) git({"tag", "-a", "-m", "release " + name, name});
    else git({"tag", name});
}

} // namespace relscan::testing

namespace relscan::testing {

namespace {

std::string go_mod(const std::string& client, const std::string& text) {
    return "module github.com/acme/widget\n\ngo 1.17\n\nrequire (\n\tgithub.com/prometheus/client_golang " + client +
           "\n\tgolang.org/x/text " + text + "\n)\n";
}

std::string cargo_lock(const std::string& tokio, const std::string& checksum) {
    return "version = 3\n\n[[package]]\nname = \"bytes\"\nversion = \"1.1.0\"\n"
           "source = \"registry+https://github.com/rust-lang/crates.io-index\"\n\n"
           "[[package]]\nname = \"demo\"\nversion = \"0.1.0\"\ndependencies = [\n \"tokio\",\n]\n\n"
           "[[package]]\nname = \"tokio\"\nversion = \"" + tokio + "\"\n"
           "source = \"registry+https://github.com/rust-lang/crates.io-index\"\n"
           "checksum = \"" + checksum + "\"\ndependencies = [\n \"bytes\",\n]\n";
}

} // namespace

void build_go_repo(const std::filesystem::path& dir) {
    GitRepoBuilder repo(dir);
    repo.write("main.go", "package main\n\n// entry point\nfunc main() {}\n");
    repo.write("go.mod", go_mod("v1.11.0", "v0.3.6"));
    repo.commit("initial", "alice@example.org", "2022-06-01T00:00:00Z");
    repo.tag("v1.0.0");
    repo.write("go.mod", go_mod("v1.11.1", "v0.3.6"));
    repo.write("server.go", "package main\n\nfunc serve() {}\n");
    repo.commit("bump client_golang", "bob@example.org", "2022-09-01T00:00:00Z");
    repo.commit("docs", "carol@example.org", "2022-09-01T00:00:00Z");
    repo.tag("v1.1.0");
    repo.write("go.mod", go_mod("v1.11.1", "v0.3.7"));
    repo.commit("bump x/text", "alice@example.org", "2022-12-01T00:00:00Z");
    repo.tag("v1.2.0", true);
}

void build_cargo_repo(const std::filesystem::path& dir) {
    GitRepoBuilder repo(dir);
    repo.write("Cargo.toml", "[package]\nname = \"demo\"\nversion = \"0.1.0\"\n\n[dependencies]\ntokio = \"1\"\n");
    repo.write("src/main.rs", "// demo\nfn main() {}\n");
    repo.write("Cargo.lock", cargo_lock("1.7.1", std::string(64, 'a')));
    repo.commit("initial", "dana@example.org", "2021-06-01T00:00:00Z");
    repo.tag("v0.1.0");
    repo.write("Cargo.lock", cargo_lock("1.8.1", std::string(64, 'b')));
    repo.commit("bump tokio", "erin@example.org", "2021-09-01T00:00:00Z");
    repo.tag("v0.2.0");
}

json pipeline_config(const std::filesystem::path& root) {
    const auto nvd = (fixture_dir() / "nvd").string();
    return {{"store", (root / "relscan.db").string()},
            {"workspace", (root / "work").string()},
            {"shared_sbom_dir", (root / "work" / "sboms").string()},
            {"output_dir", (root / "reports").string()},
            {"feeds", {{"nvd", nvd}, {"epss", nvd}, {"first_year", 2021}, {"last_year", 2022}}},
            {"daemon", {{"health_port", 0}}}};
}

} // namespace relscan::testing
