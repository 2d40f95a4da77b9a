#pragma once

// Builders for on-disk test fixtures: NVD feeds, git repositories, and a
// mock component-report index.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace relscan::testing {

std::filesystem::path fixture_dir();

struct NvdEntrySpec {
    std::string cve_id;
    std::string published = "2021-01-01T00:00Z";
    std::string last_modified = "2021-01-02T00:00Z";
    std::optional<double> v3;
    std::optional<double> v2;
    std::string description;
    nlohmann::json cpe_matches = nlohmann::json::array();
};

nlohmann::json cpe_range(const std::string& vendor, const std::string& product, const std::string& start_incl,
                         const std::string& end_excl);
nlohmann::json cpe_exact(const std::string& vendor, const std::string& product, const std::string& version);

nlohmann::json nvd_item(const NvdEntrySpec& spec);
nlohmann::json nvd_feed(const std::vector<nlohmann::json>& items);

/// Writes gzip-compressed JSON.
void write_gz_json(const std::filesystem::path& path, const nlohmann::json& doc);

} // namespace relscan::testing

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

namespace httplib {
class Server;
}

namespace relscan::testing {

/// Local stand-in for a batch component-report service.
class MockIndexServer {
public:
    struct Vuln {
        std::string cve_id;
        double cvss = 0.0;
    };

    MockIndexServer();
    ~MockIndexServer();

    std::string base_url() const;
    void set_vulns(const std::string& purl, std::vector<Vuln> vulns);
    /// The next n requests answer with `status` (and Retry-After when given).
    void fail_next(int n, int status, std::optional<int> retry_after = std::nullopt);

    std::size_t request_count() const;
    std::vector<std::size_t> chunk_sizes() const;
    std::vector<std::chrono::steady_clock::time_point> arrivals() const;

private:
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
    mutable std::mutex mutex_;
    std::map<std::string, std::vector<Vuln>> vulns_;
    int fail_remaining_ = 0;
    int fail_status_ = 500;
    std::optional<int> retry_after_;
    std::vector<std::size_t> chunks_;
    std::vector<std::chrono::steady_clock::time_point> arrivals_;
};

} // namespace relscan::testing

namespace relscan::testing {

/// Scripted git history with fixed identities and dates.
class GitRepoBuilder {
public:
    explicit GitRepoBuilder(std::filesystem::path dir);

    const std::filesystem::path& path() const { return dir_; }
    void write(const std::string& rel, const std::string& content);
    void remove(const std::string& rel);
    /// Stages everything and commits; returns the commit id.
    std::string commit(const std::string& message, const std::string& author_email, const std::string& date);
    void tag(const std::string& name, bool annotated = false);
    std::string git(const std::vector<std::string>& args);

private:
    std::filesystem::path dir_;
    std::string last_date_ = "2020-01-01T00:00:00Z";
};

} // namespace relscan::testing

namespace relscan::testing {

/// Go module, three tags; client_golang and x/text cross their fixed versions.
void build_go_repo(const std::filesystem::path& dir);
/// Rust crate, two tags; tokio moves from 1.7.1 to 1.8.1.
void build_cargo_repo(const std::filesystem::path& dir);
/// Pipeline config rooted at `root`, reading the bundled NVD and EPSS files.
nlohmann::json pipeline_config(const std::filesystem::path& root);

} // namespace relscan::testing
