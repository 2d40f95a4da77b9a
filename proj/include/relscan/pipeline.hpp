#pragma once

// In-process orchestration: a routing-keyed work queue with worker pools,
// the configuration file, the scan flow (mine, generate, register, analyze),
// report writing and the periodic daemon.

#include "relscan/analytics.hpp"
#include "relscan/feeds.hpp"
#include "relscan/genmachine.hpp"
#include "relscan/matcher.hpp"
#include "relscan/mining.hpp"
#include "relscan/store.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace relscan::pipeline {

inline constexpr const char* kRepoMine = "repo.mine";
inline constexpr const char* kSbomGenerate = "sbom.generate";
inline constexpr const char* kComponentsAnalyze = "components.analyze";
inline constexpr const char* kFeedsSync = "feeds.sync";

struct TaskEnvelope {
    std::uint64_t id = 0;
    std::string routing_key;
    nlohmann::json payload;
    int attempt = 0;
    Timestamp enqueued_at{};
};

using Handler = std::function<void(const TaskEnvelope&)>;

struct QueueStats {
    std::size_t dispatched = 0;
    std::size_t completed = 0;
    std::size_t retried = 0;
    std::size_t dead_lettered = 0;
};

/// Each subscriber owns one worker thread and an inbox. Plain dispatch goes
/// to the key's subscribers in round-robin order; broadcast goes to all of
/// them. A throwing handler is retried (on the next subscriber) until
/// `max_retries` attempts have failed, then the task is dead-lettered.
class WorkQueue {
public:
    explicit WorkQueue(store::Store* dead_letters = nullptr, int max_retries = 3,
                       Clock& clock = SystemClock::instance());
    ~WorkQueue();
    WorkQueue(const WorkQueue&) = delete;
    WorkQueue& operator=(const WorkQueue&) = delete;

    void register_key(const std::string& routing_key);
    bool is_registered(const std::string& routing_key) const;

    /// Adds `pool_size` subscribers sharing the handler; returns their ids.
    std::vector<int> subscribe(const std::string& routing_key, Handler handler, int pool_size = 1);

    /// Throws Error(Usage) for an unregistered key or a key with no subscribers.
    std::uint64_t dispatch(const std::string& routing_key, nlohmann::json payload);
    std::uint64_t broadcast(const std::string& routing_key, nlohmann::json payload);

    /// Blocks until every dispatched task (and its retries) has settled.
    void drain();
    void shutdown();

    QueueStats stats() const;
    /// Deliveries per subscriber id.
    std::map<int, std::size_t> deliveries() const;
    std::vector<TaskEnvelope> dead_letters() const;
    int max_retries() const { return max_retries_; }

private:
    struct Subscriber;

    void deliver(Subscriber& sub, TaskEnvelope task);
    void worker_loop(Subscriber* sub);
    void settle_failure(TaskEnvelope task, const std::string& reason);
    TaskEnvelope make_task(const std::string& routing_key, nlohmann::json payload);

    store::Store* dead_letter_store_;
    int max_retries_;
    Clock& clock_;

    mutable std::mutex mutex_;
    std::condition_variable idle_cv_;
    std::set<std::string> keys_;
    std::map<std::string, std::vector<Subscriber*>> by_key_;
    std::map<std::string, std::size_t> next_;
    std::vector<std::unique_ptr<Subscriber>> subscribers_;
    std::vector<TaskEnvelope> dead_;
    std::size_t in_flight_ = 0;
    std::uint64_t next_id_ = 1;
    QueueStats stats_;
    bool stopping_ = false;
};

/// Configuration file (JSON) merged over defaults. Any scalar key can be
/// overridden by RELSCAN_<PATH>, where PATH is the upper-cased key path
/// joined by "__" with '.' and '-' mapped to '_' (RELSCAN_WORKERS__SBOM_GENERATE).
struct Config {
    nlohmann::json raw;
    std::filesystem::path base_dir;

    static nlohmann::json defaults();
    /// `path` may be empty for defaults only. Throws Error(Usage) on a
    /// malformed file or override.
    static Config load(const std::filesystem::path& path, const std::map<std::string, std::string>& env);
    static Config load(const std::filesystem::path& path);

    std::filesystem::path path_of(const char* key) const;
    std::filesystem::path store_path() const { return path_of("store"); }
    std::filesystem::path workspace() const { return path_of("workspace"); }
    std::filesystem::path shared_sbom_dir() const { return path_of("shared_sbom_dir"); }
    std::filesystem::path output_dir() const { return path_of("output_dir"); }
    /// Feed locators resolve relative to the config file unless they are URLs.
    std::string feed_locator(const char* key) const;
    int workers(const std::string& routing_key) const;
    gen::GenConfig gen_config() const;
};

struct ScanOptions {
    bool retry_failed = false;
    bool write_reports = true;
};

struct ScanSummary {
    std::string repo_id;
    std::size_t releases_found = 0;
    std::size_t generated = 0;
    std::size_t failed = 0;
    std::size_t skipped = 0;
    std::size_t components_analyzed = 0;
    std::size_t matches = 0;
    std::size_t dead_lettered = 0;
    std::vector<std::string> failures; // "tag:REASON"

    int exit_code() const { return failed || dead_lettered ? 1 : 0; }
    std::string line() const;
};

struct FeedSummary {
    std::vector<feeds::IngestionReport> reports;
    bool changed = false;
};

struct AnalyzeSummary {
    std::size_t claimed = 0;
    std::size_t analyzed = 0;
    std::size_t matches = 0;
    std::size_t left_new = 0;
};

class Pipeline {
public:
    Pipeline(Config config, Clock& clock = SystemClock::instance());
    ~Pipeline();

    store::Store& store() { return *store_; }
    const Config& config() const { return config_; }

    FeedSummary sync_feeds();
    mining::Stage1Result add_repo(const std::string& locator);
    /// Mines the repository, generates and registers an SBOM per NEW release
    /// and analyzes every NEW component.
    ScanSummary scan(const std::string& locator, const ScanOptions& options = {});
    AnalyzeSummary analyze();

    /// Writes <out>/<scope>/<kind>.{json,csv}. Scope is the repo id, or "all"
    /// without one. Run metadata goes to <out>/_meta.json.
    std::vector<std::filesystem::path> write_report(const std::string& kind, const std::optional<std::string>& repo_id,
                                                    const std::optional<std::string>& tag = std::nullopt);
    std::vector<std::filesystem::path> write_all_reports(const std::optional<std::string>& repo_id);

    /// Replays a parked task and removes it from the list; false for an unknown id.
    bool retry_dead_letter(std::int64_t id);

private:
    void generate_release(const std::string& repo_id, const std::string& tag, const std::filesystem::path& mirror,
                          const std::string& commit, const std::string& ecosystem, const std::string& module_hint);
    void write_meta(const std::vector<std::filesystem::path>& files);

    Config config_;
    Clock& clock_;
    std::unique_ptr<store::Store> store_;
    std::unique_ptr<matcher::TokenBucket> index_bucket_;
    std::unique_ptr<matcher::TokenBucket> metadata_bucket_;
    std::unique_ptr<matcher::RemoteIndexClient> remote_;
    std::unique_ptr<matcher::ResultCache> cache_;
    std::unique_ptr<mining::MetadataClient> metadata_;
    std::mutex sync_mutex_;
};

/// Periodic feed sync and re-analysis with a liveness endpoint.
class Daemon {
public:
    using TickFn = std::function<void()>;

    Daemon(TickFn tick, std::chrono::seconds interval, Clock& clock = SystemClock::instance());
    ~Daemon();

    /// Runs one tick unless another is in progress; returns false when skipped.
    bool tick();
    /// "ok <last_tick_iso8601>", "ok never" before the first tick, or
    /// "error <iso8601> <message>" after a failed tick.
    std::string health() const;
    bool healthy() const;
    std::size_t ticks() const { return ticks_; }
    std::size_t skipped() const { return skipped_; }

    /// Serves GET /health on 127.0.0.1:port (0 picks a free port); returns the port.
    int start_health_server(int port);
    /// Ticks immediately, then every interval, until stop().
    void run();
    void stop();

private:
    TickFn tick_fn_;
    std::chrono::seconds interval_;
    Clock& clock_;
    std::atomic<bool> running_tick_{false};
    std::atomic<bool> stop_{false};
    std::atomic<std::size_t> ticks_{0};
    std::atomic<std::size_t> skipped_{0};
    mutable std::mutex mutex_;
    std::condition_variable stop_cv_;
    std::optional<Timestamp> last_tick_;
    std::string last_error_;
    struct Server;
    std::unique_ptr<Server> server_;
};

/// The daemon's tick: sync feeds, reschedule analysis when they changed, analyze.
Daemon::TickFn daemon_tick(Pipeline& pipeline);

} // namespace relscan::pipeline
