#include "relscan/pipeline.hpp"

#include "relscan/error.hpp"
#include "relscan/util.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <sstream>

extern char** environ;

namespace relscan::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- WorkQueue ------------------------------------------------------------

struct WorkQueue::Subscriber {
    int id = 0;
    std::string key;
    Handler handler;
    std::deque<TaskEnvelope> inbox;
    std::condition_variable cv;
    std::thread thread;
    std::size_t delivered = 0;
};

WorkQueue::WorkQueue(store::Store* dead_letters, int max_retries, Clock& clock)
    : dead_letter_store_(dead_letters), max_retries_(std::max(1, max_retries)), clock_(clock) {}

WorkQueue::~WorkQueue() { shutdown(); }

void WorkQueue::register_key(const std::string& routing_key) {
    std::lock_guard lock(mutex_);
    keys_.insert(routing_key);
}

bool WorkQueue::is_registered(const std::string& routing_key) const {
    std::lock_guard lock(mutex_);
    return keys_.count(routing_key) > 0;
}

std::vector<int> WorkQueue::subscribe(const std::string& routing_key, Handler handler, int pool_size) {
    std::vector<int> ids;
    std::lock_guard lock(mutex_);
    if (!keys_.count(routing_key)) throw Error(ErrorKind::Usage, "unknown routing key '" + routing_key + "'");
    for (int i = 0; i < std::max(1, pool_size); ++i) {
        auto sub = std::make_unique<Subscriber>();
        sub->id = static_cast<int>(subscribers_.size());
        sub->key = routing_key;
        sub->handler = handler;
        Subscriber* raw = sub.get();
        by_key_[routing_key].push_back(raw);
        ids.push_back(raw->id);
        subscribers_.push_back(std::move(sub));
        raw->thread = std::thread([this, raw] { worker_loop(raw); });
    }
    return ids;
}

TaskEnvelope WorkQueue::make_task(const std::string& routing_key, json payload) {
    TaskEnvelope t;
    t.id = next_id_++;
    t.routing_key = routing_key;
    t.payload = std::move(payload);
    t.enqueued_at = clock_.wall_now();
    return t;
}

void WorkQueue::deliver(Subscriber& sub, TaskEnvelope task) {
    sub.inbox.push_back(std::move(task));
    ++sub.delivered;
    sub.cv.notify_one();
}

std::uint64_t WorkQueue::dispatch(const std::string& routing_key, json payload) {
    std::lock_guard lock(mutex_);
    if (!keys_.count(routing_key)) throw Error(ErrorKind::Usage, "unknown routing key '" + routing_key + "'");
    auto& subs = by_key_[routing_key];
    if (subs.empty()) throw Error(ErrorKind::Usage, "no subscribers for routing key '" + routing_key + "'");
    if (stopping_) throw Error(ErrorKind::Usage, "queue is shut down");
    TaskEnvelope t = make_task(routing_key, std::move(payload));
    const auto id = t.id;
    Subscriber& sub = *subs[next_[routing_key]++ % subs.size()];
    ++in_flight_;
    ++stats_.dispatched;
    deliver(sub, std::move(t));
    return id;
}

std::uint64_t WorkQueue::broadcast(const std::string& routing_key, json payload) {
    std::lock_guard lock(mutex_);
    if (!keys_.count(routing_key)) throw Error(ErrorKind::Usage, "unknown routing key '" + routing_key + "'");
    auto& subs = by_key_[routing_key];
    if (subs.empty()) throw Error(ErrorKind::Usage, "no subscribers for routing key '" + routing_key + "'");
    TaskEnvelope t = make_task(routing_key, std::move(payload));
    t.payload["_broadcast"] = true;
    for (auto* sub : subs) {
        ++in_flight_;
        ++stats_.dispatched;
        deliver(*sub, t);
    }
    return t.id;
}

void WorkQueue::worker_loop(Subscriber* sub) {
    while (true) {
        TaskEnvelope task;
        {
            std::unique_lock lock(mutex_);
            sub->cv.wait(lock, [&] { return stopping_ || !sub->inbox.empty(); });
            if (sub->inbox.empty()) return;
            task = std::move(sub->inbox.front());
            sub->inbox.pop_front();
        }
        std::string failure;
        bool retryable = true;
        try {
            sub->handler(task);
        } catch (const Error& e) {
            failure = std::string(to_string(e.kind())) + ": " + e.what();
            retryable = e.retryable() || e.kind() == ErrorKind::Conflict;
        } catch (const std::exception& e) {
            failure = e.what();
        } catch (...) {
            failure = "unknown failure";
        }
        if (failure.empty()) {
            std::lock_guard lock(mutex_);
            ++stats_.completed;
            if (--in_flight_ == 0) idle_cv_.notify_all();
            continue;
        }
        ++task.attempt;
        if (retryable && task.attempt < max_retries_) {
            spdlog::warn("task {} ({}) failed on attempt {}: {}", task.id, task.routing_key, task.attempt, failure);
            std::lock_guard lock(mutex_);
            ++stats_.retried;
            auto& subs = by_key_[task.routing_key];
            Subscriber* target = task.payload.value("_broadcast", false) ? sub : subs[next_[task.routing_key]++ % subs.size()];
            deliver(*target, std::move(task));
            continue;
        }
        settle_failure(std::move(task), failure);
    }
}

void WorkQueue::settle_failure(TaskEnvelope task, const std::string& reason) {
    spdlog::error("task {} ({}) dead-lettered after {} attempt(s): {}", task.id, task.routing_key, task.attempt, reason);
    if (dead_letter_store_) {
        try {
            store::DeadLetter d;
            d.routing_key = task.routing_key;
            d.payload = task.payload.dump();
            d.attempts = task.attempt;
            d.reason = reason;
            d.parked_at = clock_.wall_now();
            dead_letter_store_->park_dead_letter(d);
        } catch (const std::exception& e) {
            spdlog::error("could not persist dead letter for task {}: {}", task.id, e.what());
        }
    }
    std::lock_guard lock(mutex_);
    dead_.push_back(std::move(task));
    ++stats_.dead_lettered;
    if (--in_flight_ == 0) idle_cv_.notify_all();
}

void WorkQueue::drain() {
    std::unique_lock lock(mutex_);
    idle_cv_.wait(lock, [&] { return in_flight_ == 0; });
}

void WorkQueue::shutdown() {
    {
        std::lock_guard lock(mutex_);
        if (stopping_ && subscribers_.empty()) return;
        stopping_ = true;
        for (auto& s : subscribers_) s->cv.notify_all();
    }
    for (auto& s : subscribers_)
        if (s->thread.joinable()) s->thread.join();
}

QueueStats WorkQueue::stats() const {
    std::lock_guard lock(mutex_);
    return stats_;
}

std::map<int, std::size_t> WorkQueue::deliveries() const {
    std::lock_guard lock(mutex_);
    std::map<int, std::size_t> out;
    for (const auto& s : subscribers_) out[s->id] = s->delivered;
    return out;
}

std::vector<TaskEnvelope> WorkQueue::dead_letters() const {
    std::lock_guard lock(mutex_);
    return dead_;
}

// ---- Config ---------------------------------------------------------------

json Config::defaults() {
    return json::parse(R"({
      "store": "relscan.db",
      "workspace": "work",
      "shared_sbom_dir": "work/sboms",
      "output_dir": "reports",
      "feeds": {
        "nvd": "",
        "epss": "",
        "first_year": 2002,
        "last_year": 0,
        "cpe_aliases": ""
      },
      "workers": {
        "repo.mine": 1,
        "sbom.generate": 2,
        "components.analyze": 2,
        "feeds.sync": 1
      },
      "max_retries": 3,
      "analyze": {"mode": "offline", "batch_limit": 500, "chunk": 25},
      "remote_index": {"base_url": "", "path": "/api/v3/component-report", "username": "", "token": "",
                       "requests_per_minute": 120, "burst": 1, "max_attempts": 4},
      "cache": {"enabled": true, "ttl_hours": 24},
      "github": {"base_url": "https://api.github.com", "token": "", "requests_per_minute": 60},
      "generation": {"timeout_seconds": 300, "adapters": {}, "synthesis": {}, "go_graph_command": ""},
      "daemon": {"interval_seconds": 3600, "health_port": 8088}
    })");
}

namespace {

std::string env_segment(const std::string& key) {
    std::string out;
    for (char c : key) out.push_back(c == '.' || c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    return out;
}

void apply_overrides(json& node, const std::string& prefix, const std::map<std::string, std::string>& env) {
    for (auto& [key, value] : node.items()) {
        const std::string name = prefix + env_segment(key);
        if (value.is_object()) {
            apply_overrides(value, name + "__", env);
            continue;
        }
        const auto it = env.find(name);
        if (it == env.end()) continue;
        const std::string& text = it->second;
        try {
            if (value.is_boolean()) {
                const std::string t = util::to_lower(text);
                if (t == "1" || t == "true" || t == "yes" || t == "on") value = true;
                else if (t == "0" || t == "false" || t == "no" || t == "off") value = false;
                else throw std::invalid_argument(text);
            } else if (value.is_number_integer()) {
                std::size_t used = 0;
                const long long v = std::stoll(text, &used);
                if (used != text.size()) throw std::invalid_argument(text);
                value = v;
            } else if (value.is_number_float()) {
                value = std::stod(text);
            } else if (value.is_array()) {
                value = json::parse(text);
            } else {
                value = text;
            }
        } catch (const std::exception&) {
            throw Error(ErrorKind::Usage, "environment override " + name + "='" + text + "' does not fit the key's type");
        }
    }
}

bool is_url(const std::string& s) { return s.find("://") != std::string::npos; }

} // namespace

Config Config::load(const fs::path& path, const std::map<std::string, std::string>& env) {
    Config c;
    c.raw = defaults();
    c.base_dir = fs::current_path();
    if (!path.empty()) {
        if (!fs::exists(path)) throw Error(ErrorKind::Usage, "config file " + path.string() + " not found");
        try {
            c.raw.merge_patch(json::parse(util::read_file(path)));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Usage, "config file " + path.string() + ": " + e.what());
        }
        c.base_dir = fs::absolute(path).parent_path();
    }
    apply_overrides(c.raw, "RELSCAN_", env);
    return c;
}

Config Config::load(const fs::path& path) {
    std::map<std::string, std::string> env;
    for (char** e = environ; e && *e; ++e) {
        const std::string kv = *e;
        if (!util::starts_with(kv, "RELSCAN_")) continue;
        const auto eq = kv.find('=');
        if (eq != std::string::npos) env[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return load(path, env);
}

fs::path Config::path_of(const char* key) const {
    const fs::path p = raw.at(key).get<std::string>();
    return p.is_absolute() ? p : base_dir / p;
}

std::string Config::feed_locator(const char* key) const {
    const std::string v = raw.at("feeds").value(key, "");
    if (v.empty() || is_url(v) || fs::path(v).is_absolute()) return v;
    return (base_dir / v).string();
}

int Config::workers(const std::string& routing_key) const {
    return std::max(1, raw.at("workers").value(routing_key, 1));
}

gen::GenConfig Config::gen_config() const {
    gen::GenConfig g;
    const auto& j = raw.at("generation");
    g.shared_dir = shared_sbom_dir();
    g.timeout = std::chrono::seconds(j.value("timeout_seconds", 300));
    const json adapters = j.value("adapters", json::object());
    const json synthesis = j.value("synthesis", json::object());
    for (const auto& [k, v] : adapters.items()) g.adapters[gen::normalize_ecosystem(k)] = v.get<std::string>();
    for (const auto& [k, v] : synthesis.items()) g.synthesis[gen::normalize_ecosystem(k)] = v.get<std::string>();
    g.go_graph_command = j.value("go_graph_command", "");
    return g;
}

// ---- Pipeline ---------------------------------------------------------------

std::string ScanSummary::line() const {
    std::ostringstream s;
    s << "repo=" << repo_id << " releases=" << releases_found << " generated=" << generated << " failed=" << failed
      << " skipped=" << skipped << " analyzed=" << components_analyzed << " matches=" << matches
      << " dead_lettered=" << dead_lettered;
    return s.str();
}

namespace {

std::optional<std::string> opt_string(const json& j, const char* key) {
    const std::string v = j.value(key, "");
    if (v.empty()) return std::nullopt;
    return v;
}

std::string module_hint_for(const Repository& repo) {
    std::string u = repo.clone_url;
    if (const auto p = u.find("://"); p != std::string::npos) u = u.substr(p + 3);
    if (util::ends_with(u, ".git")) u.resize(u.size() - 4);
    while (!u.empty() && u.back() == '/') u.pop_back();
    if (u.empty() || u[0] == '/' || u.find('.') == std::string::npos || u.find('/') == std::string::npos)
        return "example.com/" + (repo.name.empty() ? repo.id : repo.name);
    return u;
}

std::string detect_ecosystem(const fs::path& worktree) {
    const std::pair<const char*, const char*> markers[] = {
        {"go.mod", "go"},        {"Gopkg.lock", "go"},       {"Cargo.lock", "cargo"},   {"Cargo.toml", "cargo"},
        {"pom.xml", "maven"},    {"package.json", "npm"},    {"requirements.txt", "pypi"}, {"pyproject.toml", "pypi"},
        {"Gemfile", "gem"},      {"composer.json", "composer"}};
    for (const auto& [file, eco] : markers)
        if (fs::exists(worktree / file)) return eco;
    return "";
}

std::string safe_name(std::string s) {
    for (auto& c : s)
        if (c == '/' || c == '\\' || c == ':') c = '_';
    return s;
}

void write_doc(const fs::path& dir, const std::string& name, const analytics::ReportDoc& doc,
               std::vector<fs::path>& written) {
    fs::create_directories(dir);
    const fs::path j = dir / (name + ".json");
    const fs::path c = dir / (name + ".csv");
    util::write_file_atomic(j, doc.json.dump(2) + "\n");
    util::write_file_atomic(c, doc.csv);
    written.push_back(j);
    written.push_back(c);
}

} // namespace

Pipeline::Pipeline(Config config, Clock& clock) : config_(std::move(config)), clock_(clock) {
    const auto db = config_.store_path();
    if (db.has_parent_path()) fs::create_directories(db.parent_path());
    store_ = std::make_unique<store::Store>(store::Store::open(db));

    const auto& ri = config_.raw.at("remote_index");
    index_bucket_ = std::make_unique<matcher::TokenBucket>(ri.value("requests_per_minute", 120.0), ri.value("burst", 1.0), clock_);
    if (!ri.value("base_url", "").empty()) {
        matcher::RemoteIndexConfig rc;
        rc.base_url = ri.value("base_url", "");
        rc.path = ri.value("path", rc.path);
        rc.username = opt_string(ri, "username");
        rc.token = opt_string(ri, "token");
        rc.max_attempts = ri.value("max_attempts", 4);
        remote_ = std::make_unique<matcher::RemoteIndexClient>(rc, *index_bucket_, clock_);
    }
    const auto& cache = config_.raw.at("cache");
    cache_ = std::make_unique<matcher::ResultCache>(std::chrono::hours(cache.value("ttl_hours", 24)),
                                                    cache.value("enabled", true), clock_);
    const auto& gh = config_.raw.at("github");
    metadata_bucket_ = std::make_unique<matcher::TokenBucket>(gh.value("requests_per_minute", 60.0), 1.0, clock_);
    metadata_ = std::make_unique<mining::MetadataClient>(gh.value("base_url", ""), opt_string(gh, "token"),
                                                         *metadata_bucket_, clock_);
}

Pipeline::~Pipeline() = default;

FeedSummary Pipeline::sync_feeds() {
    std::lock_guard lock(sync_mutex_);
    FeedSummary out;
    const auto& f = config_.raw.at("feeds");
    const std::string nvd = config_.feed_locator("nvd");
    const std::string epss = config_.feed_locator("epss");
    if (nvd.empty() && epss.empty()) throw Error(ErrorKind::Usage, "no feed sources configured (feeds.nvd / feeds.epss)");
    if (!nvd.empty()) {
        auto aliases = feeds::CpeAliasTable::builtin();
        if (const std::string a = config_.feed_locator("cpe_aliases"); !a.empty()) aliases.load_json(a);
        const int current = civil_from_days(utc_date(clock_.wall_now()).time_since_epoch().count()).year;
        int last = f.value("last_year", 0);
        if (last <= 0) last = current;
        auto src = feeds::open_source(nvd);
        auto result = feeds::sync_nvd(*store_, *src, f.value("first_year", 2002), last, aliases, clock_);
        for (auto& r : result.reports) {
            spdlog::info("{}", r.line());
            out.changed = out.changed || r.ingested > 0 || r.replaced > 0;
            out.reports.push_back(std::move(r));
        }
    }
    if (!epss.empty()) {
        auto src = feeds::open_source(epss);
        auto r = feeds::sync_epss(*store_, *src, feeds::kEpssFileName, clock_);
        spdlog::info("{}", r.line());
        out.reports.push_back(std::move(r));
    }
    return out;
}

mining::Stage1Result Pipeline::add_repo(const std::string& locator) {
    return mining::stage1_collect(*store_, locator, config_.workspace(), metadata_.get(), clock_);
}

void Pipeline::generate_release(const std::string& repo_id, const std::string& tag, const fs::path& mirror,
                                const std::string& commit, const std::string& ecosystem,
                                const std::string& module_hint) {
    auto rel = store_->get_release(repo_id, tag);
    if (!rel || rel->state != ReleaseState::New) return;
    const fs::path wt_path = config_.workspace() / "worktrees" / safe_name(repo_id) / safe_name(tag);
    // git's worktree bookkeeping in a shared mirror is not safe under concurrent add/remove.
    static std::mutex worktree_mutex;
    std::unique_ptr<mining::Worktree> wt;
    struct WorktreeGuard {
        std::unique_ptr<mining::Worktree>& w;
        ~WorktreeGuard() {
            std::lock_guard lock(worktree_mutex);
            w.reset();
        }
    } release_guard{wt};
    try {
        std::lock_guard lock(worktree_mutex);
        wt = std::make_unique<mining::Worktree>(mirror, commit, wt_path);
    } catch (const Error& e) {
        spdlog::warn("{}@{}: checkout failed: {}", repo_id, tag, e.what());
        store_->transition_release(repo_id, tag, ReleaseState::New, ReleaseState::Fail, "CHECKOUT");
        return;
    }
    const auto m = mining::measure_release(mirror, commit, wt->path());
    rel->commit_count = m.commit_count;
    rel->contributor_count = m.contributor_count;
    rel->file_count = m.file_count;
    rel->lines_of_code = m.lines_of_code;
    rel->lines_of_comments = m.lines_of_comments;
    store_->update_release_metrics(*rel);

    std::string eco = gen::normalize_ecosystem(ecosystem);
    const auto gc = config_.gen_config();
    const bool supported = eco == "go" || eco == "cargo" || gc.adapters.count(eco);
    if (eco.empty() || !supported || gen::module_marker(eco).empty() ||
        (!fs::exists(wt->path() / gen::module_marker(eco)) && eco != "go")) {
        if (const auto detected = detect_ecosystem(wt->path()); !detected.empty()) eco = detected;
    }
    gen::GenContext ctx;
    ctx.worktree = wt->path();
    ctx.repo_id = repo_id;
    ctx.tag = tag;
    ctx.ecosystem = eco.empty() ? "unknown" : eco;
    ctx.module_hint = module_hint;
    ctx.release_date = rel->release_date;
    const auto outcome = gen::run_release(*store_, ctx, gc, [&](const sbom::Sbom& bom) {
        matcher::register_components(*store_, *rel, bom);
    });
    if (outcome == gen::Outcome::Fail) spdlog::warn("{}@{}: generation failed: {}", repo_id, tag, ctx.fail_reason);
}

AnalyzeSummary Pipeline::analyze() {
    AnalyzeSummary out;
    std::mutex m;
    const auto& a = config_.raw.at("analyze");
    matcher::BatchOptions opts;
    opts.limit = a.value("batch_limit", 500);
    opts.chunk = a.value("chunk", 25);
    opts.mode = a.value("mode", "offline") == "remote" ? matcher::Mode::Remote : matcher::Mode::Offline;
    if (opts.mode == matcher::Mode::Remote && !remote_)
        throw Error(ErrorKind::Usage, "analyze.mode is remote but remote_index.base_url is not set");

    WorkQueue queue(store_.get(), config_.raw.value("max_retries", 3), clock_);
    queue.register_key(kComponentsAnalyze);
    queue.subscribe(
        kComponentsAnalyze,
        [&](const TaskEnvelope& task) {
            matcher::Analyzer analyzer(*store_, clock_, remote_.get(), cache_.get());
            const std::string token = "analyze-" + std::to_string(task.id) + "-" + std::to_string(task.attempt);
            while (true) {
                const auto r = analyzer.analyze_batch(opts, token);
                {
                    std::lock_guard lock(m);
                    out.claimed += r.claimed;
                    out.analyzed += r.analyzed;
                    out.matches += r.matches.size();
                }
                if (r.claimed == 0) break;
                if (r.left_new > 0) throw Error(ErrorKind::Io, std::to_string(r.left_new) + " components left NEW");
            }
        },
        config_.workers(kComponentsAnalyze));
    for (int i = 0; i < config_.workers(kComponentsAnalyze); ++i) queue.dispatch(kComponentsAnalyze, json::object());
    queue.drain();
    out.left_new = store_->count_components(AnalysisState::New);
    return out;
}

ScanSummary Pipeline::scan(const std::string& locator, const ScanOptions& options) {
    ScanSummary summary;
    std::mutex m;
    std::exception_ptr mine_error;
    std::optional<mining::Stage1Result> stage1;

    WorkQueue queue(store_.get(), config_.raw.value("max_retries", 3), clock_);
    for (const char* k : {kRepoMine, kSbomGenerate}) queue.register_key(k);

    queue.subscribe(
        kSbomGenerate,
        [&](const TaskEnvelope& t) {
            generate_release(t.payload.at("repo_id"), t.payload.at("tag"), t.payload.at("mirror").get<std::string>(),
                             t.payload.at("commit"), t.payload.at("ecosystem"), t.payload.at("module"));
        },
        config_.workers(kSbomGenerate));
    queue.subscribe(
        kRepoMine,
        [&](const TaskEnvelope& t) {
            mining::Stage1Result r;
            try {
                r = mining::stage1_collect(*store_, t.payload.at("locator"), config_.workspace(), metadata_.get(), clock_);
            } catch (const Error& e) {
                if (e.retryable()) throw;
                std::lock_guard lock(m);
                mine_error = std::current_exception();
                return;
            }
            const std::string eco = gen::ecosystem_for_language(r.repository.primary_language);
            const std::string hint = module_hint_for(r.repository);
            std::map<std::string, std::string> commit_of;
            for (const auto& tag : mining::list_tags(r.mirror)) commit_of[tag.name] = tag.commit;
            for (const auto& rel : store_->list_releases(r.repository.id)) {
                if (rel.state == ReleaseState::Fail && options.retry_failed)
                    store_->transition_release(rel.repo_id, rel.tag, ReleaseState::Fail, ReleaseState::New);
                else if (rel.state != ReleaseState::New)
                    continue;
                const auto c = commit_of.find(rel.tag);
                if (c == commit_of.end()) {
                    store_->transition_release(rel.repo_id, rel.tag, ReleaseState::New, ReleaseState::Fail, "CHECKOUT");
                    continue;
                }
                queue.dispatch(kSbomGenerate, {{"repo_id", rel.repo_id},
                                               {"tag", rel.tag},
                                               {"mirror", r.mirror.string()},
                                               {"commit", c->second},
                                               {"ecosystem", eco},
                                               {"module", hint}});
            }
            std::lock_guard lock(m);
            stage1 = std::move(r);
        },
        config_.workers(kRepoMine));

    // Releases already terminal before this scan are reported as skipped.
    queue.dispatch(kRepoMine, {{"locator", locator}});
    queue.drain();
    if (mine_error) std::rethrow_exception(mine_error);
    if (!stage1) throw Error(ErrorKind::Io, "mining " + locator + " did not complete (see dead letters)");

    summary.repo_id = stage1->repository.id;
    summary.dead_lettered = queue.stats().dead_lettered;
    queue.shutdown();

    const auto analyzed = analyze();
    summary.components_analyzed = analyzed.analyzed;
    summary.matches = analyzed.matches;
    if (analyzed.left_new > 0) ++summary.dead_lettered;

    for (const auto& rel : store_->list_releases(summary.repo_id)) {
        ++summary.releases_found;
        if (rel.state == ReleaseState::Done) ++summary.generated;
        else if (rel.state == ReleaseState::Fail) {
            ++summary.failed;
            summary.failures.push_back(rel.tag + ":" + rel.fail_reason);
        } else {
            ++summary.skipped;
        }
    }
    if (options.write_reports) write_all_reports(summary.repo_id);
    return summary;
}

std::vector<fs::path> Pipeline::write_report(const std::string& kind, const std::optional<std::string>& repo_id,
                                             const std::optional<std::string>& tag) {
    const fs::path dir = config_.output_dir() / (repo_id ? safe_name(*repo_id) : std::string("all"));
    std::vector<fs::path> written;
    if (kind == "release") {
        if (!repo_id || !tag) throw Error(ErrorKind::Usage, "report release needs --repo and a tag");
        write_doc(dir, "release-" + safe_name(*tag), analytics::release_report(*store_, *repo_id, *tag), written);
    } else {
        const auto data = analytics::load_dataset(*store_, repo_id);
        if (kind == "timeline") write_doc(dir, kind, analytics::timeline_report(data), written);
        else if (kind == "depth") write_doc(dir, kind, analytics::depth_report_doc(data), written);
        else if (kind == "correlation") write_doc(dir, kind, analytics::correlation_report(data), written);
        else if (kind == "persistence") write_doc(dir, kind, analytics::persistence_report(data), written);
        else if (kind == "cve") {
            if (!tag) throw Error(ErrorKind::Usage, "report cve needs a CVE id");
            write_doc(dir, "cve-" + *tag, analytics::cve_report(data, *tag), written);
        } else {
            throw Error(ErrorKind::Usage, "unknown report kind '" + kind + "'");
        }
    }
    write_meta(written);
    return written;
}

std::vector<fs::path> Pipeline::write_all_reports(const std::optional<std::string>& repo_id) {
    std::vector<fs::path> written;
    for (const char* kind : {"timeline", "depth", "correlation", "persistence"}) {
        auto w = write_report(kind, repo_id);
        written.insert(written.end(), w.begin(), w.end());
    }
    if (repo_id)
        for (const auto& rel : store_->list_releases(*repo_id)) {
            auto w = write_report("release", repo_id, rel.tag);
            written.insert(written.end(), w.begin(), w.end());
        }
    return written;
}

void Pipeline::write_meta(const std::vector<fs::path>& files) {
    if (files.empty()) return;
    const fs::path meta = files.front().parent_path() / "_meta.json";
    json j = json::object();
    if (fs::exists(meta)) {
        try {
            j = json::parse(util::read_file(meta));
        } catch (const json::exception&) {
            j = json::object();
        }
    }
    const std::string now = format_iso8601(clock_.wall_now());
    j["generated_at"] = now;
    for (const auto& f : files) j["files"][f.filename().string()] = now;
    util::write_file_atomic(meta, j.dump(2) + "\n");
}

bool Pipeline::retry_dead_letter(std::int64_t id) {
    const auto letter = store_->take_dead_letter(id);
    if (!letter) return false;
    json payload = json::parse(letter->payload);
    payload.erase("_broadcast");
    if (letter->routing_key == kRepoMine) {
        scan(payload.at("locator"));
    } else if (letter->routing_key == kComponentsAnalyze) {
        analyze();
    } else if (letter->routing_key == kFeedsSync) {
        sync_feeds();
    } else if (letter->routing_key == kSbomGenerate) {
        generate_release(payload.at("repo_id"), payload.at("tag"), payload.at("mirror").get<std::string>(),
                         payload.at("commit"), payload.at("ecosystem"), payload.at("module"));
    } else {
        throw Error(ErrorKind::Usage, "dead letter " + std::to_string(id) + " has unknown routing key " + letter->routing_key);
    }
    return true;
}

// ---- Daemon ---------------------------------------------------------------

struct Daemon::Server {
    httplib::Server http;
    std::thread thread;
};

Daemon::Daemon(TickFn tick, std::chrono::seconds interval, Clock& clock)
    : tick_fn_(std::move(tick)), interval_(interval), clock_(clock) {}

Daemon::~Daemon() {
    stop();
    if (server_) {
        server_->http.stop();
        if (server_->thread.joinable()) server_->thread.join();
    }
}

bool Daemon::tick() {
    bool expected = false;
    if (!running_tick_.compare_exchange_strong(expected, true)) {
        spdlog::warn("tick skipped: the previous tick is still running");
        ++skipped_;
        return false;
    }
    std::string error;
    try {
        tick_fn_();
    } catch (const std::exception& e) {
        error = e.what();
        spdlog::error("tick failed: {}", error);
    }
    {
        std::lock_guard lock(mutex_);
        last_tick_ = clock_.wall_now();
        last_error_ = error;
    }
    ++ticks_;
    running_tick_ = false;
    return true;
}

std::string Daemon::health() const {
    std::lock_guard lock(mutex_);
    if (!last_tick_) return "ok never";
    if (!last_error_.empty()) return "error " + format_iso8601(*last_tick_) + " " + last_error_;
    return "ok " + format_iso8601(*last_tick_);
}

bool Daemon::healthy() const {
    std::lock_guard lock(mutex_);
    return last_error_.empty();
}

int Daemon::start_health_server(int port) {
    server_ = std::make_unique<Server>();
    server_->http.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
        res.status = healthy() ? 200 : 503;
        res.set_content(health() + "\n", "text/plain");
    });
    int bound = port;
    if (port == 0) bound = server_->http.bind_to_any_port("127.0.0.1");
    else if (!server_->http.bind_to_port("127.0.0.1", port)) bound = -1;
    if (bound <= 0) throw Error(ErrorKind::Io, "cannot bind health endpoint on 127.0.0.1:" + std::to_string(port));
    server_->thread = std::thread([this] { server_->http.listen_after_bind(); });
    return bound;
}

void Daemon::run() {
    std::vector<std::thread> inflight;
    while (!stop_) {
        inflight.emplace_back([this] { tick(); });
        std::unique_lock lock(mutex_);
        stop_cv_.wait_for(lock, interval_, [&] { return stop_.load(); });
    }
    for (auto& t : inflight)
        if (t.joinable()) t.join();
}

void Daemon::stop() {
    stop_ = true;
    stop_cv_.notify_all();
}

Daemon::TickFn daemon_tick(Pipeline& pipeline) {
    return [&pipeline] {
        WorkQueue queue(&pipeline.store(), pipeline.config().raw.value("max_retries", 3));
        queue.register_key(kFeedsSync);
        queue.register_key(kComponentsAnalyze);
        std::atomic<bool> changed{false};
        queue.subscribe(kFeedsSync, [&](const TaskEnvelope&) { changed = pipeline.sync_feeds().changed; });
        queue.subscribe(kComponentsAnalyze, [&](const TaskEnvelope&) {
            if (changed) matcher::schedule_reanalysis(pipeline.store());
            const auto r = pipeline.analyze();
            spdlog::info("analyze: claimed={} analyzed={} matches={} left_new={}", r.claimed, r.analyzed, r.matches,
                         r.left_new);
        });
        queue.dispatch(kFeedsSync, json::object());
        queue.drain();
        if (queue.stats().dead_lettered) throw Error(ErrorKind::Io, "feed sync failed");
        queue.dispatch(kComponentsAnalyze, json::object());
        queue.drain();
        if (queue.stats().dead_lettered) throw Error(ErrorKind::Io, "analysis failed");
    };
}

} // namespace relscan::pipeline
