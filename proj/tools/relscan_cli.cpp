// relscan command-line front end. Exit codes: 0 ok, 1 partial failure, 2 fatal or usage error.

#include "relscan/error.hpp"
#include "relscan/pipeline.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <iostream>

using namespace relscan;
using namespace relscan::pipeline;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kPartial = 1;
constexpr int kFatal = 2;

Config load_config(const std::string& path) {
    if (!path.empty()) return Config::load(path);
    if (fs::exists("relscan.json")) return Config::load("relscan.json");
    return Config::load("");
}

void print_paths(const std::vector<fs::path>& paths) {
    for (const auto& p : paths) std::cout << p.string() << "\n";
}

int run_daemon(Pipeline& pipeline, std::optional<int> interval, std::optional<int> port) {
    const auto& d = pipeline.config().raw.at("daemon");
    const auto seconds = std::chrono::seconds(interval.value_or(d.value("interval_seconds", 3600)));

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    Daemon daemon(daemon_tick(pipeline), seconds);
    const int bound = daemon.start_health_server(port.value_or(d.value("health_port", 8088)));
    spdlog::info("daemon: tick every {}s, health on http://127.0.0.1:{}/health", seconds.count(), bound);

    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        spdlog::info("daemon: signal {} received, stopping", sig);
        daemon.stop();
    });
    daemon.run();
    if (waiter.joinable()) {
        pthread_kill(waiter.native_handle(), SIGTERM);
        waiter.join();
    }
    return daemon.healthy() ? kOk : kPartial;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Release-level vulnerability scanner for git repositories"};
    app.require_subcommand(1);
    std::string config_path;
    bool verbose = false;
    app.add_option("-c,--config", config_path, "Config file (JSON); defaults to ./relscan.json when present");
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    auto* feeds = app.add_subcommand("feeds", "Vulnerability feed operations");
    feeds->require_subcommand(1);
    auto* feeds_sync = feeds->add_subcommand("sync", "Download and ingest NVD and EPSS feeds");

    auto* repo = app.add_subcommand("repo", "Repository registry");
    repo->require_subcommand(1);
    auto* repo_add = repo->add_subcommand("add", "Register a repository and its release tags");
    std::string add_locator;
    repo_add->add_option("locator", add_locator, "owner/name or local path")->required();

    auto* scan = app.add_subcommand("scan", "Mine, generate SBOMs, register and analyze a repository");
    std::string scan_locator;
    bool retry_failed = false;
    bool no_reports = false;
    scan->add_option("locator", scan_locator, "owner/name or local path")->required();
    scan->add_flag("--retry-failed", retry_failed, "Move FAIL releases back to NEW before generating");
    scan->add_flag("--no-reports", no_reports, "Skip writing reports");

    auto* report = app.add_subcommand("report", "Write a report as JSON and CSV");
    std::string kind;
    std::string report_arg;
    std::string report_repo;
    report->add_option("kind", kind, "timeline | depth | correlation | persistence | release | cve | all")
        ->required()
        ->check(CLI::IsMember({"timeline", "depth", "correlation", "persistence", "release", "cve", "all"}));
    report->add_option("arg", report_arg, "Tag for release, CVE id for cve");
    report->add_option("--repo", report_repo, "Restrict to one repository id");

    auto* daemon = app.add_subcommand("daemon", "Periodic feed sync and re-analysis");
    daemon->require_subcommand(1);
    auto* daemon_run = daemon->add_subcommand("run", "Run until SIGINT or SIGTERM");
    std::optional<int> interval;
    std::optional<int> port;
    daemon_run->add_option("--interval", interval, "Seconds between ticks");
    daemon_run->add_option("--port", port, "Health endpoint port (0 picks one)");

    auto* dead = app.add_subcommand("deadletter", "Inspect or replay parked tasks");
    dead->require_subcommand(1);
    auto* dead_list = dead->add_subcommand("list", "List parked tasks");
    auto* dead_retry = dead->add_subcommand("retry", "Replay a parked task");
    std::int64_t dead_id = 0;
    dead_retry->add_option("id", dead_id)->required();

    auto* store_cmd = app.add_subcommand("store", "Store maintenance");
    store_cmd->require_subcommand(1);
    auto* store_export = store_cmd->add_subcommand("export", "Write one CSV per table");
    std::string export_dir;
    store_export->add_option("dir", export_dir)->required();
    auto* store_check = store_cmd->add_subcommand("check", "Verify referential integrity");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kFatal;
    }
    spdlog::set_default_logger(spdlog::stderr_color_mt("relscan"));
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        Pipeline p(load_config(config_path));
        const std::optional<std::string> repo_scope =
            report_repo.empty() ? std::nullopt : std::optional<std::string>(report_repo);

        if (feeds_sync->parsed()) {
            const auto r = p.sync_feeds();
            for (const auto& rep : r.reports) std::cout << rep.line() << "\n";
            return kOk;
        }
        if (repo_add->parsed()) {
            const auto r = p.add_repo(add_locator);
            std::cout << "repo=" << r.repository.id << " releases=" << r.releases.size() << " new=" << r.inserted << "\n";
            for (const auto& [a, b] : r.ordering_disagreements)
                std::cout << "ordering: " << b << " dated after " << a << " but is its ancestor\n";
            return kOk;
        }
        if (scan->parsed()) {
            ScanOptions opts;
            opts.retry_failed = retry_failed;
            opts.write_reports = !no_reports;
            const auto s = p.scan(scan_locator, opts);
            std::cout << s.line() << "\n";
            for (const auto& f : s.failures) std::cout << "failed " << f << "\n";
            return s.exit_code();
        }
        if (report->parsed()) {
            const std::optional<std::string> arg =
                report_arg.empty() ? std::nullopt : std::optional<std::string>(report_arg);
            if (kind == "all") print_paths(p.write_all_reports(repo_scope));
            else print_paths(p.write_report(kind, repo_scope, arg));
            return kOk;
        }
        if (daemon_run->parsed()) return run_daemon(p, interval, port);
        if (dead_list->parsed()) {
            for (const auto& d : p.store().list_dead_letters())
                std::cout << d.id << "\t" << d.routing_key << "\t" << d.attempts << "\t" << format_iso8601(d.parked_at)
                          << "\t" << d.reason << "\t" << d.payload << "\n";
            return kOk;
        }
        if (dead_retry->parsed()) {
            if (!p.retry_dead_letter(dead_id)) {
                std::cerr << "no dead letter with id " << dead_id << "\n";
                return kFatal;
            }
            return kOk;
        }
        if (store_export->parsed()) {
            p.store().export_csv(export_dir);
            return kOk;
        }
        if (store_check->parsed()) {
            p.store().check_integrity();
            std::cout << "ok\n";
            return kOk;
        }
    } catch (const Error& e) {
        std::cerr << "relscan: " << to_string(e.kind()) << ": " << e.what() << "\n";
        return kFatal;
    } catch (const std::exception& e) {
        std::cerr << "relscan: " << e.what() << "\n";
        return kFatal;
    }
    return kFatal;
}
