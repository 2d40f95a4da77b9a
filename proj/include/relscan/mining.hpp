#pragma once

// Repository mining: stage 1 collects repository identity and release tags,
// stage 2 measures each release from a checked-out worktree.

#include "relscan/http.hpp"
#include "relscan/matcher.hpp"
#include "relscan/model.hpp"
#include "relscan/store.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace relscan::mining {

/// Runs git with a fixed locale and no user config. Throws Error(Io) on a
/// non-zero exit, quoting stderr.
std::string git(const std::filesystem::path& repo, const std::vector<std::string>& args);

struct TagInfo {
    std::string name;
    std::string commit;
    /// Committer timestamp of the tagged commit.
    Timestamp date{};
};

/// Tags that resolve to commits, ordered by (date, name).
std::vector<TagInfo> list_tags(const std::filesystem::path& repo);

/// Detached checkout of `commit` at `path`, removed on destruction.
class Worktree {
public:
    Worktree(const std::filesystem::path& mirror, const std::string& commit, const std::filesystem::path& path);
    ~Worktree();
    Worktree(const Worktree&) = delete;
    Worktree& operator=(const Worktree&) = delete;

    const std::filesystem::path& path() const { return path_; }
    /// Restores tracked files and deletes untracked ones.
    void reset();

private:
    std::filesystem::path mirror_;
    std::filesystem::path path_;
};

/// Digest over relative paths, modes and contents of every file under dir,
/// ignoring the worktree's .git link.
std::string tree_content_hash(const std::filesystem::path& dir);

struct LineCounts {
    std::int64_t code = 0;
    std::int64_t comments = 0;
    std::int64_t blank = 0;

    bool operator==(const LineCounts&) const = default;
};

/// Classifies lines of one file by extension. Java, Go, Rust, JavaScript and
/// PHP use // and /* */ (PHP also #); Python uses #; Ruby uses # and
/// =begin/=end. A line is a comment when it holds only comment text; any
/// code on the line makes it code. Other extensions count every non-blank
/// line as code. String literals are not tracked.
LineCounts classify_lines(const std::string& filename, const std::string& content);

std::optional<Language> language_for_path(const std::string& filename);

struct ReleaseMetrics {
    std::int64_t commit_count = 0;
    std::int64_t contributor_count = 0;
    std::int64_t file_count = 0;
    std::int64_t lines_of_code = 0;
    std::int64_t lines_of_comments = 0;
    std::map<Language, std::int64_t> files_by_language;
};

/// Measures `commit` of the mirror using files checked out at `worktree`.
ReleaseMetrics measure_release(const std::filesystem::path& mirror, const std::string& commit,
                               const std::filesystem::path& worktree);

/// GitHub-style read-only REST client.
class MetadataClient {
public:
    struct RepoInfo {
        std::string id;
        std::string full_name;
        std::string clone_url;
        std::string language;
        std::int64_t stargazers = 0;
    };

    MetadataClient(std::string base_url, std::optional<std::string> token, matcher::TokenBucket& bucket,
                   Clock& clock = SystemClock::instance());

    /// Throws RateLimitError carrying the reset time when the quota is spent.
    RepoInfo repository(const std::string& full_name);
    std::int64_t contributor_count(const std::string& full_name);

private:
    http::Response get(const std::string& path);

    std::string base_url_;
    std::optional<std::string> token_;
    matcher::TokenBucket& bucket_;
    Clock& clock_;
};

struct Stage1Result {
    Repository repository;
    std::vector<Release> releases;
    std::size_t inserted = 0;
    std::filesystem::path mirror;
    /// Consecutive (by date) tag pairs where the later tag is an ancestor of the earlier one.
    std::vector<std::pair<std::string, std::string>> ordering_disagreements;
};

/// Clones or refreshes a mirror under workspace/mirrors and records the
/// repository and its tags. A locator naming an existing directory or a
/// file:// URL is local; otherwise "owner/name" is resolved through `remote`.
/// Throws Error(RejectedNoReleases) when no tag resolves to a commit.
Stage1Result stage1_collect(store::Store& store, const std::string& locator, const std::filesystem::path& workspace,
                            MetadataClient* remote = nullptr, const Clock& clock = SystemClock::instance());

/// Creates a worktree for the release, measures it and persists the metrics.
/// A failed checkout moves the release to FAIL(CHECKOUT) and returns it.
Release stage2_enrich(store::Store& store, const Release& release, const std::filesystem::path& mirror,
                      const std::filesystem::path& worktree_root);

struct ReleaseCycleStats {
    double avg_days_between_releases = 0.0;
    double avg_commits_per_release = 0.0;
};

/// Means over consecutive releases ordered by release_date; commit counts are
/// cumulative, so per-release commits are deltas. Throws NotEnoughReleases.
ReleaseCycleStats release_cycle_stats(std::vector<Release> releases);

struct MiningReport {
    std::string repo_id;
    std::size_t found = 0;
    std::size_t enriched = 0;
    std::size_t failed = 0;

    std::string line() const;
};

} // namespace relscan::mining
