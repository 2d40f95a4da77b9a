#include "relscan/mining.hpp"

#include "relscan/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace relscan::mining {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

util::ProcessOptions git_options(const std::string& stdin_data = {}) {
    util::ProcessOptions o;
    o.env = {{"LC_ALL", "C"},
             {"GIT_TERMINAL_PROMPT", "0"},
             {"GIT_CONFIG_NOSYSTEM", "1"},
             {"GIT_CONFIG_GLOBAL", "/dev/null"},
             {"GIT_OPTIONAL_LOCKS", "0"}};
    o.stdin_data = stdin_data;
    o.timeout = std::chrono::minutes(30);
    return o;
}

std::vector<std::string> git_argv(const fs::path& repo, const std::vector<std::string>& args) {
    std::vector<std::string> argv{"git", "-C", repo.string(), "-c", "core.quotepath=off"};
    argv.insert(argv.end(), args.begin(), args.end());
    return argv;
}

std::string git_in(const fs::path& repo, const std::vector<std::string>& args, const std::string& stdin_data) {
    const auto r = util::run_process(git_argv(repo, args), git_options(stdin_data));
    if (!r.ok()) {
        std::string cmd = "git";
        for (const auto& a : args) cmd += " " + a;
        throw Error(ErrorKind::Io, cmd + " failed in " + repo.string() + ": " + util::trim(r.err));
    }
    return r.out;
}

bool git_ok(const fs::path& repo, const std::vector<std::string>& args) {
    return util::run_process(git_argv(repo, args), git_options()).ok();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(line);
    return out;
}

std::string safe_segment(const std::string& s) {
    std::string out;
    for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_' ? c : '_');
    return out;
}

} // namespace

std::string git(const fs::path& repo, const std::vector<std::string>& args) { return git_in(repo, args, {}); }

// -- tags --------------------------------------------------------------------------

std::vector<TagInfo> list_tags(const fs::path& repo) {
    const auto refs = git(repo, {"for-each-ref", "--format=%(refname:strip=2)%09%(objecttype)%09%(objectname)%09%(*objecttype)%09%(*objectname)",
                                 "refs/tags"});
    std::vector<TagInfo> tags;
    for (const auto& line : lines_of(refs)) {
        auto f = util::split(line, '\t');
        f.resize(5);
        TagInfo t;
        t.name = f[0];
        if (f[1] == "commit") t.commit = f[2];
        else if (f[1] == "tag" && f[3] == "commit") t.commit = f[4];
        else if (f[1] == "tag") {
            // Tag of a tag: let git peel it.
            const auto r = util::run_process(git_argv(repo, {"rev-parse", "--verify", "-q", t.name + "^{commit}"}), git_options());
            if (!r.ok()) continue;
            t.commit = util::trim(r.out);
        } else {
            continue;
        }
        tags.push_back(std::move(t));
    }
    if (tags.empty()) return tags;

    std::set<std::string> commits;
    for (const auto& t : tags) commits.insert(t.commit);
    std::string input;
    for (const auto& c : commits) input += c + "\n";
    std::map<std::string, Timestamp> dates;
    for (const auto& line : lines_of(git_in(repo, {"log", "--no-walk=unsorted", "--stdin", "--format=%H%x09%ct"}, input))) {
        const auto f = util::split(line, '\t');
        if (f.size() == 2) dates[f[0]] = from_unix(std::stoll(f[1]));
    }
    for (auto& t : tags) t.date = dates.at(t.commit);
    std::sort(tags.begin(), tags.end(), [](const TagInfo& a, const TagInfo& b) {
        return std::tie(a.date, a.name) < std::tie(b.date, b.name);
    });
    return tags;
}

// -- worktrees -----------------------------------------------------------------------

Worktree::Worktree(const fs::path& mirror, const std::string& commit, const fs::path& path)
    : mirror_(mirror), path_(path) {
    if (fs::exists(path_)) {
        git_ok(mirror_, {"worktree", "remove", "--force", path_.string()});
        fs::remove_all(path_);
        git_ok(mirror_, {"worktree", "prune"});
    }
    fs::create_directories(path_.parent_path());
    git(mirror_, {"worktree", "add", "--detach", "--force", path_.string(), commit});
}

Worktree::~Worktree() {
    try {
        if (!git_ok(mirror_, {"worktree", "remove", "--force", path_.string()})) {
            fs::remove_all(path_);
            git_ok(mirror_, {"worktree", "prune"});
        }
    } catch (...) {
    }
}

void Worktree::reset() {
    git(path_, {"reset", "--hard", "-q"});
    git(path_, {"clean", "-fdxq"});
}

std::string tree_content_hash(const fs::path& dir) {
    std::vector<std::string> entries;
    for (auto it = fs::recursive_directory_iterator(dir); it != fs::recursive_directory_iterator(); ++it) {
        const auto rel = fs::relative(it->path(), dir).generic_string();
        if (rel == ".git") {
            if (it->is_directory()) it.disable_recursion_pending();
            continue;
        }
        const auto st = it->symlink_status();
        if (fs::is_symlink(st)) {
            entries.push_back(rel + "\tlink\t" + fs::read_symlink(it->path()).string());
        } else if (fs::is_directory(st)) {
            entries.push_back(rel + "\tdir");
        } else if (fs::is_regular_file(st)) {
            const bool exec = (st.permissions() & fs::perms::owner_exec) != fs::perms::none;
            entries.push_back(rel + "\t" + (exec ? "x" : "f") + "\t" + util::sha256_hex(util::read_file(it->path())));
        }
    }
    std::sort(entries.begin(), entries.end());
    std::string all;
    for (const auto& e : entries) all += e + "\n";
    return util::sha256_hex(all);
}

// -- line classification ---------------------------------------------------------------

std::optional<Language> language_for_path(const std::string& filename) {
    static const std::map<std::string, Language> kExt = {
        {".java", Language::Java},      {".go", Language::Go},          {".rs", Language::Rust},
        {".rb", Language::Ruby},        {".py", Language::Python},      {".php", Language::PHP},
        {".js", Language::JavaScript},  {".mjs", Language::JavaScript}, {".cjs", Language::JavaScript},
        {".jsx", Language::JavaScript},
    };
    const auto ext = util::to_lower(fs::path(filename).extension().string());
    auto it = kExt.find(ext);
    if (it == kExt.end()) return std::nullopt;
    return it->second;
}

namespace {

struct CommentRules {
    bool slashes = false; // "//" and "/* */"
    bool hash = false;    // "#"
    bool ruby_block = false;
};

CommentRules rules_for(std::optional<Language> lang) {
    if (!lang) return {};
    switch (*lang) {
    case Language::Java:
    case Language::Go:
    case Language::Rust:
    case Language::JavaScript: return {true, false, false};
    case Language::PHP: return {true, true, false};
    case Language::Python: return {false, true, false};
    case Language::Ruby: return {false, true, true};
    case Language::Other: return {};
    }
    return {};
}

} // namespace

LineCounts classify_lines(const std::string& filename, const std::string& content) {
    const auto lang = language_for_path(filename);
    const CommentRules rules = rules_for(lang);
    LineCounts counts;
    bool in_block = false;
    bool in_ruby_block = false;
    std::istringstream in(content);
    std::string raw;
    while (std::getline(in, raw)) {
        std::string line = util::trim(raw);
        if (in_ruby_block) {
            ++counts.comments;
            if (util::starts_with(line, "=end")) in_ruby_block = false;
            continue;
        }
        if (line.empty() && !in_block) {
            ++counts.blank;
            continue;
        }
        if (!lang) {
            ++counts.code;
            continue;
        }
        if (rules.ruby_block && util::starts_with(raw, "=begin")) {
            ++counts.comments;
            in_ruby_block = true;
            continue;
        }
        // Walk the line, noting whether any non-comment text appears.
        bool code = false;
        std::size_t i = 0;
        while (i < line.size()) {
            if (in_block) {
                const auto close = line.find("*/", i);
                if (close == std::string::npos) {
                    i = line.size();
                    break;
                }
                in_block = false;
                i = close + 2;
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(line[i]))) {
                ++i;
                continue;
            }
            if (rules.slashes && line.compare(i, 2, "//") == 0) break;
            if (rules.hash && line[i] == '#') break;
            if (rules.slashes && line.compare(i, 2, "/*") == 0) {
                in_block = true;
                i += 2;
                continue;
            }
            code = true;
            ++i;
        }
        if (code) ++counts.code;
        else if (line.empty()) ++counts.blank;
        else ++counts.comments;
    }
    return counts;
}

// -- stage 2 metrics ------------------------------------------------------------------------

ReleaseMetrics measure_release(const fs::path& mirror, const std::string& commit, const fs::path& worktree) {
    ReleaseMetrics m;
    m.commit_count = std::stoll(util::trim(git(mirror, {"rev-list", "--count", commit})));
    std::set<std::string> authors;
    for (const auto& email : lines_of(git(mirror, {"log", "--format=%ae", commit})))
        authors.insert(util::to_lower(util::trim(email)));
    m.contributor_count = static_cast<std::int64_t>(authors.size());

    const auto listing = git(mirror, {"ls-tree", "-r", "-z", commit});
    std::size_t pos = 0;
    while (pos < listing.size()) {
        const auto end = listing.find('\0', pos);
        const std::string entry = listing.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        pos = end == std::string::npos ? listing.size() : end + 1;
        const auto tab = entry.find('\t');
        if (tab == std::string::npos) continue;
        const auto meta = util::split(entry.substr(0, tab), ' ');
        if (meta.size() < 2 || meta[1] != "blob") continue;
        const std::string path = entry.substr(tab + 1);
        ++m.file_count;
        if (const auto lang = language_for_path(path)) ++m.files_by_language[*lang];
        if (meta[0] == "120000") continue; // symlink
        const fs::path file = worktree / path;
        if (!fs::is_regular_file(file)) continue;
        const std::string content = util::read_file(file);
        if (content.find('\0') < 8000) continue; // binary
        const auto c = classify_lines(path, content);
        m.lines_of_code += c.code;
        m.lines_of_comments += c.comments;
    }
    return m;
}

// -- remote metadata --------------------------------------------------------------------------

MetadataClient::MetadataClient(std::string base_url, std::optional<std::string> token, matcher::TokenBucket& bucket,
                               Clock& clock)
    : base_url_(std::move(base_url)), token_(std::move(token)), bucket_(bucket), clock_(clock) {}

http::Response MetadataClient::get(const std::string& path) {
    bucket_.acquire();
    http::Headers headers{{"Accept", "application/vnd.github+json"}, {"User-Agent", "relscan"}};
    if (token_) headers.emplace("Authorization", "Bearer " + *token_);
    http::Client client(base_url_);
    auto res = client.get(path, headers);
    const auto remaining = res.header("X-RateLimit-Remaining");
    if ((res.status == 403 || res.status == 429) && (remaining == std::optional<std::string>("0") || res.status == 429)) {
        Timestamp reset = clock_.wall_now() + std::chrono::seconds(60);
        if (const auto r = res.header("X-RateLimit-Reset")) {
            try {
                reset = from_unix(std::stoll(*r));
            } catch (const std::exception&) {
            }
        } else if (const auto ra = res.header("Retry-After")) {
            try {
                reset = clock_.wall_now() + std::chrono::seconds(std::stoll(*ra));
            } catch (const std::exception&) {
            }
        }
        throw RateLimitError("metadata API quota exhausted until " + format_iso8601(reset), reset);
    }
    if (res.status == 404) throw Error(ErrorKind::NotFound, "metadata API: " + path + " not found");
    if (res.status != 200) throw Error(ErrorKind::Io, "metadata API: " + path + " returned HTTP " + std::to_string(res.status));
    return res;
}

MetadataClient::RepoInfo MetadataClient::repository(const std::string& full_name) {
    const auto res = get("/repos/" + full_name);
    json j;
    try {
        j = json::parse(res.body);
        RepoInfo info;
        info.id = "gh-" + std::to_string(j.at("id").get<std::int64_t>());
        info.full_name = j.at("full_name").get<std::string>();
        info.clone_url = j.at("clone_url").get<std::string>();
        if (j.contains("language") && j["language"].is_string()) info.language = j["language"];
        if (j.contains("stargazers_count") && j["stargazers_count"].is_number_integer())
            info.stargazers = j["stargazers_count"];
        return info;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, "metadata API: /repos/" + full_name + ": " + e.what());
    }
}

std::int64_t MetadataClient::contributor_count(const std::string& full_name) {
    const auto res = get("/repos/" + full_name + "/contributors?per_page=1&anon=1");
    if (const auto link = res.header("Link")) {
        static const std::regex last(R"([?&]page=(\d+)>;\s*rel="last")");
        std::smatch m;
        if (std::regex_search(*link, m, last)) return std::stoll(m[1]);
    }
    try {
        return static_cast<std::int64_t>(json::parse(res.body).size());
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, "metadata API: contributors: " + std::string(e.what()));
    }
}

// -- stage 1 -------------------------------------------------------------------------------

namespace {

Language language_from_name(const std::string& name) {
    for (Language l : {Language::Java, Language::Go, Language::Rust, Language::Ruby, Language::Python, Language::PHP,
                       Language::JavaScript})
        if (util::to_lower(to_string(l)) == util::to_lower(name)) return l;
    return Language::Other;
}

Language dominant_language(const fs::path& mirror, const std::string& commit) {
    std::map<Language, int> counts;
    for (const auto& path : lines_of(git(mirror, {"ls-tree", "-r", "--name-only", commit})))
        if (const auto l = language_for_path(path)) ++counts[*l];
    Language best = Language::Other;
    int best_n = 0;
    for (const auto& [l, n] : counts)
        if (n > best_n) {
            best = l;
            best_n = n;
        }
    return best;
}

void ensure_mirror(const std::string& source, const fs::path& mirror) {
    if (fs::exists(mirror / "HEAD")) {
        git(mirror, {"fetch", "--prune", "--quiet", "origin"});
        return;
    }
    fs::create_directories(mirror.parent_path());
    const auto tmp = mirror.string() + ".partial";
    fs::remove_all(tmp);
    git(mirror.parent_path(), {"clone", "--mirror", "--quiet", source, tmp});
    fs::rename(tmp, mirror);
}

} // namespace

Stage1Result stage1_collect(store::Store& store, const std::string& locator, const fs::path& workspace,
                            MetadataClient* remote, const Clock& clock) {
    Stage1Result result;
    Repository repo;
    std::string source;
    std::optional<MetadataClient::RepoInfo> info;

    std::string local_path = locator;
    if (util::starts_with(local_path, "file://")) local_path = local_path.substr(7);
    if (fs::is_directory(local_path)) {
        const fs::path src = fs::absolute(local_path);
        const auto roots = lines_of(git(src, {"rev-list", "--max-parents=0", "--all"}));
        if (roots.empty())
            throw Error(ErrorKind::RejectedNoReleases, "repository " + src.string() + " has no commits");
        const auto root = *std::min_element(roots.begin(), roots.end());
        repo.id = "local-" + root.substr(0, 12);
        repo.name = src.filename().string();
        if (repo.name.empty() || repo.name == ".") repo.name = src.parent_path().filename().string();
        repo.clone_url = src.string();
        source = src.string();
    } else if (remote) {
        info = remote->repository(locator);
        repo.id = info->id;
        repo.name = info->full_name;
        repo.clone_url = info->clone_url;
        repo.stargazers = info->stargazers;
        source = info->clone_url;
    } else {
        throw Error(ErrorKind::NotFound, "repository locator '" + locator + "' is neither a local path nor resolvable remotely");
    }

    result.mirror = workspace / "mirrors" / (safe_segment(repo.id) + ".git");
    ensure_mirror(source, result.mirror);

    const auto tags = list_tags(result.mirror);
    if (tags.empty()) throw Error(ErrorKind::RejectedNoReleases, "repository " + repo.name + " has no release tags");

    repo.primary_language = info && !info->language.empty() ? language_from_name(info->language)
                                                             : dominant_language(result.mirror, tags.back().commit);
    if (info) {
        repo.contributor_count = remote->contributor_count(locator);
    } else {
        std::set<std::string> authors;
        for (const auto& e : lines_of(git(result.mirror, {"log", "--format=%ae", "--tags"})))
            authors.insert(util::to_lower(util::trim(e)));
        repo.contributor_count = static_cast<std::int64_t>(authors.size());
    }
    repo.first_seen = clock.wall_now();

    for (std::size_t i = 1; i < tags.size(); ++i) {
        const auto& earlier = tags[i - 1];
        const auto& later = tags[i];
        if (earlier.commit != later.commit &&
            git_ok(result.mirror, {"merge-base", "--is-ancestor", later.commit, earlier.commit}))
            result.ordering_disagreements.emplace_back(earlier.name, later.name);
    }

    store.transaction([&] {
        store.upsert_repository(repo);
        for (const auto& t : tags) {
            Release r;
            r.repo_id = repo.id;
            r.tag = t.name;
            r.release_date = t.date;
            if (store.insert_release(r)) ++result.inserted;
        }
    });
    result.repository = *store.get_repository(repo.id);
    result.releases = store.list_releases(repo.id);
    return result;
}

// -- stage 2 -------------------------------------------------------------------------------

Release stage2_enrich(store::Store& store, const Release& release, const fs::path& mirror, const fs::path& worktree_root) {
    std::optional<Worktree> wt;
    std::string commit;
    try {
        commit = util::trim(git(mirror, {"rev-parse", "--verify", release.tag + "^{commit}"}));
        wt.emplace(mirror, commit, worktree_root / safe_segment(release.repo_id) / safe_segment(release.tag));
    } catch (const Error&) {
        store.transition_release(release.repo_id, release.tag, ReleaseState::New, ReleaseState::Fail, "CHECKOUT");
        return *store.get_release(release.repo_id, release.tag);
    }
    const auto m = measure_release(mirror, commit, wt->path());
    Release updated = release;
    updated.commit_count = m.commit_count;
    updated.contributor_count = m.contributor_count;
    updated.file_count = m.file_count;
    updated.lines_of_code = m.lines_of_code;
    updated.lines_of_comments = m.lines_of_comments;
    store.update_release_metrics(updated);
    return *store.get_release(release.repo_id, release.tag);
}

ReleaseCycleStats release_cycle_stats(std::vector<Release> releases) {
    if (releases.size() < 2)
        throw Error(ErrorKind::NotEnoughReleases, "release cycle statistics need at least two releases");
    std::sort(releases.begin(), releases.end(), [](const Release& a, const Release& b) {
        return std::tie(a.release_date, a.tag) < std::tie(b.release_date, b.tag);
    });
    double days = 0.0, commits = 0.0;
    for (std::size_t i = 1; i < releases.size(); ++i) {
        days += std::chrono::duration<double>(releases[i].release_date - releases[i - 1].release_date).count() / 86400.0;
        commits += static_cast<double>(releases[i].commit_count - releases[i - 1].commit_count);
    }
    const double n = static_cast<double>(releases.size() - 1);
    return {days / n, commits / n};
}

std::string MiningReport::line() const {
    return "repo=" + repo_id + " releases_found=" + std::to_string(found) + " enriched=" + std::to_string(enriched) +
           " failed=" + std::to_string(failed);
}

} // namespace relscan::mining
