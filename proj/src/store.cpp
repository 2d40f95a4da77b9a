#include "relscan/store.hpp"

#include "relscan/purl.hpp"
#include "relscan/util.hpp"

#include <nlohmann/json.hpp>
#include <sqlite3.h>

#include <fstream>
#include <sstream>
#include <variant>

namespace relscan::store {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Value = std::variant<std::monostate, std::int64_t, double, std::string>;

[[noreturn]] void sql_fail(sqlite3* db, const std::string& what) {
    const int code = sqlite3_extended_errcode(db);
    const ErrorKind kind = (code & 0xFF) == SQLITE_CORRUPT || (code & 0xFF) == SQLITE_NOTADB ? ErrorKind::Integrity
                                                                                                : ErrorKind::Io;
    throw Error(kind, what + ": " + sqlite3_errmsg(db));
}

class Stmt {
public:
    Stmt(sqlite3* db, std::string_view sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql.data(), static_cast<int>(sql.size()), &stmt_, nullptr) != SQLITE_OK)
            sql_fail(db, "prepare '" + std::string(sql) + "'");
    }
    ~Stmt() { sqlite3_finalize(stmt_); }
    Stmt(const Stmt&) = delete;
    Stmt& operator=(const Stmt&) = delete;

    Stmt& bind(int i, const Value& v) {
        int rc = SQLITE_OK;
        if (std::holds_alternative<std::monostate>(v)) rc = sqlite3_bind_null(stmt_, i);
        else if (auto* n = std::get_if<std::int64_t>(&v)) rc = sqlite3_bind_int64(stmt_, i, *n);
        else if (auto* d = std::get_if<double>(&v)) rc = sqlite3_bind_double(stmt_, i, *d);
        else {
            const auto& s = std::get<std::string>(v);
            rc = sqlite3_bind_text(stmt_, i, s.data(), static_cast<int>(s.size()), SQLITE_TRANSIENT);
        }
        if (rc != SQLITE_OK) sql_fail(db_, "bind");
        return *this;
    }

    template <typename... Args>
    Stmt& bind_all(const Args&... args) {
        int i = 1;
        (bind(i++, Value(args)), ...);
        return *this;
    }

    /// True while a row is available.
    bool step() {
        const int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        sql_fail(db_, "step");
    }

    void run() {
        while (step()) {
        }
    }

    bool is_null(int c) const { return sqlite3_column_type(stmt_, c) == SQLITE_NULL; }
    std::int64_t i64(int c) const { return sqlite3_column_int64(stmt_, c); }
    double f64(int c) const { return sqlite3_column_double(stmt_, c); }
    std::string text(int c) const {
        const auto* p = sqlite3_column_text(stmt_, c);
        return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, c)))
                 : std::string();
    }
    std::optional<double> opt_f64(int c) const { return is_null(c) ? std::nullopt : std::optional<double>(f64(c)); }
    std::optional<std::string> opt_text(int c) const {
        return is_null(c) ? std::nullopt : std::optional<std::string>(text(c));
    }
    int columns() const { return sqlite3_column_count(stmt_); }
    std::string column_name(int c) const { return sqlite3_column_name(stmt_, c); }
    std::string as_string(int c) const {
        switch (sqlite3_column_type(stmt_, c)) {
        case SQLITE_NULL: return "";
        case SQLITE_INTEGER: return std::to_string(i64(c));
        case SQLITE_FLOAT: {
            std::ostringstream ss;
            ss.precision(17);
            ss << f64(c);
            return ss.str();
        }
        default: return text(c);
        }
    }

private:
    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

Value opt(const std::optional<double>& v) { return v ? Value(*v) : Value(); }
Value opt(const std::optional<std::string>& v) { return v ? Value(*v) : Value(); }

constexpr const char* kSchemaV1 = R"SQL(
CREATE TABLE IF NOT EXISTS repositories(
  id TEXT PRIMARY KEY, name TEXT NOT NULL, clone_url TEXT NOT NULL, language TEXT NOT NULL,
  stargazers INTEGER NOT NULL CHECK(stargazers >= 0), contributor_count INTEGER NOT NULL, first_seen INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS releases(
  id INTEGER PRIMARY KEY, repo_id TEXT NOT NULL REFERENCES repositories(id), tag TEXT NOT NULL,
  release_date INTEGER NOT NULL, commit_count INTEGER NOT NULL, contributor_count INTEGER NOT NULL,
  file_count INTEGER NOT NULL, lines_of_code INTEGER NOT NULL, lines_of_comments INTEGER NOT NULL,
  state TEXT NOT NULL, fail_reason TEXT NOT NULL DEFAULT '', UNIQUE(repo_id, tag));
CREATE TABLE IF NOT EXISTS components(
  id INTEGER PRIMARY KEY, key TEXT NOT NULL UNIQUE, product_key TEXT NOT NULL, has_purl INTEGER NOT NULL,
  grp TEXT, name TEXT NOT NULL, version TEXT NOT NULL, hashes TEXT NOT NULL,
  analysis_state TEXT NOT NULL, claim_token TEXT);
CREATE INDEX IF NOT EXISTS components_state ON components(analysis_state, claim_token);
CREATE TABLE IF NOT EXISTS release_components(
  release_id INTEGER NOT NULL REFERENCES releases(id), component_id INTEGER NOT NULL REFERENCES components(id),
  depth INTEGER, PRIMARY KEY(release_id, component_id));
CREATE TABLE IF NOT EXISTS vulnerabilities(
  cve_id TEXT PRIMARY KEY, published INTEGER NOT NULL, last_modified INTEGER NOT NULL,
  cvss_v3 REAL, cvss_v2 REAL, severity TEXT NOT NULL, severity_source TEXT NOT NULL, description TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS affected(
  cve_id TEXT NOT NULL REFERENCES vulnerabilities(cve_id) ON DELETE CASCADE, ordinal INTEGER NOT NULL,
  product_key TEXT NOT NULL, range TEXT NOT NULL, source_form TEXT NOT NULL, PRIMARY KEY(cve_id, ordinal));
CREATE INDEX IF NOT EXISTS affected_product ON affected(product_key);
CREATE TABLE IF NOT EXISTS epss(
  cve_id TEXT PRIMARY KEY, score REAL NOT NULL, percentile REAL NOT NULL, model_date INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS feed_snapshots(
  feed_key TEXT PRIMARY KEY, checksum TEXT NOT NULL, fetched_at INTEGER NOT NULL, entry_count INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS unmatched_cpes(cve_id TEXT NOT NULL, cpe TEXT NOT NULL, PRIMARY KEY(cve_id, cpe));
CREATE TABLE IF NOT EXISTS matches(
  component_id INTEGER NOT NULL REFERENCES components(id), cve_id TEXT NOT NULL REFERENCES vulnerabilities(cve_id),
  source TEXT NOT NULL, matched_at INTEGER NOT NULL, PRIMARY KEY(component_id, cve_id, source));
CREATE TABLE IF NOT EXISTS dead_letters(
  id INTEGER PRIMARY KEY, routing_key TEXT NOT NULL, payload TEXT NOT NULL, attempts INTEGER NOT NULL,
  reason TEXT NOT NULL, parked_at INTEGER NOT NULL);
)SQL";

// Index i upgrades schema version i to i + 1.
const std::vector<const char*> kMigrations = {kSchemaV1};

constexpr const char* kTables[] = {"meta",  "repositories", "releases",       "components",     "release_components",
                                   "vulnerabilities", "affected", "epss", "feed_snapshots", "unmatched_cpes",
                                   "matches", "dead_letters"};

json range_to_json(const VersionRange& r) {
    json j = json::object();
    if (r.start) j["start"] = {{"version", r.start->version}, {"inclusive", r.start->inclusive}};
    if (r.end) j["end"] = {{"version", r.end->version}, {"inclusive", r.end->inclusive}};
    if (!r.exact.empty()) j["exact"] = r.exact;
    return j;
}

VersionRange range_from_json(const json& j) {
    VersionRange r;
    if (j.contains("start")) r.start = VersionBound{j["start"]["version"], j["start"]["inclusive"]};
    if (j.contains("end")) r.end = VersionBound{j["end"]["version"], j["end"]["inclusive"]};
    if (j.contains("exact")) r.exact = j["exact"].get<std::vector<std::string>>();
    return r;
}

} // namespace

struct Store::Impl {
    sqlite3* db = nullptr;
    mutable std::recursive_mutex mutex;
    int tx_depth = 0;

    ~Impl() {
        if (db) sqlite3_close_v2(db);
    }

    void exec(const std::string& sql) const {
        char* err = nullptr;
        if (sqlite3_exec(db, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
            const std::string msg = err ? err : "unknown";
            sqlite3_free(err);
            throw Error(ErrorKind::Io, "sql: " + msg);
        }
    }

    std::optional<std::int64_t> release_id(const std::string& repo_id, const std::string& tag) const {
        Stmt s(db, "SELECT id FROM releases WHERE repo_id=? AND tag=?");
        s.bind_all(repo_id, tag);
        if (!s.step()) return std::nullopt;
        return s.i64(0);
    }

    std::optional<std::int64_t> component_id(const std::string& key) const {
        Stmt s(db, "SELECT id FROM components WHERE key=?");
        s.bind_all(key);
        if (!s.step()) return std::nullopt;
        return s.i64(0);
    }

    void write_affected(const Vulnerability& v) const {
        Stmt del(db, "DELETE FROM affected WHERE cve_id=?");
        del.bind_all(v.cve_id).run();
        for (std::size_t i = 0; i < v.affected.size(); ++i) {
            Stmt s(db, "INSERT INTO affected(cve_id, ordinal, product_key, range, source_form) VALUES(?,?,?,?,?)");
            s.bind_all(v.cve_id, static_cast<std::int64_t>(i), v.affected[i].product_key,
                       range_to_json(v.affected[i].range).dump(), std::string(to_string(v.affected[i].source_form)));
            s.run();
        }
    }

    std::vector<AffectedSpec> read_affected(const std::string& cve_id) const {
        Stmt s(db, "SELECT product_key, range, source_form FROM affected WHERE cve_id=? ORDER BY ordinal");
        s.bind_all(cve_id);
        std::vector<AffectedSpec> out;
        while (s.step())
            out.push_back({s.text(0), range_from_json(json::parse(s.text(1))), source_form_from_string(s.text(2))});
        return out;
    }

    static Vulnerability read_vuln_row(const Stmt& s) {
        Vulnerability v;
        v.cve_id = s.text(0);
        v.published = from_unix(s.i64(1));
        v.last_modified = from_unix(s.i64(2));
        v.cvss_v3_base = s.opt_f64(3);
        v.cvss_v2_base = s.opt_f64(4);
        v.severity = severity_from_string(s.text(5));
        v.severity_source = severity_source_from_string(s.text(6));
        v.description = s.text(7);
        return v;
    }

    static StoredComponent read_component_row(const Stmt& s) {
        // key, product_key, has_purl, grp, name, version, hashes, analysis_state
        StoredComponent sc;
        sc.key = s.text(0);
        sc.product_key = s.text(1);
        sc.has_purl = s.i64(2) != 0;
        Component& c = sc.component;
        if (sc.has_purl) c.purl = purl::parse(sc.key);
        c.bom_ref = sc.key;
        c.group = s.opt_text(3);
        c.display_name = s.text(4);
        c.version = s.text(5);
        c.hashes = json::parse(s.text(6)).get<std::map<std::string, std::string>>();
        c.analysis_state = analysis_state_from_string(s.text(7));
        return sc;
    }

    static Release read_release_row(const Stmt& s) {
        Release r;
        r.repo_id = s.text(0);
        r.tag = s.text(1);
        r.release_date = from_unix(s.i64(2));
        r.commit_count = s.i64(3);
        r.contributor_count = s.i64(4);
        r.file_count = s.i64(5);
        r.lines_of_code = s.i64(6);
        r.lines_of_comments = s.i64(7);
        r.state = release_state_from_string(s.text(8));
        r.fail_reason = s.text(9);
        return r;
    }
};

namespace {
constexpr const char* kReleaseCols =
    "repo_id, tag, release_date, commit_count, contributor_count, file_count, lines_of_code, lines_of_comments, "
    "state, fail_reason";
constexpr const char* kComponentCols = "key, product_key, has_purl, grp, name, version, hashes, analysis_state";
constexpr const char* kVulnCols = "cve_id, published, last_modified, cvss_v3, cvss_v2, severity, severity_source, description";
} // namespace

Store::Store(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Store::Store(Store&&) noexcept = default;
Store& Store::operator=(Store&&) noexcept = default;
Store::~Store() = default;

Store Store::open(const fs::path& path) {
    auto impl = std::make_unique<Impl>();
    const bool memory = path == ":memory:";
    if (!memory && path.has_parent_path()) fs::create_directories(path.parent_path());
    if (sqlite3_open_v2(path.c_str(), &impl->db, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                        nullptr) != SQLITE_OK) {
        const std::string msg = impl->db ? sqlite3_errmsg(impl->db) : "out of memory";
        throw Error(ErrorKind::Io, "cannot open store " + path.string() + ": " + msg);
    }
    sqlite3_busy_timeout(impl->db, 10000);
    impl->exec("PRAGMA foreign_keys=ON");
    if (!memory) {
        impl->exec("PRAGMA journal_mode=WAL");
        impl->exec("PRAGMA synchronous=NORMAL");
    }
    impl->exec("CREATE TABLE IF NOT EXISTS meta(key TEXT PRIMARY KEY, value TEXT NOT NULL)");

    Store store(std::move(impl));
    store.transaction([&] {
        int version = store.schema_version();
        if (version > kSchemaVersion)
            throw Error(ErrorKind::Integrity, "store schema version " + std::to_string(version) + " is newer than supported " +
                                                  std::to_string(kSchemaVersion));
        for (; version < kSchemaVersion; ++version) store.impl_->exec(kMigrations[static_cast<std::size_t>(version)]);
        Stmt s(store.impl_->db, "INSERT INTO meta(key, value) VALUES('schema_version', ?) "
                                "ON CONFLICT(key) DO UPDATE SET value=excluded.value");
        s.bind_all(std::to_string(kSchemaVersion)).run();
        store.impl_->exec("UPDATE components SET claim_token=NULL WHERE claim_token IS NOT NULL");
    });
    return store;
}

int Store::schema_version() const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "SELECT value FROM meta WHERE key='schema_version'");
    return s.step() ? std::stoi(s.text(0)) : 0;
}

void Store::transaction(const std::function<void()>& fn) {
    std::lock_guard lock(impl_->mutex);
    if (impl_->tx_depth > 0) {
        ++impl_->tx_depth;
        try {
            fn();
        } catch (...) {
            --impl_->tx_depth;
            throw;
        }
        --impl_->tx_depth;
        return;
    }
    impl_->exec("BEGIN IMMEDIATE");
    impl_->tx_depth = 1;
    try {
        fn();
    } catch (...) {
        impl_->tx_depth = 0;
        sqlite3_exec(impl_->db, "ROLLBACK", nullptr, nullptr, nullptr);
        throw;
    }
    impl_->tx_depth = 0;
    impl_->exec("COMMIT");
}

// -- repositories -------------------------------------------------------------

bool Store::upsert_repository(const Repository& repo) {
    validate(repo);
    std::lock_guard lock(impl_->mutex);
    bool inserted = false;
    transaction([&] {
        {
            Stmt s(impl_->db, "SELECT 1 FROM repositories WHERE id=?");
            s.bind_all(repo.id);
            inserted = !s.step();
        }
        Stmt s(impl_->db,
               "INSERT INTO repositories(id, name, clone_url, language, stargazers, contributor_count, first_seen) "
               "VALUES(?,?,?,?,?,?,?) ON CONFLICT(id) DO UPDATE SET name=excluded.name, clone_url=excluded.clone_url, "
               "language=excluded.language, stargazers=excluded.stargazers, contributor_count=excluded.contributor_count");
        s.bind_all(repo.id, repo.name, repo.clone_url, std::string(to_string(repo.primary_language)), repo.stargazers,
                   repo.contributor_count, to_unix(repo.first_seen));
        s.run();
    });
    return inserted;
}

namespace {
Repository read_repo(const Stmt& s) {
    Repository r;
    r.id = s.text(0);
    r.name = s.text(1);
    r.clone_url = s.text(2);
    r.primary_language = language_from_string(s.text(3));
    r.stargazers = s.i64(4);
    r.contributor_count = s.i64(5);
    r.first_seen = from_unix(s.i64(6));
    return r;
}
} // namespace

std::optional<Repository> Store::get_repository(const std::string& id) const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "SELECT id, name, clone_url, language, stargazers, contributor_count, first_seen FROM repositories WHERE id=?");
    s.bind_all(id);
    if (!s.step()) return std::nullopt;
    return read_repo(s);
}

std::vector<Repository> Store::list_repositories() const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "SELECT id, name, clone_url, language, stargazers, contributor_count, first_seen FROM repositories ORDER BY id");
    std::vector<Repository> out;
    while (s.step()) out.push_back(read_repo(s));
    return out;
}

// -- releases -------------------------------------------------------------------

bool Store::insert_release(const Release& r) {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, std::string("INSERT OR IGNORE INTO releases(") + kReleaseCols + ") VALUES(?,?,?,?,?,?,?,?,?,?)");
    s.bind_all(r.repo_id, r.tag, to_unix(r.release_date), r.commit_count, r.contributor_count, r.file_count,
               r.lines_of_code, r.lines_of_comments, std::string(to_string(r.state)), r.fail_reason);
    try {
        s.run();
    } catch (const Error& e) {
        throw Error(ErrorKind::Integrity, "release " + r.repo_id + "@" + r.tag + ": " + e.what());
    }
    return sqlite3_changes(impl_->db) > 0;
}

void Store::update_release_metrics(const Release& r) {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "UPDATE releases SET release_date=?, commit_count=?, contributor_count=?, file_count=?, "
                      "lines_of_code=?, lines_of_comments=? WHERE repo_id=? AND tag=?");
    s.bind_all(to_unix(r.release_date), r.commit_count, r.contributor_count, r.file_count, r.lines_of_code,
               r.lines_of_comments, r.repo_id, r.tag);
    s.run();
    if (sqlite3_changes(impl_->db) == 0) throw Error(ErrorKind::NotFound, "release " + r.repo_id + "@" + r.tag);
}

std::optional<Release> Store::get_release(const std::string& repo_id, const std::string& tag) const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, std::string("SELECT ") + kReleaseCols + " FROM releases WHERE repo_id=? AND tag=?");
    s.bind_all(repo_id, tag);
    if (!s.step()) return std::nullopt;
    return Impl::read_release_row(s);
}

std::vector<Release> Store::list_releases(const std::string& repo_id) const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, std::string("SELECT ") + kReleaseCols + " FROM releases WHERE repo_id=? ORDER BY release_date, tag");
    s.bind_all(repo_id);
    std::vector<Release> out;
    while (s.step()) out.push_back(Impl::read_release_row(s));
    return out;
}

void Store::transition_release(const std::string& repo_id, const std::string& tag, ReleaseState from, ReleaseState to,
                               const std::string& reason) {
    if (!is_legal_transition(from, to))
        throw Error(ErrorKind::Validation, "illegal release transition " + std::string(to_string(from)) + "->" +
                                               std::string(to_string(to)));
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "UPDATE releases SET state=?, fail_reason=? WHERE repo_id=? AND tag=? AND state=?");
    s.bind_all(std::string(to_string(to)), to == ReleaseState::Fail ? reason : std::string(), repo_id, tag,
               std::string(to_string(from)));
    s.run();
    if (sqlite3_changes(impl_->db) == 0)
        throw Error(ErrorKind::Conflict, "release " + repo_id + "@" + tag + " is not in state " + std::string(to_string(from)));
}

// -- components -----------------------------------------------------------------

bool Store::insert_component(const Component& c) {
    validate(c);
    const std::string key = component_key(c);
    const std::string product = c.purl ? purl::product_key(*c.purl) : key;
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "INSERT OR IGNORE INTO components(key, product_key, has_purl, grp, name, version, hashes, analysis_state) "
                      "VALUES(?,?,?,?,?,?,?,?)");
    s.bind_all(key, product, static_cast<std::int64_t>(c.purl ? 1 : 0), opt(c.group), c.display_name, c.version,
               json(c.hashes).dump(), std::string(to_string(c.analysis_state)));
    s.run();
    return sqlite3_changes(impl_->db) > 0;
}

std::optional<StoredComponent> Store::get_component(const std::string& key) const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, std::string("SELECT ") + kComponentCols + " FROM components WHERE key=?");
    s.bind_all(key);
    if (!s.step()) return std::nullopt;
    return Impl::read_component_row(s);
}

std::vector<StoredComponent> Store::list_components() const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, std::string("SELECT ") + kComponentCols + " FROM components ORDER BY key");
    std::vector<StoredComponent> out;
    while (s.step()) out.push_back(Impl::read_component_row(s));
    return out;
}

std::size_t Store::count_components(std::optional<AnalysisState> state) const {
    std::lock_guard lock(impl_->mutex);
    if (!state) {
        Stmt s(impl_->db, "SELECT COUNT(*) FROM components");
        s.step();
        return static_cast<std::size_t>(s.i64(0));
    }
    Stmt s(impl_->db, "SELECT COUNT(*) FROM components WHERE analysis_state=?");
    s.bind_all(std::string(to_string(*state)));
    s.step();
    return static_cast<std::size_t>(s.i64(0));
}

void Store::link_release_component(const std::string& repo_id, const std::string& tag, const std::string& component_key,
                                   std::optional<int> depth) {
    std::lock_guard lock(impl_->mutex);
    const auto rid = impl_->release_id(repo_id, tag);
    if (!rid) throw Error(ErrorKind::Integrity, "link: unknown release " + repo_id + "@" + tag);
    const auto cid = impl_->component_id(component_key);
    if (!cid) throw Error(ErrorKind::Integrity, "link: unknown component " + component_key);
    Stmt s(impl_->db, "INSERT INTO release_components(release_id, component_id, depth) VALUES(?,?,?) "
                      "ON CONFLICT(release_id, component_id) DO UPDATE SET depth=excluded.depth");
    s.bind_all(*rid, *cid, depth ? Value(static_cast<std::int64_t>(*depth)) : Value());
    s.run();
}

std::vector<ReleaseComponent> Store::list_release_components(const std::string& repo_id, const std::string& tag) const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "SELECT c.key, rc.depth FROM release_components rc JOIN releases r ON r.id = rc.release_id "
                      "JOIN components c ON c.id = rc.component_id WHERE r.repo_id=? AND r.tag=? ORDER BY c.key");
    s.bind_all(repo_id, tag);
    std::vector<ReleaseComponent> out;
    while (s.step())
        out.push_back({s.text(0), s.is_null(1) ? std::nullopt : std::optional<int>(static_cast<int>(s.i64(1)))});
    return out;
}

std::vector<StoredComponent> Store::claim_new_components(std::size_t limit, const std::string& token) {
    std::lock_guard lock(impl_->mutex);
    std::vector<StoredComponent> out;
    transaction([&] {
        {
            Stmt s(impl_->db, std::string("SELECT ") + kComponentCols +
                                  " FROM components WHERE analysis_state='NEW' AND claim_token IS NULL ORDER BY key LIMIT ?");
            s.bind_all(static_cast<std::int64_t>(limit));
            while (s.step()) out.push_back(Impl::read_component_row(s));
        }
        for (const auto& c : out) {
            Stmt u(impl_->db, "UPDATE components SET claim_token=? WHERE key=? AND claim_token IS NULL");
            u.bind_all(token, c.key).run();
        }
    });
    return out;
}

void Store::complete_claim(const std::vector<std::string>& keys, const std::vector<VulnMatch>& matches) {
    std::lock_guard lock(impl_->mutex);
    transaction([&] {
        insert_matches(matches);
        for (const auto& key : keys) {
            Stmt u(impl_->db, "UPDATE components SET analysis_state='ANALYZED', claim_token=NULL WHERE key=?");
            u.bind_all(key).run();
        }
    });
}

void Store::release_claim(const std::vector<std::string>& keys) {
    std::lock_guard lock(impl_->mutex);
    transaction([&] {
        for (const auto& key : keys) {
            Stmt u(impl_->db, "UPDATE components SET claim_token=NULL WHERE key=? AND analysis_state='NEW'");
            u.bind_all(key).run();
        }
    });
}

std::size_t Store::reset_analyzed_to_new() {
    std::lock_guard lock(impl_->mutex);
    impl_->exec("UPDATE components SET analysis_state='NEW' WHERE analysis_state='ANALYZED' AND claim_token IS NULL");
    return static_cast<std::size_t>(sqlite3_changes(impl_->db));
}

// -- vulnerabilities ---------------------------------------------------------------

VulnIngestCounts Store::ingest_vulnerabilities(const std::vector<Vulnerability>& vulns, bool prefer_on_tie) {
    for (const auto& v : vulns) validate(v);
    std::lock_guard lock(impl_->mutex);
    VulnIngestCounts counts;
    transaction([&] {
        for (const auto& v : vulns) {
            std::optional<std::int64_t> stored_modified;
            {
                Stmt s(impl_->db, "SELECT last_modified FROM vulnerabilities WHERE cve_id=?");
                s.bind_all(v.cve_id);
                if (s.step()) stored_modified = s.i64(0);
            }
            const std::int64_t incoming = to_unix(v.last_modified);
            if (stored_modified) {
                const bool replace = incoming > *stored_modified || (incoming == *stored_modified && prefer_on_tie);
                if (!replace) {
                    ++counts.unchanged;
                    continue;
                }
                Stmt u(impl_->db, "UPDATE vulnerabilities SET published=?, last_modified=?, cvss_v3=?, cvss_v2=?, "
                                  "severity=?, severity_source=?, description=? WHERE cve_id=?");
                u.bind_all(to_unix(v.published), incoming, opt(v.cvss_v3_base), opt(v.cvss_v2_base),
                           std::string(to_string(v.severity)), std::string(to_string(v.severity_source)), v.description,
                           v.cve_id);
                u.run();
                ++counts.replaced;
            } else {
                Stmt i(impl_->db, std::string("INSERT INTO vulnerabilities(") + kVulnCols + ") VALUES(?,?,?,?,?,?,?,?)");
                i.bind_all(v.cve_id, to_unix(v.published), incoming, opt(v.cvss_v3_base), opt(v.cvss_v2_base),
                           std::string(to_string(v.severity)), std::string(to_string(v.severity_source)), v.description);
                i.run();
                ++counts.inserted;
            }
            impl_->write_affected(v);
        }
    });
    return counts;
}

std::optional<Vulnerability> Store::get_vulnerability(const std::string& cve_id) const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, std::string("SELECT ") + kVulnCols + " FROM vulnerabilities WHERE cve_id=?");
    s.bind_all(cve_id);
    if (!s.step()) return std::nullopt;
    Vulnerability v = Impl::read_vuln_row(s);
    v.affected = impl_->read_affected(cve_id);
    return v;
}

std::vector<Vulnerability> Store::list_vulnerabilities() const {
    std::lock_guard lock(impl_->mutex);
    std::vector<Vulnerability> out;
    {
        Stmt s(impl_->db, std::string("SELECT ") + kVulnCols + " FROM vulnerabilities ORDER BY cve_id");
        while (s.step()) out.push_back(Impl::read_vuln_row(s));
    }
    for (auto& v : out) v.affected = impl_->read_affected(v.cve_id);
    return out;
}

std::vector<AffectedRow> Store::list_affected() const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "SELECT cve_id, product_key, range, source_form FROM affected ORDER BY cve_id, ordinal");
    std::vector<AffectedRow> out;
    while (s.step())
        out.push_back({s.text(0), {s.text(1), range_from_json(json::parse(s.text(2))), source_form_from_string(s.text(3))}});
    return out;
}

std::size_t Store::count_vulnerabilities() const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "SELECT COUNT(*) FROM vulnerabilities");
    s.step();
    return static_cast<std::size_t>(s.i64(0));
}

// -- epss ---------------------------------------------------------------------------

UpsertOutcome Store::upsert_epss(const EpssEntry& e) {
    validate(e);
    std::lock_guard lock(impl_->mutex);
    const std::int64_t day = e.model_date.time_since_epoch().count();
    std::optional<std::int64_t> stored;
    {
        Stmt s(impl_->db, "SELECT model_date FROM epss WHERE cve_id=?");
        s.bind_all(e.cve_id);
        if (s.step()) stored = s.i64(0);
    }
    if (stored && *stored > day) return UpsertOutcome::Unchanged;
    Stmt s(impl_->db, "INSERT INTO epss(cve_id, score, percentile, model_date) VALUES(?,?,?,?) ON CONFLICT(cve_id) DO "
                      "UPDATE SET score=excluded.score, percentile=excluded.percentile, model_date=excluded.model_date");
    s.bind_all(e.cve_id, e.score, e.percentile, day);
    s.run();
    return stored ? UpsertOutcome::Replaced : UpsertOutcome::Inserted;
}

void Store::ingest_epss(const std::vector<EpssEntry>& entries, std::size_t& inserted, std::size_t& replaced) {
    std::lock_guard lock(impl_->mutex);
    inserted = replaced = 0;
    transaction([&] {
        for (const auto& e : entries) {
            const auto outcome = upsert_epss(e);
            if (outcome == UpsertOutcome::Inserted) ++inserted;
            if (outcome == UpsertOutcome::Replaced) ++replaced;
        }
    });
}

std::optional<EpssEntry> Store::get_epss(const std::string& cve_id) const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "SELECT cve_id, score, percentile, model_date FROM epss WHERE cve_id=?");
    s.bind_all(cve_id);
    if (!s.step()) return std::nullopt;
    return EpssEntry{s.text(0), s.f64(1), s.f64(2), Date{std::chrono::days{s.i64(3)}}};
}

// -- snapshots ------------------------------------------------------------------------

std::optional<FeedSnapshot> Store::get_snapshot(const std::string& feed_key) const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "SELECT feed_key, checksum, fetched_at, entry_count FROM feed_snapshots WHERE feed_key=?");
    s.bind_all(feed_key);
    if (!s.step()) return std::nullopt;
    return FeedSnapshot{s.text(0), s.text(1), from_unix(s.i64(2)), s.i64(3)};
}

void Store::put_snapshot(const FeedSnapshot& snap) {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "INSERT INTO feed_snapshots(feed_key, checksum, fetched_at, entry_count) VALUES(?,?,?,?) "
                      "ON CONFLICT(feed_key) DO UPDATE SET checksum=excluded.checksum, fetched_at=excluded.fetched_at, "
                      "entry_count=excluded.entry_count");
    s.bind_all(snap.feed_key, snap.checksum, to_unix(snap.fetched_at), snap.entry_count);
    s.run();
}

std::vector<FeedSnapshot> Store::list_snapshots() const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "SELECT feed_key, checksum, fetched_at, entry_count FROM feed_snapshots ORDER BY feed_key");
    std::vector<FeedSnapshot> out;
    while (s.step()) out.push_back({s.text(0), s.text(1), from_unix(s.i64(2)), s.i64(3)});
    return out;
}

void Store::record_unmatched_cpes(const std::string& cve_id, const std::vector<std::string>& cpes) {
    std::lock_guard lock(impl_->mutex);
    transaction([&] {
        Stmt d(impl_->db, "DELETE FROM unmatched_cpes WHERE cve_id=?");
        d.bind_all(cve_id).run();
        for (const auto& cpe : cpes) {
            Stmt s(impl_->db, "INSERT OR IGNORE INTO unmatched_cpes(cve_id, cpe) VALUES(?,?)");
            s.bind_all(cve_id, cpe).run();
        }
    });
}

std::vector<std::pair<std::string, std::string>> Store::list_unmatched_cpes() const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "SELECT cve_id, cpe FROM unmatched_cpes ORDER BY cve_id, cpe");
    std::vector<std::pair<std::string, std::string>> out;
    while (s.step()) out.emplace_back(s.text(0), s.text(1));
    return out;
}

// -- matches --------------------------------------------------------------------------

void Store::insert_matches(const std::vector<VulnMatch>& matches) {
    std::lock_guard lock(impl_->mutex);
    transaction([&] {
        for (const auto& m : matches) {
            const auto cid = impl_->component_id(m.component_key);
            if (!cid) throw Error(ErrorKind::Integrity, "match references unknown component " + m.component_key);
            Stmt s(impl_->db, "INSERT OR IGNORE INTO matches(component_id, cve_id, source, matched_at) VALUES(?,?,?,?)");
            s.bind_all(*cid, m.cve_id, std::string(to_string(m.source)), to_unix(m.matched_at));
            try {
                s.run();
            } catch (const Error& e) {
                throw Error(ErrorKind::Integrity, "match " + m.component_key + " -> " + m.cve_id + ": " + e.what());
            }
        }
    });
}

namespace {
VulnMatch read_match(const Stmt& s) {
    return VulnMatch{s.text(0), s.text(1), match_source_from_string(s.text(2)), from_unix(s.i64(3))};
}
} // namespace

std::vector<VulnMatch> Store::list_matches() const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "SELECT c.key, m.cve_id, m.source, m.matched_at FROM matches m JOIN components c ON c.id = m.component_id "
                      "ORDER BY c.key, m.cve_id, m.source");
    std::vector<VulnMatch> out;
    while (s.step()) out.push_back(read_match(s));
    return out;
}

std::vector<VulnMatch> Store::list_matches_for(const std::string& component_key) const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "SELECT c.key, m.cve_id, m.source, m.matched_at FROM matches m JOIN components c ON c.id = m.component_id "
                      "WHERE c.key=? ORDER BY m.cve_id, m.source");
    s.bind_all(component_key);
    std::vector<VulnMatch> out;
    while (s.step()) out.push_back(read_match(s));
    return out;
}

// -- dead letters -----------------------------------------------------------------------

std::int64_t Store::park_dead_letter(const DeadLetter& d) {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "INSERT INTO dead_letters(routing_key, payload, attempts, reason, parked_at) VALUES(?,?,?,?,?)");
    s.bind_all(d.routing_key, d.payload, static_cast<std::int64_t>(d.attempts), d.reason, to_unix(d.parked_at));
    s.run();
    return sqlite3_last_insert_rowid(impl_->db);
}

std::vector<DeadLetter> Store::list_dead_letters() const {
    std::lock_guard lock(impl_->mutex);
    Stmt s(impl_->db, "SELECT id, routing_key, payload, attempts, reason, parked_at FROM dead_letters ORDER BY id");
    std::vector<DeadLetter> out;
    while (s.step())
        out.push_back({s.i64(0), s.text(1), s.text(2), static_cast<int>(s.i64(3)), s.text(4), from_unix(s.i64(5))});
    return out;
}

std::optional<DeadLetter> Store::take_dead_letter(std::int64_t id) {
    std::lock_guard lock(impl_->mutex);
    std::optional<DeadLetter> out;
    transaction([&] {
        Stmt s(impl_->db, "SELECT id, routing_key, payload, attempts, reason, parked_at FROM dead_letters WHERE id=?");
        s.bind_all(id);
        if (!s.step()) return;
        out = DeadLetter{s.i64(0), s.text(1), s.text(2), static_cast<int>(s.i64(3)), s.text(4), from_unix(s.i64(5))};
        Stmt d(impl_->db, "DELETE FROM dead_letters WHERE id=?");
        d.bind_all(id).run();
    });
    return out;
}

// -- integrity / export ----------------------------------------------------------------------

void Store::check_integrity() const {
    std::lock_guard lock(impl_->mutex);
    {
        Stmt s(impl_->db, "PRAGMA integrity_check");
        if (s.step() && s.text(0) != "ok") throw Error(ErrorKind::Integrity, "sqlite integrity_check: " + s.text(0));
    }
    {
        Stmt s(impl_->db, "PRAGMA foreign_key_check");
        if (s.step())
            throw Error(ErrorKind::Integrity, "dangling reference in " + s.text(0) + " rowid " + s.as_string(1) +
                                                  " -> " + s.text(2));
    }
    {
        Stmt s(impl_->db, "SELECT r.id FROM repositories r WHERE NOT EXISTS (SELECT 1 FROM releases x WHERE x.repo_id = r.id)");
        if (s.step()) throw Error(ErrorKind::Integrity, "repository " + s.text(0) + " has no releases");
    }
    {
        Stmt s(impl_->db, "SELECT c.key FROM matches m JOIN components c ON c.id = m.component_id "
                          "WHERE c.analysis_state <> 'ANALYZED' LIMIT 1");
        if (s.step()) throw Error(ErrorKind::Integrity, "component " + s.text(0) + " has matches but is not ANALYZED");
    }
    for (const auto& v : list_vulnerabilities()) {
        try {
            validate(v);
        } catch (const Error& e) {
            throw Error(ErrorKind::Integrity, "vulnerability " + v.cve_id + ": " + e.what());
        }
    }
}

std::string Store::dump() const {
    std::lock_guard lock(impl_->mutex);
    std::ostringstream out;
    for (const char* table : kTables) {
        out << "## " << table << "\n";
        std::vector<std::string> rows;
        Stmt s(impl_->db, std::string("SELECT * FROM ") + table);
        while (s.step()) {
            std::string row;
            for (int c = 0; c < s.columns(); ++c) {
                // Surrogate ids depend on insertion order; dumps compare content only.
                if (s.column_name(c) == "id" && std::string(table) != "repositories") continue;
                if (!row.empty()) row += "|";
                row += s.column_name(c) + "=" + s.as_string(c);
            }
            rows.push_back(std::move(row));
        }
        std::sort(rows.begin(), rows.end());
        for (const auto& r : rows) out << r << "\n";
    }
    return out.str();
}

namespace {
std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}
} // namespace

void Store::export_csv(const fs::path& dir) const {
    std::lock_guard lock(impl_->mutex);
    fs::create_directories(dir);
    for (const char* table : kTables) {
        Stmt s(impl_->db, std::string("SELECT * FROM ") + table + " ORDER BY 1");
        std::ostringstream out;
        for (int c = 0; c < s.columns(); ++c) out << (c ? "," : "") << csv_escape(s.column_name(c));
        out << "\n";
        while (s.step()) {
            for (int c = 0; c < s.columns(); ++c) out << (c ? "," : "") << csv_escape(s.as_string(c));
            out << "\n";
        }
        util::write_file_atomic(dir / (std::string(table) + ".csv"), out.str());
    }
}

} // namespace relscan::store
