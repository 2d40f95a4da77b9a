#include "relscan/genmachine.hpp"

#include "relscan/error.hpp"
#include "relscan/mining.hpp"
#include "relscan/purl.hpp"
#include "relscan/toml.hpp"
#include "relscan/util.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace relscan::gen {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(State s) {
    switch (s) {
    case State::Init: return "Init";
    case State::GoModSynthesis: return "GoModSynthesis";
    case State::CargoLockSynthesis: return "CargoLockSynthesis";
    case State::BomGeneration: return "BomGeneration";
    case State::Cleanup: return "Cleanup";
    case State::Halted: return "Halted";
    }
    return "?";
}

std::string_view to_string(Outcome o) {
    switch (o) {
    case Outcome::Pending: return "PENDING";
    case Outcome::Done: return "DONE";
    case Outcome::Fail: return "FAIL";
    }
    return "?";
}

std::string normalize_ecosystem(std::string_view ecosystem) {
    const std::string e = util::to_lower(ecosystem);
    if (e == "golang") return "go";
    if (e == "rust" || e == "crates") return "cargo";
    if (e == "rubygems" || e == "ruby") return "gem";
    if (e == "python" || e == "pip") return "pypi";
    if (e == "javascript" || e == "node") return "npm";
    if (e == "java") return "maven";
    if (e == "php") return "composer";
    return e;
}

std::string ecosystem_for_language(Language language) {
    switch (language) {
    case Language::Go: return "go";
    case Language::Rust: return "cargo";
    case Language::Java: return "maven";
    case Language::JavaScript: return "npm";
    case Language::Python: return "pypi";
    case Language::Ruby: return "gem";
    case Language::PHP: return "composer";
    case Language::Other: return "";
    }
    return "";
}

std::string module_marker(std::string_view ecosystem) {
    const std::string e = normalize_ecosystem(ecosystem);
    if (e == "go") return "go.mod";
    if (e == "cargo") return "Cargo.lock";
    if (e == "maven") return "pom.xml";
    if (e == "npm") return "package.json";
    if (e == "pypi") return "requirements.txt";
    if (e == "gem") return "Gemfile";
    if (e == "composer") return "composer.json";
    return "";
}

Transition transition(State state, std::string_view ecosystem, const Probes& p) {
    const std::string eco = normalize_ecosystem(ecosystem);
    switch (state) {
    case State::Init:
        if (!p.supported) return {State::Cleanup, std::string(kUnsupported)};
        if (p.manifest_present) return {State::BomGeneration, std::nullopt};
        if (eco == "go") return {State::GoModSynthesis, std::nullopt};
        if (eco == "cargo") return {State::CargoLockSynthesis, std::nullopt};
        return {State::Cleanup, std::string(kSynthesis)};
    case State::GoModSynthesis:
    case State::CargoLockSynthesis:
        if (p.timed_out) return {State::Cleanup, std::string(kTimeout)};
        if (!p.synthesis_ok) return {State::Cleanup, std::string(kSynthesis)};
        return {State::BomGeneration, std::nullopt};
    case State::BomGeneration:
        if (p.timed_out) return {State::Cleanup, std::string(kTimeout)};
        return {State::Cleanup, p.generation_failure};
    case State::Cleanup:
    case State::Halted:
        return {State::Halted, std::nullopt};
    }
    return {State::Halted, std::nullopt};
}

fs::path output_path(const fs::path& shared_dir, const std::string& repo_id, const std::string& tag) {
    std::string name = tag;
    std::replace(name.begin(), name.end(), '/', '_');
    return shared_dir / repo_id / (name + ".cdx.json");
}

namespace {

[[noreturn]] void parse_fail(std::string_view file, int line, const std::string& what) {
    throw Error(ErrorKind::Parse, std::string(file) + " line " + std::to_string(line) + ": " + what);
}

Component make_component(const std::string& ecosystem, const std::string& path, const std::string& version) {
    PackageUrl p;
    p.ecosystem = ecosystem;
    const auto slash = path.rfind('/');
    if (slash != std::string::npos) {
        p.namespace_ = path.substr(0, slash);
        p.name = path.substr(slash + 1);
    } else {
        p.name = path;
    }
    if (!version.empty()) p.version = version;
    Component c;
    c.group = p.namespace_;
    c.display_name = p.name;
    c.version = version;
    c.purl = p;
    c.bom_ref = purl::format(p);
    return c;
}

// ---- go.mod ---------------------------------------------------------------

struct GoRequire {
    std::string path;
    std::string version;
    bool indirect = false;
};

struct GoMod {
    std::string module;
    std::vector<GoRequire> requirements;
    // old path (optionally "path@version") -> new path, new version ("" for local dirs)
    std::map<std::string, std::pair<std::string, std::string>> replaces;
};

std::string unquote(std::string s) {
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '`') && s.back() == s.front()) return s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string> fields(std::string_view line) {
    std::vector<std::string> out;
    std::istringstream in{std::string(line)};
    std::string f;
    while (in >> f) out.push_back(unquote(f));
    return out;
}

GoMod parse_go_mod(std::string_view text) {
    GoMod mod;
    std::istringstream in{std::string(text)};
    std::string raw;
    int lineno = 0;
    std::string block;
    auto handle = [&](const std::string& verb, std::vector<std::string> f, bool indirect) {
        if (verb == "module") {
            if (f.size() != 1) parse_fail("go.mod", lineno, "malformed module directive");
            mod.module = f[0];
        } else if (verb == "require") {
            if (f.size() != 2) parse_fail("go.mod", lineno, "malformed require");
            mod.requirements.push_back({f[0], f[1], indirect});
        } else if (verb == "replace") {
            const auto arrow = std::find(f.begin(), f.end(), "=>");
            if (arrow == f.end()) parse_fail("go.mod", lineno, "replace without =>");
            const std::vector<std::string> lhs(f.begin(), arrow), rhs(arrow + 1, f.end());
            if (lhs.empty() || lhs.size() > 2 || rhs.empty() || rhs.size() > 2)
                parse_fail("go.mod", lineno, "malformed replace");
            const std::string key = lhs.size() == 2 ? lhs[0] + "@" + lhs[1] : lhs[0];
            mod.replaces[key] = {rhs[0], rhs.size() == 2 ? rhs[1] : std::string()};
        } else if (verb == "go" || verb == "toolchain" || verb == "exclude" || verb == "retract" ||
                   verb == "godebug") {
        } else {
            parse_fail("go.mod", lineno, "unknown directive '" + verb + "'");
        }
    };
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw;
        bool indirect = false;
        if (const auto c = line.find("//"); c != std::string::npos) {
            indirect = util::trim(line.substr(c + 2)).rfind("indirect", 0) == 0;
            line.erase(c);
        }
        auto f = fields(line);
        if (f.empty()) continue;
        if (!block.empty()) {
            if (f.size() == 1 && f[0] == ")") {
                block.clear();
                continue;
            }
            handle(block, f, indirect);
            continue;
        }
        const std::string verb = f[0];
        f.erase(f.begin());
        if (f.size() == 1 && f[0] == "(") {
            block = verb;
            continue;
        }
        handle(verb, f, indirect);
    }
    if (!block.empty()) parse_fail("go.mod", lineno, "unterminated " + block + " block");
    if (mod.module.empty()) parse_fail("go.mod", 1, "missing module directive");
    return mod;
}

// Applies replace directives; nullopt for replacements by a local directory.
std::optional<std::pair<std::string, std::string>> apply_replace(const GoMod& mod, const std::string& path,
                                                                 const std::string& version) {
    auto it = mod.replaces.find(path + "@" + version);
    if (it == mod.replaces.end()) it = mod.replaces.find(path);
    if (it == mod.replaces.end()) return std::pair{path, version};
    if (it->second.second.empty()) return std::nullopt;
    return it->second;
}

sbom::Sbom generate_go(std::string_view graph_text, std::string_view gomod_text) {
    const GoMod mod = parse_go_mod(gomod_text);

    std::map<std::string, std::string> selected; // path -> version (minimal version selection keeps the max)
    auto select = [&](const std::string& path, const std::string& version) {
        auto [it, fresh] = selected.emplace(path, version);
        if (!fresh && purl::compare_versions("golang", it->second, version) == purl::Ordering::Less)
            it->second = version;
    };
    for (const auto& r : mod.requirements) select(r.path, r.version);

    std::vector<std::pair<std::string, std::string>> raw_edges; // "path@version" pairs, "" for main
    std::istringstream in{std::string(graph_text)};
    std::string line;
    int lineno = 0;
    auto split_node = [&](const std::string& node) -> std::pair<std::string, std::string> {
        const auto at = node.rfind('@');
        if (at == std::string::npos) return {node, ""};
        return {node.substr(0, at), node.substr(at + 1)};
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto f = fields(line);
        if (f.empty()) continue;
        if (f.size() != 2) parse_fail("go mod graph", lineno, "expected two fields");
        const auto [bp, bv] = split_node(f[1]);
        if (bv.empty()) parse_fail("go mod graph", lineno, "dependency without version");
        if (bp == "go" || bp == "toolchain") continue;
        const auto [ap, av] = split_node(f[0]);
        if (ap == "go" || ap == "toolchain") continue;
        select(bp, bv);
        raw_edges.emplace_back(av.empty() ? std::string() : f[0], f[1]);
    }

    sbom::Sbom bom;
    std::map<std::string, std::string> ref_of; // path -> bom-ref
    for (const auto& [path, version] : selected) {
        const auto target = apply_replace(mod, path, version);
        if (!target) continue;
        Component c = make_component("golang", target->first, target->second);
        ref_of[path] = c.bom_ref;
        bom.components.push_back(std::move(c));
    }

    Component subject = make_component("golang", mod.module, "");
    const std::string subject_ref = subject.bom_ref;
    bom.metadata.subject = subject;

    std::map<std::string, std::set<std::string>> edges;
    edges[subject_ref];
    for (const auto& r : mod.requirements) {
        if (r.indirect) continue;
        if (const auto it = ref_of.find(r.path); it != ref_of.end()) edges[subject_ref].insert(it->second);
    }
    for (const auto& [from, to] : raw_edges) {
        if (from.empty()) continue;
        const auto [fp, fv] = split_node(from);
        const auto [tp, tv] = split_node(to);
        // Only the selected version of a module contributes edges.
        if (selected[fp] != fv) continue;
        const auto a = ref_of.find(fp);
        const auto b = ref_of.find(tp);
        if (a == ref_of.end() || b == ref_of.end() || a->second == b->second) continue;
        edges[a->second].insert(b->second);
    }
    for (const auto& c : bom.components) edges[c.bom_ref];
    for (const auto& [ref, deps] : edges) bom.dependencies.push_back({ref, {deps.begin(), deps.end()}});
    return bom;
}

// ---- Cargo ----------------------------------------------------------------

struct CargoPackage {
    std::string name;
    std::string version;
    std::string source;
    std::string checksum;
    std::vector<std::string> deps;
    int line = 0;
};

std::string str_or(const json& j, const char* key) {
    const auto it = j.find(key);
    return it != j.end() && it->is_string() ? it->get<std::string>() : std::string();
}

std::vector<CargoPackage> cargo_packages(std::string_view lock_text) {
    const json lock = toml::parse(lock_text);
    std::vector<int> header_lines;
    {
        std::istringstream in{std::string(lock_text)};
        std::string line;
        int n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (util::trim(line) == "[[package]]") header_lines.push_back(n);
        }
    }
    std::vector<CargoPackage> out;
    const auto pkgs = lock.find("package");
    if (pkgs == lock.end()) return out;
    if (!pkgs->is_array()) parse_fail("Cargo.lock", 1, "'package' is not an array of tables");
    for (std::size_t i = 0; i < pkgs->size(); ++i) {
        const json& p = (*pkgs)[i];
        CargoPackage pkg;
        pkg.line = i < header_lines.size() ? header_lines[i] : 0;
        pkg.name = str_or(p, "name");
        pkg.version = str_or(p, "version");
        pkg.source = str_or(p, "source");
        pkg.checksum = str_or(p, "checksum");
        if (pkg.name.empty() || pkg.version.empty()) parse_fail("Cargo.lock", pkg.line, "package without name or version");
        if (const auto d = p.find("dependencies"); d != p.end()) {
            if (!d->is_array()) parse_fail("Cargo.lock", pkg.line, "dependencies must be an array");
            for (const auto& dep : *d) {
                if (!dep.is_string()) parse_fail("Cargo.lock", pkg.line, "dependency entries must be strings");
                pkg.deps.push_back(dep.get<std::string>());
            }
        }
        out.push_back(std::move(pkg));
    }
    return out;
}

void collect_dep_tables(const json& table, std::set<std::string>& names) {
    for (const char* key : {"dependencies", "dev-dependencies", "build-dependencies"}) {
        const auto t = table.find(key);
        if (t == table.end() || !t->is_object()) continue;
        for (const auto& [alias, spec] : t->items()) {
            if (spec.is_object() && spec.contains("package") && spec["package"].is_string())
                names.insert(spec["package"].get<std::string>());
            else
                names.insert(alias);
        }
    }
}

sbom::Sbom generate_cargo(std::string_view lock_text, std::string_view manifest_text) {
    const auto packages = cargo_packages(lock_text);
    const json manifest = manifest_text.empty() ? json::object() : toml::parse(manifest_text);

    std::set<std::string> direct;
    collect_dep_tables(manifest, direct);
    if (const auto t = manifest.find("target"); t != manifest.end() && t->is_object())
        for (const auto& [cfg, table] : t->items()) collect_dep_tables(table, direct);
    if (const auto w = manifest.find("workspace"); w != manifest.end() && w->is_object())
        collect_dep_tables(*w, direct);

    auto resolve = [&](const CargoPackage& owner, const std::string& spec) -> std::size_t {
        const auto f = fields(spec);
        if (f.empty()) parse_fail("Cargo.lock", owner.line, "empty dependency entry");
        std::string source;
        if (f.size() >= 3) {
            source = f[2];
            if (source.size() >= 2 && source.front() == '(' && source.back() == ')')
                source = source.substr(1, source.size() - 2);
        }
        std::optional<std::size_t> found;
        std::size_t hits = 0;
        for (std::size_t i = 0; i < packages.size(); ++i) {
            const auto& p = packages[i];
            if (p.name != f[0]) continue;
            if (f.size() >= 2 && p.version != f[1]) continue;
            if (!source.empty() && p.source != source) continue;
            found = i;
            ++hits;
        }
        if (!found)
            parse_fail("Cargo.lock", owner.line,
                       "package '" + owner.name + "' depends on '" + spec + "', which is not in the package table");
        if (hits > 1) parse_fail("Cargo.lock", owner.line, "ambiguous dependency '" + spec + "' of '" + owner.name + "'");
        return *found;
    };

    sbom::Sbom bom;
    std::vector<std::string> ref(packages.size());
    std::optional<std::size_t> root;
    std::string manifest_name;
    if (const auto p = manifest.find("package"); p != manifest.end() && p->is_object()) manifest_name = str_or(*p, "name");
    for (std::size_t i = 0; i < packages.size(); ++i) {
        const auto& p = packages[i];
        Component c = make_component("cargo", p.name, p.version);
        if (!p.checksum.empty()) c.hashes["SHA-256"] = p.checksum;
        ref[i] = c.bom_ref;
        if (p.source.empty()) {
            if (!root || p.name == manifest_name) root = i;
            continue;
        }
        bom.components.push_back(std::move(c));
    }

    std::map<std::string, std::set<std::string>> edges;
    std::string subject_ref;
    if (root) {
        Component subject = make_component("cargo", packages[*root].name, packages[*root].version);
        subject_ref = subject.bom_ref;
        bom.metadata.subject = subject;
        edges[subject_ref];
    }
    for (std::size_t i = 0; i < packages.size(); ++i) {
        const auto& p = packages[i];
        const bool local = p.source.empty();
        for (const auto& spec : p.deps) {
            const std::size_t j = resolve(p, spec);
            if (packages[j].source.empty()) continue;
            if (local) {
                if (!subject_ref.empty()) edges[subject_ref].insert(ref[j]);
            } else {
                edges[ref[i]].insert(ref[j]);
            }
        }
    }
    // Manifest requirements are roots even when no local package lists them.
    if (!subject_ref.empty())
        for (std::size_t j = 0; j < packages.size(); ++j)
            if (!packages[j].source.empty() && direct.count(packages[j].name)) edges[subject_ref].insert(ref[j]);
    for (const auto& c : bom.components) edges[c.bom_ref];
    for (const auto& [r, deps] : edges) bom.dependencies.push_back({r, {deps.begin(), deps.end()}});
    return bom;
}

const std::set<std::string>& skipped_dirs() {
    static const std::set<std::string> dirs{".git", "vendor", "node_modules", "target", "testdata", "_vendor"};
    return dirs;
}

std::vector<std::string> snapshot_paths(const fs::path& root) {
    std::vector<std::string> out;
    std::error_code ec;
    for (auto it = fs::recursive_directory_iterator(root, ec); !ec && it != fs::recursive_directory_iterator();
         it.increment(ec)) {
        const auto rel = fs::relative(it->path(), root).generic_string();
        if (rel == ".git") {
            it.disable_recursion_pending();
            continue;
        }
        out.push_back(rel);
    }
    std::sort(out.begin(), out.end());
    return out;
}

util::ProcessOptions git_env(const fs::path& cwd) {
    util::ProcessOptions o;
    o.cwd = cwd;
    o.env = {{"LC_ALL", "C"}, {"GIT_TERMINAL_PROMPT", "0"}, {"GIT_CONFIG_NOSYSTEM", "1"}, {"GIT_CONFIG_GLOBAL", "/dev/null"}};
    return o;
}

} // namespace

sbom::Sbom generate_from_lockfile(std::string_view ecosystem, std::string_view lockfile, std::string_view manifest) {
    const std::string eco = normalize_ecosystem(ecosystem);
    if (eco == "go") return generate_go(lockfile, manifest);
    if (eco == "cargo") return generate_cargo(lockfile, manifest);
    throw Error(ErrorKind::Unsupported, "no internal generator for ecosystem '" + std::string(ecosystem) + "'");
}

std::string gopkg_to_gomod(std::string_view gopkg_lock, const std::string& module_path) {
    const json lock = toml::parse(gopkg_lock);
    std::ostringstream out;
    out << "module " << module_path << "\n\n";
    const auto projects = lock.find("projects");
    if (projects == lock.end() || !projects->is_array() || projects->empty()) return out.str();
    out << "require (\n";
    for (const auto& p : *projects) {
        const std::string name = str_or(p, "name");
        if (name.empty()) throw Error(ErrorKind::Parse, "Gopkg.lock: project without name");
        std::string version = str_or(p, "version");
        if (version.empty() || version[0] != 'v') {
            const std::string rev = str_or(p, "revision");
            if (rev.empty()) throw Error(ErrorKind::Parse, "Gopkg.lock: project '" + name + "' has no version or revision");
            version = "v0.0.0-00010101000000-" + rev.substr(0, 12);
        }
        out << "\t" << name << " " << version << "\n";
    }
    out << ")\n";
    return out.str();
}

Machine::Machine(std::string ecosystem, GenContext& ctx, const GenConfig& config)
    : ecosystem_(normalize_ecosystem(ecosystem)), ctx_(ctx), config_(config) {
    ctx_.ecosystem = ecosystem_;
}

Machine build_machine(std::string ecosystem, GenContext& ctx, const GenConfig& config) {
    return Machine(std::move(ecosystem), ctx, config);
}

std::optional<std::chrono::milliseconds> Machine::remaining() const {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline_ - std::chrono::steady_clock::now());
    return std::max(left, std::chrono::milliseconds(1));
}

std::vector<fs::path> Machine::discover_modules() const {
    std::vector<fs::path> out;
    const std::string marker = module_marker(ecosystem_);
    if (marker.empty() || !fs::is_directory(ctx_.worktree)) return out;
    std::error_code ec;
    for (auto it = fs::recursive_directory_iterator(ctx_.worktree, ec); !ec && it != fs::recursive_directory_iterator();
         it.increment(ec)) {
        const auto name = it->path().filename().string();
        if (it->is_directory() && !it->is_symlink()) {
            if (skipped_dirs().count(name)) it.disable_recursion_pending();
            continue;
        }
        if (name == marker && it->is_regular_file()) out.push_back(it->path().parent_path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

Outcome Machine::run() {
    deadline_ = std::chrono::steady_clock::now() + config_.timeout;
    ctx_.outcome = Outcome::Pending;
    ctx_.fail_reason.clear();
    while (state_ != State::Halted) {
        trace_.push_back(state_);
        const State from = state_;
        Transition t;
        try {
            t = transition(from, ecosystem_, execute(from));
        } catch (const std::exception&) {
            // A throwing state still ends in Cleanup; a throwing Cleanup halts.
            t = from == State::Cleanup ? Transition{State::Halted, std::string(kCleanup)}
                                       : Transition{State::Cleanup, std::string(kGeneratorError)};
        }
        if (t.fail_reason && ctx_.fail_reason.empty()) ctx_.fail_reason = *t.fail_reason;
        if (from == State::Cleanup) ctx_.outcome = ctx_.fail_reason.empty() ? Outcome::Done : Outcome::Fail;
        state_ = t.next;
    }
    if (ctx_.outcome == Outcome::Fail) {
        std::error_code ec;
        fs::remove(output_path(config_.shared_dir, ctx_.repo_id, ctx_.tag), ec);
        ctx_.bom.reset();
        ctx_.sbom_output.reset();
    }
    return ctx_.outcome;
}

Probes Machine::execute(State s) {
    switch (s) {
    case State::Init: return do_init();
    case State::GoModSynthesis: return do_go_synthesis();
    case State::CargoLockSynthesis: return do_cargo_synthesis();
    case State::BomGeneration: return do_generate();
    case State::Cleanup: do_cleanup(); return {};
    case State::Halted: return {};
    }
    return {};
}

Probes Machine::do_init() {
    Probes p;
    before_ = snapshot_paths(ctx_.worktree);
    const bool internal = ecosystem_ == "go" || ecosystem_ == "cargo";
    p.supported = internal || config_.adapters.count(ecosystem_) > 0;
    if (!p.supported) return p;
    if (ecosystem_ == "go" && config_.adapters.count("go") == 0)
        p.manifest_present = fs::exists(ctx_.worktree / "go.mod") || !discover_modules().empty();
    else
        p.manifest_present = !discover_modules().empty();
    return p;
}

Probes Machine::do_go_synthesis() {
    Probes p;
    const fs::path gomod = ctx_.worktree / "go.mod";
    if (const auto it = config_.synthesis.find("go"); it != config_.synthesis.end()) {
        util::ProcessOptions o;
        o.cwd = ctx_.worktree;
        o.timeout = remaining();
        const auto cmd = util::expand_template(
            it->second, {{"worktree", ctx_.worktree.string()}, {"module", util::shell_quote(ctx_.module_hint)}});
        const auto r = util::run_shell(cmd, o);
        const auto after = snapshot_paths(ctx_.worktree);
        for (const auto& rel : after)
            if (!std::binary_search(before_.begin(), before_.end(), rel)) ctx_.synthesized_files.push_back(ctx_.worktree / rel);
        p.timed_out = r.timed_out;
        p.synthesis_ok = r.ok() && fs::exists(gomod);
        return p;
    }
    const fs::path gopkg = ctx_.worktree / "Gopkg.lock";
    if (!fs::exists(gopkg)) return p;
    const std::string module = ctx_.module_hint.empty() ? "example.com/" + ctx_.repo_id : ctx_.module_hint;
    const std::string text = gopkg_to_gomod(util::read_file(gopkg), module);
    ctx_.synthesized_files.push_back(gomod);
    util::write_file_atomic(gomod, text);
    p.synthesis_ok = true;
    return p;
}

Probes Machine::do_cargo_synthesis() {
    Probes p;
    const auto it = config_.synthesis.find("cargo");
    if (it == config_.synthesis.end() || !fs::exists(ctx_.worktree / "Cargo.toml")) return p;
    util::ProcessOptions o;
    o.cwd = ctx_.worktree;
    o.timeout = remaining();
    const auto r = util::run_shell(util::expand_template(it->second, {{"worktree", ctx_.worktree.string()}}), o);
    const auto after = snapshot_paths(ctx_.worktree);
    for (const auto& rel : after)
        if (!std::binary_search(before_.begin(), before_.end(), rel)) ctx_.synthesized_files.push_back(ctx_.worktree / rel);
    p.timed_out = r.timed_out;
    p.synthesis_ok = r.ok() && fs::exists(ctx_.worktree / "Cargo.lock");
    return p;
}

Probes Machine::do_generate() {
    Probes p;
    auto modules = discover_modules();
    if (modules.empty() && ecosystem_ == "go" && fs::exists(ctx_.worktree / "go.mod")) modules.push_back(ctx_.worktree);
    if (modules.empty()) {
        p.generation_failure = std::string(kGeneratorError);
        return p;
    }
    const auto adapter = config_.adapters.find(ecosystem_);
    util::TempDir scratch("relscan-gen");
    std::vector<sbom::Sbom> parts;
    std::size_t modules_without_bom = 0;

    for (std::size_t m = 0; m < modules.size(); ++m) {
        const fs::path& dir = modules[m];
        if (adapter != config_.adapters.end()) {
            const fs::path out_dir = scratch.path() / std::to_string(m);
            fs::create_directories(out_dir);
            util::ProcessOptions o;
            o.cwd = dir;
            o.timeout = remaining();
            const auto cmd = util::expand_template(adapter->second, {{"module_dir", util::shell_quote(dir.string())},
                                                                     {"worktree", util::shell_quote(ctx_.worktree.string())},
                                                                     {"output_dir", util::shell_quote(out_dir.string())},
                                                                     {"tag", util::shell_quote(ctx_.tag)},
                                                                     {"repo_id", util::shell_quote(ctx_.repo_id)},
                                                                     {"ecosystem", ecosystem_}});
            const auto r = util::run_shell(cmd, o);
            if (r.timed_out) {
                p.timed_out = true;
                return p;
            }
            if (r.exit_code != 0) {
                p.generation_failure = std::string(kGeneratorError);
                return p;
            }
            std::size_t produced = 0;
            for (const auto& line : util::split(r.out, '\n')) {
                const std::string t = util::trim(line);
                if (t.empty()) continue;
                fs::path bom_path(t);
                if (bom_path.is_relative()) bom_path = dir / bom_path;
                if (!fs::is_regular_file(bom_path)) continue;
                try {
                    parts.push_back(sbom::parse(util::read_file(bom_path)));
                } catch (const Error&) {
                    p.generation_failure = std::string(kGeneratorError);
                    return p;
                }
                ++produced;
            }
            if (produced == 0) ++modules_without_bom;
        } else {
            std::string lock, manifest;
            if (ecosystem_ == "go") {
                manifest = util::read_file(dir / "go.mod");
                if (!config_.go_graph_command.empty()) {
                    util::ProcessOptions o;
                    o.cwd = dir;
                    o.timeout = remaining();
                    const auto r = util::run_shell(config_.go_graph_command, o);
                    if (r.timed_out) {
                        p.timed_out = true;
                        return p;
                    }
                    if (r.exit_code != 0) {
                        p.generation_failure = std::string(kGeneratorError);
                        return p;
                    }
                    lock = r.out;
                }
            } else {
                lock = util::read_file(dir / "Cargo.lock");
                if (fs::exists(dir / "Cargo.toml")) manifest = util::read_file(dir / "Cargo.toml");
            }
            try {
                parts.push_back(generate_from_lockfile(ecosystem_, lock, manifest));
            } catch (const Error&) {
                p.generation_failure = std::string(kGeneratorError);
                return p;
            }
        }
        if (std::chrono::steady_clock::now() >= deadline_) {
            p.timed_out = true;
            return p;
        }
    }
    if (modules_without_bom > 0) {
        p.generation_failure = std::string(parts.empty() ? kGeneratorError : kPartial);
        return p;
    }

    for (auto& part : parts)
        if (part.metadata.subject && !part.metadata.subject->purl) part.metadata.subject->version = ctx_.tag;
    sbom::Sbom merged = sbom::merge(parts);
    merged.metadata.timestamp = ctx_.release_date;
    merged.metadata.tools = {{"relscan-gen", config_.tool_version}};
    if (merged.metadata.subject && merged.metadata.subject->purl && merged.metadata.subject->version.empty()) {
        merged.metadata.subject->version = ctx_.tag;
        merged.metadata.subject->purl->version = ctx_.tag;
    }

    const fs::path out = output_path(config_.shared_dir, ctx_.repo_id, ctx_.tag);
    fs::create_directories(out.parent_path());
    const std::string text = sbom::write(merged);
    ctx_.bom = sbom::parse(text);
    util::write_file_atomic(out, text);
    ctx_.sbom_output = out;
    return p;
}

void Machine::do_cleanup() {
    std::error_code ec;
    for (const auto& f : ctx_.synthesized_files) fs::remove_all(f, ec);
    if (!ctx_.fail_reason.empty()) {
        fs::remove(output_path(config_.shared_dir, ctx_.repo_id, ctx_.tag), ec);
        ctx_.sbom_output.reset();
    }
    if (fs::exists(ctx_.worktree / ".git")) {
        util::run_process({"git", "reset", "--hard", "-q"}, git_env(ctx_.worktree));
        util::run_process({"git", "clean", "-fdxq"}, git_env(ctx_.worktree));
    }
    // Anything still new relative to the Init snapshot was produced by a generator.
    auto after = snapshot_paths(ctx_.worktree);
    std::sort(after.rbegin(), after.rend());
    for (const auto& rel : after)
        if (!std::binary_search(before_.begin(), before_.end(), rel)) fs::remove_all(ctx_.worktree / rel, ec);
}

Outcome run_release(store::Store& store, GenContext& ctx, const GenConfig& config,
                    const std::function<void(const sbom::Sbom&)>& on_done) {
    const auto rel = store.get_release(ctx.repo_id, ctx.tag);
    if (!rel) throw Error(ErrorKind::NotFound, "release " + ctx.repo_id + "@" + ctx.tag + " not found");
    if (rel->state == ReleaseState::Done) {
        ctx.outcome = Outcome::Done;
        const auto out = output_path(config.shared_dir, ctx.repo_id, ctx.tag);
        if (fs::exists(out)) ctx.sbom_output = out;
        return ctx.outcome;
    }
    if (rel->state == ReleaseState::Fail) {
        ctx.outcome = Outcome::Fail;
        ctx.fail_reason = rel->fail_reason;
        return ctx.outcome;
    }
    ctx.release_date = rel->release_date;
    Machine machine(ctx.ecosystem, ctx, config);
    machine.run();
    if (ctx.outcome == Outcome::Done) {
        try {
            store.transaction([&] {
                if (on_done && ctx.bom) on_done(*ctx.bom);
                store.transition_release(ctx.repo_id, ctx.tag, ReleaseState::New, ReleaseState::Done);
            });
        } catch (...) {
            std::error_code ec;
            if (ctx.sbom_output) fs::remove(*ctx.sbom_output, ec);
            ctx.sbom_output.reset();
            throw;
        }
    } else {
        store.transition_release(ctx.repo_id, ctx.tag, ReleaseState::New, ReleaseState::Fail, ctx.fail_reason);
    }
    return ctx.outcome;
}

} // namespace relscan::gen
