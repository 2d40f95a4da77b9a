#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

#include "relscan/genmachine.hpp"
#include "relscan/mining.hpp"
#include "relscan/toml.hpp"
#include "relscan/util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

using namespace relscan;
using namespace relscan::gen;
using relscan::testing::GitRepoBuilder;
namespace fs = std::filesystem;

namespace {

const char* kGoMod = R"(module github.com/acme/widget

go 1.17

require (
	github.com/prometheus/client_golang v1.11.0
	golang.org/x/text v0.3.6 // indirect
)
)";

const char* kGopkgLock = R"(# generated by dep
[[projects]]
  digest = "1:abc"
  name = "github.com/pkg/errors"
  packages = ["."]
  revision = "645ef00459ed84a119197bfb8d8205042c6df63d"
  version = "v0.8.0"

[[projects]]
  name = "golang.org/x/sys"
  packages = ["unix"]
  revision = "0f9c8ee4c6a1b2c3d4e5f60718293a4b5c6d7e8f"

[solve-meta]
  input-imports = ["github.com/pkg/errors"]
)";

std::string fixture(const std::string& rel) { return util::read_file(relscan::testing::fixture_dir() / rel); }

// Line-oriented count of registry packages and their dependency entries,
// without any TOML parsing.
std::pair<int, int> count_lockfile_by_lines(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int packages = 0, edges = 0, pending_edges = 0;
    bool in_pkg = false, registry = false, in_deps = false;
    auto flush = [&] {
        if (in_pkg && registry) {
            ++packages;
            edges += pending_edges;
        }
        pending_edges = 0;
        registry = false;
        in_deps = false;
    };
    while (std::getline(in, line)) {
        if (line == "[[package]]") {
            flush();
            in_pkg = true;
        } else if (line.rfind("source = ", 0) == 0) {
            registry = true;
        } else if (line.rfind("dependencies = [", 0) == 0) {
            in_deps = true;
        } else if (in_deps && line == "]") {
            in_deps = false;
        } else if (in_deps && line.rfind(" \"", 0) == 0) {
            ++pending_edges;
        }
    }
    flush();
    return {packages, edges};
}

struct Env {
    util::TempDir tmp;
    GitRepoBuilder repo{tmp.path() / "wt"};
    fs::path shared = tmp.path() / "shared";
    GenConfig config;
    GenContext ctx;

    Env(const std::string& ecosystem) {
        config.shared_dir = shared;
        ctx.worktree = repo.path();
        ctx.repo_id = "local-abc";
        ctx.tag = "v1.0.0";
        ctx.ecosystem = ecosystem;
        ctx.release_date = *parse_iso8601("2021-06-01T00:00:00Z");
        ctx.module_hint = "github.com/acme/widget";
    }

    std::string checkout(const std::string& message = "init") {
        repo.commit(message, "dev@example.org", "2021-06-01T00:00:00Z");
        return mining::tree_content_hash(repo.path());
    }

    fs::path output() const { return output_path(shared, ctx.repo_id, ctx.tag); }
};

std::string write_bom_script(const fs::path& dir, int parts) {
    std::ostringstream s;
    for (int i = 0; i < parts; ++i) {
        const std::string name = "part" + std::to_string(i) + ".json";
        s << "cat > {output_dir}/" << name << " <<'X'\n"
          << R"({"bomFormat":"CycloneDX","specVersion":"1.5","metadata":{"component":{"type":"application","bom-ref":"app","name":"app","version":"1"}},)"
          << R"("components":[{"type":"library","bom-ref":"c)" << i << R"(","name":"lib)" << i
          << R"(","version":"1.0.0","purl":"pkg:npm/lib)" << i << R"(@1.0.0"},)"
          << R"({"type":"library","bom-ref":"shared","name":"common","version":"2.0.0","purl":"pkg:npm/common@2.0.0"}],)"
          << R"("dependencies":[{"ref":"app","dependsOn":["c)" << i << R"("]},{"ref":"c)" << i
          << R"(","dependsOn":["shared"]}]})" << "\nX\n"
          << "echo {output_dir}/" << name << "\n";
    }
    const fs::path script = dir / "emit.sh";
    util::write_file_atomic(script, s.str());
    return util::read_file(script);
}

} // namespace

TEST(Transitions, GoWithManifestGoesStraightToGeneration) {
    Probes p;
    p.supported = true;
    p.manifest_present = true;
    EXPECT_EQ(transition(State::Init, "go", p).next, State::BomGeneration);
    EXPECT_FALSE(transition(State::Init, "go", p).fail_reason);
}

TEST(Transitions, MissingGoModNeedsSynthesisAndFailureEndsInCleanup) {
    Probes p;
    p.supported = true;
    EXPECT_EQ(transition(State::Init, "golang", p).next, State::GoModSynthesis);
    const auto t = transition(State::GoModSynthesis, "go", Probes{});
    EXPECT_EQ(t.next, State::Cleanup);
    EXPECT_EQ(t.fail_reason.value_or(""), kSynthesis);
}

TEST(Transitions, UnsupportedAndCleanupHalts) {
    const auto t = transition(State::Init, "cobol", Probes{});
    EXPECT_EQ(t.next, State::Cleanup);
    EXPECT_EQ(t.fail_reason.value_or(""), kUnsupported);
    EXPECT_EQ(transition(State::Cleanup, "go", Probes{}).next, State::Halted);
    Probes timed;
    timed.timed_out = true;
    EXPECT_EQ(transition(State::BomGeneration, "cargo", timed).fail_reason.value_or(""), kTimeout);
}

TEST(Transitions, EveryPathReachesCleanupThenHalts) {
    // Exhaustive over the boolean probe space: the table never skips Cleanup.
    const std::vector<std::string> ecos{"go", "cargo", "npm", "cobol"};
    for (const auto& eco : ecos)
        for (int bits = 0; bits < 32; ++bits) {
            Probes p;
            p.supported = bits & 1;
            p.manifest_present = bits & 2;
            p.synthesis_ok = bits & 4;
            p.timed_out = bits & 8;
            if (bits & 16) p.generation_failure = std::string(kGeneratorError);
            State s = State::Init;
            std::vector<State> seen;
            for (int step = 0; step < 10 && s != State::Halted; ++step) {
                seen.push_back(s);
                s = transition(s, eco, p).next;
            }
            ASSERT_EQ(s, State::Halted) << eco << " " << bits;
            EXPECT_EQ(seen.back(), State::Cleanup);
        }
}

TEST(Toml, SubsetFeatures) {
    const auto j = toml::parse(R"(
title = "a \"quoted\" \u00e9"  # comment
lit = 'C:\path'
multi = """
line1
line2"""
n = 1_000
f = 2.5
yes = true
arr = [
  "x", # inside
  "y",
]
inline = { a = 1, b.c = "d" }
[target.'cfg(unix)'.dependencies]
libc = "0.2"
[[bin]]
name = "one"
[[bin]]
name = "two"
)");
    EXPECT_EQ(j["title"], "a \"quoted\" \u00e9");
    EXPECT_EQ(j["lit"], "C:\\path");
    EXPECT_EQ(j["multi"], "line1\nline2");
    EXPECT_EQ(j["n"], 1000);
    EXPECT_DOUBLE_EQ(j["f"].get<double>(), 2.5);
    EXPECT_EQ(j["yes"], true);
    EXPECT_EQ(j["arr"].size(), 2u);
    EXPECT_EQ(j["inline"]["b"]["c"], "d");
    EXPECT_EQ(j["target"]["cfg(unix)"]["dependencies"]["libc"], "0.2");
    EXPECT_EQ(j["bin"][1]["name"], "two");
}

TEST(Toml, ErrorsCarryLineNumbers) {
    try {
        toml::parse("a = 1\nb = 2\nc = [1, 2\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Parse);
    }
    try {
        toml::parse("a = 1\n\nb = = 2\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
    EXPECT_THROW(toml::parse("a = 1\na = 2\n"), Error);
}

TEST(GoGenerator, SingleRequirementIsOneRootComponent) {
    const auto bom = generate_from_lockfile("go", "", "module example.com/app\n\nrequire github.com/pkg/errors v0.9.1\n");
    ASSERT_EQ(bom.components.size(), 1u);
    EXPECT_EQ(bom.components[0].bom_ref, "pkg:golang/github.com/pkg/errors@v0.9.1");
    const auto depths = sbom::compute_depths(sbom::build_graph(bom));
    EXPECT_EQ(depths.depth.at("pkg:golang/github.com/pkg/errors@v0.9.1"), 0);
    EXPECT_TRUE(depths.unreachable.empty());
}

TEST(GoGenerator, IndirectWithoutGraphIsUnreachable) {
    const auto bom = generate_from_lockfile("go", "", kGoMod);
    ASSERT_EQ(bom.components.size(), 2u);
    const auto depths = sbom::compute_depths(sbom::build_graph(bom));
    EXPECT_EQ(depths.depth.at("pkg:golang/github.com/prometheus/client_golang@v1.11.0"), 0);
    EXPECT_EQ(depths.unreachable.count("pkg:golang/golang.org/x/text@v0.3.6"), 1u);
}

TEST(GoGenerator, GraphSelectsMaximumVersionAndGivesDepths) {
    const std::string graph = "github.com/acme/widget github.com/prometheus/client_golang@v1.11.0\n"
                              "github.com/acme/widget golang.org/x/text@v0.3.6\n"
                              "github.com/prometheus/client_golang@v1.11.0 github.com/golang/protobuf@v1.4.3\n"
                              "github.com/golang/protobuf@v1.4.3 golang.org/x/text@v0.3.2\n"
                              "github.com/prometheus/client_golang@v1.10.0 github.com/old/dep@v0.1.0\n"
                              "go@1.17 toolchain@go1.21\n";
    const auto bom = generate_from_lockfile("go", graph, kGoMod);
    std::set<std::string> refs;
    for (const auto& c : bom.components) refs.insert(c.bom_ref);
    EXPECT_TRUE(refs.count("pkg:golang/golang.org/x/text@v0.3.6"));
    EXPECT_FALSE(refs.count("pkg:golang/golang.org/x/text@v0.3.2"));
    EXPECT_TRUE(refs.count("pkg:golang/github.com/golang/protobuf@v1.4.3"));
    // client_golang v1.10.0 lost selection, so its edge is not part of the build.
    const auto depths = sbom::compute_depths(sbom::build_graph(bom));
    EXPECT_EQ(depths.depth.at("pkg:golang/github.com/golang/protobuf@v1.4.3"), 1);
    EXPECT_EQ(depths.depth.at("pkg:golang/golang.org/x/text@v0.3.6"), 2);
    EXPECT_TRUE(depths.unreachable.count("pkg:golang/github.com/old/dep@v0.1.0"));
}

TEST(GoGenerator, ReplaceDirectives) {
    const auto bom = generate_from_lockfile("go", "",
                                            "module m\nrequire (\n a.io/x v1.0.0\n b.io/y v1.0.0\n)\n"
                                            "replace a.io/x => c.io/x v1.2.0\nreplace b.io/y => ../local/y\n");
    ASSERT_EQ(bom.components.size(), 1u);
    EXPECT_EQ(bom.components[0].bom_ref, "pkg:golang/c.io/x@v1.2.0");
}

TEST(GoGenerator, MalformedGoModNamesLine) {
    try {
        generate_from_lockfile("go", "", "module m\n\nrequire (\n  a.io/x\n)\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Parse);
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    }
}

TEST(CargoGenerator, FixtureMatchesLineCount) {
    const std::string lock = fixture("cargo/Cargo.lock");
    const auto [packages, edges] = count_lockfile_by_lines(lock);
    ASSERT_EQ(packages, 10);
    ASSERT_EQ(edges, 14);
    const auto bom = generate_from_lockfile("cargo", lock, fixture("cargo/Cargo.toml"));
    EXPECT_EQ(static_cast<int>(bom.components.size()), packages);
    EXPECT_EQ(static_cast<int>(bom.edge_count()), edges);
    ASSERT_TRUE(bom.metadata.subject);
    EXPECT_EQ(bom.metadata.subject->display_name, "demo");

    const auto depths = sbom::compute_depths(sbom::build_graph(bom));
    EXPECT_EQ(depths.depth.at("pkg:cargo/serde@1.0.188"), 0);
    EXPECT_EQ(depths.depth.at("pkg:cargo/regex@1.9.5"), 0);
    EXPECT_EQ(depths.depth.at("pkg:cargo/memchr@2.6.3"), 1);
    EXPECT_EQ(depths.depth.at("pkg:cargo/syn@2.0.37"), 2);
    EXPECT_EQ(depths.depth.at("pkg:cargo/unicode-ident@1.0.12"), 3);
    for (const auto& c : bom.components) EXPECT_EQ(c.hashes.count("SHA-256"), 1u) << c.bom_ref;
}

TEST(CargoGenerator, DanglingDependencyIsParseErrorWithLine) {
    const std::string lock = "version = 3\n\n[[package]]\nname = \"a\"\nversion = \"1.0.0\"\n"
                             "source = \"registry+x\"\n\n[[package]]\nname = \"b\"\nversion = \"1.0.0\"\n"
                             "source = \"registry+x\"\ndependencies = [\"ghost\"]\n";
    try {
        generate_from_lockfile("cargo", lock, "");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Parse);
        EXPECT_NE(std::string(e.what()).find("line 8"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
    }
}

TEST(CargoGenerator, RandomLockfilesAgreeWithBruteForceDepths) {
    std::mt19937_64 rng(4242);
    for (int round = 0; round < 25; ++round) {
        const int n = 2 + static_cast<int>(rng() % 30);
        std::set<std::pair<int, int>> edges;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j && rng() % 6 == 0) edges.insert({i, j});
        std::set<int> roots;
        for (int i = 0; i < n; ++i)
            if (rng() % 4 == 0) roots.insert(i);

        std::ostringstream lock;
        lock << "version = 3\n\n[[package]]\nname = \"app\"\nversion = \"0.1.0\"\ndependencies = [\n";
        for (int r : roots) lock << " \"crate" << r << "\",\n";
        lock << "]\n";
        for (int i = 0; i < n; ++i) {
            lock << "\n[[package]]\nname = \"crate" << i << "\"\nversion = \"1." << i << ".0\"\n"
                 << "source = \"registry+https://github.com/rust-lang/crates.io-index\"\n";
            std::vector<int> deps;
            for (const auto& [a, b] : edges)
                if (a == i) deps.push_back(b);
            if (deps.empty()) continue;
            lock << "dependencies = [\n";
            for (int d : deps) {
                if (rng() % 2) lock << " \"crate" << d << " 1." << d << ".0\",\n";
                else lock << " \"crate" << d << "\",\n";
            }
            lock << "]\n";
        }
        const auto bom = generate_from_lockfile("cargo", lock.str(), "[package]\nname = \"app\"\nversion = \"0.1.0\"\n");
        ASSERT_EQ(bom.components.size(), static_cast<std::size_t>(n));
        ASSERT_EQ(bom.edge_count(), edges.size());
        const auto got = sbom::compute_depths(sbom::build_graph(bom));
        const auto want = relscan::testing::brute_force_depths(n, {edges.begin(), edges.end()}, roots);
        for (int i = 0; i < n; ++i) {
            const std::string ref = "pkg:cargo/crate" + std::to_string(i) + "@1." + std::to_string(i) + ".0";
            if (const auto it = want.find(i); it != want.end()) EXPECT_EQ(got.depth.at(ref), it->second) << ref;
            else EXPECT_TRUE(got.unreachable.count(ref)) << ref;
        }
    }
}

TEST(Gopkg, ConvertsProjectsToRequirements) {
    const std::string gomod = gopkg_to_gomod(kGopkgLock, "github.com/acme/widget");
    const auto bom = generate_from_lockfile("go", "", gomod);
    std::set<std::string> refs;
    for (const auto& c : bom.components) refs.insert(c.bom_ref);
    EXPECT_TRUE(refs.count("pkg:golang/github.com/pkg/errors@v0.8.0"));
    EXPECT_TRUE(refs.count("pkg:golang/golang.org/x/sys@v0.0.0-00010101000000-0f9c8ee4c6a1"));
}

TEST(Machine, GoWithGoModIsDoneAndPristine) {
    Env env("go");
    env.repo.write("go.mod", kGoMod);
    env.repo.write("main.go", "package main\n");
    const std::string hash = env.checkout();
    Machine m = build_machine("go", env.ctx, env.config);
    EXPECT_EQ(m.state(), State::Init);
    EXPECT_EQ(m.run(), Outcome::Done);
    EXPECT_EQ(m.trace(), (std::vector<State>{State::Init, State::BomGeneration, State::Cleanup}));
    ASSERT_TRUE(env.ctx.sbom_output);
    EXPECT_EQ(*env.ctx.sbom_output, env.shared / "local-abc" / "v1.0.0.cdx.json");
    const auto bom = sbom::parse(util::read_file(*env.ctx.sbom_output));
    EXPECT_EQ(bom.components.size(), 2u);
    ASSERT_TRUE(bom.metadata.timestamp);
    EXPECT_EQ(*bom.metadata.timestamp, env.ctx.release_date);
    ASSERT_TRUE(bom.metadata.subject);
    EXPECT_EQ(bom.metadata.subject->version, "v1.0.0");
    EXPECT_EQ(mining::tree_content_hash(env.repo.path()), hash);
}

TEST(Machine, SynthesizedGoModIsRemoved) {
    Env env("go");
    env.repo.write("Gopkg.lock", kGopkgLock);
    env.repo.write("main.go", "package main\n");
    const std::string hash = env.checkout();
    Machine m(env.ctx.ecosystem, env.ctx, env.config);
    EXPECT_EQ(m.run(), Outcome::Done);
    EXPECT_EQ(m.trace(), (std::vector<State>{State::Init, State::GoModSynthesis, State::BomGeneration, State::Cleanup}));
    ASSERT_EQ(env.ctx.synthesized_files.size(), 1u);
    EXPECT_FALSE(fs::exists(env.repo.path() / "go.mod"));
    EXPECT_EQ(mining::tree_content_hash(env.repo.path()), hash);
    const auto bom = sbom::parse(util::read_file(env.output()));
    EXPECT_EQ(bom.components.size(), 2u);
}

TEST(Machine, SynthesisViaCommandTemplate) {
    Env env("go");
    env.repo.write("main.go", "package main\n");
    const std::string hash = env.checkout();
    env.config.synthesis["go"] = "printf 'module %s\\n\\nrequire a.io/x v1.0.0\\n' {module} > go.mod && touch go.sum";
    Machine m(env.ctx.ecosystem, env.ctx, env.config);
    EXPECT_EQ(m.run(), Outcome::Done);
    EXPECT_EQ(env.ctx.synthesized_files.size(), 2u);
    EXPECT_EQ(mining::tree_content_hash(env.repo.path()), hash);
}

TEST(Machine, NoGoModAndNoSynthesisSourceFails) {
    Env env("go");
    env.repo.write("main.go", "package main\n");
    const std::string hash = env.checkout();
    Machine m(env.ctx.ecosystem, env.ctx, env.config);
    EXPECT_EQ(m.run(), Outcome::Fail);
    EXPECT_EQ(env.ctx.fail_reason, kSynthesis);
    EXPECT_EQ(m.trace().back(), State::Cleanup);
    EXPECT_FALSE(fs::exists(env.output()));
    EXPECT_EQ(mining::tree_content_hash(env.repo.path()), hash);
}

TEST(Machine, CargoLockfileHappyPath) {
    Env env("cargo");
    env.repo.write("Cargo.lock", fixture("cargo/Cargo.lock"));
    env.repo.write("Cargo.toml", fixture("cargo/Cargo.toml"));
    env.repo.write("src/main.rs", "fn main() {}\n");
    const std::string hash = env.checkout();
    Machine m(env.ctx.ecosystem, env.ctx, env.config);
    EXPECT_EQ(m.run(), Outcome::Done);
    EXPECT_EQ(m.trace(), (std::vector<State>{State::Init, State::BomGeneration, State::Cleanup}));
    EXPECT_EQ(sbom::parse(util::read_file(env.output())).components.size(), 10u);
    EXPECT_EQ(mining::tree_content_hash(env.repo.path()), hash);
}

TEST(Machine, SabotagedGeneratorLeavesNoOutputAndPristineTree) {
    Env env("npm");
    env.repo.write("package.json", "{}\n");
    env.repo.write("index.js", "module.exports = 1;\n");
    const std::string hash = env.checkout();
    // Dirties tracked and untracked files, writes a BOM, then fails.
    env.config.adapters["npm"] = "echo junk >> index.js; mkdir -p build/out; echo x > build/out/a; "
                                 "echo '{}' > {output_dir}/bom.json; echo {output_dir}/bom.json; exit 3";
    Machine m(env.ctx.ecosystem, env.ctx, env.config);
    EXPECT_EQ(m.run(), Outcome::Fail);
    EXPECT_EQ(env.ctx.fail_reason, kGeneratorError);
    EXPECT_FALSE(fs::exists(env.output()));
    EXPECT_FALSE(env.ctx.sbom_output);
    EXPECT_EQ(mining::tree_content_hash(env.repo.path()), hash);
}

TEST(Machine, CorruptLockfileIsGeneratorError) {
    Env env("cargo");
    env.repo.write("Cargo.lock", "[[package]]\nname = \"a\"\nversion = \n");
    const std::string hash = env.checkout();
    Machine m(env.ctx.ecosystem, env.ctx, env.config);
    EXPECT_EQ(m.run(), Outcome::Fail);
    EXPECT_EQ(env.ctx.fail_reason, kGeneratorError);
    EXPECT_FALSE(fs::exists(env.output()));
    EXPECT_EQ(mining::tree_content_hash(env.repo.path()), hash);
}

TEST(Machine, ThreePartialBomsMergeIntoOneFile) {
    Env env("npm");
    env.repo.write("package.json", "{}\n");
    const std::string hash = env.checkout();
    env.config.adapters["npm"] = write_bom_script(env.tmp.path(), 3);
    Machine m(env.ctx.ecosystem, env.ctx, env.config);
    ASSERT_EQ(m.run(), Outcome::Done) << env.ctx.fail_reason;
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(env.shared))
        if (e.is_regular_file()) ++files;
    EXPECT_EQ(files, 1u);
    const auto bom = sbom::parse(util::read_file(env.output()));
    EXPECT_EQ(bom.components.size(), 4u); // lib0..lib2 plus the shared component once
    EXPECT_EQ(mining::tree_content_hash(env.repo.path()), hash);
}

TEST(Machine, ModuleWithoutBomIsPartial) {
    Env env("npm");
    env.repo.write("a/package.json", "{}\n");
    env.repo.write("b/package.json", "{}\n");
    const std::string hash = env.checkout();
    const std::string emit_one = write_bom_script(env.tmp.path(), 1);
    env.config.adapters["npm"] = "case {module_dir} in */a) " + emit_one + " ;; *) true ;; esac";
    Machine m(env.ctx.ecosystem, env.ctx, env.config);
    EXPECT_EQ(m.run(), Outcome::Fail);
    EXPECT_EQ(env.ctx.fail_reason, kPartial);
    EXPECT_FALSE(fs::exists(env.output()));
    EXPECT_EQ(mining::tree_content_hash(env.repo.path()), hash);
}

TEST(Machine, TimeoutStopsTheGenerator) {
    Env env("npm");
    env.repo.write("package.json", "{}\n");
    const std::string hash = env.checkout();
    env.config.adapters["npm"] = "touch stray.txt; sleep 20";
    env.config.timeout = std::chrono::seconds(1);
    const auto start = std::chrono::steady_clock::now();
    Machine m(env.ctx.ecosystem, env.ctx, env.config);
    EXPECT_EQ(m.run(), Outcome::Fail);
    EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(10));
    EXPECT_EQ(env.ctx.fail_reason, kTimeout);
    EXPECT_FALSE(fs::exists(env.output()));
    EXPECT_EQ(mining::tree_content_hash(env.repo.path()), hash);
}

TEST(Machine, UnsupportedEcosystem) {
    Env env("cobol");
    env.repo.write("main.cob", "IDENTIFICATION DIVISION.\n");
    env.checkout();
    Machine m(env.ctx.ecosystem, env.ctx, env.config);
    EXPECT_EQ(m.run(), Outcome::Fail);
    EXPECT_EQ(env.ctx.fail_reason, kUnsupported);
    EXPECT_EQ(m.trace(), (std::vector<State>{State::Init, State::Cleanup}));
}

TEST(RunRelease, DoneIsRecordedAndRerunIsNoOp) {
    Env env("npm");
    env.repo.write("package.json", "{}\n");
    env.checkout();
    const fs::path counter = env.tmp.path() / "calls";
    env.config.adapters["npm"] = "echo x >> " + counter.string() + "\n" + write_bom_script(env.tmp.path(), 1);

    auto store = store::Store::open(":memory:");
    store.upsert_repository({"local-abc", "widget", "file:///x", Language::JavaScript, 0, 0, env.ctx.release_date});
    Release rel;
    rel.repo_id = "local-abc";
    rel.tag = "v1.0.0";
    rel.release_date = env.ctx.release_date;
    store.insert_release(rel);

    std::size_t seen_components = 0;
    auto on_done = [&](const sbom::Sbom& b) { seen_components = b.components.size(); };
    EXPECT_EQ(run_release(store, env.ctx, env.config, on_done), Outcome::Done);
    EXPECT_EQ(seen_components, 2u);
    EXPECT_EQ(store.get_release("local-abc", "v1.0.0")->state, ReleaseState::Done);
    const auto first_write = fs::last_write_time(env.output());

    GenContext again = env.ctx;
    again.outcome = Outcome::Pending;
    EXPECT_EQ(run_release(store, again, env.config), Outcome::Done);
    EXPECT_EQ(fs::last_write_time(env.output()), first_write);
    EXPECT_EQ(util::read_file(counter), "x\n");
}

TEST(RunRelease, FailureReasonIsPersisted) {
    Env env("go");
    env.repo.write("main.go", "package main\n");
    env.checkout();
    auto store = store::Store::open(":memory:");
    store.upsert_repository({"local-abc", "widget", "file:///x", Language::Go, 0, 0, env.ctx.release_date});
    Release rel;
    rel.repo_id = "local-abc";
    rel.tag = "v1.0.0";
    rel.release_date = env.ctx.release_date;
    store.insert_release(rel);
    EXPECT_EQ(run_release(store, env.ctx, env.config), Outcome::Fail);
    const auto stored = store.get_release("local-abc", "v1.0.0");
    EXPECT_EQ(stored->state, ReleaseState::Fail);
    EXPECT_EQ(stored->fail_reason, "SYNTHESIS");
}
