#pragma once

// Per-release SBOM generation: Init, optional manifest synthesis, BOM
// generation and Cleanup. Go and Cargo have internal lockfile generators;
// any ecosystem can be routed to an external command instead.

#include "relscan/model.hpp"
#include "relscan/sbom.hpp"
#include "relscan/store.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace relscan::gen {

enum class State { Init, GoModSynthesis, CargoLockSynthesis, BomGeneration, Cleanup, Halted };
enum class Outcome { Pending, Done, Fail };

std::string_view to_string(State s);
std::string_view to_string(Outcome o);

inline constexpr std::string_view kUnsupported = "UNSUPPORTED";
inline constexpr std::string_view kSynthesis = "SYNTHESIS";
inline constexpr std::string_view kGeneratorError = "GENERATOR_ERROR";
inline constexpr std::string_view kTimeout = "TIMEOUT";
inline constexpr std::string_view kPartial = "PARTIAL";
inline constexpr std::string_view kCleanup = "CLEANUP";

/// "go", "cargo", "npm", "maven", "pypi", "gem", "composer"; accepts a few
/// aliases ("golang", "rust", "rubygems", ...).
std::string normalize_ecosystem(std::string_view ecosystem);
/// Empty for languages without a package manager we know of.
std::string ecosystem_for_language(Language language);
/// File that marks a module root for the ecosystem (go.mod, Cargo.lock, pom.xml...).
std::string module_marker(std::string_view ecosystem);

/// What the machine observed while executing a state.
struct Probes {
    bool supported = false;
    bool manifest_present = false;
    bool synthesis_ok = false;
    bool timed_out = false;
    std::optional<std::string> generation_failure;
};

struct Transition {
    State next = State::Halted;
    std::optional<std::string> fail_reason;
};

/// Pure transition table.
Transition transition(State state, std::string_view ecosystem, const Probes& probes);

struct GenConfig {
    std::filesystem::path shared_dir;
    std::chrono::seconds timeout{300};
    /// ecosystem -> shell template run once per module. Placeholders:
    /// {module_dir} {worktree} {output_dir} {tag} {repo_id} {ecosystem}.
    /// Must print BOM file paths, one per line.
    std::map<std::string, std::string> adapters;
    /// ecosystem -> shell template that creates the missing manifest in
    /// {worktree}. {module} is the module path hint.
    std::map<std::string, std::string> synthesis;
    /// Optional command printing `go mod graph` output, run in each go module.
    std::string go_graph_command;
    std::string tool_version = "1.0";
};

struct GenContext {
    std::filesystem::path worktree;
    std::string repo_id;
    std::string tag;
    std::string ecosystem;
    Timestamp release_date{};
    /// Go module path used when a go.mod has to be synthesized.
    std::string module_hint;

    std::vector<std::filesystem::path> synthesized_files;
    Outcome outcome = Outcome::Pending;
    std::string fail_reason;
    std::optional<std::filesystem::path> sbom_output;
    std::optional<sbom::Sbom> bom;
};

/// <shared>/<repo_id>/<tag>.cdx.json with '/' in the tag replaced by '_'.
std::filesystem::path output_path(const std::filesystem::path& shared_dir, const std::string& repo_id,
                                  const std::string& tag);

class Machine {
public:
    Machine(std::string ecosystem, GenContext& ctx, const GenConfig& config);

    State state() const { return state_; }
    const std::vector<State>& trace() const { return trace_; }

    /// Drives the machine to Halted. Never throws for generation problems;
    /// they end in Cleanup with ctx.outcome == Fail.
    Outcome run();

private:
    Probes execute(State s);
    Probes do_init();
    Probes do_go_synthesis();
    Probes do_cargo_synthesis();
    Probes do_generate();
    void do_cleanup();

    std::optional<std::chrono::milliseconds> remaining() const;
    std::vector<std::filesystem::path> discover_modules() const;

    std::string ecosystem_;
    GenContext& ctx_;
    const GenConfig& config_;
    State state_ = State::Init;
    std::vector<State> trace_;
    std::vector<std::string> before_;
    std::chrono::steady_clock::time_point deadline_;
};

Machine build_machine(std::string ecosystem, GenContext& ctx, const GenConfig& config);

/// Runs the machine for a NEW release and records DONE or FAIL(reason).
/// `on_done` runs in the same transaction as the DONE transition. A DONE or
/// FAIL release is left untouched.
Outcome run_release(store::Store& store, GenContext& ctx, const GenConfig& config,
                    const std::function<void(const sbom::Sbom&)>& on_done = {});

/// go: lockfile is `go mod graph` output (may be empty), manifest is go.mod.
/// cargo: Cargo.lock and Cargo.toml. Throws Error(Parse) with a line number,
/// Error(Unsupported) for other ecosystems.
sbom::Sbom generate_from_lockfile(std::string_view ecosystem, std::string_view lockfile, std::string_view manifest);

/// go.mod text from a dep Gopkg.lock.
std::string gopkg_to_gomod(std::string_view gopkg_lock, const std::string& module_path);

} // namespace relscan::gen
