#pragma once

// CycloneDX JSON (1.4/1.5) reading and writing, multi-part merging and
// dependency-depth computation.

#include "relscan/model.hpp"

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace relscan::sbom {

struct ToolId {
    std::string name;
    std::string version;

    auto operator<=>(const ToolId&) const = default;
};

struct Metadata {
    std::vector<ToolId> tools;
    std::optional<Timestamp> timestamp;
    std::optional<Component> subject;
};

struct DependencyEntry {
    std::string ref;
    std::vector<std::string> depends_on;

    bool operator==(const DependencyEntry&) const = default;
};

struct Sbom {
    std::string spec_version = "1.5";
    Metadata metadata;
    std::vector<Component> components;
    std::vector<DependencyEntry> dependencies;
    /// bom-refs of components that carried no purl (kept, excluded from matching).
    std::vector<std::string> purlless_refs;
    /// Product keys with more than one version after a merge.
    std::vector<std::string> version_conflicts;

    std::string subject_ref() const;
    std::size_t edge_count() const;
};

/// Throws Error(Parse) with a JSON path, or Error(Unsupported) for a specVersion
/// version outside 1.4..1.5.
Sbom parse(std::string_view document);

/// Canonical CycloneDX 1.5 JSON: components sorted by key, refs rewritten to
/// component keys, dependency lists sorted.
std::string write(const Sbom& bom);

/// Union of components (by component_key) and edges across parts. Output is
/// independent of part order. Throws Error(Validation) on an empty input.
Sbom merge(std::span<const Sbom> parts);

struct DependencyGraph {
    std::set<std::string> nodes;
    std::map<std::string, std::set<std::string>> edges;
    std::set<std::string> roots;

    std::size_t edge_count() const;
};

/// Roots are the subject's direct dependencies; without a subject entry,
/// components with no incoming edge.
DependencyGraph build_graph(const Sbom& bom);

inline constexpr int kDepthBuckets = 6;

struct DepthAssignment {
    std::map<std::string, int> depth;
    std::set<std::string> unreachable;
};

/// Shortest root-to-node path length; roots are depth 0. Cycles allowed.
DepthAssignment compute_depths(const DependencyGraph& graph);

/// Buckets 0..4 exact, bucket 5 collects depth >= 5. Unreachable nodes excluded.
std::array<std::size_t, kDepthBuckets> depth_histogram(const DepthAssignment& assignment);

inline int depth_bucket(int depth) { return depth >= kDepthBuckets - 1 ? kDepthBuckets - 1 : depth; }

} // namespace relscan::sbom
