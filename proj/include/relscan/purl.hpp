#pragma once

// Package URL parsing/formatting and ecosystem-aware version ordering.

#include "relscan/model.hpp"

#include <string>
#include <string_view>

namespace relscan::purl {

/// Throws Error(Parse) naming the offending segment.
PackageUrl parse(std::string_view text);

/// Canonical form: lowercase scheme and type, sorted qualifier keys,
/// percent-encoding of reserved characters.
std::string format(const PackageUrl& p);

/// "<ecosystem>:<namespace>/<name>" lowercased; the join key between
/// components and advisory applicability statements.
std::string product_key(std::string_view ecosystem, std::string_view namespace_, std::string_view name);
std::string product_key(const PackageUrl& p);

enum class Ordering { Less, Equal, Greater };

std::string_view to_string(Ordering o);

enum class VersionScheme { Semver, Maven, Pypi, Alnum, Composer, Fallback };

VersionScheme scheme_for(std::string_view ecosystem);

/// Total order within an ecosystem family. Never throws.
Ordering compare_versions(std::string_view ecosystem, std::string_view a, std::string_view b);

/// Bounds or exact-list membership under compare_versions.
bool version_in_range(std::string_view ecosystem, std::string_view version, const VersionRange& range);

/// Throws Error(Validation) when bounds are reversed or exact is mixed with bounds.
void validate_range(std::string_view ecosystem, const VersionRange& range);

std::string percent_encode(std::string_view s, std::string_view keep = "");
/// Throws Error(Parse) on a malformed escape.
std::string percent_decode(std::string_view s);

} // namespace relscan::purl
