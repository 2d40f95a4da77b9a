#pragma once

// Minimal TOML reader for lockfiles and manifests: tables, arrays of tables,
// dotted keys, strings (basic, literal, multi-line), numbers, booleans,
// arrays and inline tables. Date-times are returned as strings.

#include <nlohmann/json.hpp>

#include <string_view>

namespace relscan::toml {

/// Throws Error(Parse) as "line N: ...".
nlohmann::json parse(std::string_view text);

} // namespace relscan::toml
