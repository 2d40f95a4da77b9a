#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace relscan::util {

using Bytes = std::vector<std::uint8_t>;

std::string sha256_hex(std::string_view data);
std::string base64(std::string_view data);

/// Inflates gzip data; input without the gzip magic is returned unchanged.
std::string gunzip(std::string_view data);
std::string gzip(std::string_view data);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file then renames, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    std::string out;
    std::string err;

    bool ok() const { return !timed_out && exit_code == 0; }
};

struct ProcessOptions {
    std::filesystem::path cwd;
    std::optional<std::chrono::milliseconds> timeout;
    std::map<std::string, std::string> env;
    std::string stdin_data;
};

/// fork/exec without a shell. Throws Error(Io) if the program cannot start.
ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& options = {});

/// Runs a command line through /bin/sh -c.
ProcessResult run_shell(const std::string& command, const ProcessOptions& options = {});

bool program_available(std::string_view program);

/// Replaces "{key}" placeholders; unknown placeholders are left untouched.
std::string expand_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

std::string shell_quote(std::string_view s);

/// Scoped temporary directory, removed recursively on destruction.
class TempDir {
public:
    explicit TempDir(std::string_view prefix = "relscan");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    TempDir(TempDir&& other) noexcept;
    TempDir& operator=(TempDir&&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace relscan::util
