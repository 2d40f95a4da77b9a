#pragma once

// Thin blocking HTTP client over the vendored httplib.

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace relscan::http {

struct Response {
    int status = 0;
    std::string body;
    std::multimap<std::string, std::string> headers;

    /// Case-insensitive lookup of the first matching header.
    std::optional<std::string> header(const std::string& name) const;
};

using Headers = std::multimap<std::string, std::string>;

class Client {
public:
    /// base_url is scheme://host[:port][/prefix].
    explicit Client(const std::string& base_url, std::chrono::seconds timeout = std::chrono::seconds{30});
    ~Client();
    Client(Client&&) noexcept;
    Client& operator=(Client&&) noexcept;

    /// Transport failures throw Error(Io); HTTP status codes are returned as-is.
    Response get(const std::string& path, const Headers& headers = {});
    Response post(const std::string& path, const std::string& body, const std::string& content_type,
                  const Headers& headers = {});

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace relscan::http
