#include "relscan/http.hpp"

#include "relscan/error.hpp"
#include "relscan/util.hpp"

#include <httplib.h>

namespace relscan::http {

std::optional<std::string> Response::header(const std::string& name) const {
    const std::string want = util::to_lower(name);
    for (const auto& [k, v] : headers)
        if (util::to_lower(k) == want) return v;
    return std::nullopt;
}

struct Client::Impl {
    std::string origin;
    std::string prefix;
    std::unique_ptr<httplib::Client> client;
};

Client::Client(const std::string& base_url, std::chrono::seconds timeout) : impl_(std::make_unique<Impl>()) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorKind::Usage, "not an http url: " + base_url);
    const auto path_start = base_url.find('/', scheme_end + 3);
    impl_->origin = base_url.substr(0, path_start);
    if (path_start != std::string::npos) impl_->prefix = base_url.substr(path_start);
    while (!impl_->prefix.empty() && impl_->prefix.back() == '/') impl_->prefix.pop_back();
    impl_->client = std::make_unique<httplib::Client>(impl_->origin);
    impl_->client->set_connection_timeout(timeout);
    impl_->client->set_read_timeout(timeout);
    impl_->client->set_write_timeout(timeout);
    impl_->client->set_follow_location(true);
}

Client::~Client() = default;
Client::Client(Client&&) noexcept = default;
Client& Client::operator=(Client&&) noexcept = default;

namespace {

Response convert(const httplib::Result& res, const std::string& what) {
    if (!res) throw Error(ErrorKind::Io, what + ": " + httplib::to_string(res.error()));
    Response out;
    out.status = res->status;
    out.body = res->body;
    for (const auto& [k, v] : res->headers) out.headers.emplace(k, v);
    return out;
}

httplib::Headers to_httplib(const Headers& h) {
    httplib::Headers out;
    for (const auto& [k, v] : h) out.emplace(k, v);
    return out;
}

std::string join(const std::string& prefix, const std::string& path) {
    if (path.empty() || path.front() != '/') return prefix + "/" + path;
    return prefix + path;
}

} // namespace

Response Client::get(const std::string& path, const Headers& headers) {
    const std::string full = join(impl_->prefix, path);
    return convert(impl_->client->Get(full, to_httplib(headers)), "GET " + impl_->origin + full);
}

Response Client::post(const std::string& path, const std::string& body, const std::string& content_type,
                      const Headers& headers) {
    const std::string full = join(impl_->prefix, path);
    return convert(impl_->client->Post(full, to_httplib(headers), body, content_type), "POST " + impl_->origin + full);
}

} // namespace relscan::http
