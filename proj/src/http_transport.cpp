// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include <httplib.h>

#include <fmt/format.h>

#include "diffharness/error.hpp"
#include "diffharness/llm.hpp"

namespace diffharness {

HttpTransport::HttpTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

HttpResponse
HttpTransport::post(const std::string& url, const Headers& headers, const std::string& body)
{
    // Split "scheme://host[:port]/path" into the client base and the path.
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(Errc::ProviderConfig, fmt::format("endpoint '{}' has no scheme", url));
    }
    auto path_start = url.find('/', scheme_end + 3);
    const std::string base = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(base);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers h;
    std::string content_type = "application/json";
    for (const auto& [k, v] : headers) {
        if (k == "Content-Type") {
            content_type = v;
        } else {
            h.emplace(k, v);
        }
    }
    auto result = client.Post(path, h, body, content_type);
    if (!result) {
        return HttpResponse{0, httplib::to_string(result.error())};
    }
    return HttpResponse{result->status, result->body};
}

} // namespace diffharness
