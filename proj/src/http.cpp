#include "district/http.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>

#include "district/error.hpp"

namespace district::http {

nlohmann::json post_json(const std::string& endpoint, const std::string& path,
                         const nlohmann::json& body, const RemoteOptions& options) {
    httplib::Client client(endpoint);
    if (!client.is_valid()) fail(ErrorKind::config, "invalid endpoint: " + endpoint);
    client.set_connection_timeout(10);
    client.set_read_timeout(options.timeout_seconds);
    client.set_write_timeout(options.timeout_seconds);

    const std::string payload = body.dump();
    std::string last_failure;
    for (int attempt = 0; attempt <= options.retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(50 << (attempt - 1)));

        auto res = client.Post(path, payload, "application/json");
        if (!res) {
            last_failure = "request failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_failure = "server answered " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            fail(ErrorKind::protocol, endpoint + path + " answered " + std::to_string(res->status) +
                                          ": " + res->body);
        }
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorKind::protocol, endpoint + path + " returned malformed JSON: " + e.what());
        }
    }
    fail(ErrorKind::transport, endpoint + path + " unavailable after " +
                                   std::to_string(options.retries + 1) + " attempts (" +
                                   last_failure + ")");
}

}  // namespace district::http
