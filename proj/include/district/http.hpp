#pragma once

#include <string>

#include <json.hpp>

#include "district/embedding.hpp"

namespace district::http {

/// POSTs a JSON body to endpoint + path and parses the JSON reply.
/// Connection failures and 5xx replies are retried `options.retries` times and
/// then reported as a transport error. 4xx replies and unparseable bodies are
/// protocol errors.
nlohmann::json post_json(const std::string& endpoint, const std::string& path,
                         const nlohmann::json& body, const RemoteOptions& options);

}  // namespace district::http
