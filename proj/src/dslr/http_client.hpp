#pragma once

#include <string>

#include <json.hpp>

namespace dslr {

struct HttpOptions {
  int timeout_ms = 30000;
  int retries = 2;          // extra attempts after the first
  int backoff_ms = 50;      // doubled after each failed attempt
};

/// POSTs a JSON body to `endpoint` + `path` and returns the parsed 200 body.
///
/// Connection failures and 5xx responses are retried with exponential backoff
/// and end in RemoteUnavailable (or Timeout when the last attempt ran out of
/// time). 4xx responses and unparsable bodies raise RemoteMalformed.
nlohmann::json post_json(const std::string& endpoint, const std::string& path,
                         const nlohmann::json& body, const HttpOptions& options);

}  // namespace dslr
