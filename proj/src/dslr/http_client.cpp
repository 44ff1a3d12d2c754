#include "dslr/http_client.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>

#include "dslr/error.hpp"

namespace dslr {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0)
    throw Error(ErrorCode::kConfig, "endpoint must be an http:// URL: '" + url + "'");
  const auto slash = url.find('/', scheme + 3);
  Endpoint ep;
  ep.origin = url.substr(0, slash);
  if (slash != std::string::npos) {
    ep.prefix = url.substr(slash);
    while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
  }
  return ep;
}

std::string error_message(const httplib::Result& res) {
  if (!res) return "transport error: " + httplib::to_string(res.error());
  try {
    auto j = nlohmann::json::parse(res->body);
    if (j.is_object() && j.contains("error") && j["error"].is_string())
      return "HTTP " + std::to_string(res->status) + ": " + j["error"].get<std::string>();
  } catch (const nlohmann::json::exception&) {
  }
  return "HTTP " + std::to_string(res->status);
}

}  // namespace

nlohmann::json post_json(const std::string& endpoint, const std::string& path,
                         const nlohmann::json& body, const HttpOptions& options) {
  const auto ep = split_endpoint(endpoint);
  const auto full_path = ep.prefix + path;
  const auto payload = body.dump();
  const auto timeout = std::chrono::milliseconds(options.timeout_ms);

  std::string last_error;
  bool last_timed_out = false;
  int backoff = options.backoff_ms;
  for (int attempt = 0; attempt <= options.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
    httplib::Client client(ep.origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    const auto started = std::chrono::steady_clock::now();
    auto res = client.Post(full_path, payload, "application/json");
    const auto elapsed = std::chrono::steady_clock::now() - started;

    if (res && res->status == 200) {
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kRemoteMalformed, endpoint + full_path + ": invalid JSON body: " + e.what());
      }
    }
    if (res && res->status >= 400 && res->status < 500)
      throw Error(ErrorCode::kRemoteMalformed, endpoint + full_path + ": " + error_message(res));

    last_error = error_message(res);
    last_timed_out = !res && (res.error() == httplib::Error::ConnectionTimeout ||
                              (res.error() == httplib::Error::Read && elapsed * 10 >= timeout * 9));
  }
  if (last_timed_out)
    throw Error(ErrorCode::kTimeout, endpoint + full_path + ": timed out after " +
                                         std::to_string(options.timeout_ms) + " ms");
  throw Error(ErrorCode::kRemoteUnavailable, endpoint + full_path + ": " + last_error);
}

}  // namespace dslr
