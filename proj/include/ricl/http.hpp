#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace ricl {

struct HttpResponse {
  int status = 0;
  std::string body;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

/// Minimal POST transport. Implementations throw HttpError(status 0,
/// retryable) on connection-level failures and return any HTTP status.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const std::string& url, const HttpHeaders& headers,
                            const std::string& body, std::chrono::milliseconds timeout) = 0;
};

/// cpp-httplib backed transport (http:// and https://).
std::shared_ptr<HttpTransport> make_default_transport();

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds base_delay{250};
  std::chrono::milliseconds max_delay{8000};

  /// base * 2^(attempt-1), capped at max_delay. attempt counts from 1.
  std::chrono::milliseconds delay_after(int attempt) const;
};

/// Connection settings shared by the embeddings, completions and tokenize
/// clients.
struct EndpointConfig {
  std::string url;
  std::string model;
  std::string auth_header = "Authorization";
  /// Name of the environment variable holding the auth header value. The
  /// value is sent verbatim; no header is sent when unset or empty.
  std::string auth_env;
  std::chrono::milliseconds timeout{60000};
  RetryPolicy retry;
  std::size_t concurrency = 4;
};

nlohmann::json endpoint_to_json(const EndpointConfig& cfg);
EndpointConfig endpoint_from_json(const nlohmann::json& j);

/// POSTs a JSON body and parses the JSON reply.
///
/// Retries connection failures, 408, 429 and 5xx with capped exponential
/// backoff; other 4xx responses fail immediately. Throws HttpError when
/// attempts are exhausted.
nlohmann::json post_json(HttpTransport& transport, const EndpointConfig& cfg,
                         const nlohmann::json& body,
                         const std::function<void(std::chrono::milliseconds)>& sleep = {});

/// Runs fn(0..n-1) on up to `workers` threads. The first exception thrown
/// by any task is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace ricl
