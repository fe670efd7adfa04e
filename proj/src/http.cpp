#include "ricl/http.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "ricl/error.hpp"

namespace ricl {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL lacks a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport : public HttpTransport {
 public:
  HttpResponse post(const std::string& url, const HttpHeaders& headers, const std::string& body,
                    std::chrono::milliseconds timeout) override {
    auto parsed = split_url(url);
    httplib::Client client(parsed.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(parsed.path, h, body, "application/json");
    if (!res) {
      throw HttpError("POST " + url + " failed: " + httplib::to_string(res.error()), 0, true);
    }
    return {res->status, res->body};
  }
};

bool retryable_status(int status) {
  return status == 408 || status == 429 || (status >= 500 && status <= 599);
}

}  // namespace

std::shared_ptr<HttpTransport> make_default_transport() {
  return std::make_shared<HttplibTransport>();
}

std::chrono::milliseconds RetryPolicy::delay_after(int attempt) const {
  auto delay = base_delay;
  for (int i = 1; i < attempt && delay < max_delay; ++i) delay *= 2;
  return std::min(delay, max_delay);
}

nlohmann::json endpoint_to_json(const EndpointConfig& cfg) {
  return {{"url", cfg.url},
          {"model", cfg.model},
          {"auth_header", cfg.auth_header},
          {"auth_env", cfg.auth_env},
          {"timeout_ms", cfg.timeout.count()},
          {"retries", cfg.retry.max_attempts - 1},
          {"concurrency", cfg.concurrency}};
}

EndpointConfig endpoint_from_json(const nlohmann::json& j) {
  EndpointConfig cfg;
  cfg.url = j.value("url", cfg.url);
  cfg.model = j.value("model", cfg.model);
  cfg.auth_header = j.value("auth_header", cfg.auth_header);
  cfg.auth_env = j.value("auth_env", cfg.auth_env);
  cfg.timeout = std::chrono::milliseconds(j.value("timeout_ms", cfg.timeout.count()));
  cfg.retry.max_attempts = j.value("retries", cfg.retry.max_attempts - 1) + 1;
  if (j.contains("retry_base_ms")) cfg.retry.base_delay = std::chrono::milliseconds(j["retry_base_ms"].get<long>());
  cfg.concurrency = j.value("concurrency", cfg.concurrency);
  if (cfg.retry.max_attempts < 1) throw ConfigError("retries must be >= 0");
  if (cfg.concurrency == 0) throw ConfigError("concurrency must be >= 1");
  return cfg;
}

nlohmann::json post_json(HttpTransport& transport, const EndpointConfig& cfg,
                         const nlohmann::json& body,
                         const std::function<void(std::chrono::milliseconds)>& sleep) {
  if (cfg.url.empty()) throw ConfigError("endpoint URL not configured");
  HttpHeaders headers{{"Content-Type", "application/json"}};
  if (!cfg.auth_env.empty()) {
    if (const char* value = std::getenv(cfg.auth_env.c_str()); value && *value) {
      headers.emplace_back(cfg.auth_header, value);
    }
  }
  const std::string payload = body.dump();
  std::string last_error;
  int last_status = 0;
  for (int attempt = 1; attempt <= cfg.retry.max_attempts; ++attempt) {
    try {
      HttpResponse res = transport.post(cfg.url, headers, payload, cfg.timeout);
      if (res.status >= 200 && res.status < 300) {
        try {
          return nlohmann::json::parse(res.body);
        } catch (const nlohmann::json::parse_error& e) {
          throw HttpError(cfg.url + ": response is not JSON: " + e.what(), res.status, false);
        }
      }
      last_status = res.status;
      last_error = cfg.url + " returned HTTP " + std::to_string(res.status);
      if (!retryable_status(res.status)) {
        throw HttpError(last_error + ": " + res.body.substr(0, 200), res.status, false);
      }
    } catch (const HttpError& e) {
      if (!e.retryable()) throw;
      last_error = e.what();
      last_status = e.status();
    }
    if (attempt < cfg.retry.max_attempts) {
      auto delay = cfg.retry.delay_after(attempt);
      if (sleep) {
        sleep(delay);
      } else {
        std::this_thread::sleep_for(delay);
      }
    }
  }
  throw HttpError(last_error + " (after " + std::to_string(cfg.retry.max_attempts) + " attempts)",
                  last_status, true);
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (;;) {
        if (failed.load()) return;
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace ricl
