#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "ricl/embedder.hpp"
#include "ricl/error.hpp"
#include "ricl/http.hpp"
#include "ricl/infer.hpp"
#include "ricl/prompt.hpp"

using namespace ricl;

namespace {

// Local server on an ephemeral port, torn down with the object.
class LocalServer {
 public:
  LocalServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

class FakeTransport : public HttpTransport {
 public:
  using Handler = std::function<HttpResponse(const std::string& body, const HttpHeaders& headers)>;
  explicit FakeTransport(Handler h) : handler_(std::move(h)) {}
  HttpResponse post(const std::string&, const HttpHeaders& headers, const std::string& body,
                    std::chrono::milliseconds) override {
    ++calls;
    return handler_(body, headers);
  }
  std::atomic<int> calls{0};

 private:
  Handler handler_;
};

EndpointConfig fast_config(std::string url) {
  EndpointConfig cfg;
  cfg.url = std::move(url);
  cfg.model = "m";
  cfg.retry.base_delay = std::chrono::milliseconds(1);
  cfg.retry.max_delay = std::chrono::milliseconds(2);
  return cfg;
}

nlohmann::json vector_for(const std::string& text) {
  return nlohmann::json::array({static_cast<double>(text.size()), 1.0});
}

}  // namespace

TEST_SUITE("http") {

TEST_CASE("2500 texts in batches of 512 take 5 requests") {
  LocalServer srv;
  std::atomic<int> requests{0};
  srv.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    ++requests;
    auto body = nlohmann::json::parse(req.body);
    CHECK(body["model"] == "m");
    nlohmann::json data = nlohmann::json::array();
    const auto& input = body["input"];
    // Reverse order: the client must reassemble by index.
    for (std::size_t i = input.size(); i-- > 0;) {
      data.push_back({{"index", i}, {"embedding", vector_for(input[i].get<std::string>())}});
    }
    res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
  });
  std::vector<TextItem> items;
  for (int i = 0; i < 2500; ++i) items.push_back({"t" + std::to_string(i), std::string(1 + i % 37, 'x')});
  auto transport = make_default_transport();
  auto idx = fetch_embeddings(*transport, fast_config(srv.url("/v1/embeddings")), items, 512);
  CHECK(requests == 5);
  REQUIRE(idx.size() == 2500);
  for (int i = 0; i < 2500; i += 97) {
    CHECK(idx.entries()[i].first == "t" + std::to_string(i));
    CHECK(idx.at("t" + std::to_string(i)).values()[0] == static_cast<double>(1 + i % 37));
  }
}

TEST_CASE("transient errors are retried, client errors are not") {
  LocalServer srv;
  std::atomic<int> flaky{0}, bad{0}, down{0};
  srv.server().Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
    if (++flaky < 3) {
      res.status = flaky == 1 ? 503 : 429;
      return;
    }
    res.set_content("{\"ok\": true}", "application/json");
  });
  srv.server().Post("/bad", [&](const httplib::Request&, httplib::Response& res) {
    ++bad;
    res.status = 400;
  });
  srv.server().Post("/down", [&](const httplib::Request&, httplib::Response& res) {
    ++down;
    res.status = 500;
  });
  auto t = make_default_transport();
  std::vector<std::chrono::milliseconds> sleeps;
  auto record = [&](std::chrono::milliseconds d) { sleeps.push_back(d); };

  CHECK(post_json(*t, fast_config(srv.url("/flaky")), {{"x", 1}}, record)["ok"] == true);
  CHECK(flaky == 3);
  CHECK(sleeps.size() == 2);

  try {
    post_json(*t, fast_config(srv.url("/bad")), {}, record);
    FAIL("expected HttpError");
  } catch (const HttpError& e) {
    CHECK(e.status() == 400);
    CHECK_FALSE(e.retryable());
  }
  CHECK(bad == 1);

  auto cfg = fast_config(srv.url("/down"));
  cfg.retry.max_attempts = 3;
  CHECK_THROWS_AS(post_json(*t, cfg, {}, record), HttpError);
  CHECK(down == 3);
}

TEST_CASE("backoff doubles and is capped") {
  RetryPolicy p;
  CHECK(p.delay_after(1).count() == 250);
  CHECK(p.delay_after(2).count() == 500);
  CHECK(p.delay_after(3).count() == 1000);
  CHECK(p.delay_after(10).count() == 8000);
}

TEST_CASE("connection failure is a retryable transport error") {
  int port = 0;
  {
    httplib::Server s;
    port = s.bind_to_any_port("127.0.0.1");
  }
  auto t = make_default_transport();
  auto cfg = fast_config("http://127.0.0.1:" + std::to_string(port) + "/x");
  cfg.retry.max_attempts = 2;
  cfg.timeout = std::chrono::milliseconds(200);
  try {
    post_json(*t, cfg, {}, [](auto) {});
    FAIL("expected HttpError");
  } catch (const HttpError& e) {
    CHECK(e.status() == 0);
  }
}

TEST_CASE("auth header comes from the named environment variable") {
  FakeTransport t([](const std::string&, const HttpHeaders& headers) {
    for (const auto& [k, v] : headers) {
      if (k == "X-Key" && v == "Bearer s3cret") return HttpResponse{200, "{\"ok\":1}"};
    }
    return HttpResponse{401, "no"};
  });
  auto cfg = fast_config("http://unused/");
  cfg.auth_header = "X-Key";
  cfg.auth_env = "RICL_TEST_TOKEN";
  ::setenv("RICL_TEST_TOKEN", "Bearer s3cret", 1);
  CHECK(post_json(t, cfg, {})["ok"] == 1);
  ::unsetenv("RICL_TEST_TOKEN");
  CHECK_THROWS_AS(post_json(t, cfg, {}), HttpError);
}

TEST_CASE("non-JSON success body is an error") {
  FakeTransport t([](auto&, auto&) { return HttpResponse{200, "<html>"}; });
  CHECK_THROWS_AS(post_json(t, fast_config("http://x/"), {}), HttpError);
}

TEST_CASE("embedding response shapes") {
  auto bare = nlohmann::json::parse("[[1,2],[3,4]]");
  CHECK(parse_embedding_response(bare, 2)[1] == std::vector<double>{3, 4});
  auto wrapped = nlohmann::json::parse("{\"embeddings\": [[1,2]]}");
  CHECK(parse_embedding_response(wrapped, 1)[0] == std::vector<double>{1, 2});
  auto data = nlohmann::json::parse(
      "{\"data\": [{\"index\":1,\"embedding\":[0,1]},{\"index\":0,\"embedding\":[1,0]}]}");
  auto parsed = parse_embedding_response(data, 2);
  CHECK(parsed[0] == std::vector<double>{1, 0});
  CHECK_THROWS(parse_embedding_response(bare, 3));
}

TEST_CASE("HttpEmbedder memoizes") {
  FakeTransport t([](const std::string& body, auto&) {
    auto j = nlohmann::json::parse(body);
    return HttpResponse{200, nlohmann::json::array({vector_for(j["input"][0])}).dump()};
  });
  auto shared = std::shared_ptr<HttpTransport>(&t, [](auto*) {});
  HttpEmbedder e(shared, fast_config("http://x/"));
  auto a = e.embed("hello");
  auto b = e.embed("hello");
  CHECK(a == b);
  CHECK(t.calls == 1);
}

TEST_CASE("completion backend request and reply") {
  LocalServer srv;
  srv.server().Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    CHECK(body["temperature"] == 0.0);
    CHECK(body["max_tokens"] == 16);
    CHECK(body["stop"] == nlohmann::json::array({"\n"}));
    CHECK(body.contains("prompt"));
    res.set_content(R"({"choices":[{"text":" bye\nsentence: more"}]})", "application/json");
  });
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    CHECK(body["messages"][0]["role"] == "user");
    res.set_content(R"({"choices":[{"message":{"content":"\n\ngreet\nx"}}]})", "application/json");
  });
  auto t = make_default_transport();
  HttpCompletionBackend plain(t, fast_config(srv.url("/v1/completions")));
  const std::string raw = plain.complete(CompletionRequest{"p"}, {});
  CHECK(raw.find('\n') == std::string::npos);
  CHECK(raw == " bye");
  HttpCompletionBackend chat(t, fast_config(srv.url("/v1/chat/completions")), true);
  CHECK(chat.complete(CompletionRequest{"p"}, {}) == "greet");
}

TEST_CASE("external token counter") {
  FakeTransport t([](const std::string& body, auto&) {
    auto j = nlohmann::json::parse(body);
    CHECK(j["prompt"] == j["content"]);
    if (j["prompt"] == "a b c") return HttpResponse{200, "{\"tokens\": [1,2,3]}"};
    return HttpResponse{200, "{\"count\": 7}"};
  });
  auto shared = std::shared_ptr<HttpTransport>(&t, [](auto*) {});
  ExternalTokenCounter counter(shared, fast_config("http://x/tokenize"));
  CHECK(counter.count("a b c") == 3);
  CHECK(counter.count("other") == 7);
  FakeTransport failing([](auto&, auto&) { return HttpResponse{404, ""}; });
  ExternalTokenCounter broken(std::shared_ptr<HttpTransport>(&failing, [](auto*) {}),
                              fast_config("http://x/tokenize"));
  CHECK_THROWS_AS(broken.count("x"), HttpError);
}

TEST_CASE("parallel_for runs every index and rethrows") {
  std::vector<int> hit(1000, 0);
  parallel_for(hit.size(), 8, [&](std::size_t i) { hit[i]++; });
  CHECK(std::all_of(hit.begin(), hit.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 4) throw std::runtime_error("x");
                  }),
                  std::runtime_error);
}

TEST_CASE("endpoint config JSON round trip") {
  auto cfg = fast_config("http://h/p");
  cfg.auth_env = "TOK";
  cfg.concurrency = 9;
  auto back = endpoint_from_json(endpoint_to_json(cfg));
  CHECK(back.url == cfg.url);
  CHECK(back.auth_env == "TOK");
  CHECK(back.concurrency == 9);
  CHECK(back.retry.max_attempts == cfg.retry.max_attempts);
  CHECK(endpoint_to_json(back) == endpoint_to_json(cfg));
}

}  // TEST_SUITE
