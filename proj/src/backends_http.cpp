#include <cmath>
#include <cstdlib>
#include <iostream>
#include <thread>

#include <httplib.h>

#include "topogen/backends.hpp"
#include "topogen/errors.hpp"

namespace topogen {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // starts with '/', may be empty
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string strip_trailing_slash(std::string s) {
  while (!s.empty() && s.back() == '/') s.pop_back();
  return s;
}

httplib::Headers auth_headers(const std::string& api_key_env) {
  httplib::Headers h;
  if (api_key_env.empty()) return h;
  const char* key = std::getenv(api_key_env.c_str());
  if (!key || !*key) throw ConfigError("environment variable " + api_key_env + " is not set");
  h.emplace("Authorization", std::string("Bearer ") + key);
  return h;
}

enum class Outcome { Ok, Transient, Fatal };

struct Attempt {
  Outcome outcome = Outcome::Fatal;
  std::string body;
  std::string error;
};

Attempt post_once(httplib::Client& cli, const std::string& path, const httplib::Headers& headers,
                  const std::string& payload) {
  auto res = cli.Post(path, headers, payload, "application/json");
  if (!res) return {Outcome::Transient, {}, "connection error: " + httplib::to_string(res.error())};
  if (res->status == 200) return {Outcome::Ok, res->body, {}};
  const bool transient = res->status == 429 || res->status >= 500;
  return {transient ? Outcome::Transient : Outcome::Fatal, res->body, "HTTP " + std::to_string(res->status)};
}

// Returns the successful body plus the number of attempts used.
std::pair<std::string, int> post_with_retries(const std::string& url, const httplib::Headers& headers,
                                              const std::string& payload, double timeout_s, int retries,
                                              int backoff_ms) {
  const auto [origin, path] = split_url(url);
  httplib::Client cli(origin);
  const auto secs = static_cast<time_t>(timeout_s);
  const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);

  std::string last_error;
  for (int attempt = 0; attempt <= retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(backoff_ms) << (attempt - 1)));
    }
    auto a = post_once(cli, path.empty() ? "/" : path, headers, payload);
    if (a.outcome == Outcome::Ok) return {std::move(a.body), attempt + 1};
    last_error = a.error;
    if (a.outcome == Outcome::Fatal) throw BackendError(url + ": " + last_error, attempt + 1);
  }
  throw BackendError(url + ": " + last_error + " after " + std::to_string(retries + 1) + " attempts", retries + 1);
}

}  // namespace

ChatResult parse_chat_body(const std::string& body, const std::vector<ChatMessage>& messages) {
  ChatResult r;
  try {
    const auto j = nlohmann::json::parse(body);
    r.content = j.at("choices").at(0).at("message").at("content").get<std::string>();
    if (j.contains("usage") && j["usage"].is_object() && j["usage"].contains("prompt_tokens") &&
        j["usage"].contains("completion_tokens")) {
      r.prompt_tokens = j["usage"]["prompt_tokens"].get<std::size_t>();
      r.completion_tokens = j["usage"]["completion_tokens"].get<std::size_t>();
      r.usage_reported = true;
    }
  } catch (const nlohmann::json::exception& ex) {
    std::cerr << "malformed chat response: " << body << '\n';
    throw ProtocolError(std::string("malformed chat response: ") + ex.what(), body);
  }
  if (!r.usage_reported) {
    std::size_t chars = 0;
    for (const auto& m : messages) chars += m.content.size();
    r.prompt_tokens = (chars + 3) / 4;
    r.completion_tokens = mock_token_count(r.content);
  }
  return r;
}

ChatResult chat_respond(const ChatEndpointConfig& cfg, const std::vector<ChatMessage>& messages,
                        RateLimiter* limiter) {
  nlohmann::ordered_json payload;
  payload["model"] = cfg.model;
  auto msgs = nlohmann::ordered_json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  payload["messages"] = std::move(msgs);
  payload["temperature"] = cfg.temperature;

  if (limiter) limiter->acquire();
  const auto headers = auth_headers(cfg.api_key_env);
  auto [body, attempts] = post_with_retries(strip_trailing_slash(cfg.base_url) + "/chat/completions", headers,
                                            payload.dump(), cfg.timeout_s, cfg.retries, cfg.backoff_ms);
  auto r = parse_chat_body(body, messages);
  r.attempts = attempts;
  return r;
}

Completion ChatBackend::complete(const AgentProfile&, const std::vector<ChatMessage>& messages) {
  auto r = chat_respond(cfg_, messages, &limiter_);
  return {std::move(r.content), r.prompt_tokens, r.completion_tokens};
}

std::vector<double> HttpEmbedder::embed(std::string_view text) const {
  if (text.empty()) throw InputError("cannot embed empty text");
  nlohmann::ordered_json payload;
  payload["input"] = std::string(text);
  if (!cfg_.model.empty()) payload["model"] = cfg_.model;
  auto [body, attempts] = post_with_retries(cfg_.url, auth_headers(cfg_.api_key_env), payload.dump(),
                                            cfg_.timeout_s, cfg_.retries, cfg_.backoff_ms);
  std::vector<double> v;
  try {
    const auto j = nlohmann::json::parse(body);
    if (j.contains("embedding")) {
      v = j["embedding"].get<std::vector<double>>();
    } else {
      v = j.at("data").at(0).at("embedding").get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ProtocolError(std::string("malformed embedding response: ") + ex.what(), body);
  }
  if (v.size() != dim_) {
    throw ProtocolError("embedding has " + std::to_string(v.size()) + " entries, expected " + std::to_string(dim_),
                        body);
  }
  for (double x : v) {
    if (!std::isfinite(x)) throw ProtocolError("embedding contains non-finite values", body);
  }
  (void)attempts;
  return v;
}

}  // namespace topogen
