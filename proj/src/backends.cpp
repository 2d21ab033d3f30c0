#include "topogen/backends.hpp"

#include <map>
#include <sstream>
#include <thread>

#include "topogen/errors.hpp"

namespace topogen {

bool glob_match(std::string_view pattern, std::string_view text) {
  std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (p < pattern.size() && pattern[p] == text[t]) {
      ++p;
      ++t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string majority_of_agent_lines(std::string_view prompt) {
  std::istringstream in{std::string(prompt)};
  std::string line;
  std::vector<std::string> order;
  std::map<std::string, std::size_t> counts;
  while (std::getline(in, line)) {
    if (line.rfind("Agent ", 0) != 0) continue;
    const auto sep = line.find("): ");
    if (sep == std::string::npos) continue;
    auto answer = trim(std::string_view(line).substr(sep + 3));
    if (answer.empty()) continue;
    if (counts[answer]++ == 0) order.push_back(answer);
  }
  std::string best;
  std::size_t best_count = 0;
  for (const auto& a : order) {
    if (counts[a] > best_count) {
      best = a;
      best_count = counts[a];
    }
  }
  return best;
}

std::string query_line(std::string_view prompt) {
  const std::string_view key = "Query: ";
  const auto pos = prompt.find(key);
  if (pos == std::string_view::npos) return {};
  auto rest = prompt.substr(pos + key.size());
  return trim(rest.substr(0, rest.find('\n')));
}

std::string expand(const std::string& response, std::string_view prompt) {
  std::string out = response;
  auto replace = [&](const std::string& token, const std::string& value) {
    for (auto pos = out.find(token); pos != std::string::npos; pos = out.find(token, pos + value.size())) {
      out.replace(pos, token.size(), value);
    }
  };
  if (out.find("{{majority}}") != std::string::npos) replace("{{majority}}", majority_of_agent_lines(prompt));
  if (out.find("{{query}}") != std::string::npos) replace("{{query}}", query_line(prompt));
  return out;
}

}  // namespace

std::string mock_respond(const MockScript& script, const AgentProfile& agent, std::string_view prompt) {
  if (script.adversarial.count(agent.id)) return script.failure_text;
  for (const auto& rule : script.rules) {
    if ((rule.role == "*" || rule.role == agent.role) && glob_match(rule.pattern, prompt)) {
      return expand(rule.response, prompt);
    }
  }
  return expand(script.default_response, prompt);
}

Completion MockBackend::complete(const AgentProfile& agent, const std::vector<ChatMessage>& messages) {
  ++calls_;
  if (script_.unavailable.count(agent.id)) {
    throw BackendError("mock agent " + std::to_string(agent.id) + " is unavailable", 1);
  }
  if (script_.latency_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(script_.latency_ms));
  std::string user;
  std::size_t prompt_chars = 0;
  for (const auto& m : messages) {
    prompt_chars += m.content.size();
    if (m.role == "user") user = m.content;
  }
  Completion c;
  c.content = mock_respond(script_, agent, user);
  c.prompt_tokens = (prompt_chars + 3) / 4;
  c.completion_tokens = mock_token_count(c.content);
  return c;
}

void RateLimiter::acquire() {
  if (per_second_ <= 0.0) return;
  std::chrono::steady_clock::time_point wait_until;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / per_second_));
    wait_until = std::max(now, next_);
    next_ = wait_until + interval;
  }
  std::this_thread::sleep_until(wait_until);
}

nlohmann::ordered_json to_json(const MockScript& s) {
  nlohmann::ordered_json j;
  j["kind"] = "mock";
  auto rules = nlohmann::ordered_json::array();
  for (const auto& r : s.rules) {
    nlohmann::ordered_json rj;
    rj["role"] = r.role;
    rj["pattern"] = r.pattern;
    rj["response"] = r.response;
    rules.push_back(std::move(rj));
  }
  j["rules"] = std::move(rules);
  j["default"] = s.default_response;
  j["adversarial"] = s.adversarial;
  j["failure_text"] = s.failure_text;
  j["unavailable"] = s.unavailable;
  j["latency_ms"] = s.latency_ms;
  return j;
}

MockScript mock_script_from_json(const nlohmann::json& j) {
  MockScript s;
  for (const auto& r : j.value("rules", nlohmann::json::array())) {
    s.rules.push_back({r.value("role", "*"), r.value("pattern", "*"), r.at("response").get<std::string>()});
  }
  s.default_response = j.value("default", s.default_response);
  s.adversarial = j.value("adversarial", std::set<NodeId>{});
  s.failure_text = j.value("failure_text", s.failure_text);
  s.unavailable = j.value("unavailable", std::set<NodeId>{});
  s.latency_ms = j.value("latency_ms", 0);
  return s;
}

nlohmann::ordered_json to_json(const ChatEndpointConfig& c) {
  nlohmann::ordered_json j;
  j["kind"] = "chat";
  j["base_url"] = c.base_url;
  j["model"] = c.model;
  j["api_key_env"] = c.api_key_env;
  j["timeout_s"] = c.timeout_s;
  j["retries"] = c.retries;
  j["temperature"] = c.temperature;
  j["requests_per_second"] = c.requests_per_second;
  j["backoff_ms"] = c.backoff_ms;
  return j;
}

ChatEndpointConfig chat_config_from_json(const nlohmann::json& j) {
  ChatEndpointConfig c;
  c.base_url = j.value("base_url", c.base_url);
  c.model = j.value("model", c.model);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  c.retries = j.value("retries", c.retries);
  c.temperature = j.value("temperature", c.temperature);
  c.requests_per_second = j.value("requests_per_second", c.requests_per_second);
  c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
  if (c.retries < 0) throw ConfigError("chat backend: retries must be >= 0");
  if (!(c.timeout_s > 0.0)) throw ConfigError("chat backend: timeout_s must be > 0");
  return c;
}

nlohmann::ordered_json to_json(const EmbeddingEndpointConfig& c) {
  nlohmann::ordered_json j;
  j["kind"] = "http";
  j["url"] = c.url;
  j["model"] = c.model;
  j["api_key_env"] = c.api_key_env;
  j["timeout_s"] = c.timeout_s;
  j["retries"] = c.retries;
  j["backoff_ms"] = c.backoff_ms;
  return j;
}

EmbeddingEndpointConfig embedding_config_from_json(const nlohmann::json& j) {
  EmbeddingEndpointConfig c;
  c.url = j.value("url", c.url);
  c.model = j.value("model", c.model);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  c.retries = j.value("retries", c.retries);
  c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
  if (c.retries < 0) throw ConfigError("embedder: retries must be >= 0");
  if (!(c.timeout_s > 0.0)) throw ConfigError("embedder: timeout_s must be > 0");
  return c;
}

}  // namespace topogen
