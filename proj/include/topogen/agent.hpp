#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "topogen/graph.hpp"

namespace topogen {

struct AgentProfile {
  NodeId id = 0;
  std::string role;
  std::string backend;        // key into the backend registry
  std::string system_prompt;
  std::vector<std::string> tools;  // declared only
  bool operator==(const AgentProfile&) const = default;
};

struct Roster {
  std::vector<AgentProfile> agents;  // agents[i].id == i
  NodeId decision_maker = 0;

  std::size_t size() const { return agents.size(); }
  const AgentProfile& at(NodeId id) const;
  // Distinct role labels in first-appearance order, and each agent's index into it.
  std::vector<std::string> role_labels() const;
  std::vector<std::size_t> role_indices() const;
  void validate() const;
  bool operator==(const Roster&) const = default;
};

struct ChatMessage {
  std::string role;  // "system" | "user"
  std::string content;
};

struct Completion {
  std::string content;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

// ceil(characters / 4)
inline std::size_t mock_token_count(std::string_view text) { return (text.size() + 3) / 4; }

class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  // Throws BackendError once retries are exhausted.
  virtual Completion complete(const AgentProfile& agent, const std::vector<ChatMessage>& messages) = 0;
};

}  // namespace topogen
