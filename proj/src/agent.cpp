#include "topogen/agent.hpp"

#include <algorithm>

#include "topogen/errors.hpp"

namespace topogen {

const AgentProfile& Roster::at(NodeId id) const {
  if (id >= agents.size()) throw ConfigError("no agent with id " + std::to_string(id));
  return agents[id];
}

std::vector<std::string> Roster::role_labels() const {
  std::vector<std::string> labels;
  for (const auto& a : agents) {
    if (std::find(labels.begin(), labels.end(), a.role) == labels.end()) labels.push_back(a.role);
  }
  return labels;
}

std::vector<std::size_t> Roster::role_indices() const {
  const auto labels = role_labels();
  std::vector<std::size_t> out;
  for (const auto& a : agents) {
    out.push_back(static_cast<std::size_t>(std::find(labels.begin(), labels.end(), a.role) - labels.begin()));
  }
  return out;
}

void Roster::validate() const {
  if (agents.empty()) throw ConfigError("roster: at least one agent is required");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (agents[i].id != i) throw ConfigError("roster: agents must be listed with ids 0..N-1 in order");
    if (agents[i].role.empty()) throw ConfigError("roster: agent " + std::to_string(i) + " has no role");
  }
  if (decision_maker >= agents.size()) throw ConfigError("roster: decision_maker is not an agent id");
}

}  // namespace topogen
