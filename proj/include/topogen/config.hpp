#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "topogen/agent.hpp"
#include "topogen/backends.hpp"
#include "topogen/executor.hpp"

namespace topogen {

struct Hyperparameters {
  double alpha = 0.7;
  double lambda = 0.5;
  double gamma = 0.01;
  double lr = 0.01;
  double tau_start = 2.0;
  double tau_end = 0.5;
  double baseline_decay = 0.9;
  std::size_t M = 40;
  std::size_t M_prime = 40;
  std::size_t S = 8;
  int debate_rounds = 2;
  std::size_t d = 64;
  std::size_t L = 2;
  std::uint64_t seed = 0;
  std::size_t batch_size = 1;
  std::size_t distill_epochs = 400;
  std::size_t student_hidden = 64;
  std::vector<std::size_t> baseline_rounds = {2, 3};  // T values for the cost comparison
  bool operator==(const Hyperparameters&) const = default;
};

struct BackendSpec {
  std::string kind = "mock";  // mock | chat
  MockScript mock;
  ChatEndpointConfig chat;
  bool operator==(const BackendSpec&) const = default;
};

struct EmbedderSpec {
  std::string kind = "hash";  // hash | http
  EmbeddingEndpointConfig http;
  bool operator==(const EmbedderSpec&) const = default;
};

struct EvaluatorSpec {
  std::string kind = "exact_match";  // exact_match | target_topology | constant
  std::vector<Edge> target;          // target_topology only
  int constant = 1;
  bool operator==(const EvaluatorSpec&) const = default;
};

struct RunConfig {
  Roster roster;
  std::string prior_graph;   // as written; relative paths resolve against base_dir
  std::string base_dir;      // not serialized
  Hyperparameters hp;
  Aggregation aggregation = Aggregation::DecisionMaker;
  PromptTemplates templates;
  std::map<std::string, BackendSpec> backends;
  EmbedderSpec embedder;
  EvaluatorSpec evaluator;
  std::optional<NodeId> inject_failure;
  std::string injection_prompt = ExecutorConfig{}.injection_prompt;

  std::string prior_graph_path() const;
  bool operator==(const RunConfig& o) const;
};

// Throws ConfigError naming the offending field.
RunConfig parse_config(const nlohmann::json& j, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);
nlohmann::ordered_json to_json(const RunConfig& c);
void validate(const RunConfig& c);

}  // namespace topogen
