#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "topogen/graph.hpp"

namespace topogen {

struct ActivateStep {
  NodeId node = 0;
  std::vector<NodeId> conditioned_inputs;  // ascending
  std::vector<NodeId> debate_partners;     // proposers debated right before this step
  bool operator==(const ActivateStep&) const = default;
};

// Critic reviews the author's current output; the author re-handles the query.
struct FeedbackExchange {
  NodeId author = 0;
  NodeId critic = 0;
  bool operator==(const FeedbackExchange&) const = default;
};

// Challenger contests the proposer's answer for `rounds` challenge/rebuttal rounds.
struct DebateExchange {
  NodeId proposer = 0;
  NodeId challenger = 0;
  int rounds = 2;
  bool operator==(const DebateExchange&) const = default;
};

using Step = std::variant<ActivateStep, FeedbackExchange, DebateExchange>;

struct ExecutionPlan {
  std::vector<Step> steps;
  NodeId decision_maker = 0;
  bool fallback = false;  // single-agent plan substituted for the topology

  std::size_t count_activations() const;
  std::size_t count_feedback() const;
  std::size_t count_debates() const;
  bool operator==(const ExecutionPlan&) const = default;
};

struct ScheduleOptions {
  int debate_rounds = 2;
};

// Breadth-first plan over the kept topology.
//  - Roots are nodes with no incoming Conditioned/Debate edge. Feedback edges
//    never count towards in-degree.
//  - The frontier is a FIFO queue; newly ready nodes are enqueued in
//    ascending index order, roots likewise.
//  - On visiting node v: one DebateExchange per incoming Debate edge
//    (ascending proposer), then Activate(v), then one FeedbackExchange per
//    outgoing Feedback edge (ascending critic), then release successors.
//  - Nodes whose only edges are incoming Feedback edges act solely as critics
//    and are not activated, unless they are the decision maker.
//  - When the decision maker is not among the topology's nodes, or the
//    topology has no edges, the plan is a single Activate(decision_maker).
// `nodes` lists the nodes that survived filtering.
ExecutionPlan build_plan(const HeteroGraph& g, const std::vector<NodeId>& nodes, NodeId decision_maker,
                         const ScheduleOptions& opts = {});

// Index of the step that produces each node's final output before it is
// consumed by others (its Activate, or its last FeedbackExchange as author).
struct PlanCheck {
  bool ok = true;
  std::string message;
};

// Checks dependency order, feedback immediacy and one-activation-per-node.
PlanCheck check_plan(const ExecutionPlan& plan, const HeteroGraph& g);

nlohmann::ordered_json to_json(const ExecutionPlan& plan);
std::string dump_plan(const ExecutionPlan& plan);

}  // namespace topogen
