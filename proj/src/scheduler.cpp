#include "topogen/scheduler.hpp"

#include <algorithm>
#include <deque>
#include <map>

#include "topogen/errors.hpp"

namespace topogen {

namespace {
template <class T>
std::size_t count_of(const std::vector<Step>& steps) {
  return static_cast<std::size_t>(
      std::count_if(steps.begin(), steps.end(), [](const Step& s) { return std::holds_alternative<T>(s); }));
}
}  // namespace

std::size_t ExecutionPlan::count_activations() const { return count_of<ActivateStep>(steps); }
std::size_t ExecutionPlan::count_feedback() const { return count_of<FeedbackExchange>(steps); }
std::size_t ExecutionPlan::count_debates() const { return count_of<DebateExchange>(steps); }

ExecutionPlan build_plan(const HeteroGraph& g, const std::vector<NodeId>& nodes, NodeId decision_maker,
                         const ScheduleOptions& opts) {
  if (decision_maker >= g.num_nodes() && !g.empty()) throw InputError("decision maker outside the topology");
  if (opts.debate_rounds < 0) throw InputError("debate rounds must be non-negative");

  ExecutionPlan plan;
  plan.decision_maker = decision_maker;
  const bool dm_kept = std::find(nodes.begin(), nodes.end(), decision_maker) != nodes.end();
  if (g.empty() || !dm_kept) {
    plan.fallback = true;
    plan.steps.emplace_back(ActivateStep{decision_maker, {}, {}});
    return plan;
  }

  const auto restricted = RelationSet::restricted();
  const std::size_t n = g.num_nodes();
  std::vector<std::size_t> indeg(n, 0);
  std::vector<char> pure_critic(n, 0);
  std::vector<char> member(n, 0);
  for (NodeId v : nodes) member[v] = 1;
  for (NodeId v : nodes) {
    bool only_fb_in = !g.in_edges(v).empty() && g.out_edges(v).empty();
    for (const auto& e : g.in_edges(v)) {
      if (restricted.contains(e.relation)) {
        ++indeg[v];
        only_fb_in = false;
      }
    }
    pure_critic[v] = only_fb_in && v != decision_maker;
  }

  std::deque<NodeId> frontier;
  for (NodeId v : nodes) {
    if (indeg[v] == 0 && !pure_critic[v]) frontier.push_back(v);
  }

  std::size_t visited = 0;
  while (!frontier.empty()) {
    const NodeId v = frontier.front();
    frontier.pop_front();
    ++visited;

    ActivateStep act{v, {}, {}};
    for (const auto& e : g.in_edges(v)) {
      if (e.relation == Relation::Conditioned) {
        act.conditioned_inputs.push_back(e.src);
      } else if (e.relation == Relation::Debate) {
        plan.steps.emplace_back(DebateExchange{e.src, v, opts.debate_rounds});
        act.debate_partners.push_back(e.src);
      }
    }
    plan.steps.emplace_back(std::move(act));

    const auto outs = g.out_edges(v);
    for (const auto& e : outs) {
      if (e.relation == Relation::Feedback) plan.steps.emplace_back(FeedbackExchange{v, e.dst});
    }
    for (const auto& e : outs) {
      if (restricted.contains(e.relation) && member[e.dst] && --indeg[e.dst] == 0) frontier.push_back(e.dst);
    }
  }

  std::size_t expected = 0;
  for (NodeId v : nodes) expected += pure_critic[v] ? 0 : 1;
  if (visited != expected) throw InputError("topology has a cycle among conditioned/debate edges");
  return plan;
}

PlanCheck check_plan(const ExecutionPlan& plan, const HeteroGraph& g) {
  auto fail = [](std::string m) { return PlanCheck{false, std::move(m)}; };
  std::map<NodeId, std::size_t> activated_at;
  std::map<NodeId, std::size_t> last_feedback_as_author;
  std::map<NodeId, std::size_t> first_consumed_at;

  auto consume = [&](NodeId producer, std::size_t idx) {
    first_consumed_at.try_emplace(producer, idx);
  };
  for (std::size_t idx = 0; idx < plan.steps.size(); ++idx) {
    const auto& s = plan.steps[idx];
    if (const auto* a = std::get_if<ActivateStep>(&s)) {
      if (!activated_at.emplace(a->node, idx).second) return fail("node activated twice");
      for (NodeId u : a->conditioned_inputs) {
        if (!activated_at.count(u)) return fail("conditioned input consumed before it was produced");
        consume(u, idx);
      }
    } else if (const auto* f = std::get_if<FeedbackExchange>(&s)) {
      if (!activated_at.count(f->author)) return fail("feedback on an author that has not produced output");
      last_feedback_as_author[f->author] = idx;
    } else if (const auto* d = std::get_if<DebateExchange>(&s)) {
      if (!activated_at.count(d->proposer)) return fail("debate before the proposer produced output");
      consume(d->proposer, idx);
    }
  }
  if (plan.fallback) return {};

  for (const auto& e : g.edges()) {
    if (e.relation == Relation::Feedback) continue;
    auto src = activated_at.find(e.src);
    auto dst = activated_at.find(e.dst);
    if (src == activated_at.end() || dst == activated_at.end()) return fail("edge endpoint never activated");
    if (src->second >= dst->second) return fail("dependency order violated");
  }
  for (const auto& [author, fb_idx] : last_feedback_as_author) {
    auto c = first_consumed_at.find(author);
    if (c != first_consumed_at.end() && c->second < fb_idx) return fail("output consumed before its feedback exchange");
  }
  return {};
}

nlohmann::ordered_json to_json(const ExecutionPlan& plan) {
  nlohmann::ordered_json steps = nlohmann::ordered_json::array();
  for (const auto& s : plan.steps) {
    nlohmann::ordered_json j;
    if (const auto* a = std::get_if<ActivateStep>(&s)) {
      j["kind"] = "activate";
      j["participants"] = {a->node};
      j["inputs"] = a->conditioned_inputs;
      if (!a->debate_partners.empty()) j["post_debate_with"] = a->debate_partners;
    } else if (const auto* f = std::get_if<FeedbackExchange>(&s)) {
      j["kind"] = "feedback";
      j["participants"] = {f->author, f->critic};
      j["inputs"] = {f->author};
    } else if (const auto* d = std::get_if<DebateExchange>(&s)) {
      j["kind"] = "debate";
      j["participants"] = {d->proposer, d->challenger};
      j["inputs"] = {d->proposer};
      j["rounds"] = d->rounds;
    }
    steps.push_back(std::move(j));
  }
  return steps;
}

std::string dump_plan(const ExecutionPlan& plan) { return to_json(plan).dump(); }

}  // namespace topogen
