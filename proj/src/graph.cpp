#include "topogen/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "topogen/errors.hpp"

namespace topogen {

std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::None: return "none";
    case Relation::Conditioned: return "conditioned";
    case Relation::Feedback: return "feedback";
    case Relation::Debate: return "debate";
  }
  return "?";
}

Relation relation_from_string(std::string_view s) {
  if (s == "conditioned") return Relation::Conditioned;
  if (s == "feedback") return Relation::Feedback;
  if (s == "debate") return Relation::Debate;
  if (s == "none") return Relation::None;
  throw InputError("unknown relation type '" + std::string(s) + "'");
}

HeteroGraph::HeteroGraph(std::size_t num_nodes) : num_nodes_(num_nodes) {}

void HeteroGraph::check_node(NodeId n) const {
  if (n >= num_nodes_) {
    throw InputError("node id " + std::to_string(n) + " out of range (N=" +
                     std::to_string(num_nodes_) + ")");
  }
}

void HeteroGraph::add_edge(const Edge& e) {
  check_node(e.src);
  check_node(e.dst);
  if (e.src == e.dst) throw InputError("self-loop on node " + std::to_string(e.src));
  if (e.relation == Relation::None) throw InputError("cannot store a None edge");
  if (relation(e.src, e.dst)) {
    throw InputError("duplicate edge " + std::to_string(e.src) + "->" + std::to_string(e.dst));
  }
  edges_.push_back(e);
}

std::optional<Relation> HeteroGraph::relation(NodeId src, NodeId dst) const {
  for (const auto& e : edges_) {
    if (e.src == src && e.dst == dst) return e.relation;
  }
  return std::nullopt;
}

std::vector<Edge> HeteroGraph::out_edges(NodeId n) const {
  std::vector<Edge> out;
  for (const auto& e : edges_) {
    if (e.src == n) out.push_back(e);
  }
  std::sort(out.begin(), out.end(), [](const Edge& a, const Edge& b) { return a.dst < b.dst; });
  return out;
}

std::vector<Edge> HeteroGraph::in_edges(NodeId n) const {
  std::vector<Edge> in;
  for (const auto& e : edges_) {
    if (e.dst == n) in.push_back(e);
  }
  std::sort(in.begin(), in.end(), [](const Edge& a, const Edge& b) { return a.src < b.src; });
  return in;
}

std::vector<Edge> HeteroGraph::sorted_edges() const {
  auto out = edges_;
  std::sort(out.begin(), out.end(), [](const Edge& a, const Edge& b) {
    return a.src != b.src ? a.src < b.src : a.dst < b.dst;
  });
  return out;
}

bool HeteroGraph::operator==(const HeteroGraph& o) const {
  return num_nodes_ == o.num_nodes_ && sorted_edges() == o.sorted_edges();
}

bool reachable(const HeteroGraph& g, NodeId src, NodeId dst, RelationSet rels) {
  if (src >= g.num_nodes() || dst >= g.num_nodes()) {
    throw InputError("reachable: node id out of range");
  }
  if (src == dst) return true;
  std::vector<char> seen(g.num_nodes(), 0);
  std::vector<NodeId> stack{src};
  seen[src] = 1;
  while (!stack.empty()) {
    NodeId n = stack.back();
    stack.pop_back();
    for (const auto& e : g.edges()) {
      if (e.src != n || !rels.contains(e.relation) || seen[e.dst]) continue;
      if (e.dst == dst) return true;
      seen[e.dst] = 1;
      stack.push_back(e.dst);
    }
  }
  return false;
}

std::vector<Violation> validate(const HeteroGraph& g) {
  using K = Violation::Kind;
  std::vector<Violation> out;
  const auto n = g.num_nodes();
  auto name = [](const Edge& e) { return std::to_string(e.src) + "->" + std::to_string(e.dst); };

  std::vector<char> pair_seen(n * n, 0);
  for (const auto& e : g.edges_) {
    if (e.src >= n || e.dst >= n) {
      out.push_back({K::InvalidNode, "edge " + name(e) + " references a missing node"});
      continue;
    }
    if (e.src == e.dst) out.push_back({K::SelfLoop, "self-loop " + name(e)});
    if (e.relation == Relation::None) out.push_back({K::InvalidRelation, "None edge " + name(e)});
    if (!(e.confidence >= 0.0 && e.confidence <= 1.0)) {
      out.push_back({K::BadConfidence, "confidence outside [0,1] on " + name(e)});
    }
    auto& slot = pair_seen[e.src * n + e.dst];
    if (slot) out.push_back({K::DuplicatePair, "duplicate pair " + name(e)});
    slot = 1;
  }

  // Kahn's algorithm on the conditioned/debate subgraph.
  const auto restricted = RelationSet::restricted();
  std::vector<std::size_t> indeg(n, 0);
  for (const auto& e : g.edges_) {
    if (e.src < n && e.dst < n && e.src != e.dst && restricted.contains(e.relation)) ++indeg[e.dst];
  }
  std::vector<NodeId> ready;
  for (NodeId v = 0; v < n; ++v) {
    if (indeg[v] == 0) ready.push_back(v);
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    NodeId v = ready.back();
    ready.pop_back();
    ++visited;
    for (const auto& e : g.edges_) {
      if (e.src != v || e.dst >= n || e.src == e.dst || !restricted.contains(e.relation)) continue;
      if (--indeg[e.dst] == 0) ready.push_back(e.dst);
    }
  }
  if (visited != n) {
    std::string nodes;
    for (NodeId v = 0; v < n; ++v) {
      if (indeg[v] > 0) nodes += (nodes.empty() ? "" : ",") + std::to_string(v);
    }
    out.push_back({K::RestrictedCycle, "cycle in conditioned/debate subgraph through {" + nodes + "}"});
  }
  return out;
}

EdgeTypeDistribution edge_type_distribution(const HeteroGraph& g) {
  EdgeTypeDistribution d;
  if (g.edges().empty()) return d;
  d.empty = false;
  for (const auto& e : g.edges()) d.p[edge_index(e.relation)] += 1.0;
  const double total = static_cast<double>(g.edges().size());
  for (auto& v : d.p) v /= total;
  return d;
}

nlohmann::ordered_json to_json(const TopologyArtifact& t) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["query_id"] = t.query_id;
  auto nodes = nlohmann::ordered_json::array();
  for (NodeId id : t.node_ids) {
    nlohmann::ordered_json n;
    n["id"] = id;
    n["role"] = id < t.roles.size() ? t.roles[id] : std::string();
    nodes.push_back(std::move(n));
  }
  j["nodes"] = std::move(nodes);
  auto edges = nlohmann::ordered_json::array();
  for (const auto& e : t.graph.sorted_edges()) {
    nlohmann::ordered_json ej;
    ej["src"] = e.src;
    ej["dst"] = e.dst;
    ej["type"] = std::string(to_string(e.relation));
    ej["confidence"] = e.confidence;
    edges.push_back(std::move(ej));
  }
  j["edges"] = std::move(edges);
  return j;
}

TopologyArtifact topology_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw InputError("unsupported topology version");
    TopologyArtifact t;
    t.query_id = j.at("query_id").get<std::string>();
    NodeId max_id = 0;
    for (const auto& n : j.at("nodes")) {
      NodeId id = n.at("id").get<NodeId>();
      t.node_ids.push_back(id);
      max_id = std::max(max_id, id + 1);
    }
    for (const auto& e : j.at("edges")) {
      max_id = std::max({max_id, e.at("src").get<NodeId>() + 1, e.at("dst").get<NodeId>() + 1});
    }
    t.roles.assign(max_id, "");
    for (const auto& n : j.at("nodes")) t.roles[n.at("id").get<NodeId>()] = n.at("role").get<std::string>();
    t.graph = HeteroGraph(max_id);
    for (const auto& e : j.at("edges")) {
      Relation r = relation_from_string(e.at("type").get<std::string>());
      if (r == Relation::None) throw InputError("topology edge with type none");
      t.graph.add_edge(e.at("src").get<NodeId>(), e.at("dst").get<NodeId>(), r,
                       e.at("confidence").get<double>());
    }
    return t;
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("malformed topology JSON: ") + ex.what());
  }
}

bool TopologyArtifact::operator==(const TopologyArtifact& o) const {
  if (query_id != o.query_id || node_ids != o.node_ids) return false;
  for (NodeId id : node_ids) {
    const std::string a = id < roles.size() ? roles[id] : std::string();
    const std::string b = id < o.roles.size() ? o.roles[id] : std::string();
    if (a != b) return false;
  }
  return graph.sorted_edges() == o.graph.sorted_edges();
}

std::string dump_topology(const TopologyArtifact& t) { return to_json(t).dump(); }

namespace {
nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(path + ": " + ex.what());
  }
}
}  // namespace

TopologyArtifact load_topology_file(const std::string& path) {
  return topology_from_json(read_json_file(path));
}

PriorGraph load_prior_graph_file(const std::string& path) {
  auto t = load_topology_file(path);
  PriorGraph p{std::move(t.graph), std::move(t.roles)};
  if (auto v = validate(p.graph); !v.empty()) {
    throw InputError(path + ": invalid prior graph: " + v.front().detail);
  }
  return p;
}

}  // namespace topogen
