#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace topogen {

using NodeId = std::size_t;

// Decoder categories in their fixed CDF order. `None` is never stored as an
// edge; it only exists in per-pair distributions.
enum class Relation : std::uint8_t { None = 0, Conditioned = 1, Feedback = 2, Debate = 3 };

inline constexpr std::size_t kNumRelations = 3;         // materialized types
inline constexpr std::size_t kNumDecisions = 4;         // including None
inline constexpr std::array<Relation, kNumRelations> kEdgeRelations = {
    Relation::Conditioned, Relation::Feedback, Relation::Debate};

// Zero-based index among the three materialized relations.
inline std::size_t edge_index(Relation r) { return static_cast<std::size_t>(r) - 1; }

std::string_view to_string(Relation r);
Relation relation_from_string(std::string_view s);

// Bit set over materialized relations, used to filter reachability queries.
class RelationSet {
 public:
  constexpr RelationSet() = default;
  constexpr RelationSet(std::initializer_list<Relation> rs) {
    for (auto r : rs) bits_ |= bit(r);
  }
  constexpr bool contains(Relation r) const { return (bits_ & bit(r)) != 0; }

  // Conditioned + Debate: the subgraph that must stay acyclic.
  static constexpr RelationSet restricted() { return {Relation::Conditioned, Relation::Debate}; }

 private:
  static constexpr std::uint8_t bit(Relation r) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(r));
  }
  std::uint8_t bits_ = 0;
};

struct Edge {
  NodeId src = 0;
  NodeId dst = 0;
  Relation relation = Relation::Conditioned;
  double confidence = 1.0;

  bool operator==(const Edge&) const = default;
};

struct Violation {
  enum class Kind { SelfLoop, DuplicatePair, InvalidNode, InvalidRelation, BadConfidence, RestrictedCycle };
  Kind kind;
  std::string detail;
};

struct EdgeTypeDistribution {
  std::array<double, kNumRelations> p{};  // indexed by edge_index()
  bool empty = true;
};

// Directed graph over nodes 0..N-1 with typed edges, at most one per ordered
// pair. add_edge() enforces no self-loops and no duplicate pairs but does NOT
// enforce restricted acyclicity; validate() reports it.
class HeteroGraph {
 public:
  HeteroGraph() = default;
  explicit HeteroGraph(std::size_t num_nodes);

  std::size_t num_nodes() const { return num_nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  bool empty() const { return edges_.empty(); }

  void add_edge(const Edge& e);
  void add_edge(NodeId src, NodeId dst, Relation r, double confidence = 1.0) {
    add_edge(Edge{src, dst, r, confidence});
  }
  std::optional<Relation> relation(NodeId src, NodeId dst) const;

  // Out/in edges of a node in ascending order of the opposite endpoint.
  std::vector<Edge> out_edges(NodeId n) const;
  std::vector<Edge> in_edges(NodeId n) const;

  // Edges sorted by (src, dst).
  std::vector<Edge> sorted_edges() const;

  bool operator==(const HeteroGraph& o) const;

 private:
  void check_node(NodeId n) const;

  std::size_t num_nodes_ = 0;
  std::vector<Edge> edges_;
  friend std::vector<Violation> validate(const HeteroGraph& g);
};

// True iff a path src -> ... -> dst exists using only relations in `rels`.
// src == dst is always reachable.
bool reachable(const HeteroGraph& g, NodeId src, NodeId dst, RelationSet rels);

std::vector<Violation> validate(const HeteroGraph& g);

EdgeTypeDistribution edge_type_distribution(const HeteroGraph& g);

// Fixed relational structure over agent roles; only the encoder reads it.
struct PriorGraph {
  HeteroGraph graph;
  std::vector<std::string> roles;  // one label per node
};

// Topology artifact: the graph plus node roles and the query it was built for.
struct TopologyArtifact {
  std::string query_id;
  std::vector<std::string> roles;   // indexed by node id
  std::vector<NodeId> node_ids;     // nodes listed in the artifact
  HeteroGraph graph;

  // Equal when they serialize identically: same query, listed nodes with
  // their roles, and edges. Node-count padding is not part of the format.
  bool operator==(const TopologyArtifact& o) const;
};

nlohmann::ordered_json to_json(const TopologyArtifact& t);
TopologyArtifact topology_from_json(const nlohmann::json& j);

std::string dump_topology(const TopologyArtifact& t);
TopologyArtifact load_topology_file(const std::string& path);
PriorGraph load_prior_graph_file(const std::string& path);

}  // namespace topogen
