#pragma once

// Directed road network with OD demand, TNTP ingestion, path enumeration and
// shortest-path trees.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "wardrop/latency.hpp"

namespace wardrop {

using NodeId = std::int32_t;
using EdgeId = std::int32_t;

struct Edge {
  NodeId tail = 0;
  NodeId head = 0;
  LatencyFamily latency = LatencyFamily::affine(1.0, 0.0);
  double capacity = 0.0;  ///< 0 when the source format has no capacity
  double length = 0.0;

  bool operator==(const Edge&) const = default;
};

struct OdPair {
  NodeId origin = 0;
  NodeId destination = 0;

  bool operator==(const OdPair&) const = default;
};

/// Immutable once built. Node ids are contiguous 0-based indices; the labels
/// from the input file are kept for reporting.
class Network {
 public:
  /// Validates: no self-loops, weakly connected, nonnegative demand, every OD
  /// pair reachable. Throws ValidationError / UnreachableError.
  static Network create(std::vector<std::int64_t> node_labels, std::vector<Edge> edges,
                        std::vector<OdPair> od_pairs, std::vector<double> demand);

  std::size_t num_nodes() const noexcept { return labels_.size(); }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  std::size_t num_od() const noexcept { return od_.size(); }

  const std::vector<std::int64_t>& node_labels() const noexcept { return labels_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const Edge& edge(EdgeId e) const { return edges_[static_cast<std::size_t>(e)]; }
  const std::vector<OdPair>& od_pairs() const noexcept { return od_; }
  const std::vector<double>& demand() const noexcept { return demand_; }
  double total_demand() const noexcept;

  /// Outgoing edge ids of `node`, in increasing edge-id order.
  std::span<const EdgeId> out_edges(NodeId node) const;

  /// Distinct origins in increasing node order, and the OD indices rooted at each.
  const std::vector<NodeId>& origins() const noexcept { return origins_; }
  const std::vector<std::vector<std::size_t>>& od_by_origin() const noexcept { return od_by_origin_; }

  /// The latency families in edge order.
  LatencyVector latencies() const;
  std::vector<double> free_flow_times() const;

  /// Hop diameter of the underlying directed graph (longest finite BFS distance).
  std::size_t hop_diameter() const;

  /// Same topology and OD pairs with a different demand vector.
  Network with_demand(std::vector<double> demand) const;
  /// Same topology with different latency families (one per edge).
  Network with_latencies(const std::vector<LatencyFamily>& latencies) const;

  bool operator==(const Network& other) const {
    return labels_ == other.labels_ && edges_ == other.edges_ && od_ == other.od_ && demand_ == other.demand_;
  }

 private:
  Network() = default;
  void index();

  std::vector<std::int64_t> labels_;
  std::vector<Edge> edges_;
  std::vector<OdPair> od_;
  std::vector<double> demand_;
  std::vector<std::size_t> out_offsets_;
  std::vector<EdgeId> out_list_;
  std::vector<NodeId> origins_;
  std::vector<std::vector<std::size_t>> od_by_origin_;
};

// ---------------------------------------------------------------------------
// TNTP

/// Parses a TNTP network file and trips file. Edges get BPR latencies
/// (t_f = free-flow time, C = capacity, alpha = b, beta = power). Zero-demand
/// entries are dropped. Throws ParseError (with line) or ValidationError.
Network parse_tntp(std::string_view net_text, std::string_view trips_text);

struct TntpText {
  std::string net;
  std::string trips;
};

/// Writes a network with BPR latencies back out in TNTP form.
TntpText serialize_tntp(const Network& net);

// ---------------------------------------------------------------------------
// Paths

struct PathSet {
  std::vector<std::vector<EdgeId>> paths;     ///< edge sequences
  std::vector<std::size_t> od_of_path;        ///< OD index of each path
  std::vector<std::vector<std::size_t>> by_od;  ///< path indices of each OD pair
  Eigen::MatrixXd lambda;                     ///< |W| x |P| path-demand incidence
  Eigen::MatrixXd delta;                      ///< |E| x |P| path-edge incidence
  bool exact = true;                          ///< false when enumeration was truncated

  std::size_t size() const noexcept { return paths.size(); }

  /// Builds incidence matrices for the given (OD index, edge sequence) list.
  static PathSet build(const Network& net, std::vector<std::pair<std::size_t, std::vector<EdgeId>>> paths,
                       bool exact);
  /// Index of the path with exactly this edge sequence, or -1.
  std::ptrdiff_t find(std::span<const EdgeId> edges) const;
};

/// Simple paths of each OD pair in nondecreasing free-flow time (ties broken by
/// lexicographic edge sequence), at most `max_paths_per_od` per pair.
PathSet enumerate_paths(const Network& net, std::size_t max_paths_per_od);

struct ShortestPathTree {
  NodeId origin = 0;
  std::vector<double> dist;   ///< +inf when unreachable
  std::vector<EdgeId> pred;   ///< -1 at the origin and unreachable nodes

  /// Edge ids from the origin to `node` (empty when node == origin).
  std::vector<EdgeId> path_to(const Network& net, NodeId node) const;
};

/// Dijkstra from `origin` with nonnegative `edge_costs`. Among equal-distance
/// predecessors the smallest edge id wins. Throws UnreachableError if an OD
/// destination rooted at `origin` cannot be reached, DomainError on negative costs.
ShortestPathTree shortest_paths(const Network& net, std::span<const double> edge_costs, NodeId origin);

/// Same as shortest_paths but writes into `tree`, reusing its storage and
/// skipping the reachability check.
void shortest_paths_into(const Network& net, std::span<const double> edge_costs, NodeId origin,
                         ShortestPathTree& tree);

}  // namespace wardrop
