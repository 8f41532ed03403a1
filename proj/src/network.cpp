#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <string>

#include "wardrop/error.hpp"
#include "wardrop/network.hpp"

namespace wardrop {

namespace {

std::string label_of(const Network& net, NodeId n) {
  return std::to_string(net.node_labels()[static_cast<std::size_t>(n)]);
}

}  // namespace

Network Network::create(std::vector<std::int64_t> node_labels, std::vector<Edge> edges,
                        std::vector<OdPair> od_pairs, std::vector<double> demand) {
  const auto n = static_cast<NodeId>(node_labels.size());
  if (n == 0) throw ValidationError("network has no nodes");
  if (od_pairs.size() != demand.size()) throw ValidationError("demand vector length differs from OD pair count");
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const Edge& ed = edges[e];
    if (ed.tail < 0 || ed.tail >= n || ed.head < 0 || ed.head >= n) {
      throw ValidationError("edge " + std::to_string(e + 1) + " references an unknown node");
    }
    if (ed.tail == ed.head) throw ValidationError("edge " + std::to_string(e + 1) + " is a self-loop");
  }
  for (std::size_t w = 0; w < od_pairs.size(); ++w) {
    const OdPair& od = od_pairs[w];
    if (od.origin < 0 || od.origin >= n || od.destination < 0 || od.destination >= n) {
      throw ValidationError("OD pair " + std::to_string(w) + " references an unknown node");
    }
    if (od.origin == od.destination) throw ValidationError("OD pair " + std::to_string(w) + " has origin == destination");
    if (!(demand[w] >= 0.0) || !std::isfinite(demand[w])) {
      throw ValidationError("demand of OD pair " + std::to_string(w) + " must be finite and nonnegative");
    }
  }

  Network net;
  net.labels_ = std::move(node_labels);
  net.edges_ = std::move(edges);
  net.od_ = std::move(od_pairs);
  net.demand_ = std::move(demand);
  net.index();

  // Weak connectivity.
  std::vector<std::vector<NodeId>> undirected(static_cast<std::size_t>(n));
  for (const Edge& e : net.edges_) {
    undirected[static_cast<std::size_t>(e.tail)].push_back(e.head);
    undirected[static_cast<std::size_t>(e.head)].push_back(e.tail);
  }
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<NodeId> stack{0};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const NodeId u = stack.back();
    stack.pop_back();
    for (NodeId v : undirected[static_cast<std::size_t>(u)]) {
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        ++reached;
        stack.push_back(v);
      }
    }
  }
  if (reached != static_cast<std::size_t>(n)) throw ValidationError("network is not weakly connected");

  // Reachability of every OD pair, with unit costs.
  const std::vector<double> unit(net.edges_.size(), 1.0);
  for (NodeId o : net.origins_) (void)shortest_paths(net, unit, o);
  return net;
}

void Network::index() {
  const std::size_t n = labels_.size();
  out_offsets_.assign(n + 1, 0);
  for (const Edge& e : edges_) ++out_offsets_[static_cast<std::size_t>(e.tail) + 1];
  std::partial_sum(out_offsets_.begin(), out_offsets_.end(), out_offsets_.begin());
  out_list_.assign(edges_.size(), 0);
  std::vector<std::size_t> cursor(out_offsets_.begin(), out_offsets_.end() - 1);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    out_list_[cursor[static_cast<std::size_t>(edges_[e].tail)]++] = static_cast<EdgeId>(e);
  }

  origins_.clear();
  od_by_origin_.clear();
  std::vector<std::size_t> order(od_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return od_[a].origin < od_[b].origin; });
  for (std::size_t w : order) {
    if (origins_.empty() || origins_.back() != od_[w].origin) {
      origins_.push_back(od_[w].origin);
      od_by_origin_.emplace_back();
    }
    od_by_origin_.back().push_back(w);
  }
}

double Network::total_demand() const noexcept { return std::accumulate(demand_.begin(), demand_.end(), 0.0); }

std::span<const EdgeId> Network::out_edges(NodeId node) const {
  const auto i = static_cast<std::size_t>(node);
  return {out_list_.data() + out_offsets_[i], out_offsets_[i + 1] - out_offsets_[i]};
}

LatencyVector Network::latencies() const {
  std::vector<LatencyFamily> fs;
  fs.reserve(edges_.size());
  for (const Edge& e : edges_) fs.push_back(e.latency);
  return LatencyVector(std::move(fs));
}

std::vector<double> Network::free_flow_times() const {
  std::vector<double> t;
  t.reserve(edges_.size());
  for (const Edge& e : edges_) t.push_back(eval(e.latency, 0.0));
  return t;
}

std::size_t Network::hop_diameter() const {
  std::size_t diameter = 0;
  const std::size_t n = labels_.size();
  std::vector<std::size_t> hops(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(hops.begin(), hops.end(), std::numeric_limits<std::size_t>::max());
    std::queue<NodeId> frontier;
    hops[s] = 0;
    frontier.push(static_cast<NodeId>(s));
    while (!frontier.empty()) {
      const NodeId u = frontier.front();
      frontier.pop();
      for (EdgeId e : out_edges(u)) {
        const auto v = static_cast<std::size_t>(edges_[static_cast<std::size_t>(e)].head);
        if (hops[v] == std::numeric_limits<std::size_t>::max()) {
          hops[v] = hops[static_cast<std::size_t>(u)] + 1;
          diameter = std::max(diameter, hops[v]);
          frontier.push(static_cast<NodeId>(v));
        }
      }
    }
  }
  return diameter;
}

Network Network::with_demand(std::vector<double> demand) const {
  return create(labels_, edges_, od_, std::move(demand));
}

Network Network::with_latencies(const std::vector<LatencyFamily>& latencies) const {
  if (latencies.size() != edges_.size()) throw ValidationError("one latency family per edge is required");
  auto edges = edges_;
  for (std::size_t e = 0; e < edges.size(); ++e) edges[e].latency = latencies[e];
  return create(labels_, std::move(edges), od_, demand_);
}

// ---------------------------------------------------------------------------

std::vector<EdgeId> ShortestPathTree::path_to(const Network& net, NodeId node) const {
  std::vector<EdgeId> path;
  while (node != origin) {
    const EdgeId e = pred[static_cast<std::size_t>(node)];
    if (e < 0) return {};
    path.push_back(e);
    node = net.edge(e).tail;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

void shortest_paths_into(const Network& net, std::span<const double> edge_costs, NodeId origin,
                         ShortestPathTree& tree) {
  const std::size_t n = net.num_nodes();
  constexpr double inf = std::numeric_limits<double>::infinity();
  tree.origin = origin;
  tree.dist.assign(n, inf);
  tree.pred.assign(n, -1);
  std::vector<char> settled(n, 0);
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  tree.dist[static_cast<std::size_t>(origin)] = 0.0;
  heap.emplace(0.0, origin);
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    const auto ui = static_cast<std::size_t>(u);
    if (settled[ui]) continue;
    settled[ui] = 1;
    for (EdgeId e : net.out_edges(u)) {
      const auto v = static_cast<std::size_t>(net.edge(e).head);
      if (settled[v]) continue;
      const double nd = d + edge_costs[static_cast<std::size_t>(e)];
      if (nd < tree.dist[v]) {
        tree.dist[v] = nd;
        tree.pred[v] = e;
        heap.emplace(nd, static_cast<NodeId>(v));
      } else if (nd == tree.dist[v] && e < tree.pred[v]) {
        tree.pred[v] = e;
      }
    }
  }
}

ShortestPathTree shortest_paths(const Network& net, std::span<const double> edge_costs, NodeId origin) {
  if (edge_costs.size() != net.num_edges()) throw ValidationError("edge cost vector has the wrong length");
  for (double c : edge_costs) {
    if (!(c >= 0.0)) throw DomainError("shortest_paths: edge costs must be nonnegative");
  }
  if (origin < 0 || static_cast<std::size_t>(origin) >= net.num_nodes()) throw ValidationError("unknown origin node");
  ShortestPathTree tree;
  shortest_paths_into(net, edge_costs, origin, tree);
  const auto& origins = net.origins();
  const auto it = std::lower_bound(origins.begin(), origins.end(), origin);
  if (it != origins.end() && *it == origin) {
    for (std::size_t w : net.od_by_origin()[static_cast<std::size_t>(it - origins.begin())]) {
      const NodeId dst = net.od_pairs()[w].destination;
      if (!std::isfinite(tree.dist[static_cast<std::size_t>(dst)])) {
        throw UnreachableError("no path from node " + label_of(net, origin) + " to node " + label_of(net, dst));
      }
    }
  }
  return tree;
}

}  // namespace wardrop
