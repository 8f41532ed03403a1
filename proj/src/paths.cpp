#include <algorithm>
#include <limits>
#include <queue>
#include <set>
#include <string>

#include "wardrop/error.hpp"
#include "wardrop/network.hpp"

namespace wardrop {

PathSet PathSet::build(const Network& net, std::vector<std::pair<std::size_t, std::vector<EdgeId>>> paths,
                       bool exact) {
  PathSet ps;
  ps.exact = exact;
  ps.by_od.assign(net.num_od(), {});
  ps.lambda = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(net.num_od()), static_cast<Eigen::Index>(paths.size()));
  ps.delta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(net.num_edges()), static_cast<Eigen::Index>(paths.size()));
  for (std::size_t p = 0; p < paths.size(); ++p) {
    auto& [w, edges] = paths[p];
    if (w >= net.num_od()) throw ValidationError("path references an unknown OD pair");
    NodeId at = net.od_pairs()[w].origin;
    for (EdgeId e : edges) {
      if (e < 0 || static_cast<std::size_t>(e) >= net.num_edges() || net.edge(e).tail != at) {
        throw ValidationError("path " + std::to_string(p) + " is not a connected edge sequence");
      }
      at = net.edge(e).head;
      ps.delta(e, static_cast<Eigen::Index>(p)) = 1.0;
    }
    if (at != net.od_pairs()[w].destination) throw ValidationError("path " + std::to_string(p) + " ends off its destination");
    ps.lambda(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(p)) = 1.0;
    ps.by_od[w].push_back(p);
    ps.od_of_path.push_back(w);
    ps.paths.push_back(std::move(edges));
  }
  return ps;
}

std::ptrdiff_t PathSet::find(std::span<const EdgeId> edges) const {
  for (std::size_t p = 0; p < paths.size(); ++p) {
    if (std::equal(paths[p].begin(), paths[p].end(), edges.begin(), edges.end())) return static_cast<std::ptrdiff_t>(p);
  }
  return -1;
}

namespace {

// Dijkstra from `source` to `target` avoiding banned nodes and edges.
std::vector<EdgeId> restricted_shortest(const Network& net, std::span<const double> cost, NodeId source, NodeId target,
                                        const std::vector<char>& banned_node, const std::vector<char>& banned_edge) {
  const std::size_t n = net.num_nodes();
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<EdgeId> pred(n, -1);
  std::vector<char> settled(n, 0);
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[static_cast<std::size_t>(source)] = 0.0;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (settled[static_cast<std::size_t>(u)]) continue;
    settled[static_cast<std::size_t>(u)] = 1;
    if (u == target) break;
    for (EdgeId e : net.out_edges(u)) {
      const auto v = static_cast<std::size_t>(net.edge(e).head);
      if (banned_edge[static_cast<std::size_t>(e)] || banned_node[v] || settled[v]) continue;
      const double nd = d + cost[static_cast<std::size_t>(e)];
      if (nd < dist[v] || (nd == dist[v] && e < pred[v])) {
        dist[v] = nd;
        pred[v] = e;
        heap.emplace(nd, static_cast<NodeId>(v));
      }
    }
  }
  if (!settled[static_cast<std::size_t>(target)]) return {};
  std::vector<EdgeId> path;
  for (NodeId at = target; at != source;) {
    const EdgeId e = pred[static_cast<std::size_t>(at)];
    path.push_back(e);
    at = net.edge(e).tail;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

struct Candidate {
  double cost;
  std::vector<EdgeId> edges;
  bool operator<(const Candidate& o) const { return cost != o.cost ? cost < o.cost : edges < o.edges; }
};

double path_cost(std::span<const double> cost, const std::vector<EdgeId>& p) {
  double c = 0.0;
  for (EdgeId e : p) c += cost[static_cast<std::size_t>(e)];
  return c;
}

// Yen's algorithm; returns up to `limit` simple paths in nondecreasing cost.
std::vector<std::vector<EdgeId>> yen(const Network& net, std::span<const double> cost, NodeId source, NodeId target,
                                     std::size_t limit) {
  std::vector<std::vector<EdgeId>> accepted;
  std::vector<char> banned_node(net.num_nodes(), 0);
  std::vector<char> banned_edge(net.num_edges(), 0);
  auto first = restricted_shortest(net, cost, source, target, banned_node, banned_edge);
  if (first.empty()) return accepted;
  accepted.push_back(std::move(first));
  std::set<Candidate> pool;
  std::set<std::vector<EdgeId>> known{accepted.front()};

  while (accepted.size() < limit) {
    const std::vector<EdgeId> last = accepted.back();
    NodeId spur = source;
    for (std::size_t i = 0; i < last.size(); ++i) {
      std::fill(banned_node.begin(), banned_node.end(), 0);
      std::fill(banned_edge.begin(), banned_edge.end(), 0);
      for (const auto& p : accepted) {
        if (p.size() > i && std::equal(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(i), last.begin())) {
          banned_edge[static_cast<std::size_t>(p[i])] = 1;
        }
      }
      // Root path nodes other than the spur node are off limits.
      NodeId at = source;
      for (std::size_t k = 0; k < i; ++k) {
        banned_node[static_cast<std::size_t>(at)] = 1;
        at = net.edge(last[k]).head;
      }
      auto tail = restricted_shortest(net, cost, spur, target, banned_node, banned_edge);
      if (!tail.empty()) {
        std::vector<EdgeId> full(last.begin(), last.begin() + static_cast<std::ptrdiff_t>(i));
        full.insert(full.end(), tail.begin(), tail.end());
        if (known.insert(full).second) pool.insert({path_cost(cost, full), std::move(full)});
      }
      spur = net.edge(last[i]).head;
    }
    if (pool.empty()) break;
    accepted.push_back(pool.begin()->edges);
    pool.erase(pool.begin());
  }
  return accepted;
}

}  // namespace

PathSet enumerate_paths(const Network& net, std::size_t max_paths_per_od) {
  if (max_paths_per_od < 1) throw DomainError("max_paths_per_od must be at least 1");
  const auto cost = net.free_flow_times();
  std::vector<std::pair<std::size_t, std::vector<EdgeId>>> all;
  bool exact = true;
  for (std::size_t w = 0; w < net.num_od(); ++w) {
    const auto& od = net.od_pairs()[w];
    auto found = yen(net, cost, od.origin, od.destination, max_paths_per_od + 1);
    if (found.empty()) {
      throw UnreachableError("OD pair " + std::to_string(net.node_labels()[static_cast<std::size_t>(od.origin)]) +
                             " -> " + std::to_string(net.node_labels()[static_cast<std::size_t>(od.destination)]) +
                             " has no path");
    }
    if (found.size() > max_paths_per_od) {
      exact = false;
      found.resize(max_paths_per_od);
    }
    for (auto& p : found) all.emplace_back(w, std::move(p));
  }
  return PathSet::build(net, std::move(all), exact);
}

}  // namespace wardrop
