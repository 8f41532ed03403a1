#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <string>

#include "helpers.hpp"
#include "oracles.hpp"
#include "wardrop/equilibrium.hpp"
#include "wardrop/error.hpp"
#include "wardrop/network.hpp"

using namespace wardrop;

namespace {

const char* kTinyNet =
    "<NUMBER OF NODES> 3\n<NUMBER OF LINKS> 3\n<END OF METADATA>\n"
    "~ init term cap len fft b power ;\n"
    "1 2 10 1 1 0.15 4 ;\n"
    "2 3 10 1 2 0.15 4 ;\n"
    "1 3 5 1 4 0.15 4 ;\n";
const char* kTinyTrips =
    "<NUMBER OF ZONES> 3\n<END OF METADATA>\n"
    "Origin 1\n   3 : 7.5;  2 : 0.0;\n";

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("Sioux Falls loads with its published dimensions") {
    const Network net = fixture::sioux_falls();
    CHECK(net.num_nodes() == 24);
    CHECK(net.num_edges() == 76);
    CHECK(net.num_od() == 528);
    CHECK(net.total_demand() == doctest::Approx(360600.0));
    const Edge& e1 = net.edges()[0];
    CHECK(net.node_labels()[static_cast<std::size_t>(e1.tail)] == 1);
    CHECK(net.node_labels()[static_cast<std::size_t>(e1.head)] == 2);
    CHECK(e1.capacity == doctest::Approx(25900.20064));
    CHECK(eval(e1.latency, 0.0) == doctest::Approx(6.0));
  }

  TEST_CASE("evacuation trips: four origins, ten shelters") {
    const Network net = fixture::evacuation();
    CHECK(net.num_od() == 40);
    CHECK(net.total_demand() == doctest::Approx(34200.0));
    std::set<std::int64_t> origins;
    for (NodeId o : net.origins()) origins.insert(net.node_labels()[static_cast<std::size_t>(o)]);
    CHECK(origins == std::set<std::int64_t>{14, 15, 22, 23});
  }

  TEST_CASE("TNTP round trip preserves the network") {
    const Network net = fixture::sioux_falls();
    const TntpText text = serialize_tntp(net);
    const Network back = parse_tntp(text.net, text.trips);
    CHECK(back == net);
  }

  TEST_CASE("zero-demand entries are dropped and BPR latencies attached") {
    const Network net = parse_tntp(kTinyNet, kTinyTrips);
    CHECK(net.num_od() == 1);
    CHECK(net.demand()[0] == 7.5);
    CHECK(eval(net.edges()[1].latency, 10.0) == doctest::Approx(2.0 * 1.15));
  }

  TEST_CASE("malformed input reports the offending line") {
    std::string bad = kTinyNet;
    bad.replace(bad.find("2 3 10 1 2 0.15 4 ;"), 19, "2 3 10 1 2 ;");
    try {
      (void)parse_tntp(bad, kTinyTrips);
      FAIL("expected a ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 6);
    }
    std::string bad_trips = kTinyTrips;
    bad_trips.replace(bad_trips.find("3 : 7.5;"), 8, "3 : x;");
    CHECK_THROWS_AS(parse_tntp(kTinyNet, bad_trips), ParseError);
    std::string count = kTinyNet;
    count.replace(count.find("<NUMBER OF LINKS> 3"), 19, "<NUMBER OF LINKS> 4");
    CHECK_THROWS_AS(parse_tntp(count, kTinyTrips), ParseError);
    std::string cap = kTinyNet;
    cap.replace(cap.find("1 3 5 1 4"), 9, "1 3 0 1 4");
    CHECK_THROWS_AS(parse_tntp(cap, kTinyTrips), ValidationError);
  }

  TEST_CASE("structural validation") {
    const auto l = LatencyFamily::affine(1.0, 1.0);
    CHECK_THROWS_AS(Network::create({1, 2}, {{0, 0, l, 1.0, 1.0}}, {{0, 1}}, {1.0}), ValidationError);
    CHECK_THROWS_AS(Network::create({1, 2}, {{0, 1, l, 1.0, 1.0}}, {{0, 1}}, {-1.0}), ValidationError);
    CHECK_THROWS_AS(Network::create({1, 2}, {{0, 1, l, 1.0, 1.0}}, {{1, 0}}, {1.0}), UnreachableError);
  }

  TEST_CASE("Dijkstra distances match Bellman-Ford on random costs") {
    const Network net = fixture::sioux_falls();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> cost(net.num_edges());
      for (auto& c : cost) c = trial % 5 == 0 ? std::floor(u(rng)) : u(rng);  // integer costs force ties
      for (NodeId o : {NodeId{0}, NodeId{9}, NodeId{23}}) {
        const auto tree = shortest_paths(net, cost, o);
        const auto ref = oracle::bellman_ford(net, cost, o);
        for (std::size_t v = 0; v < net.num_nodes(); ++v) {
          CHECK(tree.dist[v] == doctest::Approx(ref[v]).epsilon(1e-12));
          double along = 0.0;
          for (EdgeId e : tree.path_to(net, static_cast<NodeId>(v))) along += cost[static_cast<std::size_t>(e)];
          CHECK(along == doctest::Approx(ref[v]).epsilon(1e-12));
        }
      }
    }
  }

  TEST_CASE("path enumeration agrees with depth-first search") {
    const auto l = LatencyFamily::affine(1.0, 1.0);
    const Network braess = fixture::braess({l, l, l, l, l}, 1.0);
    const auto all = oracle::dfs_paths(braess, 0, 3);
    const PathSet ps = enumerate_paths(braess, 16);
    CHECK(ps.exact);
    CHECK(ps.size() == all.size());
    for (const auto& p : all) CHECK(ps.find(p) >= 0);
    CHECK((ps.lambda.colwise().sum().array() == 1.0).all());
    for (std::size_t k = 0; k < ps.size(); ++k) {
      CHECK(ps.delta.col(static_cast<Eigen::Index>(k)).sum() == static_cast<double>(ps.paths[k].size()));
    }

    // Truncation keeps the cheapest paths by free-flow time and says so.
    const Network sf = fixture::sioux_falls().with_demand(std::vector<double>(528, 1.0));
    const PathSet few = enumerate_paths(sf, 3);
    CHECK_FALSE(few.exact);
    const auto fft = sf.free_flow_times();
    for (std::size_t w = 0; w < 40; ++w) {
      const auto& idx = few.by_od[w];
      REQUIRE(idx.size() == 3);
      double prev = -1.0;
      for (std::size_t p : idx) {
        double t = 0.0;
        for (EdgeId e : few.paths[p]) t += fft[static_cast<std::size_t>(e)];
        CHECK(t >= prev);
        prev = t;
      }
      const auto tree = shortest_paths(sf, fft, sf.od_pairs()[w].origin);
      double best = 0.0;
      for (EdgeId e : few.paths[idx[0]]) best += fft[static_cast<std::size_t>(e)];
      CHECK(best == doctest::Approx(tree.dist[static_cast<std::size_t>(sf.od_pairs()[w].destination)]));
    }
  }

  TEST_CASE("all-or-nothing loading conserves flow at every node") {
    const Network net = fixture::sioux_falls();
    const auto fft = net.free_flow_times();
    const Eigen::VectorXd y = all_or_nothing(net, fft, net.demand());
    std::vector<double> balance(net.num_nodes(), 0.0);
    for (std::size_t e = 0; e < net.num_edges(); ++e) {
      balance[static_cast<std::size_t>(net.edges()[e].tail)] -= y[static_cast<Eigen::Index>(e)];
      balance[static_cast<std::size_t>(net.edges()[e].head)] += y[static_cast<Eigen::Index>(e)];
    }
    std::vector<double> expect(net.num_nodes(), 0.0);
    for (std::size_t w = 0; w < net.num_od(); ++w) {
      expect[static_cast<std::size_t>(net.od_pairs()[w].origin)] -= net.demand()[w];
      expect[static_cast<std::size_t>(net.od_pairs()[w].destination)] += net.demand()[w];
    }
    for (std::size_t v = 0; v < net.num_nodes(); ++v) CHECK(balance[v] == doctest::Approx(expect[v]).epsilon(1e-12));
  }

  TEST_CASE("hop diameter") {
    const auto l = LatencyFamily::affine(1.0, 1.0);
    CHECK(fixture::braess({l, l, l, l, l}, 1.0).hop_diameter() == 2);
  }
}
