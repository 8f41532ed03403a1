#pragma once

// Small fixtures shared by the unit tests.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wardrop/network.hpp"

namespace fixture {

inline std::string data_path(const std::string& name) { return std::string(WARDROP_TEST_DATA_DIR) + "/" + name; }

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline wardrop::Network sioux_falls() {
  return wardrop::parse_tntp(slurp(data_path("SiouxFalls_net.tntp")), slurp(data_path("SiouxFalls_trips.tntp")));
}

inline wardrop::Network evacuation() {
  return wardrop::parse_tntp(slurp(data_path("SiouxFalls_net.tntp")), slurp(data_path("evacuation_trips.tntp")));
}

/// Links 1 -> 2, one OD pair with demand `demand`.
inline wardrop::Network parallel(const std::vector<wardrop::LatencyFamily>& lat, double demand) {
  std::vector<wardrop::Edge> edges;
  for (const auto& l : lat) edges.push_back({0, 1, l, 1.0, 1.0});
  return wardrop::Network::create({1, 2}, edges, {{0, 1}}, {demand});
}

/// Two bundles 1 -> 2 and 2 -> 3 of two links each.
inline wardrop::Network two_bundles(const std::vector<wardrop::LatencyFamily>& lat, double d1, double d2) {
  std::vector<wardrop::Edge> edges = {{0, 1, lat[0], 1.0, 1.0}, {0, 1, lat[1], 1.0, 1.0},
                                      {1, 2, lat[2], 1.0, 1.0}, {1, 2, lat[3], 1.0, 1.0}};
  return wardrop::Network::create({1, 2, 3}, edges, {{0, 1}, {1, 2}}, {d1, d2});
}

inline wardrop::Network pigou() {
  return parallel({wardrop::LatencyFamily::constant(1.0), wardrop::LatencyFamily::affine(1.0, 0.0)}, 1.0);
}

/// Diamond s=1, a=2, b=3, t=4 with edges s-a, a-t, s-b, b-t and the bridge a-b.
inline wardrop::Network braess(const std::vector<wardrop::LatencyFamily>& lat, double demand) {
  std::vector<wardrop::Edge> edges = {{0, 1, lat[0], 1.0, 1.0}, {1, 3, lat[1], 1.0, 1.0}, {0, 2, lat[2], 1.0, 1.0},
                                      {2, 3, lat[3], 1.0, 1.0}, {1, 2, lat[4], 1.0, 1.0}};
  return wardrop::Network::create({1, 2, 3, 4}, edges, {{0, 3}}, {demand});
}

}  // namespace fixture
