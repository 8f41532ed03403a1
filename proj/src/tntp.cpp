#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>

#include "wardrop/error.hpp"
#include "wardrop/network.hpp"

namespace wardrop {

namespace {

struct Line {
  std::size_t number;
  std::string_view text;
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t number = 1;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    lines.push_back({number++, text.substr(0, nl)});
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return lines;
}

double parse_number(std::string_view token, std::size_t line) {
  double v = 0.0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError(line, "expected a number, got '" + std::string(token) + "'");
  return v;
}

std::int64_t parse_id(std::string_view token, std::size_t line) {
  const double v = parse_number(token, line);
  if (v != std::floor(v)) throw ParseError(line, "expected an integer id, got '" + std::string(token) + "'");
  return static_cast<std::int64_t>(v);
}

// Splits the metadata block from the body; returns key -> (value, line).
struct Metadata {
  std::map<std::string, std::pair<std::string, std::size_t>> values;
  std::size_t body_start = 0;  // index into lines

  std::optional<std::int64_t> integer(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) return std::nullopt;
    return parse_id(trim(it->second.first), it->second.second);
  }
};

Metadata read_metadata(const std::vector<Line>& lines) {
  Metadata meta;
  bool saw_end = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto t = trim(lines[i].text);
    if (t.empty() || t.front() == '~') continue;
    if (t.front() != '<') {
      meta.body_start = i;
      return meta;
    }
    const auto close = t.find('>');
    if (close == std::string_view::npos) throw ParseError(lines[i].number, "unterminated metadata tag");
    const std::string key(trim(t.substr(1, close - 1)));
    if (key == "END OF METADATA") {
      saw_end = true;
      meta.body_start = i + 1;
      return meta;
    }
    meta.values[key] = {std::string(trim(t.substr(close + 1))), lines[i].number};
  }
  if (!saw_end) meta.body_start = lines.size();
  return meta;
}

std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) break;
    s.remove_prefix(b);
    const auto e = s.find_first_of(" \t\r");
    out.push_back(s.substr(0, e));
    if (e == std::string_view::npos) break;
    s.remove_prefix(e);
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

Network parse_tntp(std::string_view net_text, std::string_view trips_text) {
  const auto net_lines = split_lines(net_text);
  const Metadata meta = read_metadata(net_lines);
  const auto declared_nodes = meta.integer("NUMBER OF NODES");
  const auto declared_links = meta.integer("NUMBER OF LINKS");

  struct RawEdge {
    std::int64_t tail, head;
    double capacity, length, fft, b, power;
    std::size_t line;
  };
  std::vector<RawEdge> raw;
  std::int64_t max_id = 0;
  for (std::size_t i = meta.body_start; i < net_lines.size(); ++i) {
    auto t = trim(net_lines[i].text);
    if (t.empty() || t.front() == '~') continue;
    const std::size_t ln = net_lines[i].number;
    if (t.back() != ';') throw ParseError(ln, "edge row must end with ';'");
    t.remove_suffix(1);
    const auto tok = tokens(t);
    if (tok.size() < 7) throw ParseError(ln, "edge row needs at least 7 fields, got " + std::to_string(tok.size()));
    RawEdge r{parse_id(tok[0], ln),     parse_id(tok[1], ln),     parse_number(tok[2], ln), parse_number(tok[3], ln),
              parse_number(tok[4], ln), parse_number(tok[5], ln), parse_number(tok[6], ln), ln};
    for (std::size_t k = 7; k < tok.size(); ++k) (void)parse_number(tok[k], ln);
    max_id = std::max({max_id, r.tail, r.head});
    raw.push_back(r);
  }
  if (declared_links && static_cast<std::size_t>(*declared_links) != raw.size()) {
    throw ParseError(meta.values.at("NUMBER OF LINKS").second,
                     "declared " + std::to_string(*declared_links) + " links, found " + std::to_string(raw.size()));
  }
  const std::int64_t n_nodes = declared_nodes.value_or(max_id);
  if (n_nodes <= 0) throw ValidationError("network declares no nodes");

  std::vector<std::int64_t> labels(static_cast<std::size_t>(n_nodes));
  for (std::int64_t k = 0; k < n_nodes; ++k) labels[static_cast<std::size_t>(k)] = k + 1;
  auto node_index = [&](std::int64_t id, std::size_t line) -> NodeId {
    if (id < 1 || id > n_nodes) {
      throw ValidationError("line " + std::to_string(line) + ": node " + std::to_string(id) + " is not declared");
    }
    return static_cast<NodeId>(id - 1);
  };

  std::vector<Edge> edges;
  edges.reserve(raw.size());
  for (const RawEdge& r : raw) {
    if (!(r.capacity > 0.0)) {
      throw ValidationError("line " + std::to_string(r.line) + ": capacity must be positive");
    }
    Edge e;
    e.tail = node_index(r.tail, r.line);
    e.head = node_index(r.head, r.line);
    e.capacity = r.capacity;
    e.length = r.length;
    try {
      e.latency = LatencyFamily::bpr(r.fft, r.capacity, r.b, r.power);
    } catch (const ValidationError& err) {
      throw ValidationError("line " + std::to_string(r.line) + ": " + err.what());
    }
    edges.push_back(std::move(e));
  }

  // Trips.
  const auto trip_lines = split_lines(trips_text);
  const Metadata tmeta = read_metadata(trip_lines);
  std::vector<OdPair> od;
  std::vector<double> demand;
  std::optional<NodeId> origin;
  for (std::size_t i = tmeta.body_start; i < trip_lines.size(); ++i) {
    auto t = trim(trip_lines[i].text);
    if (t.empty() || t.front() == '~') continue;
    const std::size_t ln = trip_lines[i].number;
    if (t.starts_with("Origin")) {
      const auto tok = tokens(t.substr(6));
      if (tok.size() != 1) throw ParseError(ln, "malformed Origin header");
      origin = node_index(parse_id(tok[0], ln), ln);
      continue;
    }
    if (!origin) throw ParseError(ln, "trip entries before any Origin header");
    while (!t.empty()) {
      const auto semi = t.find(';');
      if (semi == std::string_view::npos) throw ParseError(ln, "trip entry must end with ';'");
      const auto entry = trim(t.substr(0, semi));
      t = trim(t.substr(semi + 1));
      if (entry.empty()) continue;
      const auto colon = entry.find(':');
      if (colon == std::string_view::npos) throw ParseError(ln, "trip entry must be 'destination : flow'");
      const NodeId dest = node_index(parse_id(trim(entry.substr(0, colon)), ln), ln);
      const double flow = parse_number(trim(entry.substr(colon + 1)), ln);
      if (flow < 0.0) throw ValidationError("line " + std::to_string(ln) + ": negative demand");
      if (flow == 0.0 || dest == *origin) continue;
      od.push_back({*origin, dest});
      demand.push_back(flow);
    }
  }
  return Network::create(std::move(labels), std::move(edges), std::move(od), std::move(demand));
}

TntpText serialize_tntp(const Network& net) {
  TntpText out;
  std::ostringstream n;
  n << "<NUMBER OF ZONES> " << net.num_nodes() << "\n"
    << "<NUMBER OF NODES> " << net.num_nodes() << "\n"
    << "<FIRST THRU NODE> 1\n"
    << "<NUMBER OF LINKS> " << net.num_edges() << "\n"
    << "<END OF METADATA>\n\n\n"
    << "~ \tinit_node\tterm_node\tcapacity\tlength\tfree_flow_time\tb\tpower\tspeed\ttoll\tlink_type\t;\n";
  const auto& labels = net.node_labels();
  for (const Edge& e : net.edges()) {
    const auto* bpr = std::get_if<Bpr>(&e.latency.kind());
    if (!bpr) throw UnsupportedError("TNTP output needs BPR latencies on every edge");
    n << '\t' << labels[static_cast<std::size_t>(e.tail)] << '\t' << labels[static_cast<std::size_t>(e.head)] << '\t'
      << fmt(e.capacity) << '\t' << fmt(e.length) << '\t' << fmt(bpr->free_flow_time) << '\t' << fmt(bpr->alpha)
      << '\t' << fmt(bpr->beta) << "\t0\t0\t1\t;\n";
  }
  out.net = n.str();

  std::ostringstream t;
  t << "<NUMBER OF ZONES> " << net.num_nodes() << "\n"
    << "<TOTAL OD FLOW> " << fmt(net.total_demand()) << "\n"
    << "<END OF METADATA>\n\n\n";
  // Keep OD order: consecutive pairs with the same origin share a block.
  const auto& od = net.od_pairs();
  for (std::size_t w = 0; w < od.size(); ++w) {
    if (w == 0 || od[w].origin != od[w - 1].origin) {
      if (w != 0) t << "\n\n";
      t << "Origin \t" << labels[static_cast<std::size_t>(od[w].origin)] << "\n";
    }
    t << "    " << labels[static_cast<std::size_t>(od[w].destination)] << " :\t" << fmt(net.demand()[w]) << ";";
  }
  t << "\n";
  out.trips = t.str();
  return out;
}

}  // namespace wardrop
