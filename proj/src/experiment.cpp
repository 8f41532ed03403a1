#include "wardrop/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "wardrop/error.hpp"
#include "wardrop/poisoning.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace wardrop {

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + p.string());
  out << text;
  if (!out) throw ValidationError("failed writing " + p.string());
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw ValidationError("unknown key \"" + key + "\" in " + where);
  }
}

fs::path resolve(const std::string& name, const fs::path& base_dir) {
  const fs::path p(name);
  if (p.is_absolute()) return p;
  if (!base_dir.empty() && fs::exists(base_dir / p)) return base_dir / p;
  const fs::path data = default_data_dir() / p;
  if (fs::exists(data)) return data;
  return p;
}

LatencyFamily latency_of(const json& j) {
  if (j.contains("constant")) return LatencyFamily::constant(j.at("constant").get<double>());
  if (j.contains("affine")) {
    const auto& a = j.at("affine");
    return LatencyFamily::affine(a.at("slope").get<double>(), a.at("intercept").get<double>());
  }
  if (j.contains("bpr")) {
    const auto& b = j.at("bpr");
    return LatencyFamily::bpr(b.at("free_flow_time").get<double>(), b.at("capacity").get<double>(),
                              b.value("alpha", 0.15), b.value("beta", 4.0));
  }
  if (j.contains("polynomial")) return LatencyFamily::polynomial(j.at("polynomial").get<std::vector<double>>());
  throw ValidationError("latency override needs one of constant, affine, bpr, polynomial");
}

SamplingMode sampling_of(const std::string& s) {
  if (s == "sphere") return SamplingMode::sphere;
  if (s == "gaussian") return SamplingMode::gaussian;
  throw ValidationError("sampling must be \"sphere\" or \"gaussian\", got \"" + s + "\"");
}

GradientMode gradient_of(const std::string& s) {
  if (s == "ift") return GradientMode::ift;
  if (s == "finite-difference") return GradientMode::finite_difference;
  if (s == "zeroth-order") return GradientMode::zeroth_order;
  throw ValidationError("gradient must be ift, finite-difference or zeroth-order, got \"" + s + "\"");
}

struct EdgeRow {
  std::size_t id;
  std::int64_t tail, head;
  double flow, time, util;
};

std::vector<EdgeRow> edge_rows(const Network& net, const Eigen::VectorXd& q) {
  std::vector<EdgeRow> rows;
  const auto lat = net.latencies();
  std::vector<double> t(net.num_edges());
  lat.values({q.data(), net.num_edges()}, t);
  for (std::size_t e = 0; e < net.num_edges(); ++e) {
    const Edge& ed = net.edges()[e];
    const double util = ed.capacity > 0.0 ? q[static_cast<Eigen::Index>(e)] / ed.capacity : std::nan("");
    rows.push_back({e + 1, net.node_labels()[static_cast<std::size_t>(ed.tail)],
                    net.node_labels()[static_cast<std::size_t>(ed.head)], q[static_cast<Eigen::Index>(e)], t[e], util});
  }
  return rows;
}

std::string util_field(double u) { return std::isnan(u) ? std::string() : num(u); }

json result_json(const EquilibriumResult& r) {
  return {{"aggregated_latency", r.aggregated_latency}, {"objective", r.objective}, {"rel_gap", r.rel_gap},
          {"iters", r.iters}, {"converged", r.converged}, {"total_demand", r.demand.sum()}};
}

double parse_double(const std::string& s) {
  if (s.empty()) return std::nan("");
  return std::stod(s);
}

}  // namespace

fs::path default_data_dir() {
  if (const char* env = std::getenv("WARDROP_DATA_DIR"); env && *env) return env;
  return "data";
}

ExperimentConfig ExperimentConfig::from_json(std::string_view text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    throw ParseError(1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n')),
                     e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  only_keys(j, {"network", "trips", "latency_overrides", "demand_split", "total_demand", "solver", "attack",
                "output_dir", "top_k", "checkpoints", "description"},
            "config");
  ExperimentConfig c;
  try {
    if (!j.contains("network") || !j.contains("trips")) throw ValidationError("config needs \"network\" and \"trips\"");
    c.network = resolve(j.at("network").get<std::string>(), base_dir);
    c.trips = resolve(j.at("trips").get<std::string>(), base_dir);
    if (j.contains("latency_overrides")) {
      for (const auto& o : j.at("latency_overrides")) {
        LatencyOverride lo;
        lo.edge_id = o.at("edge").get<std::size_t>();
        lo.latency = latency_of(o);
        c.overrides.push_back(lo);
      }
    }
    c.demand_split = j.value("demand_split", std::string("file"));
    if (c.demand_split != "file" && c.demand_split != "uniform") {
      throw ValidationError("demand_split must be \"file\" or \"uniform\"");
    }
    if (j.contains("total_demand")) c.total_demand = j.at("total_demand").get<double>();
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      only_keys(s, {"rel_gap_tol", "max_iters", "line_search_tol", "conjugate"}, "solver");
      c.solver.rel_gap_tol = s.value("rel_gap_tol", c.solver.rel_gap_tol);
      c.solver.max_iters = s.value("max_iters", c.solver.max_iters);
      c.solver.line_search_tol = s.value("line_search_tol", c.solver.line_search_tol);
      c.solver.conjugate = s.value("conjugate", c.solver.conjugate);
    }
    if (j.contains("attack")) {
      const auto& a = j.at("attack");
      only_keys(a, {"gamma", "gamma_scale", "m", "m_scale", "r", "eta0", "anneal", "outer_iters", "seed", "sampling",
                    "gradient", "baseline", "threads", "stationarity_tol", "fd_fallback", "fd_step",
                    "max_paths_per_od"},
                "attack");
      auto& l = c.learner;
      if (a.contains("gamma")) c.gamma = a.at("gamma").get<double>();
      c.gamma_scale = a.value("gamma_scale", c.gamma_scale);
      if (a.contains("m")) c.m = a.at("m").get<std::size_t>();
      c.m_scale = a.value("m_scale", c.m_scale);
      l.r = a.value("r", l.r);
      if (a.contains("eta0")) l.eta0 = a.at("eta0").get<double>();
      l.anneal = a.value("anneal", l.anneal);
      l.outer_iters = a.value("outer_iters", l.outer_iters);
      l.rng_seed = a.value("seed", l.rng_seed);
      if (a.contains("sampling")) l.sampling_mode = sampling_of(a.at("sampling").get<std::string>());
      if (a.contains("gradient")) l.gradient_mode = gradient_of(a.at("gradient").get<std::string>());
      l.baseline = a.value("baseline", l.baseline);
      l.threads = a.value("threads", l.threads);
      l.stationarity_tol = a.value("stationarity_tol", l.stationarity_tol);
      l.allow_fd_fallback = a.value("fd_fallback", l.allow_fd_fallback);
      l.fd_step = a.value("fd_step", l.fd_step);
      l.max_paths_per_od = a.value("max_paths_per_od", l.max_paths_per_od);
    }
    c.output_dir = j.value("output_dir", std::string("out"));
    c.top_k = j.value("top_k", c.top_k);
    c.checkpoints = j.value("checkpoints", c.checkpoints);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.solver.validate();
  c.learner.validate();
  if (!(c.gamma_scale >= 0.0) || !(c.m_scale > 0.0)) throw ValidationError("gamma_scale and m_scale must be positive");
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& file) {
  return from_json(read_file(file), file.parent_path());
}

Network ExperimentConfig::load_network() const {
  Network net = parse_tntp(read_file(network), read_file(trips));
  if (!overrides.empty()) {
    std::vector<LatencyFamily> lat;
    for (const Edge& e : net.edges()) lat.push_back(e.latency);
    for (const auto& o : overrides) {
      if (o.edge_id < 1 || o.edge_id > lat.size()) {
        throw ValidationError("latency override for unknown edge " + std::to_string(o.edge_id));
      }
      lat[o.edge_id - 1] = o.latency;
    }
    net = net.with_latencies(lat);
  }
  if (demand_split == "uniform" || total_demand) {
    const double total = total_demand.value_or(net.total_demand());
    std::vector<double> d = net.demand();
    if (demand_split == "uniform") {
      std::fill(d.begin(), d.end(), total / static_cast<double>(d.size()));
    } else {
      const double scale = total / net.total_demand();
      for (double& v : d) v *= scale;
    }
    net = net.with_demand(std::move(d));
  }
  return net;
}

double ExperimentConfig::resolved_gamma(std::size_t n_edges) const {
  return gamma.value_or(gamma_scale * std::sqrt(static_cast<double>(n_edges)));
}

std::size_t ExperimentConfig::resolved_m(std::size_t n_edges) const {
  if (m) return *m;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(m_scale * std::sqrt(static_cast<double>(n_edges)))));
}

// ---------------------------------------------------------------------------

int cmd_solve(const ExperimentConfig& cfg, const std::vector<std::string>& kinds,
              const std::optional<fs::path>& attack_file, std::ostream& log) {
  std::vector<std::string> todo = kinds.empty() ? std::vector<std::string>{"we", "so"} : kinds;
  for (const auto& k : todo) {
    if (k != "we" && k != "so" && k != "pwe") {
      log << "error: unknown solve kind '" << k << "' (expected we, so or pwe)\n";
      return kExitUsage;
    }
    if (k == "pwe" && !attack_file) {
      log << "error: kind pwe needs --attack <checkpoint.json>\n";
      return kExitUsage;
    }
  }
  const Network net = cfg.load_network();
  const LatencyVector lat = net.latencies();
  fs::create_directories(cfg.output_dir);

  json summary;
  summary["network"] = cfg.network.filename().string();
  summary["edges"] = net.num_edges();
  summary["od_pairs"] = net.num_od();
  summary["total_demand"] = net.total_demand();
  std::ostringstream csv;
  csv << "edge_id,tail,head,kind,flow,time,utilization\n";
  std::optional<double> s_we, s_so;
  bool all_converged = true;
  for (const auto& k : todo) {
    EquilibriumResult r;
    if (k == "we") {
      r = solve_we(net, lat, net.demand(), cfg.solver);
      if (r.converged) s_we = r.aggregated_latency;
    } else if (k == "so") {
      r = solve_so(net, lat, net.demand(), cfg.solver);
      if (r.converged) s_so = r.aggregated_latency;
    } else {
      const AttackParams a = attack_from_json(read_file(*attack_file));
      r = solve_pwe(net, lat, net.demand(), a.phi_theta, a.phi_d, cfg.solver);
    }
    all_converged = all_converged && r.converged;
    summary["results"][k] = result_json(r);
    for (const auto& row : edge_rows(net, r.flow.q)) {
      csv << row.id << ',' << row.tail << ',' << row.head << ',' << k << ',' << num(row.flow) << ',' << num(row.time)
          << ',' << util_field(row.util) << '\n';
    }
    log << k << ": S = " << num(r.aggregated_latency) << ", rel_gap = " << r.rel_gap << ", iters = " << r.iters
        << (r.converged ? "" : " (not converged)") << '\n';
  }
  if (s_we && s_so) {
    summary["poa"] = *s_we / *s_so;
    log << "PoA = " << num(*s_we / *s_so) << '\n';
  }
  summary["converged"] = all_converged;
  write_file(cfg.output_dir / "flows.csv", csv.str());
  write_file(cfg.output_dir / "summary.json", summary.dump(1));
  return kExitOk;
}

int cmd_attack(const ExperimentConfig& cfg, const std::string& mode, std::ostream& log) {
  if (mode != "zeroth" && mode != "first") {
    log << "error: attack mode must be 'zeroth' or 'first'\n";
    return kExitUsage;
  }
  const Network net = cfg.load_network();
  const double gamma = cfg.resolved_gamma(net.num_edges());
  const AttackContext ctx(net, gamma, cfg.solver);
  LearnerConfig lc = cfg.learner;
  lc.m = cfg.resolved_m(net.num_edges());
  if (mode == "zeroth") {
    lc.gradient_mode = GradientMode::zeroth_order;
  } else if (lc.gradient_mode == GradientMode::zeroth_order) {
    lc.gradient_mode = GradientMode::ift;
  }
  fs::create_directories(cfg.output_dir);
  CheckpointHook hook;
  if (cfg.checkpoints) {
    hook = [&](int t, const AttackParams& a) {
      const std::string name = "attack_iter_" + std::to_string(t) + ".json";
      write_file(cfg.output_dir / name, attack_to_json(a));
      return name;
    };
  }
  log << "attack (" << mode << ", " << gradient_mode_name(lc.gradient_mode) << "): |E| = " << net.num_edges()
      << ", |W| = " << net.num_od() << ", gamma = " << gamma << ", m = " << lc.m << ", PoA = " << ctx.poa() << '\n';
  const LearningResult res =
      lc.gradient_mode == GradientMode::zeroth_order ? run_zeroth_order(ctx, lc, hook) : run_first_order(ctx, lc, hook);

  write_file(cfg.output_dir / "trace.csv", trace_to_csv(res.trace));
  write_file(cfg.output_dir / "trace.json", trace_to_json(res.trace));
  write_file(cfg.output_dir / "attack_final.json", attack_to_json(res.attack));

  const auto so_rows = edge_rows(net, ctx.so().flow.q);
  const auto pwe_rows = edge_rows(net, res.final_eval.pwe.flow.q);
  std::ostringstream er;
  er << "edge_id,tail,head,so_flow,pwe_flow,so_time,pwe_time,so_utilization,pwe_utilization\n";
  for (std::size_t e = 0; e < so_rows.size(); ++e) {
    er << so_rows[e].id << ',' << so_rows[e].tail << ',' << so_rows[e].head << ',' << num(so_rows[e].flow) << ','
       << num(pwe_rows[e].flow) << ',' << num(so_rows[e].time) << ',' << num(pwe_rows[e].time) << ','
       << util_field(so_rows[e].util) << ',' << util_field(pwe_rows[e].util) << '\n';
  }
  write_file(cfg.output_dir / "edge_report.csv", er.str());

  json summary;
  summary["mode"] = mode;
  summary["gradient"] = gradient_mode_name(lc.gradient_mode);
  summary["sampling"] = sampling_mode_name(lc.sampling_mode);
  summary["gamma"] = gamma;
  summary["m"] = lc.m;
  summary["r"] = lc.r;
  summary["eta0"] = lc.eta(net.num_edges(), 0);
  summary["anneal"] = lc.anneal;
  summary["seed"] = lc.rng_seed;
  summary["poa"] = ctx.poa();
  summary["s_star"] = ctx.s_star();
  summary["iterations"] = res.trace.rows.size();
  summary["initial_ppoa"] = res.trace.rows.empty() ? json(nullptr) : json(res.trace.rows.front().ppoa);
  summary["final_ppoa"] = res.final_eval.eval.ppoa;
  summary["final_utility"] = res.final_eval.eval.utility;
  summary["final_cost_term"] = res.final_eval.eval.cost_term;
  summary["final_converged"] = res.final_eval.pwe.converged;
  summary["stationary"] = res.stationary;
  summary["aborted"] = res.aborted;
  if (res.aborted) summary["abort_reason"] = res.abort_reason;
  write_file(cfg.output_dir / "summary.json", summary.dump(1));

  log << "final PPoA = " << res.final_eval.eval.ppoa << " after " << res.trace.rows.size() << " iterations\n";
  if (res.aborted) {
    log << "error: learning aborted: " << res.abort_reason << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

std::size_t CsvTable::column(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ValidationError("CSV has no column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(const fs::path& file) {
  const std::string text = read_file(file);
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ls(s);
    while (std::getline(ls, field, ',')) out.push_back(field);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw ParseError(n, "expected " + std::to_string(t.header.size()) + " fields, got " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw ValidationError(file.string() + " is empty");
  return t;
}

int cmd_report(const fs::path& dir, std::size_t top_k, std::ostream& log) {
  struct Item {
    std::size_t id;
    double ratio, util;
  };
  json report;
  std::vector<Item> items;
  const fs::path edge_report = dir / "edge_report.csv";
  const fs::path flows = dir / "flows.csv";
  if (fs::exists(edge_report)) {
    const CsvTable t = read_csv(edge_report);
    const auto c_id = t.column("edge_id"), c_sf = t.column("so_flow"), c_pf = t.column("pwe_flow"),
               c_st = t.column("so_time"), c_pt = t.column("pwe_time"), c_pu = t.column("pwe_utilization");
    double s_pwe = 0.0, s_so = 0.0;
    for (const auto& r : t.rows) {
      const double so_time = parse_double(r[c_st]), pwe_time = parse_double(r[c_pt]);
      s_so += parse_double(r[c_sf]) * so_time;
      s_pwe += parse_double(r[c_pf]) * pwe_time;
      items.push_back({std::stoul(r[c_id]), pwe_time / so_time, parse_double(r[c_pu])});
    }
    report["source"] = "edge_report.csv";
    if (s_so > 0.0) report["final_ppoa"] = s_pwe / s_so;
  } else if (fs::exists(flows)) {
    const CsvTable t = read_csv(flows);
    const auto c_id = t.column("edge_id"), c_kind = t.column("kind"), c_u = t.column("utilization");
    // Prefer the system optimum when several kinds were solved.
    std::string kind = t.rows.empty() ? "" : t.rows.front()[c_kind];
    for (const auto& r : t.rows) {
      if (r[c_kind] == "so") kind = "so";
    }
    for (const auto& r : t.rows) {
      if (r[c_kind] == kind) items.push_back({std::stoul(r[c_id]), std::nan(""), parse_double(r[c_u])});
    }
    report["source"] = "flows.csv";
    report["kind"] = kind;
  } else {
    log << "error: neither edge_report.csv nor flows.csv found in " << dir.string() << '\n';
    return kExitFailure;
  }

  auto top = [&](auto key) {
    std::vector<Item> v;
    for (const auto& it : items) {
      if (!std::isnan(key(it))) v.push_back(it);
    }
    std::stable_sort(v.begin(), v.end(), [&](const Item& a, const Item& b) { return key(a) > key(b); });
    if (v.size() > top_k) v.resize(top_k);
    return v;
  };
  auto to_json_list = [](const std::vector<Item>& v) {
    auto arr = json::array();
    for (const auto& it : v) {
      json e{{"edge_id", it.id}};
      e["time_ratio"] = std::isnan(it.ratio) ? json(nullptr) : json(it.ratio);
      e["utilization"] = std::isnan(it.util) ? json(nullptr) : json(it.util);
      arr.push_back(e);
    }
    return arr;
  };
  report["top_by_utilization"] = to_json_list(top([](const Item& i) { return i.util; }));
  std::size_t overloaded = 0;
  double rmin = std::numeric_limits<double>::infinity(), rmax = -rmin;
  std::vector<Item> over;
  for (const auto& it : items) {
    if (it.util > 1.0) {
      ++overloaded;
      over.push_back(it);
    }
    if (!std::isnan(it.ratio)) {
      rmin = std::min(rmin, it.ratio);
      rmax = std::max(rmax, it.ratio);
    }
  }
  report["overloaded_count"] = overloaded;
  if (report.contains("final_ppoa")) {
    report["top_by_time_ratio"] = to_json_list(top([](const Item& i) { return i.ratio; }));
    report["time_ratio_range"] = {rmin, rmax};
    std::stable_sort(over.begin(), over.end(), [](const Item& a, const Item& b) { return a.ratio > b.ratio; });
    if (over.size() > top_k) over.resize(top_k);
    report["flagged"] = to_json_list(over);
  }
  write_file(dir / "report.json", report.dump(1));
  log << "report: " << items.size() << " edges, " << overloaded << " over capacity";
  if (report.contains("final_ppoa")) log << ", PPoA = " << report["final_ppoa"].get<double>();
  log << '\n';
  return kExitOk;
}

}  // namespace wardrop
