#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "helpers.hpp"
#include "wardrop/error.hpp"
#include "wardrop/experiment.hpp"
#include "wardrop/poisoning.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wardrop;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wardrop_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(WARDROP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json load_json(const fs::path& p) { return json::parse(fixture::slurp(p.string())); }

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

/// Two links between nodes 1 and 2 with the given latency overrides.
fs::path two_link_config(const fs::path& dir, const json& overrides, const json& attack = json::object()) {
  json c;
  c["network"] = fixture::data_path("pigou_net.tntp");
  c["trips"] = fixture::data_path("pigou_trips.tntp");
  c["latency_overrides"] = overrides;
  c["solver"] = {{"rel_gap_tol", 1e-10}, {"max_iters", 50000}};
  if (!attack.empty()) c["attack"] = attack;
  const fs::path p = dir / "config.json";
  write(p, c.dump(1));
  return p;
}

std::map<std::string, std::vector<double>> flows_by_kind(const fs::path& csv) {
  const CsvTable t = read_csv(csv);
  std::map<std::string, std::vector<double>> out;
  for (const auto& r : t.rows) out[r[t.column("kind")]].push_back(std::stod(r[t.column("flow")]));
  return out;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("Pigou fixture: PoA 4/3 in the summary") {
    const auto out = scratch("pigou");
    REQUIRE(run("solve -c " + fixture::data_path("pigou.json") + " -k we -k so -o " + out.string()) == 0);
    const json s = load_json(out / "summary.json");
    CHECK(s["poa"].get<double>() == doctest::Approx(4.0 / 3.0).epsilon(1e-6));
    CHECK(s["results"]["we"]["converged"].get<bool>());
    const CsvTable t = read_csv(out / "flows.csv");
    CHECK(t.header == std::vector<std::string>{"edge_id", "tail", "head", "kind", "flow", "time", "utilization"});
    CHECK(t.rows.size() == 4);
  }

  TEST_CASE("Sioux Falls WE through the command line") {
    const auto out = scratch("sf");
    json c;
    c["network"] = fixture::data_path("SiouxFalls_net.tntp");
    c["trips"] = fixture::data_path("SiouxFalls_trips.tntp");
    write(out / "sf.json", c.dump());
    REQUIRE(run("solve -c " + (out / "sf.json").string() + " -k we -o " + out.string()) == 0);
    const json s = load_json(out / "summary.json");
    CHECK(s["results"]["we"]["rel_gap"].get<double>() <= 1e-6);
    CHECK_FALSE(s.contains("poa"));
  }

  TEST_CASE("PWE with the identity checkpoint reproduces the WE flows") {
    const auto out = scratch("pwe");
    write(out / "identity.json", attack_to_json(identity_attack(76, 40)));
    REQUIRE(run("solve -c " + fixture::data_path("evacuation.json") + " -k we -k pwe --attack " +
                (out / "identity.json").string() + " -o " + out.string()) == 0);
    const auto f = flows_by_kind(out / "flows.csv");
    REQUIRE(f.at("we").size() == 76);
    for (std::size_t e = 0; e < 76; ++e) CHECK(std::abs(f.at("we")[e] - f.at("pwe")[e]) <= 1e-6);
    CHECK(run("solve -c " + fixture::data_path("evacuation.json") + " -k pwe -o " + out.string()) == 1);
  }

  TEST_CASE("report on SO-only artifacts omits the PPoA") {
    const auto out = scratch("so_only");
    REQUIRE(run("solve -c " + fixture::data_path("evacuation.json") + " -k so -o " + out.string()) == 0);
    REQUIRE(run("report " + out.string() + " -k 3") == 0);
    const json r = load_json(out / "report.json");
    CHECK_FALSE(r.contains("final_ppoa"));
    CHECK(r["top_by_utilization"].size() == 3);
    const auto& top = r["top_by_utilization"];
    CHECK(top[0]["utilization"].get<double>() >= top[1]["utilization"].get<double>());
  }

  TEST_CASE("identity-attack artifacts give unit time ratios when WE = SO") {
    // Monomial latencies of one degree make the equilibrium optimal.
    const auto out = scratch("identity_ratio");
    const auto cfg = two_link_config(out, json::array({{{"edge", 1}, {"affine", {{"slope", 1.0}, {"intercept", 0.0}}}},
                                                       {{"edge", 2}, {"affine", {{"slope", 2.0}, {"intercept", 0.0}}}}}));
    REQUIRE(run("attack -c " + cfg.string() + " --iters 0 -o " + out.string()) == 0);
    REQUIRE(run("report " + out.string()) == 0);
    const json r = load_json(out / "report.json");
    CHECK(r["final_ppoa"].get<double>() == doctest::Approx(1.0).epsilon(1e-8));
    for (const auto& e : r["top_by_time_ratio"]) CHECK(e["time_ratio"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r["time_ratio_range"][0].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r["time_ratio_range"][1].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
  }

  TEST_CASE("gamma = 0 attack stays at the identity") {
    const auto out = scratch("gamma0");
    const json lat = json::array({{{"edge", 1}, {"bpr", {{"free_flow_time", 1.0}, {"capacity", 1.0}, {"alpha", 1.0}, {"beta", 4.0}}}},
                                  {{"edge", 2}, {"bpr", {{"free_flow_time", 1.5}, {"capacity", 2.0}, {"alpha", 0.3}, {"beta", 2.0}}}}});
    const auto cfg = two_link_config(out, lat, {{"gamma", 0.0}, {"baseline", true}, {"seed", 3}});
    for (const std::string mode : {"first", "zeroth"}) {
      CAPTURE(mode);
      REQUIRE(run("attack -c " + cfg.string() + " --mode " + mode + " -o " + out.string()) == 0);
      const AttackParams a = attack_from_json(fixture::slurp((out / "attack_final.json").string()));
      const double d = std::sqrt((a.phi_theta - Eigen::MatrixXd::Identity(2, 2)).squaredNorm() +
                                 (a.phi_d - Eigen::MatrixXd::Ones(1, 1)).squaredNorm());
      CHECK(d <= 0.1);
    }
  }

  TEST_CASE("seeded evacuation attack: 30 rows, identical bytes") {
    const auto a = scratch("det_a"), b = scratch("det_b");
    REQUIRE(run("attack -c " + fixture::data_path("evacuation.json") + " --seed 4 -o " + a.string()) == 0);
    REQUIRE(run("attack -c " + fixture::data_path("evacuation.json") + " --seed 4 --threads 3 -o " + b.string()) == 0);
    const std::string ta = fixture::slurp((a / "trace.csv").string()), tb = fixture::slurp((b / "trace.csv").string());
    CHECK(ta == tb);
    CHECK(read_csv(a / "trace.csv").rows.size() == 30);
    const CsvTable er = read_csv(a / "edge_report.csv");
    CHECK(er.header == std::vector<std::string>{"edge_id", "tail", "head", "so_flow", "pwe_flow", "so_time", "pwe_time",
                                                "so_utilization", "pwe_utilization"});
    CHECK(er.rows.size() == 76);
    for (const auto& r : er.rows) {
      CHECK(std::stod(r[er.column("pwe_utilization")]) >= 0.0);
      CHECK(std::stod(r[er.column("pwe_time")]) > 0.0);
    }
    REQUIRE(run("report " + a.string()) == 0);
    const json rep = load_json(a / "report.json");
    CHECK(rep.contains("final_ppoa"));
    for (const auto& e : rep["flagged"]) CHECK(e["utilization"].get<double>() > 1.0);
  }

  TEST_CASE("exit codes") {
    const auto out = scratch("codes");
    CHECK(run("") == 1);
    CHECK(run("solve --no-such-flag") == 1);
    CHECK(run("solve -c " + (out / "missing.json").string()) == 1);
    write(out / "bad.json", "{\"network\": 3");
    CHECK(run("solve -c " + (out / "bad.json").string()) == 1);
    write(out / "unknown.json", R"({"network": "a", "trips": "b", "colour": 1})");
    CHECK(run("solve -c " + (out / "unknown.json").string()) == 1);
    CHECK(run("report " + (out / "empty").string()) == 2);
    CHECK(run("--help") == 0);
  }

  TEST_CASE("config parsing and data directory resolution") {
    const auto c = ExperimentConfig::from_json(
        R"({"network": "pigou_net.tntp", "trips": "pigou_trips.tntp", "demand_split": "uniform", "total_demand": 5,
            "attack": {"gamma_scale": 2, "m_scale": 3}})",
        WARDROP_TEST_DATA_DIR);
    const Network net = c.load_network();
    CHECK(net.total_demand() == doctest::Approx(5.0));
    CHECK(c.resolved_gamma(4) == doctest::Approx(4.0));
    CHECK(c.resolved_m(4) == 6);
    CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"network": "a", "trips": "b", "demand_split": "odd"})"),
                    ValidationError);
    CHECK_THROWS_AS(ExperimentConfig::from_json("{\n\"network\": }"), ParseError);
  }
}
