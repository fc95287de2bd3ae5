#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("holonome_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Result run(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const fs::path o = scratch() / ("stdout_" + std::to_string(counter));
  const fs::path e = scratch() / ("stderr_" + std::to_string(counter++));
  const std::string cmd = env + " " + std::string(HOLONOME_CLI) + " " + args + " >" + o.string() + " 2>" + e.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

std::string model(const std::string& f) { return test_support::model_path(f); }

/// Columns of a CSV by header name.
std::map<std::string, std::vector<double>> read_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> names;
  {
    std::stringstream hs(line);
    std::string c;
    while (std::getline(hs, c, ',')) names.push_back(c);
  }
  std::map<std::string, std::vector<double>> cols;
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::string c;
    for (std::size_t i = 0; std::getline(ls, c, ','); ++i) cols[names.at(i)].push_back(std::stod(c));
  }
  return cols;
}

}  // namespace

TEST_CASE("cli simulate") {
  const fs::path out = scratch() / "sim.csv";
  SUBCASE("on-leaf start conserves H") {
    const Result r = run("simulate --model " + model("disc_skate.cfg") +
                         " --q 0.3,0.5,1 --p 0.2,0.1,-0.3 --project-leaf --t-end 10 --out " + out.string());
    REQUIRE(r.code == 0);
    const auto cols = read_csv(slurp(out));
    REQUIRE(cols.at("H").size() > 10);
    CHECK(cols.at("t").back() == 10.0);
    for (double h : cols.at("H")) CHECK(std::abs(h - cols.at("H").front()) <= 1e-8);
    const json m = json::parse(slurp(out.string() + ".manifest.json"));
    for (const char* k : {"command", "model_path", "params", "seeds", "tool_version", "wall_time_s"})
      CHECK(m.contains(k));
    CHECK(m["command"] == "simulate");
  }
  SUBCASE("--project-leaf zeroes f at t = 0") {
    const Result r = run("simulate --model " + model("vertical_disc.cfg") +
                         " --q 0.1,0.2,0.3,0.4 --p 1,-2,0.5,3 --project-leaf --t-end 0.1 --out " + out.string());
    REQUIRE(r.code == 0);
    const auto cols = read_csv(slurp(out));
    CHECK(std::abs(cols.at("f_1").front()) <= 1e-12);
    CHECK(std::abs(cols.at("f_2").front()) <= 1e-12);
  }
  SUBCASE("mismatched --q") {
    const Result r = run("simulate --model " + model("disc_skate.cfg") + " --q 0.3,0.5");
    CHECK(r.code == 2);
    CHECK(r.err.find("--q has 2 entries") != std::string::npos);
  }
  SUBCASE("bad method, missing file") {
    CHECK(run("simulate --model " + model("disc_skate.cfg") + " --q 0,0,0 --method euler").code == 2);
    CHECK(run("simulate --model /nonexistent.cfg --q 0,0,0").code == 2);
    CHECK(run("nosuchcommand").code == 2);
  }
}

TEST_CASE("cli equilibria") {
  const fs::path a = scratch() / "eq_a.json", b = scratch() / "eq_b.json";
  REQUIRE(run("equilibria --model " + model("disc_skate.cfg") + " --grid 6 --out " + a.string()).code == 0);
  REQUIRE(run("equilibria --model " + model("disc_skate.cfg") + " --grid 6 --out " + b.string(),
              "HOLONOME_THREADS=1")
              .code == 0);
  const json j = json::parse(slurp(a));
  CHECK(j["critical_points"].size() == 8);
  CHECK(slurp(a) == slurp(b));
  const Result deg = run("equilibria --model " + model("disc_skate.cfg") + " --param c1=0 --param c2=0 --param cphi=0");
  CHECK(deg.code == 3);
  const json e = json::parse(deg.err);
  CHECK(e["error"]["type"] == "NumericError");
  CHECK(run("equilibria --model " + model("disc_skate.cfg"), "HOLONOME_THREADS=zero").code == 2);
}

TEST_CASE("cli manifold") {
  const fs::path out = scratch() / "man.json";
  SUBCASE("single seed at the origin") {
    REQUIRE(run("manifold --model " + model("disc_skate.cfg") + " --seed 0,0,0 --step 0.01 --out " + out.string())
                .code == 0);
    const json j = json::parse(slurp(out));
    REQUIRE(j["components"].size() == 1);
    const json& c = j["components"][0];
    CHECK(c["closed"] == true);
    CHECK(c["index"] == 0);
    CHECK(std::abs(double(c["points"].size()) - 2 * M_PI / 0.01) <= 3);
  }
  SUBCASE("four corner seeds give four components; output independent of threads") {
    const std::string args = "manifold --model " + model("disc_skate.cfg") +
                             " --seed 0,0,0 --seed 0,0,pi --seed pi,0,0 --seed pi,0,pi --out ";
    const fs::path out1 = scratch() / "man1.json";
    REQUIRE(run(args + out.string()).code == 0);
    REQUIRE(run(args + out1.string(), "HOLONOME_THREADS=1").code == 0);
    const json j = json::parse(slurp(out));
    CHECK(j["components"].size() == 4);
    std::multiset<int> idx;
    for (const auto& c : j["components"]) idx.insert(c["index"].get<int>());
    CHECK(idx == std::multiset<int>{0, 1, 1, 2});
    CHECK(slurp(out) == slurp(out1));
  }
  SUBCASE("seed outside every Newton basin") {
    const fs::path cfg = scratch() / "nocrit.cfg";
    std::ofstream(cfg) << "[model]\ncoordinates = [x]\nperiodic = [false]\nunconstrained = true\n"
                          "[metric]\ng = [1]\n[potential]\nU = x + 0.2*sin(3*x)\n";
    const Result r = run("manifold --model " + cfg.string() + " --seed 0.4");
    CHECK(r.code == 3);
    CHECK(r.err.find("residual") != std::string::npos);
  }
}

TEST_CASE("cli stability") {
  const std::string base = "stability --model " + model("disc_skate.cfg");
  const Result mn = run(base + " --q 0,0.7,0");
  REQUIRE(mn.code == 0);
  const json j = json::parse(mn.out);
  CHECK(j["classification"] == "critically_stable");
  REQUIRE(j["frequencies"].size() == 2);
  CHECK(std::abs(j["frequencies"][0].get<double>() - 1.0) <= 1e-9);
  CHECK(std::abs(j["frequencies"][1].get<double>() - std::sqrt(2.0)) <= 1e-9);
  const Result sd = run(base + " --q pi,0.7,0");
  REQUIRE(sd.code == 0);
  CHECK(json::parse(sd.out)["classification"] == "unstable");
  CHECK(run(base + " --q 0.5,0.7,0").code == 2);
}

TEST_CASE("cli topology") {
  const Result r = run("topology --report " + model("disc_skate_topology.json"));
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["verdict"] == "identity holds, 𝒬 = 0");
  const fs::path bad = scratch() / "bad_topo.json";
  std::ofstream(bad) << R"({"ambient_betti":[1,3,3,1],"components":[{"betti":[1,1],"index":0},
    {"betti":[1,1],"index":0},{"betti":[1,1],"index":1},{"betti":[1,1],"index":2}]})";
  const Result v = run("topology --report " + bad.string());
  REQUIRE(v.code == 0);
  CHECK(json::parse(v.out)["verdict"] == "violation");
  std::ofstream(scratch() / "broken.json") << "{";
  CHECK(run("topology --report " + (scratch() / "broken.json").string()).code == 2);
}

TEST_CASE("cli check") {
  for (const char* f : {"disc_skate.cfg", "curved_skate.cfg", "vertical_disc.cfg", "harmonic_oscillator.cfg"}) {
    CAPTURE(f);
    const Result r = run(std::string("check --model ") + model(f));
    CHECK(r.code == 0);
    CHECK(json::parse(r.out)["all_passed"] == true);
  }
  const Result bad = run("check --model " + model("indefinite_metric.cfg"));
  CHECK(bad.code == 3);
  CHECK(bad.err.find("at q = (") != std::string::npos);
}
