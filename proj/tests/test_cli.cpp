#include "graphpatch/checkpoint.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#ifndef GRAPHPATCH_CLI
#error "GRAPHPATCH_CLI must name the command-line binary"
#endif

using namespace gp::testing;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(GRAPHPATCH_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "run-manifest.json")); }

std::map<std::string, std::string> hashes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename() != "run-manifest.json") out[e.path().filename().string()] = gp::sha256_file(e.path());
  return out;
}

// Small end-to-end pipeline; every stage is cheap at this size.
void pipeline(const fs::path& root) {
  const std::string r = root.string();
  REQUIRE(run("gen-synth --out " + r + "/data --nodes 150 --classes 3 --dim 4 --p-in 0.06 --p-out 0.01 --seed 2") == 0);
  REQUIRE(run("train-gnn --data " + r + "/data --out " + r + "/gnn --hidden 8 --epochs 20 --seed 2") == 0);
  REQUIRE(run("train-patcher --data " + r + "/data --gnn-checkpoint " + r + "/gnn/gnn.ckpt --out " + r +
              "/patcher --hidden 8 --max-epochs 2 --samples 2 --batch 8 --accum 1 --seed 2") == 0);
  REQUIRE(run("evaluate --data " + r + "/data --gnn-checkpoint " + r + "/gnn/gnn.ckpt --patcher-checkpoint " + r +
              "/patcher/patcher.ckpt --out " + r + "/eval --n-patch 2 --sweep 0,1,2") == 0);
}

}  // namespace

TEST_CASE("argument errors exit non-zero") {
  CHECK(run("") != 0);
  CHECK(run("train-gnn --no-such-flag 1") != 0);
  CHECK(run("train-gnn --data /nonexistent/dir --out /tmp/unused") == 1);
  TempDir dir("cli-bad");
  std::ofstream(dir / "bad.cfg") << "hiden = 3\n";
  CHECK(run("train-gnn --config " + (dir / "bad.cfg").string()) == 1);
  CHECK(run("gen-synth --out " + (dir / "x").string() + " --p-in 0.01 --p-out 0.01") == 1);
  CHECK(run("--help") == 0);
}

TEST_CASE("pipeline artifacts") {
  TempDir a("cli-a"), b("cli-b");
  pipeline(a.path());
  const auto data_before = hashes(a / "data");

  SUBCASE("manifests record the schedule and the configuration") {
    const auto m = manifest(a / "patcher");
    CHECK(m["command"] == "train-patcher");
    CHECK(m["schedule"].get<std::vector<double>>() == std::vector<double>{0.9, 0.6, 0.3});
    CHECK(m["config"]["hidden"] == 8);
    CHECK(m["config"]["lr"] == 0.0001);
    CHECK(m["seed"] == 2);
    CHECK(m["inputs"].size() >= 2);
    CHECK(m["gnn_parameter_sha256"] == gp::sha256_file(a / "gnn" / "gnn.ckpt"));
  }
  SUBCASE("config files are read and flags override them") {
    std::ofstream(a / "eval.cfg") << "n_patch = 1\nsweep = \"0,3\"\n";
    REQUIRE(run("evaluate --config " + (a / "eval.cfg").string() + " --data " + (a / "data").string() +
                " --gnn-checkpoint " + (a / "gnn/gnn.ckpt").string() + " --out " + (a / "eval2").string() +
                " --n-patch 0") == 0);
    const auto m = manifest(a / "eval2");
    CHECK(m["config"]["n_patch"] == 0);
    CHECK(m["config"]["sweep"] == "0,3");
  }
  SUBCASE("n-patch 0 gives equal columns") {
    REQUIRE(run("evaluate --data " + (a / "data").string() + " --gnn-checkpoint " + (a / "gnn/gnn.ckpt").string() +
                " --patcher-checkpoint " + (a / "patcher/patcher.ckpt").string() + " --out " +
                (a / "eval0").string() + " --n-patch 0") == 0);
    std::istringstream csv(slurp(a / "eval0" / "report.csv"));
    std::string line;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
      std::vector<std::string> cells;
      std::stringstream ls(line);
      for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
      REQUIRE(cells.size() == 5);
      CHECK(cells[2] == cells[3]);
      CHECK(std::stod(cells[4]) == 0.0);
    }
  }
  SUBCASE("a rerun is byte identical and never touches the dataset") {
    pipeline(b.path());
    for (const char* stage : {"data", "gnn", "patcher", "eval"}) CHECK(hashes(a / stage) == hashes(b / stage));
    CHECK(hashes(a / "data") == data_before);
  }
  SUBCASE("variance study") {
    REQUIRE(run("variance-study --data " + (a / "data").string() + " --gnn-checkpoint " +
                (a / "gnn/gnn.ckpt").string() + " --out " + (a / "var").string() + " --anchor 3 --draws 30") == 0);
    CHECK(slurp(a / "var" / "variance.csv").rfind("L,mean_loss,std_loss\n1,", 0) == 0);
    CHECK(run("variance-study --data " + (a / "data").string() + " --gnn-checkpoint " +
              (a / "gnn/gnn.ckpt").string() + " --out " + (a / "var").string() + " --anchor 3 --draws 10") == 1);
  }
}
