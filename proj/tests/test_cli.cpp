#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lgb/cli.hpp"
#include "oracles.hpp"

using namespace lgb;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lgb_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const std::vector<std::string> kQuick = {"--sft.max_epochs",      "2", "--finetune.max_epochs", "3",
                                         "--pretrain.max_epochs", "2", "--model.text_dim",      "8"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& extra) {
  a.insert(a.end(), extra.begin(), extra.end());
  return a;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with status 2") {
    const Run none = cli({});
    CHECK(none.code == 2);
    CHECK(!none.err.empty());
    CHECK(cli({"no-such-command"}).code == 2);
    CHECK(cli({"analyze"}).code == 2);
    CHECK(cli({"analyze", "neighbor-distribution", "--dataset", (oracle::data_dir() / "tiny").string(), "--nope.key", "1",
               "--out", scratch("usage").string()})
              .code == 2);
    CHECK(cli({"--help"}).code == 0);
  }

  TEST_CASE("the installed binary reports usage errors too") {
    const int status = std::system((std::string(LGB_CLI_PATH) + " > /dev/null 2>&1").c_str());
    REQUIRE(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 2);
  }

  TEST_CASE("invalid config values exit with status 1") {
    const fs::path out = scratch("invalid");
    CHECK(cli({"synth", "--out", out.string(), "--synth.n_nodes", "many"}).code == 1);
    CHECK(cli({"synth", "--out", out.string(), "--synth.p_intra", "2.0"}).code == 1);
    CHECK(cli({"analyze", "neighbor-distribution", "--dataset", (out / "missing").string(), "--out", out.string()}).code == 1);
  }

  TEST_CASE("neighbor distribution of the tiny fixture") {
    const fs::path out = scratch("hist");
    const Run r = cli({"analyze", "neighbor-distribution", "--dataset", (oracle::data_dir() / "tiny").string(), "--out",
                       out.string()});
    REQUIRE(r.code == 0);
    CHECK(slurp(out / "neighbor_distribution.csv") ==
          "neighbors,count,fraction\n0,3,0.25\n1,5,0.41666666666666669\n2,3,0.25\n3,1,0.083333333333333329\n");
    const json m = json::parse(slurp(out / "manifest.json"));
    CHECK(m["command"] == "analyze");
    CHECK(m["config_hash"] == canonical_hash(m["config"]));
  }

  TEST_CASE("numcc curve for each filter") {
    const fs::path out = scratch("numcc");
    REQUIRE(cli({"analyze", "numcc-curve", "--filter", "each", "--dataset", (oracle::data_dir() / "tiny").string(), "--out",
                 out.string()})
                .code == 0);
    std::istringstream in(slurp(out / "numcc_curve.csv"));
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 5);
    CHECK(lines[1] == "human,1-5,1,0.59999999999999998,5");
    CHECK(lines[2] == "bot,1-5,1,0.5,6");
  }

  TEST_CASE("config file, flag precedence, and manifest hashing") {
    const fs::path out = scratch("config");
    std::ofstream(out / "run.ini") << "[synth]\nn_nodes = 50\np_intra = 0.1\n";
    REQUIRE(cli({"synth", "--config", (out / "run.ini").string(), "--synth.n_nodes", "60", "--out", out.string()}).code == 0);
    const json m = json::parse(slurp(out / "manifest.json"));
    CHECK(m["config"]["synth"]["n_nodes"] == 60);
    CHECK(m["config"]["synth"]["p_intra"] == 0.1);
    std::size_t lines = 0;
    std::ifstream users(out / "users.jsonl");
    for (std::string l; std::getline(users, l);) ++lines;
    CHECK(lines == 60);

    CHECK(canonical_hash(json::parse(R"({"b":1,"a":{"y":2,"x":3}})")) ==
          canonical_hash(json::parse(R"({"a":{"x":3,"y":2},"b":1})")));
    CHECK(canonical_hash(json::parse(R"({"a":1})")) != canonical_hash(json::parse(R"({"a":2})")));
    json tampered = m;
    tampered["config"]["synth"]["n_nodes"] = 61;
    CHECK_THROWS_AS(RunManifest::from_json(tampered), ValidationError);
    CHECK(RunManifest::from_json(m).config_hash() == m["config_hash"]);
  }

  TEST_CASE("synth, train-sft, finetune, evaluate on the committed fixture, and replay") {
    const fs::path root = scratch("pipeline");
    const std::string data = (oracle::data_dir() / "fixture").string();
    const auto sft = root / "sft", fine = root / "fine", eval = root / "eval";
    REQUIRE(cli(with({"train-sft", "--dataset", data, "--seed", "3", "--out", sft.string()}, kQuick)).code == 0);
    CHECK(fs::exists(sft / "checkpoint.json"));
    CHECK(slurp(sft / "metrics.tsv").rfind("stage\tepoch\tsplit\tloss", 0) == 0);
    CHECK(cli(with({"finetune", "--dataset", data, "--seed", "3", "--out", fine.string()}, kQuick)).code == 2);
    REQUIRE(cli(with({"finetune", "--dataset", data, "--seed", "3", "--checkpoint", (sft / "checkpoint.json").string(),
                      "--out", fine.string()},
                     kQuick))
                .code == 0);
    REQUIRE(cli(with({"evaluate", "--dataset", data, "--checkpoint", (fine / "checkpoint.json").string(), "--out",
                      eval.string()},
                     kQuick))
                .code == 0);
    const json metrics = json::parse(slurp(eval / "metrics.json"));
    CHECK(metrics.contains("test"));
    CHECK(slurp(eval / "accuracy_by_neighbors.csv").rfind("neighbors,support,correct,accuracy\n", 0) == 0);

    const std::string before = slurp(sft / "checkpoint.json");
    REQUIRE(cli({"replay", (sft / "manifest.json").string()}).code == 0);
    CHECK(slurp(sft / "checkpoint.json") == before);
  }

  TEST_CASE("synth respects the seed") {
    const fs::path a = scratch("seed_a"), b = scratch("seed_b"), c = scratch("seed_c");
    REQUIRE(cli({"synth", "--seed", "5", "--synth.n_nodes", "40", "--out", a.string()}).code == 0);
    REQUIRE(cli({"synth", "--seed", "5", "--synth.n_nodes", "40", "--out", b.string()}).code == 0);
    REQUIRE(cli({"synth", "--seed", "6", "--synth.n_nodes", "40", "--out", c.string()}).code == 0);
    CHECK(slurp(a / "edges.jsonl") == slurp(b / "edges.jsonl"));
    CHECK(slurp(a / "users.jsonl") == slurp(b / "users.jsonl"));
    CHECK(slurp(a / "users.jsonl") != slurp(c / "users.jsonl"));
  }
}
