#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "doctest.h"
#include "pickorder/labels.hpp"
#include "pickorder/training.hpp"

using namespace pickorder;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

}  // namespace

TEST_CASE("generate writes deterministic scenes") {
  TempDir t("pickorder_cli_generate");
  REQUIRE(invoke({"generate", "--difficulty", "easy", "--count", "2", "--seed", "7", "--out", t / "a"}).code == 0);
  REQUIRE(invoke({"generate", "--difficulty", "easy", "--count", "2", "--seed", "7", "--out", t / "b"}).code == 0);
  for (const char* f : {"scene_0000.json", "scene_0001.json"}) {
    const Scene s = load_scene(t / (std::string("a/") + f));
    CHECK(s.objects.size() == 24);
    CHECK(slurp(t / (std::string("a/") + f)) == slurp(t / (std::string("b/") + f)));
  }
  CHECK(load_scene(t / "a/scene_0001.json").seed == 8);
  CHECK(fs::exists(t / "a/manifest.json"));
  REQUIRE(invoke({"generate", "--difficulty", "hard", "--out", t / "h"}).code == 0);
  CHECK(load_scene(t / "h/scene_0000.json").objects.size() == 60);
}

TEST_CASE("label, train and evaluate round trip") {
  TempDir t("pickorder_cli_pipeline");
  REQUIRE(invoke({"generate", "--difficulty", "easy", "--count", "5", "--seed", "3", "--out", t / "scenes"}).code == 0);

  REQUIRE(invoke({"label", "--scenes", t / "scenes", "--k", "3", "--out", t / "clean.jsonl"}).code == 0);
  const auto clean = load_dataset(t / "clean.jsonl");
  REQUIRE(clean.size() == 5);
  for (const auto& rec : clean) CHECK(rec.ranking == sph_order(load_scene(t / rec.scene_file)));

  REQUIRE(invoke({"label", "--scenes", t / "scenes", "--noise-ratio", "0.5", "--seed", "4", "--out", t / "noisy.jsonl"}).code == 0);
  REQUIRE(invoke({"label", "--scenes", t / "scenes", "--noise-ratio", "0.5", "--seed", "4", "--out", t / "noisy2.jsonl"}).code == 0);
  CHECK(load_dataset(t / "noisy.jsonl")[0].noise_ratio == 0.5);
  CHECK(slurp(t / "noisy.jsonl") == slurp(t / "noisy2.jsonl"));

  {
    std::ofstream cfg(t / "zero.cfg");
    cfg << "epochs = 0\ndim = 8\n";
  }
  REQUIRE(invoke({"train", "--dataset", t / "clean.jsonl", "--config", t / "zero.cfg", "--out", t / "zero.json"}).code == 0);
  CHECK(load_checkpoint(t / "zero.json").params.values == init_params(8, 0).values);

  {
    std::ofstream cfg(t / "small.cfg");
    cfg << "epochs = 2\ndim = 8\nbatch_size = 2\n";
  }
  REQUIRE(invoke({"train", "--dataset", t / "clean.jsonl", "--config", t / "small.cfg", "--out", t / "m1.json"}).code == 0);
  REQUIRE(invoke({"train", "--dataset", t / "clean.jsonl", "--config", t / "small.cfg", "--out", t / "m2.json"}).code == 0);
  CHECK(slurp(t / "m1.json") == slurp(t / "m2.json"));
  const std::string metrics = slurp(t / "m1.json.metrics.csv");
  CHECK(metrics.rfind("epoch,mean_loss,val_kendall_tau,lr\n", 0) == 0);
  CHECK(metrics.find("\n1,") != std::string::npos);
  {
    std::ofstream cfg(t / "default_lr.cfg");
    cfg << "epochs = 1\ndim = 4\nbatch_size = 100\n";
  }
  REQUIRE(invoke({"train", "--dataset", t / "clean.jsonl", "--config", t / "default_lr.cfg", "--out", t / "lr.json"}).code == 0);
  CHECK(slurp(t / "lr.json.metrics.csv").find(",0.0002\n") != std::string::npos);

  REQUIRE(invoke({"evaluate", "--scenes", t / "scenes", "--policy", "sph,learned", "--replan-interval", "1,5,10",
               "--checkpoint", t / "m1.json", "--out", t / "report.csv"})
              .code == 0);
  const std::string report = slurp(t / "report.csv");
  CHECK(std::count(report.begin(), report.end(), '\n') == 7);
  CHECK(fs::exists(t / "report.csv.logs/sph@5_easy_3.log"));

  // Replay reproduces every output byte for byte.
  const std::string first_log = slurp(t / "report.csv.logs/learned@10_easy_7.log");
  fs::remove(t / "report.csv");
  REQUIRE(invoke({"replay", t / "report.csv.manifest.json"}).code == 0);
  CHECK(slurp(t / "report.csv") == report);
  CHECK(slurp(t / "report.csv.logs/learned@10_easy_7.log") == first_log);
  const std::string ckpt = slurp(t / "m1.json");
  REQUIRE(invoke({"replay", t / "m1.json.manifest.json"}).code == 0);
  CHECK(slurp(t / "m1.json") == ckpt);
}

TEST_CASE("sph clears easy scenes") {
  TempDir t("pickorder_cli_sph");
  REQUIRE(invoke({"evaluate", "--difficulty", "easy", "--count", "10", "--policy", "sph", "--out", t / "r.csv"}).code == 0);
  std::istringstream rows(slurp(t / "r.csv"));
  std::string header, row;
  std::getline(rows, header);
  std::getline(rows, row);
  const auto comma = row.find(',', row.find(',') + 1);
  CHECK(std::stod(row.substr(comma + 1)) >= 0.95);
}

TEST_CASE("exit codes") {
  TempDir t("pickorder_cli_errors");
  CHECK(invoke({}).code == 1);
  CHECK(invoke({"frobnicate"}).code == 1);
  CHECK(invoke({"generate", "--difficulty", "extreme", "--out", t / "x"}).code == 1);
  CHECK(invoke({"evaluate", "--policy", "learned", "--out", t / "r.csv"}).code == 1);

  {
    std::ofstream f(t / "blocker");
    f << "file";
  }
  const Run io = invoke({"generate", "--out", t / "blocker/sub"});
  CHECK(io.code == 2);
  CHECK(io.err.find("blocker") != std::string::npos);
  CHECK(invoke({"label", "--scenes", t / "missing", "--out", t / "l.jsonl"}).code == 2);

  REQUIRE(invoke({"generate", "--out", t / "s"}).code == 0);
  {
    std::ofstream bad(t / "bad.cfg");
    bad << "epochs = 1\nlearnin_rate = 0.1\n";
  }
  REQUIRE(invoke({"label", "--scenes", t / "s", "--out", t / "l.jsonl"}).code == 0);
  const Run cfg = invoke({"train", "--dataset", t / "l.jsonl", "--config", t / "bad.cfg", "--out", t / "m.json"});
  CHECK(cfg.code == 1);
  CHECK(cfg.err.find("learnin_rate") != std::string::npos);

  {
    std::ofstream broken(t / "s/scene_0001.json");
    broken << "{\"seed\": 1, \"difficulty\": \"easy\"}";
  }
  const Run parse = invoke({"label", "--scenes", t / "s", "--out", t / "l2.jsonl"});
  CHECK(parse.code == 1);
  CHECK(parse.err.find("workspace") != std::string::npos);
}
