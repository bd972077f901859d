#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const std::string kCli = MMOS_CLI_PATH;

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mmos-cli-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" + kCli + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const std::string kSmall =
    "--background-classes 6 --validation-classes 3 --background-speakers 3 --validation-speakers 3 --speakers 6 "
    "--images-per-class 8 --frames 8 --image-height 6 --image-width 6";

fs::path make_data(const std::string& name, const std::string& extra = "") {
  const auto dir = scratch_dir(name);
  const std::string dim = extra.find("--feature-dim") == std::string::npos ? " --feature-dim 4" : "";
  REQUIRE(run("gen-synth --out '" + dir.string() + "' " + kSmall + dim + " " + extra) == 0);
  return dir;
}

std::string eval_args(const fs::path& data) {
  return "eval --manifest '" + (data / "manifest.json").string() + "' --episodes 20 --queries 5 --seeds 2 ";
}

}  // namespace

TEST_CASE("gen-synth is deterministic and propagates flags") {
  const auto a = make_data("gen-a", "--seed 9 --sigma 0.37");
  const auto b = make_data("gen-b", "--seed 9 --sigma 0.37");
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
    ++files;
  }
  CHECK(files == 10);
  const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["splits"].size() == 3);
  CHECK(manifest["generator"]["noise"] == 0.37);
  CHECK(manifest["generator"]["seed"] == 9);
}

TEST_CASE("noiseless data gives perfect direct-feature matching") {
  const auto data = make_data("noiseless", "--sigma 0 --image-noise 0 --warp 0 --shift 0");
  const auto out = data / "dtw.csv";
  REQUIRE(run(eval_args(data) + "--model dtw-pixels --task cross-modal --out '" + out.string() + "'") == 0);
  CHECK(slurp(out).find("cross-modal,dtw-pixels,11,1,2,20,1.000000,0.000000,0.000\n") != std::string::npos);
}

TEST_CASE("reports are byte-identical across runs and thread counts") {
  const auto data = make_data("determinism");
  const auto one = data / "one.csv";
  const auto four = data / "four.csv";
  const std::string args = eval_args(data) + "--model siamese-online --untrained --task cross-modal --task unimodal-speech ";
  REQUIRE(run(args + "--threads 1 --out '" + one.string() + "'") == 0);
  REQUIRE(run(args + "--threads 4 --out '" + four.string() + "'") == 0);
  CHECK(slurp(one) == slurp(four));
  CHECK(slurp(data / "one.json") == slurp(data / "four.json"));
  const auto report = nlohmann::json::parse(slurp(data / "one.json"));
  CHECK(report["config"]["model"]["model"] == "siamese-online");
  CHECK(report["config"]["base_seed"] == 0);
  CHECK(report["rows"].size() == 2);
}

TEST_CASE("train writes checkpoints that eval loads") {
  const auto data = make_data("train");
  const auto model = data / "model";
  const std::string manifest = "--manifest '" + (data / "manifest.json").string() + "' ";
  REQUIRE(run("train " + manifest + "--model ffnn-classifier --epochs 2 --hidden 8 --seed 3 --out '" + model.string() + "'") == 0);
  CHECK(fs::exists(model / "speech.ckpt"));
  CHECK(fs::exists(model / "vision.ckpt"));
  const auto snapshot = nlohmann::json::parse(slurp(model / "model.json"));
  CHECK(snapshot["seed"] == 3);
  CHECK(snapshot["config"]["epochs"] == 2);
  CHECK(snapshot["config"]["margin"] == 0.5);
  std::istringstream log(slurp(model / "speech-train.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) ++lines;
  CHECK(lines >= 1);
  CHECK(lines <= 2);

  CHECK(run(eval_args(data) + "--model ffnn-classifier --checkpoints '" + model.string() + "'") == 0);
  CHECK(run(eval_args(data) + "--model siamese-online --checkpoints '" + model.string() + "'") == 2);
}

TEST_CASE("config file values yield to flags") {
  const auto data = make_data("config");
  const auto ini = data / "run.ini";
  std::ofstream(ini) << "[eval]\nmodel = dtw-pixels\nepisodes = 7\nseeds = 2\nqueries = 3\ntask = speaker-invariance\n";
  const auto out = data / "r.csv";
  REQUIRE(run("--config '" + ini.string() + "' eval --episodes 5 --out '" + out.string() + "'",
              "MMOS_DATA_DIR='" + data.string() + "'") == 0);
  CHECK(slurp(out).find("\nspeaker-invariance,dtw-pixels,11,1,2,5,") != std::string::npos);
}

TEST_CASE("report merges evaluation outputs") {
  const auto data = make_data("report");
  REQUIRE(run(eval_args(data) + "--model dtw-pixels --task unimodal-vision --out '" + (data / "a.csv").string() + "'") == 0);
  REQUIRE(run(eval_args(data) + "--model dtw-pixels --task cross-modal --out '" + (data / "b.csv").string() + "'") == 0);
  const auto merged = data / "all.csv";
  REQUIRE(run("report '" + (data / "a.json").string() + "' '" + (data / "b.json").string() + "' --out '" + merged.string() + "'") == 0);
  const std::string csv = slurp(merged);
  CHECK(csv.find("\nunimodal-vision,dtw-pixels,10,1,") != std::string::npos);
  CHECK(csv.find("\ncross-modal,dtw-pixels,11,1,") != std::string::npos);
}

TEST_CASE("errors map to distinct exit codes") {
  const auto data = make_data("errors");
  CHECK(run("eval --model nonsense") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run(eval_args(data) + "--ways 40") == 7);

  const auto broken = scratch_dir("errors-format");
  fs::copy(data, broken);
  std::ofstream(broken / "one-shot-test.fsa", std::ios::binary) << "JUNK";
  CHECK(run(eval_args(broken)) == 3);

  const auto leaky = scratch_dir("errors-leak");
  fs::copy(data, leaky);
  auto manifest = nlohmann::json::parse(slurp(leaky / "manifest.json"));
  for (auto& c : manifest["classes"]) {
    if (c["split"] == "background-train") {
      c["image_class"] = 4;
      break;
    }
  }
  std::ofstream(leaky / "manifest.json") << manifest.dump();
  CHECK(run(eval_args(leaky)) == 5);

  const auto other = make_data("errors-shape", "--feature-dim 5");
  const auto model = data / "model";
  REQUIRE(run("train --manifest '" + (data / "manifest.json").string() + "' --model siamese-online --epochs 1 --out '" +
              model.string() + "'") == 0);
  CHECK(run(eval_args(other) + "--model siamese-online --checkpoints '" + model.string() + "'") == 4);
}
