#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "hybridsentry/cli.hpp"
#include "json.hpp"

using namespace hybridsentry;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("hybridsentry_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

fs::path small_config(const fs::path& dir) {
  const nlohmann::json j = {
      {"window", {{"stride", 3}}},
      {"train", {{"n_rounds", 30}, {"early_stop_patience", 10}}},
      {"synth", {{"n_equipment", 3}, {"days", 420}}},
  };
  const auto path = dir / "config.json";
  write_file(path, j.dump());
  return path;
}

int run(std::vector<std::string> args) {
  args.push_back("--quiet");
  return cli::run(args);
}

std::vector<std::string> base(const fs::path& dir) {
  return {"--config", small_config(dir).string(), "--out-dir", dir.string()};
}

std::vector<std::string> with(std::vector<std::string> args, std::initializer_list<std::string> more) {
  args.insert(args.end(), more);
  return args;
}

}  // namespace

TEST_CASE("staged commands produce one report per horizon") {
  const auto dir = fresh_dir("staged");
  const auto b = base(dir);
  REQUIRE(run(with(b, {"synth"})) == cli::kSuccess);
  REQUIRE(run(with(b, {"build"})) == cli::kSuccess);
  REQUIRE(run(with(b, {"features"})) == cli::kSuccess);
  REQUIRE(run(with(b, {"train"})) == cli::kSuccess);
  REQUIRE(run(with(b, {"eval", "--emit-curves"})) == cli::kSuccess);
  for (const int h : {30, 60, 90}) {
    const auto report = dir / ("report_h" + std::to_string(h) + ".json");
    REQUIRE(fs::exists(report));
    const auto j = nlohmann::json::parse(slurp(report));
    CHECK(j["horizon"] == h);
    CHECK(j["mode"] == "hybrid");
    CHECK(fs::exists(dir / ("model_h" + std::to_string(h) + ".json")));
    CHECK(fs::exists(dir / ("curves_h" + std::to_string(h) + ".csv")));
  }
  CHECK(fs::exists(dir / "resolved_config.json"));
  const auto resolved = nlohmann::json::parse(slurp(dir / "resolved_config.json"));
  CHECK(resolved["seed"] == 42);
  CHECK(resolved["train"]["seed"] == 42);
  CHECK(resolved["synth"]["n_equipment"] == 3);

  REQUIRE(run(with(b, {"predict"})) == cli::kSuccess);
  std::istringstream preds(slurp(dir / "predictions.jsonl"));
  std::string line;
  REQUIRE(std::getline(preds, line));
  const auto first = nlohmann::json::parse(line);
  CHECK(first.contains("sample_id"));
  CHECK(first.contains("h30"));

  REQUIRE(run(with(b, {"importance"})) == cli::kSuccess);
  CHECK(fs::exists(dir / "importance.json"));
  REQUIRE(run(with(b, {"bench", "--samples", "50", "--repeats", "1"})) == cli::kSuccess);
  CHECK(nlohmann::json::parse(slurp(dir / "bench.json"))["n_samples"] == 50);
}

TEST_CASE("stat_only features need no embedding file") {
  const auto dir = fresh_dir("stat_only");
  auto b = base(dir);
  REQUIRE(run(with(b, {"synth"})) == cli::kSuccess);
  REQUIRE(run(with(b, {"build"})) == cli::kSuccess);
  b.insert(b.end(), {"--mode", "stat_only"});
  CHECK(run(with(b, {"features"})) == cli::kSuccess);
  CHECK(run(with(b, {"train"})) == cli::kSuccess);
  const auto model = nlohmann::json::parse(slurp(dir / "model_h30.json"));
  CHECK(model.dump().find("emb_00") == std::string::npos);
}

TEST_CASE("embedding files are exported and consumed") {
  const auto dir = fresh_dir("precomputed");
  const auto b = base(dir);
  REQUIRE(run(with(b, {"synth"})) == cli::kSuccess);
  REQUIRE(run(with(b, {"build"})) == cli::kSuccess);
  REQUIRE(run(with(b, {"features", "--export-embeddings"})) == cli::kSuccess);
  const auto native = slurp(dir / "features.jsonl");
  const auto table = dir / "embeddings.jsonl";
  REQUIRE(fs::exists(table));
  REQUIRE(run(with(b, {"--embeddings", table.string(), "features"})) == cli::kSuccess);
  CHECK(slurp(dir / "features.jsonl") == native);

  REQUIRE(run(with(b, {"train"})) == cli::kSuccess);

  // Truncate one record to 63 values.
  std::istringstream in(slurp(table));
  std::string line, text, bad_id;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    if (bad_id.empty()) {
      bad_id = j["sample_id"];
      j["embedding"].erase(j["embedding"].size() - 1);
    }
    text += j.dump() + "\n";
  }
  const auto bad_table = dir / "bad.jsonl";
  write_file(bad_table, text);
  CHECK(run(with(b, {"--embeddings", bad_table.string(), "predict"})) == cli::kEmbeddingFailure);
  try {
    (void)embedding::PrecomputedEmbeddings::load(bad_table);
    FAIL("expected an embedding error");
  } catch (const EmbeddingError& e) {
    CHECK(std::string(e.what()).find(bad_id) != std::string::npos);
  }
}

TEST_CASE("exit codes") {
  const auto dir = fresh_dir("errors");
  CHECK(run({"--out-dir", dir.string(), "--mode", "both", "build"}) == cli::kConfigFailure);
  CHECK(run({"--out-dir", dir.string(), "--bogus", "build"}) == cli::kConfigFailure);
  CHECK(run({"--out-dir", dir.string()}) == cli::kConfigFailure);
  write_file(dir / "unknown.json", R"({"trees": 3})");
  CHECK(run({"--config", (dir / "unknown.json").string(), "--out-dir", dir.string(), "build"}) ==
        cli::kConfigFailure);
  CHECK(run({"--out-dir", dir.string(), "--provider", "precomputed", "features"}) == cli::kConfigFailure);

  CHECK(run({"--out-dir", dir.string(), "build"}) == cli::kDataFailure);
  write_file(dir / "raw.csv", "equipment_id,channel_id,date,value\nEQ1,CH1,2023-13-01,1.0\n");
  CHECK(run({"--out-dir", dir.string(), "build"}) == cli::kDataFailure);
  CHECK(run({"--out-dir", dir.string(), "train"}) == cli::kDataFailure);
  CHECK(fs::exists(dir / "resolved_config.json"));
}
