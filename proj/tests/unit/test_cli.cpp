#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>

#include <json.hpp>

#include "xprobe/records_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string err;
};

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("xprobe_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Run run_cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + XPROBE_CLI_PATH + "\" " + args + " > \"" +
                          (dir / "stdout.txt").string() + "\" 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = fs::exists(err) ? xprobe::read_file(err) : "";
  return r;
}

json base_config(const fs::path& out) {
  return json{
      {"dataset", {{"synthetic", {{"count", 4}, {"height", 12}, {"width", 12}, {"channels", 3}}}}},
      {"grid", "3x3"},
      {"models",
       {{{"name", "conj"}, {"synthetic", {{"kind", "conjunctive"}, {"required", {0, 4}}}}},
        {{"name", "disj"},
         {"synthetic", {{"kind", "disjunctive"}, {"groups", {{0, 1}, {7, 8}}}, {"partial_credit", 0.3}}}},
        {{"name", "add"},
         {"synthetic", {{"kind", "additive"}, {"weights", {0.2, 0.1, 0.1, 0.1, 0.2, 0.1, 0.1, 0.05, 0.05}}}}}}},
      {"beam", {{"p_h", 0.9}, {"beam_width", 4}}},
      {"saliency", {{"steps", 6}, {"maps", "randomized"}, {"randomized", {{"cell_rows", 3}, {"cell_cols", 3}, {"n_masks", 40}}}}},
      {"output", out.string()},
      {"seed", 3}};
}

fs::path write_config(const fs::path& dir, const json& j, const std::string& name = "config.json") {
  const fs::path p = dir / name;
  xprobe::write_file_atomic(p, j.dump(2));
  return p;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = xprobe::read_file(e.path());
  }
  return files;
}

std::string cfg_arg(const fs::path& p) { return "--config \"" + p.string() + "\""; }

}  // namespace

TEST_CASE("cli: help and usage errors") {
  TempDir t;
  CHECK(run_cli("--help", t.path).code == 0);
  CHECK(run_cli("mse --help", t.path).code == 0);
  CHECK(run_cli("", t.path).code == 2);
  CHECK(run_cli("mse", t.path).code == 2);
  CHECK(run_cli("frobnicate --config x.json", t.path).code == 2);
  const auto cfg = write_config(t.path, base_config(t.path / "out"));
  CHECK(run_cli("mse " + cfg_arg(cfg) + " --grid 3y3", t.path).code == 2);
  CHECK(run_cli("mse " + cfg_arg(cfg) + " --baseline purple", t.path).code == 2);
  CHECK(run_cli("mse --config \"" + (t.path / "absent.json").string() + "\"", t.path).code == 2);
}

TEST_CASE("cli: missing model file is a config error") {
  TempDir t;
  auto j = base_config(t.path / "out");
  j["models"] = json::array({{{"name", "real"}, {"path_or_url", "models/absent.onnx"}, {"class_count", 10}}});
  const auto r = run_cli("mse " + cfg_arg(write_config(t.path, j)), t.path);
  CHECK(r.code == 2);
  CHECK(r.err.find("absent.onnx") != std::string::npos);
}

TEST_CASE("cli: mse and subexp outputs re-parse") {
  TempDir t;
  const fs::path out = t.path / "out";
  const auto cfg = write_config(t.path, base_config(out));
  REQUIRE(run_cli("mse " + cfg_arg(cfg), t.path).code == 0);
  for (const char* m : {"conj", "disj", "add"}) {
    const auto records = xprobe::parse_mse_records_jsonl(xprobe::read_file(out / "mse" / (std::string(m) + ".jsonl")));
    for (const auto& r : records) CHECK(r.confidence >= 0.9 * r.full_confidence);
  }
  CHECK(fs::exists(out / "mse/stats.csv"));
  REQUIRE(run_cli("subexp " + cfg_arg(cfg), t.path).code == 0);
  const auto counts = xprobe::parse_counts_csv(xprobe::read_file(out / "subexp/add_counts.csv"));
  CHECK(counts.size() == 4);
  REQUIRE(run_cli("report " + cfg_arg(cfg), t.path).code == 0);
  CHECK(fs::exists(out / "report/table.csv"));
  CHECK(fs::exists(out / "report/table.json"));
  CHECK(fs::exists(out / "report/percent_explained.svg"));
}

TEST_CASE("cli: empty and corrupt MSE files") {
  TempDir t;
  const fs::path out = t.path / "out";
  const auto cfg = write_config(t.path, base_config(out));
  REQUIRE(run_cli("mse " + cfg_arg(cfg), t.path).code == 0);

  xprobe::write_file_atomic(out / "mse/add.jsonl", "");
  REQUIRE(run_cli("subexp " + cfg_arg(cfg), t.path).code == 0);
  const auto counts = xprobe::parse_counts_csv(xprobe::read_file(out / "subexp/add_counts.csv"));
  REQUIRE(counts.size() == 4);
  for (const auto& c : counts) {
    CHECK(c.mse_count == 0);
    for (auto n : c.counts) CHECK(n == 0);
  }

  const std::string good = xprobe::read_file(out / "mse/disj.jsonl");
  REQUIRE_FALSE(good.empty());
  const auto first_end = good.find('\n');
  xprobe::write_file_atomic(out / "mse/disj.jsonl", good.substr(0, first_end + 1) + "{\"image_id\": 12\n");
  const auto r = run_cli("subexp " + cfg_arg(cfg), t.path);
  CHECK(r.code == 3);
  CHECK(r.err.find("line 2") != std::string::npos);
}

TEST_CASE("cli: reruns are byte-identical across job counts and caching") {
  TempDir t;
  const fs::path a = t.path / "a";
  const fs::path b = t.path / "b";
  const auto cfg = write_config(t.path, base_config(a));
  for (const char* cmd : {"mse", "subexp", "saliency", "crosstest", "report"}) {
    REQUIRE(run_cli(std::string(cmd) + " " + cfg_arg(cfg) + " --jobs 1", t.path).code == 0);
  }
  const std::string cache = "XPROBE_CACHE_DIR=\"" + (t.path / "cache").string() + "\" ";
  for (const char* cmd : {"mse", "subexp", "saliency", "crosstest", "report"}) {
    const std::string args = std::string(cmd) + " " + cfg_arg(cfg) + " --jobs 3 --out \"" + b.string() + "\"";
    const std::string full = "sh -c '" + cache + "\"" + XPROBE_CLI_PATH + "\" " + args + "'";
    REQUIRE(std::system((full + " >/dev/null 2>&1").c_str()) == 0);
  }
  CHECK(fs::exists(t.path / "cache/confidences.jsonl"));
  const auto sa = snapshot(a);
  const auto sb = snapshot(b);
  CHECK(sa.size() > 20);
  CHECK(sa == sb);

  // warm-cache rerun into the same directory
  for (const char* cmd : {"mse", "subexp", "saliency", "crosstest", "report"}) {
    const std::string full = "sh -c '" + cache + "\"" + XPROBE_CLI_PATH + "\" " + cmd + " " + cfg_arg(cfg) +
                             " --out \"" + b.string() + "\"'";
    REQUIRE(std::system((full + " >/dev/null 2>&1").c_str()) == 0);
  }
  CHECK(snapshot(b) == sa);
}

TEST_CASE("cli: crosstest errors") {
  TempDir t;
  auto j = base_config(t.path / "out");
  j["models"].erase(2);
  const auto two = run_cli("crosstest " + cfg_arg(write_config(t.path, j, "two.json")), t.path);
  CHECK(two.code == 2);
  CHECK(two.err.find("at least 3") != std::string::npos);

  auto files = base_config(t.path / "out");
  files["saliency"]["maps"] = "files";
  files["saliency"]["map_dir"] = (t.path / "maps").string();
  for (const char* m : {"conj", "disj", "add"}) {
    for (int i = 0; i < 4; ++i) {
      if (std::string(m) == "disj" && i == 2) continue;
      char id[16];
      std::snprintf(id, sizeof(id), "img%04d", i);
      xprobe::save_attribution(xprobe::AttributionMap(3, 3, std::vector<float>(9, 0.5f)),
                               t.path / "maps" / m / (std::string(id) + ".fmap"));
    }
  }
  const auto r = run_cli("crosstest " + cfg_arg(write_config(t.path, files, "files.json")), t.path);
  CHECK(r.code != 0);
  CHECK(r.err.find("disj") != std::string::npos);
  CHECK(r.err.find("img0002") != std::string::npos);
}
