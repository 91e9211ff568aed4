#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "json.hpp"
#include "test_util.hpp"
#include "tofr/checkpoint.hpp"
#include "tofr/synth.hpp"

namespace tofr {
namespace {

using nlohmann::json;
using testing::TempDir;
namespace fs = std::filesystem;

int run(const std::string& args) {
  const std::string cmd = std::string(TOFR_BIN) + " " + args + " --quiet > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const TempDir& dir, const std::string& name, const json& j) {
  const auto p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

json tiny_synth(int scenes) {
  return {{"schema_version", 1},
          {"seed", 5},
          {"scenes", scenes},
          {"ranges", {{"width", 64}, {"height", 64}}}};
}

json tiny_train() {
  return {{"schema_version", 1},
          {"seed", 5},
          {"train_fraction", 0.5},
          {"network", {{"groups", {{{"blocks", 1}, {"channels", 4}, {"downsample", false}}}}}},
          {"patches", {{"pixel_stride", 2}}},
          {"train", {{"stages", {{{"epochs", 8}, {"learning_rate", 3e-3}}}}}}};
}

std::string tree_bytes(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += fs::relative(f, root).string() + "\n" + testing::read_bytes(f);
  return out;
}

TEST(Cli, ZeroScenesWritesAnEmptyManifest) {
  TempDir dir("cli0");
  const auto cfg = write_config(dir, "synth.json", tiny_synth(0));
  ASSERT_EQ(run("synth --config " + cfg.string() + " --out " + (dir / "data").string()), 0);
  const auto m = json::parse(testing::read_bytes(dir / "data" / "manifest.json"));
  EXPECT_TRUE(m.at("scenes").empty());
}

TEST(Cli, SynthIsByteReproducible) {
  TempDir dir("cli1");
  const auto cfg = write_config(dir, "synth.json", tiny_synth(3));
  ASSERT_EQ(run("synth --config " + cfg.string() + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run("synth --config " + cfg.string() + " --out " + (dir / "b").string()), 0);
  EXPECT_EQ(tree_bytes(dir / "a"), tree_bytes(dir / "b"));
  ASSERT_EQ(run("synth --config " + cfg.string() + " --seed 6 --out " + (dir / "c").string()), 0);
  EXPECT_NE(tree_bytes(dir / "a"), tree_bytes(dir / "c"));
}

TEST(Cli, ExitCodes) {
  TempDir dir("cli2");
  auto bad = tiny_synth(1);
  bad["colour"] = "blue";
  EXPECT_EQ(run("synth --config " + write_config(dir, "bad.json", bad).string() + " --out " +
                (dir / "x").string()),
            2);
  EXPECT_EQ(run("synth --no-such-flag"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  auto unversioned = tiny_synth(1);
  unversioned.erase("schema_version");
  EXPECT_EQ(run("synth --config " + write_config(dir, "nov.json", unversioned).string() + " --out " +
                (dir / "y").string()),
            2);

  // A scene whose ground truth is smaller than the raw map.
  SceneRanges r;
  r.width = r.height = 40;
  auto s = generate_synthetic_scene(random_scene_spec(r, ObjectShape::kPlane, 1), 1);
  write_scene(s, dir / "data" / "scene_000");
  write_depth_pgm(DepthMap::filled(39, 40, 1000.0f), dir / "data" / "scene_000" / "gt.pgm");
  NetworkConfig nc;
  nc.groups = {{1, 4, false}};
  save_checkpoint(dir / "model.tofr", Network<float>::build(nc), nullptr, json::object());
  const json eval{{"schema_version", 1}};
  EXPECT_EQ(run("eval --config " + write_config(dir, "eval.json", eval).string() + " --data " +
                (dir / "data").string() + " --model " + (dir / "model.tofr").string() + " --out " +
                (dir / "e").string()),
            3);
  EXPECT_EQ(run("eval --config " + write_config(dir, "eval2.json", eval).string() + " --data " +
                (dir / "data").string() + " --model " + (dir / "missing.tofr").string() + " --out " +
                (dir / "e").string()),
            5);
}

TEST(Cli, SynthTrainEvalInferPipeline) {
  TempDir dir("cli3");
  const auto data = (dir / "data").string();
  ASSERT_EQ(run("synth --config " + write_config(dir, "s.json", tiny_synth(4)).string() + " --out " + data), 0);
  ASSERT_EQ(run("train --config " + write_config(dir, "t.json", tiny_train()).string() + " --data " + data +
                " --out " + (dir / "run").string()),
            0);
  for (const auto* f : {"model.tofr", "train_log.csv", "split.json", "train_summary.json"})
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
  const auto split = json::parse(testing::read_bytes(dir / "run" / "split.json"));
  EXPECT_EQ(split.at("held_out").size(), 2u);

  const json eval{{"schema_version", 1}, {"split", (dir / "run" / "split.json").string()}};
  ASSERT_EQ(run("eval --config " + write_config(dir, "e.json", eval).string() + " --data " + data + " --model " +
                (dir / "run" / "model.tofr").string() + " --out " + (dir / "eval").string()),
            0);
  const auto metrics = testing::read_bytes(dir / "eval" / "metrics.csv");
  EXPECT_EQ(metrics.rfind("model,postfilter,rms,rel,log10,pixels\n", 0), 0u);
  const auto mj = json::parse(testing::read_bytes(dir / "eval" / "metrics.json"));
  EXPECT_GT(mj.at("raw").at("pixel_count").get<int>(), 0);
  EXPECT_EQ(mj.at("config").at("seed"), 0);

  const json infer{{"schema_version", 1}, {"scene", data + "/scene_000"}};
  ASSERT_EQ(run("infer --config " + write_config(dir, "i.json", infer).string() + " --model " +
                (dir / "run" / "model.tofr").string() + " --out " + (dir / "inf").string()),
            0);
  EXPECT_NO_THROW(read_depth_pgm(dir / "inf" / "restored.pgm"));

  const json sweep{{"schema_version", 1}, {"sigmas", {0, 8}}, {"split", (dir / "run" / "split.json").string()}};
  ASSERT_EQ(run("noise-sweep --config " + write_config(dir, "n.json", sweep).string() + " --data " + data +
                " --model " + (dir / "run" / "model.tofr").string() + " --out " + (dir / "sweep").string()),
            0);
  const auto csv = testing::read_bytes(dir / "sweep" / "noise_sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Cli, AblationComparesThreeVariants) {
  TempDir dir("cli4");
  const auto data = (dir / "data").string();
  ASSERT_EQ(run("synth --config " + write_config(dir, "s.json", tiny_synth(4)).string() + " --out " + data), 0);
  ASSERT_EQ(run("ablation --config " + write_config(dir, "a.json", tiny_train()).string() + " --data " + data +
                " --out " + (dir / "abl").string()),
            0);
  for (const auto* v : {"proposed", "batch_norm", "single_scale"})
    EXPECT_TRUE(fs::exists(dir / "abl" / "models" / (std::string(v) + ".tofr"))) << v;
  const auto csv = testing::read_bytes(dir / "abl" / "ablation.csv");
  for (const auto* v : {"\nproposed,", "\nbatch_norm,", "\nsingle_scale,", "\nraw,"})
    EXPECT_NE(csv.find(v), std::string::npos) << v;
}

}  // namespace
}  // namespace tofr
