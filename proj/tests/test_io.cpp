#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ricl/io/checkpoint.hpp"
#include "ricl/io/demo_store.hpp"
#include "ricl/pipeline/dataset.hpp"
#include "ricl/sim/tasks.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ricl;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_cfg() {
  RunConfig cfg;
  cfg.env.max_steps = 60;
  cfg.model.width = 32;
  cfg.model.layers = 2;
  cfg.model.heads = 2;
  cfg.retrieval.embed_dim = 16;
  return cfg;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ricl_io_" + hex64(Rng(uint64_t(std::chrono::steady_clock::now().time_since_epoch().count())).next_u64()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config: parse, defaults, unknown keys, hash") {
  RunConfig cfg = RunConfig::parse("[env]\nimage_size = 64\n[retrieval]\nlambda = 10\n");
  CHECK(cfg.env.horizon == 15);
  CHECK(cfg.retrieval.k == 4);
  CHECK(cfg.retrieval.lambda == 10.0);

  CHECK_THROWS_WITH_AS(RunConfig::parse("[env]\nimage_sise = 64\n"),
                       doctest::Contains("config-unknown-key"), Error);
  CHECK_THROWS_WITH_AS(RunConfig::parse("[nope]\nx = 1\n"),
                       doctest::Contains("config-unknown-key"), Error);
  CHECK_THROWS_WITH_AS(RunConfig::parse("[model]\nwidth = 100\nheads = 3\n"),
                       doctest::Contains("config-invalid"), Error);

  RunConfig a = RunConfig::parse("[training]\nseed = 5\n");
  RunConfig b = RunConfig::parse("[training]\nseed = 6\n");
  CHECK(a.hash() != b.hash());
  CHECK(a.hash() == RunConfig::parse("[training]\nseed = 5\n").hash());
}

TEST_CASE("base64 round-trips binary payloads") {
  Rng rng(3);
  for (int len : {0, 1, 2, 3, 61, 1024}) {
    std::vector<unsigned char> data;
    data.resize(size_t(len));
    for (auto& b : data) b = static_cast<unsigned char>(rng.uniform_int(256));
    auto text = io::base64_encode(data.data(), data.size());
    CHECK(io::base64_decode(text) == data);
  }
  CHECK_THROWS_WITH_AS(io::base64_decode("abc"), doctest::Contains("bad-encoding"), Error);
  CHECK_THROWS_WITH_AS(io::base64_decode("a?=="), doctest::Contains("bad-encoding"), Error);
}

TEST_CASE("demo store: write, manifest counts, deterministic bytes, reload") {
  RunConfig cfg = tiny_cfg();
  TempDir tmp;
  auto demos = pipeline::generate_demo_set(
      {sim::find_task(sim::priming_suite(), "move-red-square-left"),
       sim::find_task(sim::priming_suite(), "lift-blue-circle")},
      3, 51, cfg);
  std::map<std::string, std::vector<sim::Demonstration>> by_task;
  for (auto& td : demos) by_task[td.spec.task_id] = td.demos;

  auto dir = (tmp.path / "store").string();
  io::write_demo_store(dir, by_task, cfg, false);
  auto manifest = io::read_manifest(dir);
  CHECK(manifest.tasks.size() == 2);
  CHECK(manifest.total_demos() == 6);
  CHECK(manifest.config_hash == cfg.hash_hex());

  // overwrite refusal without force
  CHECK_THROWS_WITH_AS(io::write_demo_store(dir, by_task, cfg, false),
                       doctest::Contains("overwrite-refused"), Error);

  // rerun with force: byte-identical files
  auto before = read_file(fs::path(dir) / "manifest.json");
  auto task_before = read_file(fs::path(dir) / (demos[0].spec.task_id + ".jsonl"));
  io::write_demo_store(dir, by_task, cfg, true);
  CHECK(read_file(fs::path(dir) / "manifest.json") == before);
  CHECK(read_file(fs::path(dir) / (demos[0].spec.task_id + ".jsonl")) == task_before);

  // reload: labels and proprio exact, images within u8 quantization
  auto loaded = io::read_task_demos(dir, manifest, demos[0].spec.task_id);
  REQUIRE(loaded.size() == 3);
  for (size_t i = 0; i < loaded.size(); ++i) {
    REQUIRE(loaded[i].length() == demos[0].demos[i].length());
    CHECK(loaded[i].demo_id == demos[0].demos[i].demo_id);
    CHECK(loaded[i].seed == demos[0].demos[i].seed);
    for (int s = 0; s < loaded[i].length(); ++s) {
      const auto& a = loaded[i].steps[size_t(s)];
      const auto& b = demos[0].demos[i].steps[size_t(s)];
      CHECK(a.label == b.label);
      CHECK(a.obs.proprio == b.obs.proprio);
      CHECK((a.obs.top_image.data - b.obs.top_image.data).cwiseAbs().maxCoeff() <= 0.5f / 255.f + 1e-6f);
    }
  }
}

TEST_CASE("demo store rejects undeclared shapes") {
  RunConfig cfg = tiny_cfg();
  TempDir tmp;
  auto demos = pipeline::generate_demo_set(
      {sim::find_task(sim::priming_suite(), "move-red-square-left")}, 2, 53, cfg);
  std::map<std::string, std::vector<sim::Demonstration>> by_task;
  by_task[demos[0].spec.task_id] = demos[0].demos;
  auto dir = (tmp.path / "store").string();
  io::write_demo_store(dir, by_task, cfg, false);

  // corrupt the declared shape of the first record
  auto file = fs::path(dir) / (demos[0].spec.task_id + ".jsonl");
  std::string contents = read_file(file);
  auto at = contents.find("\"shape\":[64,64,3]");
  REQUIRE(at != std::string::npos);
  contents.replace(at, 17, "\"shape\":[32,64,3]");
  std::ofstream(file, std::ios::binary) << contents;

  auto manifest = io::read_manifest(dir);
  CHECK_THROWS_WITH_AS(io::read_task_demos(dir, manifest, demos[0].spec.task_id),
                       doctest::Contains("shape-mismatch"), Error);
}

TEST_CASE("checkpoint: save/load identity, lineage, determinism") {
  RunConfig cfg = tiny_cfg();
  TempDir tmp;
  io::PolicyBundle bundle = io::new_bundle(cfg, 61, "base");
  bundle.meta.parent_hash = "cafe";
  bundle.meta.buffer_hash = "beef";

  auto path = (tmp.path / "a.ckpt").string();
  uint64_t h1 = io::save_checkpoint(bundle, path);
  CHECK(h1 == io::file_hash(path));

  auto loaded = io::load_checkpoint(path);
  CHECK(loaded.meta.phase == "base");
  CHECK(loaded.meta.parent_hash == "cafe");
  CHECK(loaded.meta.buffer_hash == "beef");
  CHECK(loaded.cfg.hash() == cfg.hash());

  const auto& a = bundle.model->params().all();
  const auto& b = loaded.model->params().all();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(a[i]->value == b[i]->value);
  }

  // embedder round-trips byte-identically inside the checkpoint
  std::ostringstream ea, eb;
  bundle.embedder->serialize(ea);
  loaded.embedder->serialize(eb);
  CHECK(ea.str() == eb.str());

  // saving twice gives identical bytes
  auto path2 = (tmp.path / "b.ckpt").string();
  uint64_t h2 = io::save_checkpoint(bundle, path2);
  CHECK(h1 == h2);
  CHECK(read_file(path) == read_file(path2));

  // clone preserves parameters
  auto clone = io::clone_bundle(bundle);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == clone.model->params().all()[i]->value);

  CHECK_THROWS_WITH_AS(io::load_checkpoint((tmp.path / "missing.ckpt").string()),
                       doctest::Contains("io-error"), Error);
}

TEST_CASE("checkpoint rejects corrupt payloads") {
  RunConfig cfg = tiny_cfg();
  TempDir tmp;
  io::PolicyBundle bundle = io::new_bundle(cfg, 63, "base");
  auto path = (tmp.path / "c.ckpt").string();
  io::save_checkpoint(bundle, path);
  auto contents = read_file(path);
  std::ofstream(path, std::ios::binary) << contents.substr(0, contents.size() / 2);
  CHECK_THROWS_AS(io::load_checkpoint(path), Error);
}

#ifdef RICL_BIN
TEST_CASE("cli: gen-demos determinism, dry runs, guard rails") {
  TempDir tmp;
  auto cfg_path = (tmp.path / "run.cfg").string();
  std::ofstream(cfg_path) << "[env]\nmax_steps = 60\n[model]\nwidth = 32\nlayers = 2\nheads = 2\n"
                          << "[retrieval]\nembed_dim = 16\n[training]\nseed = 9\n";
  auto data = (tmp.path / "data").string();
  std::string base = std::string(RICL_BIN) + " --config " + cfg_path + " --data-dir " + data + " ";
  auto run = [&](const std::string& args) { return std::system((base + args).c_str()); };

  CHECK(run("gen-demos --tasks move-red-square-left,move-blue-circle-right --per-task 2 "
            ">/dev/null 2>&1") == 0);
  auto store = fs::path(data) / "demos";
  auto manifest_before = read_file(store / "manifest.json");
  auto task_before = read_file(store / "move-red-square-left.jsonl");

  // overwrite refused without --force
  CHECK(run("gen-demos --tasks move-red-square-left,move-blue-circle-right --per-task 2 "
            ">/dev/null 2>&1") != 0);
  // rerun with --force is byte-identical
  CHECK(run("gen-demos --tasks move-red-square-left,move-blue-circle-right --per-task 2 --force "
            ">/dev/null 2>&1") == 0);
  CHECK(read_file(store / "manifest.json") == manifest_before);
  CHECK(read_file(store / "move-red-square-left.jsonl") == task_before);

  // prime without --in reports a missing parent
  CHECK(run("prime --out x.ckpt >/dev/null 2>&1") != 0);

  // retrieval methods demand a buffer
  CHECK(run("rollout --ckpt missing.ckpt --task move-red-square-left --method retrieve-and-play "
            ">/dev/null 2>&1") != 0);
}
#endif
