#include "ricl/io/demo_store.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace ricl::io {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {
const char* kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const unsigned char* data, size_t n) {
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (size_t i = 0; i < n; i += 3) {
    unsigned v = unsigned(data[i]) << 16;
    if (i + 1 < n) v |= unsigned(data[i + 1]) << 8;
    if (i + 2 < n) v |= unsigned(data[i + 2]);
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(i + 1 < n ? kB64[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < n ? kB64[v & 63] : '=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  static int lut[256];
  static bool init = [] {
    for (int i = 0; i < 256; ++i) lut[i] = -1;
    for (int i = 0; i < 64; ++i) lut[int(kB64[i])] = i;
    return true;
  }();
  (void)init;
  require(text.size() % 4 == 0, "bad-encoding", "base64 length must be a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pads = 0;
    for (int j = 0; j < 4; ++j) {
      char c = text[i + size_t(j)];
      if (c == '=') {
        vals[j] = 0;
        ++pads;
      } else {
        vals[j] = lut[int(static_cast<unsigned char>(c))];
        require(vals[j] >= 0, "bad-encoding", "invalid base64 character");
        require(pads == 0, "bad-encoding", "base64 data after padding");
      }
    }
    unsigned v = unsigned(vals[0]) << 18 | unsigned(vals[1]) << 12 | unsigned(vals[2]) << 6 |
                 unsigned(vals[3]);
    out.push_back((v >> 16) & 0xff);
    if (pads < 2) out.push_back((v >> 8) & 0xff);
    if (pads < 1) out.push_back(v & 0xff);
  }
  return out;
}

void write_demo_store(const std::string& dir,
                      const std::map<std::string, std::vector<sim::Demonstration>>& demos_by_task,
                      const RunConfig& cfg, bool force) {
  fs::path root(dir);
  if (fs::exists(root / "manifest.json"))
    require(force, "overwrite-refused", dir + " already holds a demo store (use --force)");
  fs::create_directories(root);

  json manifest;
  manifest["format"] = "ricl-demos-1";
  manifest["config_hash"] = cfg.hash_hex();
  manifest["image_size"] = cfg.env.image_size;
  manifest["horizon"] = cfg.env.horizon;
  manifest["action_dim"] = cfg.env.action_dim;
  manifest["state_dim"] = cfg.env.state_dim;
  json tasks = json::array();

  for (const auto& [task_id, demos] : demos_by_task) {
    std::string fname = task_id + ".jsonl";
    std::ofstream out(root / fname, std::ios::binary);
    require(out.good(), "io-error", "cannot write " + (root / fname).string());
    json tentry;
    tentry["task_id"] = task_id;
    tentry["file"] = fname;
    json demo_ids = json::array(), seeds = json::array();
    std::string prompt;
    for (const auto& demo : demos) {
      demo_ids.push_back(demo.demo_id);
      seeds.push_back(demo.seed);
      for (int s = 0; s < demo.length(); ++s) {
        const auto& step = demo.steps[size_t(s)];
        prompt = step.obs.prompt;
        const Image& img = step.obs.top_image;
        std::vector<unsigned char> raw(size_t(img.data.size()));
        for (Eigen::Index i = 0; i < img.data.size(); ++i)
          raw[size_t(i)] =
              static_cast<unsigned char>(std::lround(std::min(std::max(img.data[i], 0.f), 1.f) * 255.f));
        json rec;
        rec["demo_id"] = demo.demo_id;
        rec["step"] = s;
        json proprio = json::array();
        for (Eigen::Index d = 0; d < step.obs.proprio.size(); ++d)
          proprio.push_back(step.obs.proprio[d]);
        rec["proprio"] = proprio;
        json chunk = json::array();
        for (Eigen::Index r = 0; r < step.label.rows(); ++r) {
          json row = json::array();
          for (Eigen::Index c = 0; c < step.label.cols(); ++c) row.push_back(step.label(r, c));
          chunk.push_back(row);
        }
        rec["action_chunk"] = chunk;
        rec["image"] = {{"dtype", "u8"},
                        {"shape", {img.height, img.width, 3}},
                        {"data", base64_encode(raw.data(), raw.size())}};
        out << rec.dump() << "\n";
      }
    }
    tentry["prompt"] = prompt;
    tentry["demo_ids"] = demo_ids;
    tentry["seeds"] = seeds;
    tasks.push_back(tentry);
  }
  manifest["tasks"] = tasks;
  std::ofstream mout(root / "manifest.json", std::ios::binary);
  mout << manifest.dump(2) << "\n";
  require(mout.good(), "io-error", "cannot write manifest");
}

DemoStoreManifest read_manifest(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  require(in.good(), "io-error", "no manifest under " + dir);
  json m = json::parse(in, nullptr, false);
  require(!m.is_discarded() && m.value("format", "") == "ricl-demos-1", "bad-manifest",
          "unrecognized manifest format");
  DemoStoreManifest out;
  out.config_hash = m.at("config_hash").get<std::string>();
  out.image_size = m.at("image_size").get<int>();
  out.horizon = m.at("horizon").get<int>();
  out.action_dim = m.at("action_dim").get<int>();
  out.state_dim = m.at("state_dim").get<int>();
  for (const auto& t : m.at("tasks")) {
    DemoStoreManifest::TaskEntry e;
    e.task_id = t.at("task_id").get<std::string>();
    e.prompt = t.at("prompt").get<std::string>();
    e.file = t.at("file").get<std::string>();
    e.demo_ids = t.at("demo_ids").get<std::vector<int>>();
    e.seeds = t.at("seeds").get<std::vector<uint64_t>>();
    out.tasks.push_back(std::move(e));
  }
  return out;
}

std::vector<sim::Demonstration> read_task_demos(const std::string& dir,
                                                const DemoStoreManifest& manifest,
                                                const std::string& task_id) {
  const DemoStoreManifest::TaskEntry* entry = nullptr;
  for (const auto& t : manifest.tasks)
    if (t.task_id == task_id) entry = &t;
  require(entry != nullptr, "unknown-task", task_id + " not in manifest");

  std::ifstream in(fs::path(dir) / entry->file);
  require(in.good(), "io-error", "cannot read " + entry->file);

  std::map<int, sim::Demonstration> by_id;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line, nullptr, false);
    require(!rec.is_discarded(), "bad-record", "malformed JSON line in " + entry->file);
    int demo_id = rec.at("demo_id").get<int>();
    int step = rec.at("step").get<int>();

    const auto& imeta = rec.at("image");
    require(imeta.at("dtype").get<std::string>() == "u8", "bad-record", "unsupported image dtype");
    auto shape = imeta.at("shape").get<std::vector<int>>();
    require(shape.size() == 3 && shape[0] == manifest.image_size &&
                shape[1] == manifest.image_size && shape[2] == 3,
            "shape-mismatch", "declared image shape does not match the manifest");
    auto raw = base64_decode(imeta.at("data").get<std::string>());
    require(int(raw.size()) == shape[0] * shape[1] * shape[2], "shape-mismatch",
            "image payload does not match its declared shape");

    sim::DemoStep dstep;
    dstep.obs.top_image = Image(shape[0], shape[1]);
    for (size_t i = 0; i < raw.size(); ++i)
      dstep.obs.top_image.data[Eigen::Index(i)] = float(raw[i]) / 255.f;
    auto proprio = rec.at("proprio").get<std::vector<double>>();
    require(int(proprio.size()) == manifest.state_dim, "shape-mismatch", "proprio length");
    dstep.obs.proprio = Eigen::Map<const VecD>(proprio.data(), Eigen::Index(proprio.size()));
    dstep.obs.prompt = entry->prompt;
    const auto& chunk = rec.at("action_chunk");
    require(int(chunk.size()) == manifest.horizon, "shape-mismatch", "chunk rows");
    dstep.label.resize(manifest.horizon, manifest.action_dim);
    for (int r = 0; r < manifest.horizon; ++r) {
      auto row = chunk[size_t(r)].get<std::vector<double>>();
      require(int(row.size()) == manifest.action_dim, "shape-mismatch", "chunk cols");
      for (int c = 0; c < manifest.action_dim; ++c) dstep.label(r, c) = row[size_t(c)];
    }

    auto& demo = by_id[demo_id];
    demo.task_id = task_id;
    demo.demo_id = demo_id;
    if (int(demo.steps.size()) <= step) demo.steps.resize(size_t(step) + 1);
    demo.steps[size_t(step)] = std::move(dstep);
  }

  std::vector<sim::Demonstration> demos;
  for (auto& [id, demo] : by_id) {
    for (size_t i = 0; i < entry->demo_ids.size(); ++i)
      if (entry->demo_ids[i] == id) demo.seed = entry->seeds[i];
    demos.push_back(std::move(demo));
  }
  return demos;
}

}  // namespace ricl::io
