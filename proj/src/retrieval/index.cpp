#include "ricl/retrieval/index.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace ricl::retrieval {
namespace {

struct Candidate {
  float dist_sq;
  int demo_id;
  int step;
  int entry;
};

bool candidate_less(const Candidate& a, const Candidate& b) {
  if (a.dist_sq != b.dist_sq) return a.dist_sq < b.dist_sq;
  if (a.demo_id != b.demo_id) return a.demo_id < b.demo_id;
  return a.step < b.step;
}

}  // namespace

Index Index::build(const std::vector<const sim::Demonstration*>& demos,
                   const std::vector<sim::TaskSpec>& tasks, const vision::FrozenEmbedder& embedder,
                   const codec::Codec& codec) {
  require(!demos.empty(), "empty-input", "index build needs at least one demonstration");

  Index index;
  int total = 0;
  for (const auto* d : demos) total += d->length();
  index.embeddings_.resize(embedder.config().embed_dim, total);
  index.image_tokens_.reserve(size_t(total));
  index.entries_.reserve(size_t(total));

  std::set<std::pair<int, int>> seen_keys;
  std::set<std::string> task_ids;

  int col = 0;
  for (const auto* demo : demos) {
    int task_idx = -1;
    for (size_t t = 0; t < tasks.size(); ++t)
      if (tasks[t].task_id == demo->task_id) { task_idx = int(t); break; }
    require(task_idx >= 0, "unknown-task", demo->task_id);
    if (task_ids.insert(demo->task_id).second) {
      TaskInfo info;
      info.task_id = tasks[size_t(task_idx)].task_id;
      info.prompt = tasks[size_t(task_idx)].prompt;
      info.prompt_ids = codec.encode_prompt(info.prompt);
      index.tasks_.push_back(std::move(info));
    }
    int local_task = -1;
    for (size_t t = 0; t < index.tasks_.size(); ++t)
      if (index.tasks_[t].task_id == demo->task_id) { local_task = int(t); break; }

    for (int s = 0; s < demo->length(); ++s) {
      require(seen_keys.insert({demo->demo_id, s}).second, "duplicate-entry",
              "demo " + std::to_string(demo->demo_id) + " step " + std::to_string(s));
      const auto& step = demo->steps[size_t(s)];
      index.embeddings_.col(col) = embedder.embed_top_image(step.obs.top_image).vector;
      index.image_tokens_.push_back(embedder.image_to_tokens(step.obs.top_image));
      BufferEntry e;
      e.task_idx = local_task;
      e.demo_id = demo->demo_id;
      e.step_index = s;
      e.proprio = step.obs.proprio;
      e.action_ids = codec.encode_chunk(step.label);
      index.entries_.push_back(std::move(e));
      ++col;
    }
  }
  index.config_hash_ = fnv1a64(hex64(embedder.source_hash()) + hex64(codec.config().hash()));
  return index;
}

int Index::task_entry_count(int task_idx) const {
  int n = 0;
  for (const auto& e : entries_)
    if (e.task_idx == task_idx) ++n;
  return n;
}

QueryResult Index::query(const VecF& q, int k, std::optional<int> exclude_demo,
                         std::optional<int> restrict_task) const {
  require(k >= 1, "bad-k", "k must be >= 1");
  require(q.size() == embeddings_.rows(), "dimension-mismatch",
          "query dim " + std::to_string(q.size()) + " vs index dim " +
              std::to_string(embeddings_.rows()));

  std::vector<Candidate> candidates;
  candidates.reserve(entries_.size());
  for (int i = 0; i < size(); ++i) {
    const BufferEntry& e = entries_[size_t(i)];
    if (exclude_demo && e.demo_id == *exclude_demo) continue;
    if (restrict_task && e.task_idx != *restrict_task) continue;
    candidates.push_back({distance_sq_to(i, q), e.demo_id, e.step_index, i});
  }
  require(!candidates.empty(), "empty-after-exclusion", "no candidate entries remain");

  int found = int(candidates.size());
  int take = std::min(k, found);
  std::partial_sort(candidates.begin(), candidates.begin() + take, candidates.end(), candidate_less);

  QueryResult res;
  res.neighbors.reserve(size_t(k));
  for (int i = 0; i < take; ++i)
    res.neighbors.push_back({candidates[size_t(i)].entry,
                             std::sqrt(std::max(candidates[size_t(i)].dist_sq, 0.f))});
  while (int(res.neighbors.size()) < k) {  // repeat the farthest and flag
    res.neighbors.push_back(res.neighbors.back());
    res.padded = true;
  }
  return res;
}

float Index::nearest_distance(const VecF& q) const {
  require(size() > 0, "empty-index", "nearest_distance on empty index");
  return query(q, 1).neighbors[0].distance;
}

uint64_t Index::content_hash() const {
  uint64_t h = fnv1a64(&config_hash_, sizeof(config_hash_));
  for (const auto& e : entries_) {
    h = fnv1a64(&e.demo_id, sizeof(e.demo_id), h);
    h = fnv1a64(&e.step_index, sizeof(e.step_index), h);
  }
  if (embeddings_.size() > 0)
    h = fnv1a64(embeddings_.data(), size_t(embeddings_.size()) * sizeof(float), h);
  return h;
}

void Index::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "io-error", "cannot write " + path);
  out.write("RICLIDX1", 8);
  int32_t dims = int32_t(embeddings_.rows()), count = int32_t(entries_.size());
  int32_t ntasks = int32_t(tasks_.size());
  out.write(reinterpret_cast<const char*>(&dims), 4);
  out.write(reinterpret_cast<const char*>(&count), 4);
  out.write(reinterpret_cast<const char*>(&ntasks), 4);
  out.write(reinterpret_cast<const char*>(&config_hash_), 8);
  for (const auto& t : tasks_) {
    int32_t len = int32_t(t.task_id.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(t.task_id.data(), len);
    len = int32_t(t.prompt.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(t.prompt.data(), len);
    len = int32_t(t.prompt_ids.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    for (int id : t.prompt_ids) {
      int32_t v = id;
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
  }
  for (int i = 0; i < count; ++i)
    out.write(reinterpret_cast<const char*>(embeddings_.col(i).data()), dims * 4);
  for (const auto& e : entries_) {
    int32_t rec[3] = {e.task_idx, e.demo_id, e.step_index};
    out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
    int32_t sp = int32_t(e.proprio.size());
    out.write(reinterpret_cast<const char*>(&sp), 4);
    for (int d = 0; d < sp; ++d) {
      float v = float(e.proprio[d]);
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
    int32_t na = int32_t(e.action_ids.size());
    out.write(reinterpret_cast<const char*>(&na), 4);
    for (int id : e.action_ids) {
      int32_t v = id;
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
  }
  require(out.good(), "io-error", "write failed for " + path);
}

Index Index::load(const std::string& path, const std::vector<const sim::Demonstration*>& demos,
                  const vision::FrozenEmbedder& embedder) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "io-error", "cannot read " + path);
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::string(magic, 8) == "RICLIDX1", "bad-index-file", "bad magic");
  int32_t dims, count, ntasks;
  in.read(reinterpret_cast<char*>(&dims), 4);
  in.read(reinterpret_cast<char*>(&count), 4);
  in.read(reinterpret_cast<char*>(&ntasks), 4);
  Index index;
  in.read(reinterpret_cast<char*>(&index.config_hash_), 8);
  require(in.good() && dims > 0 && count >= 0 && ntasks >= 0, "bad-index-file", "corrupt header");

  auto read_string = [&in]() {
    int32_t len;
    in.read(reinterpret_cast<char*>(&len), 4);
    require(in.good() && len >= 0 && len < 1 << 20, "bad-index-file", "bad string length");
    std::string s(size_t(len), '\0');
    in.read(s.data(), len);
    return s;
  };
  for (int t = 0; t < ntasks; ++t) {
    TaskInfo info;
    info.task_id = read_string();
    info.prompt = read_string();
    int32_t n;
    in.read(reinterpret_cast<char*>(&n), 4);
    require(in.good() && n >= 0, "bad-index-file", "bad prompt id count");
    info.prompt_ids.resize(size_t(n));
    for (int i = 0; i < n; ++i) {
      int32_t v;
      in.read(reinterpret_cast<char*>(&v), 4);
      info.prompt_ids[size_t(i)] = v;
    }
    index.tasks_.push_back(std::move(info));
  }

  index.embeddings_.resize(dims, count);
  for (int i = 0; i < count; ++i)
    in.read(reinterpret_cast<char*>(index.embeddings_.col(i).data()), dims * 4);
  index.entries_.resize(size_t(count));
  for (auto& e : index.entries_) {
    int32_t rec[3];
    in.read(reinterpret_cast<char*>(rec), sizeof(rec));
    e.task_idx = rec[0];
    e.demo_id = rec[1];
    e.step_index = rec[2];
    int32_t sp;
    in.read(reinterpret_cast<char*>(&sp), 4);
    require(in.good() && sp >= 0 && sp < 1024, "bad-index-file", "bad proprio size");
    e.proprio.resize(sp);
    for (int d = 0; d < sp; ++d) {
      float v;
      in.read(reinterpret_cast<char*>(&v), 4);
      e.proprio[d] = v;
    }
    int32_t na;
    in.read(reinterpret_cast<char*>(&na), 4);
    require(in.good() && na >= 0 && na < 1 << 20, "bad-index-file", "bad action id count");
    e.action_ids.resize(size_t(na));
    for (int i = 0; i < na; ++i) {
      int32_t v;
      in.read(reinterpret_cast<char*>(&v), 4);
      e.action_ids[size_t(i)] = v;
    }
  }
  require(in.good(), "bad-index-file", "truncated payload");

  // resolve payload images by reference into the demonstration set
  index.image_tokens_.reserve(size_t(count));
  for (const auto& e : index.entries_) {
    const sim::Demonstration* src = nullptr;
    for (const auto* d : demos)
      if (d->demo_id == e.demo_id) { src = d; break; }
    require(src != nullptr, "bad-index-file",
            "referenced demo " + std::to_string(e.demo_id) + " not provided");
    require(e.step_index < src->length(), "bad-index-file", "referenced step out of range");
    index.image_tokens_.push_back(
        embedder.image_to_tokens(src->steps[size_t(e.step_index)].obs.top_image));
  }
  return index;
}

}  // namespace ricl::retrieval
