#include "ricl/config.hpp"

#include "ricl/common.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ricl {
namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int x = std::stoi(v, &pos);
    require(pos == v.size(), "config-parse", "trailing junk in " + key + "=" + v);
    return x;
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail("config-parse", "expected integer for " + key + ", got '" + v + "'");
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    uint64_t x = std::stoull(v, &pos);
    require(pos == v.size(), "config-parse", "trailing junk in " + key + "=" + v);
    return x;
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail("config-parse", "expected unsigned integer for " + key + ", got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    require(pos == v.size(), "config-parse", "trailing junk in " + key + "=" + v);
    return x;
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail("config-parse", "expected number for " + key + ", got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail("config-parse", "expected bool for " + key + ", got '" + v + "'");
}

std::vector<uint64_t> to_u64_list(const std::string& key, const std::string& v) {
  std::vector<uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_u64(key, item));
  }
  require(!out.empty(), "config-parse", "empty list for " + key);
  return out;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      require(t.back() == ']', "config-parse", "bad section header at line " + std::to_string(lineno));
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    size_t eq = t.find('=');
    require(eq != std::string::npos, "config-parse", "expected key=value at line " + std::to_string(lineno));
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    std::string full = section + "." + key;

    if (full == "env.image_size") cfg.env.image_size = to_int(full, val);
    else if (full == "env.horizon") cfg.env.horizon = to_int(full, val);
    else if (full == "env.action_dim") cfg.env.action_dim = to_int(full, val);
    else if (full == "env.state_dim") cfg.env.state_dim = to_int(full, val);
    else if (full == "env.max_steps") cfg.env.max_steps = to_int(full, val);
    else if (full == "env.v_max") cfg.env.v_max = to_double(full, val);
    else if (full == "env.grasp_radius") cfg.env.grasp_radius = to_double(full, val);
    else if (full == "env.close_threshold") cfg.env.close_threshold = to_double(full, val);
    else if (full == "env.wrist_view") cfg.env.wrist_view = to_bool(full, val);
    else if (full == "codec.bins_per_dim") cfg.codec.bins_per_dim = to_int(full, val);
    else if (full == "codec.dct_transform") cfg.codec.dct_transform = to_bool(full, val);
    else if (full == "model.layers") cfg.model.layers = to_int(full, val);
    else if (full == "model.heads") cfg.model.heads = to_int(full, val);
    else if (full == "model.width") cfg.model.width = to_int(full, val);
    else if (full == "model.context_length") cfg.model.context_length = to_int(full, val);
    else if (full == "model.dropout") cfg.model.dropout = to_double(full, val);
    else if (full == "model.causal") cfg.model.causal = to_bool(full, val);
    else if (full == "retrieval.k") cfg.retrieval.k = to_int(full, val);
    else if (full == "retrieval.embed_dim") cfg.retrieval.embed_dim = to_int(full, val);
    else if (full == "retrieval.patches") cfg.retrieval.patches = to_int(full, val);
    else if (full == "retrieval.lambda") cfg.retrieval.lambda = to_double(full, val);
    else if (full == "retrieval.embed_seed") cfg.retrieval.embed_seed = to_u64(full, val);
    else if (full == "training.seed") cfg.training.seed = to_u64(full, val);
    else if (full == "training.batch_size") cfg.training.batch_size = to_int(full, val);
    else if (full == "training.pretrain_epochs") cfg.training.pretrain_epochs = to_int(full, val);
    else if (full == "training.pretrain_warmup") cfg.training.pretrain_warmup = to_int(full, val);
    else if (full == "training.pretrain_peak_lr") cfg.training.pretrain_peak_lr = to_double(full, val);
    else if (full == "training.pretrain_decay_steps") cfg.training.pretrain_decay_steps = to_int(full, val);
    else if (full == "training.prime_epochs") cfg.training.prime_epochs = to_int(full, val);
    else if (full == "training.prime_warmup") cfg.training.prime_warmup = to_int(full, val);
    else if (full == "training.prime_peak_lr") cfg.training.prime_peak_lr = to_double(full, val);
    else if (full == "training.prime_decay_steps") cfg.training.prime_decay_steps = to_int(full, val);
    else if (full == "training.finetune_steps") cfg.training.finetune_steps = to_int(full, val);
    else if (full == "training.finetune_warmup") cfg.training.finetune_warmup = to_int(full, val);
    else if (full == "training.finetune_decay_steps") cfg.training.finetune_decay_steps = to_int(full, val);
    else if (full == "training.finetune_peak_lr") cfg.training.finetune_peak_lr = to_double(full, val);
    else if (full == "training.floor_lr_ratio") cfg.training.floor_lr_ratio = to_double(full, val);
    else if (full == "training.grad_clip") cfg.training.grad_clip = to_double(full, val);
    else if (full == "training.loss_mode") cfg.training.loss_mode = val;
    else if (full == "eval.n_rollouts") cfg.eval.n_rollouts = to_int(full, val);
    else if (full == "eval.seeds") cfg.eval.seeds = to_u64_list(full, val);
    else if (full == "eval.pre_grip_actions") cfg.eval.pre_grip_actions = to_int(full, val);
    else if (full == "eval.post_grip_actions") cfg.eval.post_grip_actions = to_int(full, val);
    else if (full == "eval.post_grip_actions_finetuned") cfg.eval.post_grip_actions_finetuned = to_int(full, val);
    else if (full == "eval.workers") cfg.eval.workers = to_int(full, val);
    else if (full == "paths.data_dir") cfg.paths.data_dir = val;
    else fail("config-unknown-key", "'" + full + "' at line " + std::to_string(lineno));
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "config-io", "cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void RunConfig::validate() const {
  require(env.image_size >= 16, "config-invalid", "env.image_size too small");
  require(env.horizon >= 1 && env.action_dim >= 1, "config-invalid", "bad chunk shape");
  require(env.close_threshold > 0 && env.close_threshold < 1, "config-invalid", "close_threshold in (0,1)");
  require(codec.bins_per_dim >= 2, "config-invalid", "codec.bins_per_dim >= 2 required");
  require(model.width % model.heads == 0, "config-invalid", "model.width must be divisible by heads");
  require(model.dropout == 0.0, "config-invalid", "dropout is not supported (determinism)");
  require(retrieval.k >= 1, "config-invalid", "retrieval.k >= 1");
  int g = int(std::lround(std::sqrt(double(retrieval.patches))));
  require(g * g == retrieval.patches, "config-invalid", "retrieval.patches must be a perfect square");
  require(env.image_size % g == 0, "config-invalid", "image_size must be divisible by patch grid");
  require(retrieval.lambda >= 0, "config-invalid", "retrieval.lambda >= 0");
  require(training.batch_size >= 1, "config-invalid", "training.batch_size >= 1");
  require(training.floor_lr_ratio >= 0 && training.floor_lr_ratio <= 1, "config-invalid", "floor_lr_ratio in [0,1]");
  require(training.loss_mode == "post-interp" || training.loss_mode == "pre-interp",
          "config-invalid", "training.loss_mode must be post-interp or pre-interp");
  require(eval.n_rollouts >= 1 && !eval.seeds.empty(), "config-invalid", "eval needs rollouts and seeds");
  require(eval.pre_grip_actions >= 1 && eval.pre_grip_actions <= env.horizon, "config-invalid",
          "pre_grip_actions in [1, H]");
  require(eval.post_grip_actions >= 1 && eval.post_grip_actions <= env.horizon, "config-invalid",
          "post_grip_actions in [1, H]");
  require(eval.post_grip_actions_finetuned >= 1 && eval.post_grip_actions_finetuned <= env.horizon,
          "config-invalid", "post_grip_actions_finetuned in [1, H]");
  require(eval.workers >= 1, "config-invalid", "eval.workers >= 1");
}

std::string RunConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "[env]\n"
     << "image_size=" << env.image_size << "\n"
     << "horizon=" << env.horizon << "\n"
     << "action_dim=" << env.action_dim << "\n"
     << "state_dim=" << env.state_dim << "\n"
     << "max_steps=" << env.max_steps << "\n"
     << "v_max=" << env.v_max << "\n"
     << "grasp_radius=" << env.grasp_radius << "\n"
     << "close_threshold=" << env.close_threshold << "\n"
     << "wrist_view=" << env.wrist_view << "\n"
     << "[codec]\n"
     << "bins_per_dim=" << codec.bins_per_dim << "\n"
     << "dct_transform=" << codec.dct_transform << "\n"
     << "[model]\n"
     << "layers=" << model.layers << "\n"
     << "heads=" << model.heads << "\n"
     << "width=" << model.width << "\n"
     << "context_length=" << model.context_length << "\n"
     << "dropout=" << model.dropout << "\n"
     << "causal=" << model.causal << "\n"
     << "[retrieval]\n"
     << "k=" << retrieval.k << "\n"
     << "embed_dim=" << retrieval.embed_dim << "\n"
     << "patches=" << retrieval.patches << "\n"
     << "lambda=" << retrieval.lambda << "\n"
     << "embed_seed=" << retrieval.embed_seed << "\n"
     << "[training]\n"
     << "seed=" << training.seed << "\n"
     << "batch_size=" << training.batch_size << "\n"
     << "pretrain_epochs=" << training.pretrain_epochs << "\n"
     << "pretrain_warmup=" << training.pretrain_warmup << "\n"
     << "pretrain_peak_lr=" << training.pretrain_peak_lr << "\n"
     << "pretrain_decay_steps=" << training.pretrain_decay_steps << "\n"
     << "prime_epochs=" << training.prime_epochs << "\n"
     << "prime_warmup=" << training.prime_warmup << "\n"
     << "prime_peak_lr=" << training.prime_peak_lr << "\n"
     << "prime_decay_steps=" << training.prime_decay_steps << "\n"
     << "finetune_steps=" << training.finetune_steps << "\n"
     << "finetune_warmup=" << training.finetune_warmup << "\n"
     << "finetune_decay_steps=" << training.finetune_decay_steps << "\n"
     << "finetune_peak_lr=" << training.finetune_peak_lr << "\n"
     << "floor_lr_ratio=" << training.floor_lr_ratio << "\n"
     << "grad_clip=" << training.grad_clip << "\n"
     << "loss_mode=" << training.loss_mode << "\n"
     << "[eval]\n"
     << "n_rollouts=" << eval.n_rollouts << "\n";
  os << "seeds=";
  for (size_t i = 0; i < eval.seeds.size(); ++i) os << (i ? "," : "") << eval.seeds[i];
  os << "\n"
     << "pre_grip_actions=" << eval.pre_grip_actions << "\n"
     << "post_grip_actions=" << eval.post_grip_actions << "\n"
     << "post_grip_actions_finetuned=" << eval.post_grip_actions_finetuned << "\n";
  // workers and paths do not affect results; they are not part of the hash
  return os.str();
}

uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

std::string RunConfig::hash_hex() const { return hex64(hash()); }

std::string RunConfig::resolved_data_dir() const {
  if (!paths.data_dir.empty()) return paths.data_dir;
  if (const char* env_dir = std::getenv("RICL_DATA_DIR")) return env_dir;
  return "./data";
}

}  // namespace ricl
