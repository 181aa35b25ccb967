#include "ricl/io/checkpoint.hpp"

#include "ricl/sim/tasks.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace ricl::io {

using nlohmann::json;

codec::CodecConfig make_codec_config(const RunConfig& cfg) {
  codec::CodecConfig c;
  c.bins_per_dim = cfg.codec.bins_per_dim;
  c.horizon = cfg.env.horizon;
  c.action_dim = cfg.env.action_dim;
  c.state_dim = cfg.env.state_dim;
  c.dct_transform = cfg.codec.dct_transform;
  c.action_min = VecD(cfg.env.action_dim);
  c.action_max = VecD(cfg.env.action_dim);
  for (int d = 0; d < cfg.env.action_dim; ++d) {
    if (d == cfg.env.action_dim - 1) {  // gripper aperture target
      c.action_min[d] = 0.0;
      c.action_max[d] = 1.0;
    } else {
      c.action_min[d] = -cfg.env.v_max;
      c.action_max[d] = cfg.env.v_max;
    }
  }
  c.state_min = VecD(cfg.env.state_dim);
  c.state_max = VecD(cfg.env.state_dim);
  for (int d = 0; d < cfg.env.state_dim; ++d) {
    c.state_min[d] = 0.0;
    c.state_max[d] = (d == 2) ? sim::TableGeometry::z_max : 1.0;
  }
  c.lexicon = sim::prompt_lexicon();
  return c;
}

vision::EmbedConfig make_embed_config(const RunConfig& cfg) {
  vision::EmbedConfig e;
  e.image_size = cfg.env.image_size;
  e.patches = cfg.retrieval.patches;
  e.embed_dim = cfg.retrieval.embed_dim;
  e.token_dim = cfg.model.width;
  e.seed = cfg.retrieval.embed_seed;
  return e;
}

nn::ModelConfig make_model_config(const RunConfig& cfg, const codec::CodecConfig& ccfg) {
  nn::ModelConfig m;
  m.layers = cfg.model.layers;
  m.heads = cfg.model.heads;
  m.width = cfg.model.width;
  m.context_length = cfg.model.context_length;
  m.vocab = ccfg.vocab_size();
  m.groups = cfg.retrieval.k + 1;
  m.causal = cfg.model.causal;
  return m;
}

PolicyBundle new_bundle(const RunConfig& cfg, uint64_t model_seed, const std::string& phase) {
  PolicyBundle b;
  b.cfg = cfg;
  auto ccfg = make_codec_config(cfg);
  b.codec = std::make_unique<codec::Codec>(ccfg);
  b.embedder = std::make_unique<vision::FrozenEmbedder>(make_embed_config(cfg));
  b.mcfg = make_model_config(cfg, ccfg);
  b.model = std::make_unique<nn::TransformerModel<float>>(b.mcfg, model_seed);
  b.meta.phase = phase;
  b.meta.seed = model_seed;
  return b;
}

PolicyBundle clone_bundle(const PolicyBundle& src) {
  PolicyBundle b;
  b.cfg = src.cfg;
  b.codec = std::make_unique<codec::Codec>(src.codec->config());
  b.embedder = std::make_unique<vision::FrozenEmbedder>(*src.embedder);
  b.mcfg = src.mcfg;
  b.model = std::make_unique<nn::TransformerModel<float>>(b.mcfg, src.meta.seed);
  const auto& from = src.model->params().all();
  const auto& to = b.model->params().all();
  for (size_t i = 0; i < from.size(); ++i) to[i]->value = from[i]->value;
  b.meta = src.meta;
  return b;
}

uint64_t save_checkpoint(const PolicyBundle& bundle, const std::string& path) {
  std::ostringstream embed_blob;
  bundle.embedder->serialize(embed_blob);
  const std::string embed_bytes = embed_blob.str();

  json header;
  header["format"] = "riclckpt-1";
  header["config"] = bundle.cfg.canonical();
  header["config_hash"] = bundle.cfg.hash_hex();
  header["meta"] = {{"phase", bundle.meta.phase},
                    {"parent", bundle.meta.parent_hash},
                    {"buffer", bundle.meta.buffer_hash},
                    {"seed", bundle.meta.seed}};
  header["codec_hash"] = hex64(bundle.codec->config().hash());
  header["embed_bytes"] = embed_bytes.size();
  json tensors = json::array();
  for (const auto& p : bundle.model->params().all())
    tensors.push_back({{"name", p->name},
                       {"rows", p->value.rows()},
                       {"cols", p->value.cols()},
                       {"frozen", p->frozen}});
  header["tensors"] = tensors;
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::binary);
  require(out.good(), "io-error", "cannot write " + path);
  out.write("RICLCKP1", 8);
  uint64_t head_len = head.size();
  out.write(reinterpret_cast<const char*>(&head_len), 8);
  out.write(head.data(), std::streamsize(head.size()));
  for (const auto& p : bundle.model->params().all()) {
    for (Eigen::Index r = 0; r < p->value.rows(); ++r)
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        float v = p->value(r, c);
        out.write(reinterpret_cast<const char*>(&v), 4);
      }
  }
  out.write(embed_bytes.data(), std::streamsize(embed_bytes.size()));
  require(out.good(), "io-error", "write failed for " + path);
  out.close();
  return file_hash(path);
}

PolicyBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "io-error", "cannot read " + path);
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::string(magic, 8) == "RICLCKP1", "bad-checkpoint", "bad magic");
  uint64_t head_len = 0;
  in.read(reinterpret_cast<char*>(&head_len), 8);
  require(in.good() && head_len > 0 && head_len < (64u << 20), "bad-checkpoint", "bad header size");
  std::string head(head_len, '\0');
  in.read(head.data(), std::streamsize(head_len));
  require(in.good(), "bad-checkpoint", "truncated header");

  json header = json::parse(head, nullptr, false);
  require(!header.is_discarded() && header.value("format", "") == "riclckpt-1", "bad-checkpoint",
          "unrecognized header");

  PolicyBundle b;
  b.cfg = RunConfig::parse(header.at("config").get<std::string>());
  auto ccfg = make_codec_config(b.cfg);
  b.codec = std::make_unique<codec::Codec>(ccfg);
  require(hex64(ccfg.hash()) == header.at("codec_hash").get<std::string>(), "bad-checkpoint",
          "codec config hash mismatch");
  b.mcfg = make_model_config(b.cfg, ccfg);
  b.meta.phase = header.at("meta").at("phase").get<std::string>();
  b.meta.parent_hash = header.at("meta").at("parent").get<std::string>();
  b.meta.buffer_hash = header.at("meta").at("buffer").get<std::string>();
  b.meta.seed = header.at("meta").at("seed").get<uint64_t>();
  b.model = std::make_unique<nn::TransformerModel<float>>(b.mcfg, b.meta.seed);

  const auto& params = b.model->params().all();
  const auto& tensors = header.at("tensors");
  require(tensors.size() == params.size(), "bad-checkpoint", "tensor manifest size mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    require(t.at("name").get<std::string>() == params[i]->name &&
                t.at("rows").get<Eigen::Index>() == params[i]->value.rows() &&
                t.at("cols").get<Eigen::Index>() == params[i]->value.cols(),
            "bad-checkpoint", "tensor manifest mismatch at " + params[i]->name);
    for (Eigen::Index r = 0; r < params[i]->value.rows(); ++r)
      for (Eigen::Index c = 0; c < params[i]->value.cols(); ++c) {
        float v;
        in.read(reinterpret_cast<char*>(&v), 4);
        params[i]->value(r, c) = v;
      }
  }
  require(in.good(), "bad-checkpoint", "truncated tensor payload");
  b.embedder = std::make_unique<vision::FrozenEmbedder>(vision::FrozenEmbedder::deserialize(in));
  require(b.embedder->config().image_size == b.cfg.env.image_size, "bad-checkpoint",
          "embedder does not match config");
  return b;
}

uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "io-error", "cannot read " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.good()) {
    in.read(buf, sizeof(buf));
    std::streamsize n = in.gcount();
    if (n > 0) h = fnv1a64(buf, size_t(n), h);
  }
  return h;
}

}  // namespace ricl::io
