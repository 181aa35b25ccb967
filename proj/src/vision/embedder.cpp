#include "ricl/vision/embedder.hpp"

#include <cmath>
#include <sstream>

namespace ricl::vision {
namespace {

MatF seeded_gaussian(int rows, int cols, Rng& rng, float scale) {
  MatF m(rows, cols);
  // row-major fill order so the layout is part of the contract
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = float(rng.normal()) * scale;
  return m;
}

void write_mat(std::ostream& out, const MatF& m) {
  int32_t rows = int32_t(m.rows()), cols = int32_t(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), 4);
  out.write(reinterpret_cast<const char*>(&cols), 4);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      float v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
}

MatF read_mat(std::istream& in) {
  int32_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), 4);
  in.read(reinterpret_cast<char*>(&cols), 4);
  require(in.good() && rows >= 0 && cols >= 0, "bad-embedder-state", "corrupt matrix header");
  MatF m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      float v;
      in.read(reinterpret_cast<char*>(&v), 4);
      m(r, c) = v;
    }
  require(in.good(), "bad-embedder-state", "truncated matrix payload");
  return m;
}

}  // namespace

FrozenEmbedder::FrozenEmbedder(const EmbedConfig& cfg) : cfg_(cfg) {
  grid_ = int(std::lround(std::sqrt(double(cfg.patches))));
  require(grid_ * grid_ == cfg.patches, "config-invalid", "patches must be a perfect square");
  require(cfg.image_size % grid_ == 0, "config-invalid", "image_size must divide into patches");
  patch_px_ = cfg.image_size / grid_;
  patch_dim_ = patch_px_ * patch_px_ * 3;

  const float scale = 1.0f / std::sqrt(float(patch_dim_));
  Rng retrieval_rng(Rng::substream(cfg.seed, 0x01));
  retrieval_proj_ = seeded_gaussian(cfg.embed_dim, patch_dim_, retrieval_rng, scale);
  Rng token_rng(Rng::substream(cfg.seed, 0x02));
  token_proj_ = seeded_gaussian(cfg.token_dim, patch_dim_, token_rng, scale);
  Rng color_rng(Rng::substream(cfg.seed, 0x03));
  color_proj_ = seeded_gaussian(cfg.token_dim, 3, color_rng, 1.0f / std::sqrt(3.0f));
  Rng moment_rng(Rng::substream(cfg.seed, 0x04));
  moment_proj_ = seeded_gaussian(cfg.token_dim, 6, moment_rng, 1.0f / std::sqrt(6.0f));
  Rng center_rng(Rng::substream(cfg.seed, 0x05));
  center_proj_ = seeded_gaussian(cfg.token_dim, 2, center_rng, 1.0f / std::sqrt(2.0f));

  std::ostringstream tag;
  tag << "embedder:" << cfg.image_size << ":" << cfg.patches << ":" << cfg.embed_dim << ":"
      << cfg.token_dim << ":" << cfg.seed;
  source_hash_ = fnv1a64(tag.str());
}

void FrozenEmbedder::check_shape(const Image& image) const {
  require(image.height == cfg_.image_size && image.width == cfg_.image_size &&
              image.data.size() == Eigen::Index(cfg_.image_size) * cfg_.image_size * 3,
          "shape-mismatch",
          "image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
              ", embedder expects " + std::to_string(cfg_.image_size));
}

MatF FrozenEmbedder::patch_matrix(const Image& image, bool centered) const {
  MatF patches(cfg_.patches, patch_dim_);
  for (int py = 0; py < grid_; ++py)
    for (int px = 0; px < grid_; ++px) {
      int p = py * grid_ + px;
      int i = 0;
      for (int y = py * patch_px_; y < (py + 1) * patch_px_; ++y)
        for (int x = px * patch_px_; x < (px + 1) * patch_px_; ++x)
          for (int c = 0; c < 3; ++c) patches(p, i++) = image.at(y, x, c);
      if (centered) {
        // per-channel mean over the patch
        float mean[3] = {0.f, 0.f, 0.f};
        const int n_px = patch_px_ * patch_px_;
        for (int j = 0; j < patch_dim_; ++j) mean[j % 3] += patches(p, j);
        for (float& m : mean) m /= float(n_px);
        for (int j = 0; j < patch_dim_; ++j) patches(p, j) -= mean[j % 3];
      }
    }
  return patches;
}

namespace {

// two-pass separable box blur (triangular kernel); keeps small displacements
// small in feature space so near-duplicate states retrieve at small distance
Image box_blur(const Image& img, int radius, int passes) {
  Image cur = img;
  for (int pass = 0; pass < passes; ++pass) {
    Image tmp(cur.height, cur.width);
    for (int y = 0; y < cur.height; ++y)
      for (int x = 0; x < cur.width; ++x)
        for (int c = 0; c < 3; ++c) {
          float acc = 0;
          int n = 0;
          for (int dx = -radius; dx <= radius; ++dx) {
            int xx = x + dx;
            if (xx < 0 || xx >= cur.width) continue;
            acc += cur.at(y, xx, c);
            ++n;
          }
          tmp.at(y, x, c) = acc / float(n);
        }
    Image out(cur.height, cur.width);
    for (int y = 0; y < cur.height; ++y)
      for (int x = 0; x < cur.width; ++x)
        for (int c = 0; c < 3; ++c) {
          float acc = 0;
          int n = 0;
          for (int dy = -radius; dy <= radius; ++dy) {
            int yy = y + dy;
            if (yy < 0 || yy >= cur.height) continue;
            acc += tmp.at(yy, x, c);
            ++n;
          }
          out.at(y, x, c) = acc / float(n);
        }
    cur = std::move(out);
  }
  return cur;
}

}  // namespace

RetrievalEmbedding FrozenEmbedder::embed_top_image(const Image& image) const {
  check_shape(image);
  Image smoothed = box_blur(image, /*radius=*/5, /*passes=*/3);
  MatF patches = patch_matrix(smoothed, /*centered=*/true);                // P x pd
  VecF pooled = (retrieval_proj_ * patches.transpose()).rowwise().mean();  // E
  float n = pooled.norm();
  if (n < 1e-12f) {
    // degenerate featureless image: pin a fixed unit vector
    pooled.setZero();
    pooled[0] = 1.0f;
    n = 1.0f;
  }
  return RetrievalEmbedding{pooled / n, source_hash_};
}

MatF FrozenEmbedder::image_to_tokens(const Image& image) const {
  check_shape(image);
  // spatial structure from centered patches, grounding color from the patch
  // mean; both fixed seeded projections
  MatF centered = patch_matrix(image, /*centered=*/true);
  MatF means(cfg_.patches, 3);
  MatF moments(cfg_.patches, 6);  // per channel: mean(x_hat * p), mean(y_hat * p)
  MatF centers(cfg_.patches, 2);  // patch center in [-1, 1] image coordinates
  const int n_px = patch_px_ * patch_px_;
  for (int py = 0; py < grid_; ++py)
    for (int px = 0; px < grid_; ++px) {
      int p = py * grid_ + px;
      float mean[3] = {0.f, 0.f, 0.f};
      float mx[3] = {0.f, 0.f, 0.f}, my[3] = {0.f, 0.f, 0.f};
      for (int y = py * patch_px_; y < (py + 1) * patch_px_; ++y)
        for (int x = px * patch_px_; x < (px + 1) * patch_px_; ++x) {
          // patch-local coordinates in [-1, 1]
          float xh = 2.f * (x - px * patch_px_ + 0.5f) / patch_px_ - 1.f;
          float yh = 2.f * (y - py * patch_px_ + 0.5f) / patch_px_ - 1.f;
          for (int c = 0; c < 3; ++c) {
            float v = image.at(y, x, c);
            mean[c] += v;
            mx[c] += xh * v;
            my[c] += yh * v;
          }
        }
      for (int c = 0; c < 3; ++c) {
        means(p, c) = mean[c] / float(n_px);
        moments(p, c) = 4.f * mx[c] / float(n_px);
        moments(p, 3 + c) = 4.f * my[c] / float(n_px);
      }
      centers(p, 0) = 2.f * (px + 0.5f) / grid_ - 1.f;
      centers(p, 1) = 2.f * (py + 0.5f) / grid_ - 1.f;
    }
  // channel scales keep every contribution O(1), so patch identity and
  // content are equally visible; the center channel is the per-patch bias
  return 0.5f * (centered * token_proj_.transpose()) +
         0.15f * (means * color_proj_.transpose()) +
         0.5f * (moments * moment_proj_.transpose()) +
         0.15f * (centers * center_proj_.transpose());  // P x F
}

float FrozenEmbedder::distance(const VecF& a, const VecF& b) {
  require(a.size() == b.size(), "dimension-mismatch",
          std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  return (a - b).norm();
}

float FrozenEmbedder::distance(const RetrievalEmbedding& a, const RetrievalEmbedding& b) {
  return distance(a.vector, b.vector);
}

void FrozenEmbedder::serialize(std::ostream& out) const {
  out.write("RICLEMB1", 8);
  int32_t fields[4] = {cfg_.image_size, cfg_.patches, cfg_.embed_dim, cfg_.token_dim};
  out.write(reinterpret_cast<const char*>(fields), sizeof(fields));
  out.write(reinterpret_cast<const char*>(&cfg_.seed), 8);
  write_mat(out, retrieval_proj_);
  write_mat(out, token_proj_);
  write_mat(out, color_proj_);
  write_mat(out, moment_proj_);
  write_mat(out, center_proj_);
}

FrozenEmbedder FrozenEmbedder::deserialize(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::string(magic, 8) == "RICLEMB1", "bad-embedder-state", "bad magic");
  int32_t fields[4];
  in.read(reinterpret_cast<char*>(fields), sizeof(fields));
  EmbedConfig cfg;
  cfg.image_size = fields[0];
  cfg.patches = fields[1];
  cfg.embed_dim = fields[2];
  cfg.token_dim = fields[3];
  in.read(reinterpret_cast<char*>(&cfg.seed), 8);
  FrozenEmbedder e(cfg);
  e.retrieval_proj_ = read_mat(in);
  e.token_proj_ = read_mat(in);
  e.color_proj_ = read_mat(in);
  e.moment_proj_ = read_mat(in);
  e.center_proj_ = read_mat(in);
  require(e.retrieval_proj_.rows() == cfg.embed_dim && e.token_proj_.rows() == cfg.token_dim,
          "bad-embedder-state", "projection shape mismatch");
  return e;
}

}  // namespace ricl::vision
