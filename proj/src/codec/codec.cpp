#include "ricl/codec/codec.hpp"

#include <cmath>
#include <sstream>

namespace ricl::codec {

void CodecConfig::validate() const {
  require(bins_per_dim >= 2, "config-invalid", "bins_per_dim >= 2");
  require(horizon >= 1 && action_dim >= 1 && state_dim >= 1, "config-invalid", "bad dims");
  require(action_min.size() == action_dim && action_max.size() == action_dim, "config-invalid",
          "action ranges must have D entries");
  require(state_min.size() == state_dim && state_max.size() == state_dim, "config-invalid",
          "state ranges must have S entries");
  for (int d = 0; d < action_dim; ++d)
    require(action_max[d] > action_min[d], "config-invalid", "empty action range");
  for (int d = 0; d < state_dim; ++d)
    require(state_max[d] > state_min[d], "config-invalid", "empty state range");
}

uint64_t CodecConfig::hash() const {
  std::ostringstream os;
  os.precision(17);
  os << bins_per_dim << "|" << horizon << "|" << action_dim << "|" << state_dim << "|"
     << dct_transform << "|";
  for (int d = 0; d < action_dim; ++d) os << action_min[d] << "," << action_max[d] << ";";
  for (int d = 0; d < state_dim; ++d) os << state_min[d] << "," << state_max[d] << ";";
  for (const auto& w : lexicon) os << w << " ";
  return fnv1a64(os.str());
}

Codec::Codec(CodecConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (size_t i = 0; i < cfg_.lexicon.size(); ++i)
    word_ids_[cfg_.lexicon[i]] = 2 + int(i);  // after bos/eos markers
  require(word_ids_.size() == cfg_.lexicon.size(), "config-invalid", "duplicate lexicon word");
  if (cfg_.dct_transform) {
    const int H = cfg_.horizon;
    dct_.resize(H, H);
    const double pi = 3.14159265358979323846;
    for (int k = 0; k < H; ++k) {
      double norm = (k == 0) ? std::sqrt(1.0 / H) : std::sqrt(2.0 / H);
      for (int n = 0; n < H; ++n) dct_(k, n) = norm * std::cos(pi * (n + 0.5) * k / H);
    }
  }
}

int Codec::encode_scalar(double v, double lo, double hi) const {
  if (v < lo || v > hi) clamp_warnings_.fetch_add(1, std::memory_order_relaxed);
  double clamped = std::min(std::max(v, lo), hi);
  int bin = int(std::floor((clamped - lo) / (hi - lo) * cfg_.bins_per_dim));
  return std::min(std::max(bin, 0), cfg_.bins_per_dim - 1);
}

double Codec::decode_scalar(int bin, double lo, double hi) const {
  double w = (hi - lo) / cfg_.bins_per_dim;
  return lo + (bin + 0.5) * w;
}

std::vector<int> Codec::encode_chunk(const MatD& chunk) const {
  require(chunk.rows() == cfg_.horizon && chunk.cols() == cfg_.action_dim, "shape-mismatch",
          "chunk is " + std::to_string(chunk.rows()) + "x" + std::to_string(chunk.cols()) +
              ", expected " + std::to_string(cfg_.horizon) + "x" + std::to_string(cfg_.action_dim));
  MatD values = chunk;
  if (cfg_.dct_transform) values = dct_ * chunk;  // coefficients over time, per dimension
  std::vector<int> ids;
  ids.reserve(size_t(cfg_.n_act()));
  const double expand = cfg_.dct_transform ? std::sqrt(double(cfg_.horizon)) : 1.0;
  for (int t = 0; t < cfg_.horizon; ++t)
    for (int d = 0; d < cfg_.action_dim; ++d) {
      double lo = cfg_.action_min[d] * expand, hi = cfg_.action_max[d] * expand;
      if (cfg_.dct_transform && cfg_.action_min[d] >= 0.0) lo = -hi;  // coefficients are signed
      ids.push_back(cfg_.action_offset() + encode_scalar(values(t, d), lo, hi));
    }
  return ids;
}

MatD Codec::decode_chunk(const std::vector<int>& ids) const {
  require(int(ids.size()) == cfg_.n_act(), "shape-mismatch",
          "got " + std::to_string(ids.size()) + " ids, expected " + std::to_string(cfg_.n_act()));
  MatD values(cfg_.horizon, cfg_.action_dim);
  const double expand = cfg_.dct_transform ? std::sqrt(double(cfg_.horizon)) : 1.0;
  size_t i = 0;
  for (int t = 0; t < cfg_.horizon; ++t)
    for (int d = 0; d < cfg_.action_dim; ++d, ++i) {
      int id = ids[i];
      require(cfg_.is_action_id(id), "invalid-token-id",
              "id " + std::to_string(id) + " outside the action vocab range");
      double lo = cfg_.action_min[d] * expand, hi = cfg_.action_max[d] * expand;
      if (cfg_.dct_transform && cfg_.action_min[d] >= 0.0) lo = -hi;
      values(t, d) = decode_scalar(id - cfg_.action_offset(), lo, hi);
    }
  if (cfg_.dct_transform) values = dct_.transpose() * values;  // inverse of the orthonormal DCT
  return values;
}

std::vector<int> Codec::encode_state(const VecD& proprio) const {
  require(proprio.size() == cfg_.state_dim, "shape-mismatch",
          "proprio has " + std::to_string(proprio.size()) + " dims, expected " +
              std::to_string(cfg_.state_dim));
  std::vector<int> ids;
  ids.reserve(size_t(cfg_.state_dim));
  for (int d = 0; d < cfg_.state_dim; ++d)
    ids.push_back(cfg_.state_offset() + encode_scalar(proprio[d], cfg_.state_min[d], cfg_.state_max[d]));
  return ids;
}

std::vector<int> Codec::encode_prompt(const std::string& text) const {
  std::vector<int> ids{cfg_.bos_id()};
  std::istringstream ss(text);
  std::string w;
  while (ss >> w) {
    auto it = word_ids_.find(w);
    require(it != word_ids_.end(), "unknown-word", "'" + w + "' is not in the lexicon");
    ids.push_back(it->second);
  }
  ids.push_back(cfg_.eos_id());
  return ids;
}

}  // namespace ricl::codec
