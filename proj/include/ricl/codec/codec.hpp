#pragma once

#include "ricl/common.hpp"

#include <atomic>
#include <map>
#include <string>
#include <vector>

namespace ricl::codec {

// Segment identity of a context position. Image positions carry continuous
// vectors, not ids; everything else lives in a disjoint id range.
enum class Segment : int8_t {
  Text = 0,
  Image = 1,
  State = 2,
  ActionRetrieved = 3,
  ActionQuery = 4,
};

struct CodecConfig {
  int bins_per_dim = 128;
  int horizon = 15;     // H
  int action_dim = 4;   // D
  int state_dim = 4;    // S
  VecD action_min, action_max;  // per action dimension
  VecD state_min, state_max;    // per state dimension
  std::vector<std::string> lexicon;  // fixed word vocabulary, sorted
  bool dct_transform = false;        // optional DCT pre-transform over time

  int n_act() const { return horizon * action_dim; }

  // vocab layout: [markers | words | state bins | action bins]
  int bos_id() const { return 0; }
  int eos_id() const { return 1; }
  int text_offset() const { return 0; }
  int text_size() const { return 2 + int(lexicon.size()); }
  int state_offset() const { return text_size(); }
  int action_offset() const { return text_size() + bins_per_dim; }
  int vocab_size() const { return text_size() + 2 * bins_per_dim; }

  bool is_action_id(int id) const { return id >= action_offset() && id < vocab_size(); }
  bool is_state_id(int id) const { return id >= state_offset() && id < action_offset(); }

  uint64_t hash() const;
  void validate() const;
};

// Uniform per-dimension quantization into a shared discrete vocabulary.
// Encoding clamps out-of-range values to edge bins; decoding maps ids to bin
// centers. All functions are pure given the config; the only mutable state
// is a clamp warning counter.
class Codec {
 public:
  explicit Codec(CodecConfig cfg);

  std::vector<int> encode_chunk(const MatD& chunk) const;          // N_act ids, time-major
  MatD decode_chunk(const std::vector<int>& ids) const;            // H x D
  std::vector<int> encode_state(const VecD& proprio) const;        // S ids
  std::vector<int> encode_prompt(const std::string& text) const;   // bos + words + eos

  const CodecConfig& config() const { return cfg_; }
  long clamp_warnings() const { return clamp_warnings_.load(); }

 private:
  int encode_scalar(double v, double lo, double hi) const;
  double decode_scalar(int bin, double lo, double hi) const;

  CodecConfig cfg_;
  std::map<std::string, int> word_ids_;
  MatD dct_;      // H x H orthonormal DCT-II basis (rows = coefficients)
  mutable std::atomic<long> clamp_warnings_{0};
};

}  // namespace ricl::codec
