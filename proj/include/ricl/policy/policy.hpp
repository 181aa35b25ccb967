#pragma once

#include "ricl/nn/optim.hpp"
#include "ricl/policy/context.hpp"

#include <optional>

namespace ricl::policy {

// Eq-style mixing weight w = min(e^(-lambda * d), 1 - eps), so the log term
// in the loss stays finite when d = 0 and the target disagrees with a'.
struct InterpolationParams {
  double lambda = 10.0;
  double d = 0.0;
  static constexpr double eps = 1e-6;

  double weight() const { return std::min(std::exp(-lambda * d), 1.0 - eps); }
};

// w * one_hot(a') + (1 - w) * softmax(logits). The one-hot branch only ever
// places mass on the a' id; anything outside the action vocab comes from the
// softmax branch alone.
template <typename S>
Vec<S> interpolate(const Vec<S>& logits, int aprime_id, const InterpolationParams& params) {
  require(aprime_id >= 0 && aprime_id < logits.size(), "invalid-token-id",
          "a' id outside the vocabulary");
  const S w = S(params.weight());
  S mx = logits.maxCoeff();
  Eigen::Array<S, Eigen::Dynamic, 1> ex = (logits.array() - mx).exp();
  Vec<S> out = ((S(1) - w) * ex / ex.sum()).matrix();
  out[aprime_id] += w;
  return out;
}

enum class LossMode { PostInterp, PreInterp };

// Mean negative log of the mixed probability of each target id over the
// N_act query action positions only; all other positions contribute nothing.
template <typename S>
typename nn::Graph<S>::Id ricl_loss(nn::Graph<S>& g, typename nn::Graph<S>::Id logits,
                                    const ContextSequence& ctx, double lambda,
                                    LossMode mode = LossMode::PostInterp) {
  require(ctx.training && !ctx.target_ids.empty(), "missing-targets",
          "ricl_loss needs a training context with query targets");
  auto rows = g.gather_rows(logits, ctx.loss_positions);
  if (mode == LossMode::PreInterp || ctx.k == 0)
    return g.softmax_xent(rows, ctx.target_ids);
  InterpolationParams p{lambda, double(ctx.distances[0])};
  auto probs = g.softmax_rows(rows);
  auto mixed = g.interp_rows(probs, ctx.aprime_ids, S(p.weight()));
  return g.nll_rows(mixed, ctx.target_ids);
}

// Variant taking next-token labels for every position; only the entries at
// the query action positions are read, so labels elsewhere are ignored.
template <typename S>
typename nn::Graph<S>::Id ricl_loss_with_labels(nn::Graph<S>& g, typename nn::Graph<S>::Id logits,
                                                const ContextSequence& ctx,
                                                const std::vector<int>& full_labels, double lambda,
                                                LossMode mode = LossMode::PostInterp) {
  require(ctx.training, "missing-targets", "ricl_loss needs a training context");
  require(int(full_labels.size()) == ctx.length(), "shape-mismatch",
          "one label per context position");
  ContextSequence picked = ctx;
  for (size_t j = 0; j < ctx.loss_positions.size(); ++j)
    picked.target_ids[j] = full_labels[size_t(ctx.loss_positions[j])];
  return ricl_loss<S>(g, logits, picked, lambda, mode);
}

struct PredictResult {
  std::vector<int> ids;  // N_act
  MatD chunk;            // decoded H x D
};

// Greedy autoregressive decode of N_act action tokens with the interpolation
// applied at every position. Logits outside the action vocab are masked off
// before the softmax; override_w forces the mixing weight (used by the
// retrieve-and-play equivalence check).
PredictResult predict_chunk(const nn::TransformerModel<float>& model, const ContextSequence& ctx,
                            const codec::Codec& codec, const InterpolationParams& params,
                            std::optional<double> override_w = std::nullopt);

// One optimizer step over a batch of training contexts; returns the batch
// loss (mean over items). Gradients accumulate with a 1/B seed per item.
float train_step(nn::TransformerModel<float>& model, const std::vector<const ContextSequence*>& batch,
                 nn::AdamOptimizer<float>& opt, double lambda,
                 LossMode mode = LossMode::PostInterp, bool check_finite = false);

}  // namespace ricl::policy
