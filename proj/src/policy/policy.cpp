#include "ricl/policy/policy.hpp"

namespace ricl::policy {

PredictResult predict_chunk(const nn::TransformerModel<float>& model, const ContextSequence& ctx,
                            const codec::Codec& codec, const InterpolationParams& params,
                            std::optional<double> override_w) {
  require(!ctx.training, "inference-only", "predict_chunk takes an inference context");
  const auto& ccfg = codec.config();
  const int n_act = ccfg.n_act();
  const int a0 = ccfg.action_offset(), a1 = ccfg.vocab_size();
  require(ctx.k == 0 || int(ctx.aprime_ids.size()) == n_act, "invalid-token-id",
          "a' must supply one id per action position");

  const double w = std::min(override_w.value_or(params.weight()), 1.0);
  const bool mix = ctx.k > 0 && w > 0.0;

  auto cache = model.make_cache();
  VecF logits = model.prefill(ctx.input, cache);

  PredictResult res;
  res.ids.reserve(size_t(n_act));
  for (int j = 0; j < n_act; ++j) {
    // softmax restricted to the action vocab (mask everything else off)
    VecF probs = VecF::Zero(logits.size());
    {
      auto action_logits = logits.segment(a0, a1 - a0).array();
      float mx = action_logits.maxCoeff();
      Eigen::ArrayXf ex = (action_logits - mx).exp();
      probs.segment(a0, a1 - a0) = (ex / ex.sum()).matrix();
    }
    if (mix) {
      int ap = ctx.aprime_ids[size_t(j)];
      require(ccfg.is_action_id(ap), "invalid-token-id", "a' id outside action vocab");
      probs *= float(1.0 - w);
      probs[ap] += float(w);
    }
    int id = 0;
    probs.maxCoeff(&id);
    require(ccfg.is_action_id(id), "invalid-token-id",
            "decoded id outside action vocab (logit masking miscalibrated)");
    res.ids.push_back(id);
    if (j + 1 < n_act) {
      VecF row = model.compose_row(id, int(Segment::ActionQuery), ctx.query_group,
                                   ctx.decode_start + j);
      logits = model.decode_step(row, cache);
    }
  }
  res.chunk = codec.decode_chunk(res.ids);
  return res;
}

float train_step(nn::TransformerModel<float>& model,
                 const std::vector<const ContextSequence*>& batch, nn::AdamOptimizer<float>& opt,
                 double lambda, LossMode mode, bool check_finite) {
  require(!batch.empty(), "empty-input", "train_step needs a non-empty batch");
  const float inv_b = 1.0f / float(batch.size());
  float total = 0.f;
  for (const ContextSequence* ctx : batch) {
    nn::Graph<float> g(check_finite);
    auto logits = model.forward(g, ctx->input);
    auto loss = ricl_loss<float>(g, logits, *ctx, lambda, mode);
    total += g.scalar_value(loss);
    g.backward(loss, inv_b);
  }
  opt.step();
  return total * inv_b;
}

}  // namespace ricl::policy
