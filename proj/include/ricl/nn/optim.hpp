#pragma once

#include "ricl/nn/graph.hpp"

#include <cmath>

namespace ricl::nn {

// Linear warmup into cosine decay, continuous at the boundary, flat floor after.
struct CosineSchedule {
  int warmup_steps = 100;
  double peak_lr = 3e-4;
  int decay_steps = 1000;
  double floor_lr = 3e-5;

  double lr_at(long step) const {
    if (warmup_steps > 0 && step < warmup_steps)
      return peak_lr * double(step + 1) / double(warmup_steps);
    long s = step - warmup_steps;
    if (decay_steps <= 0 || s >= decay_steps) return floor_lr;
    double phase = double(s) / double(decay_steps);
    return floor_lr + (peak_lr - floor_lr) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * phase));
  }
};

// Adaptive-moment optimizer over a ParamStore. Frozen parameters are skipped;
// gradients are consumed (zeroed) by each step.
template <typename S>
class AdamOptimizer {
 public:
  AdamOptimizer(ParamStore<S>& store, CosineSchedule schedule, S grad_clip = S(0),
                S beta1 = S(0.9), S beta2 = S(0.95), S eps = S(1e-8))
      : store_(store), schedule_(schedule), grad_clip_(grad_clip), beta1_(beta1), beta2_(beta2),
        eps_(eps) {
    for (const auto& p : store_.all()) {
      moments_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
      moments2_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  // One update from the accumulated gradients; returns the learning rate used.
  double step() {
    const double lr = schedule_.lr_at(step_count_);
    S clip_scale = S(1);
    if (grad_clip_ > S(0)) {
      S sq = S(0);
      for (const auto& p : store_.all())
        if (!p->frozen && p->has_grad()) sq += p->grad.squaredNorm();
      S norm = std::sqrt(sq);
      if (norm > grad_clip_) clip_scale = grad_clip_ / norm;
    }
    const S bc1 = S(1) - std::pow(beta1_, S(step_count_ + 1));
    const S bc2 = S(1) - std::pow(beta2_, S(step_count_ + 1));
    size_t i = 0;
    for (const auto& p : store_.all()) {
      Mat<S>& m = moments_[i];
      Mat<S>& v = moments2_[i];
      ++i;
      if (p->frozen || !p->has_grad()) continue;
      require(p->grad.rows() == p->value.rows() && p->grad.cols() == p->value.cols(),
              "shape-mismatch", "gradient shape for " + p->name);
      Mat<S> g = p->grad * clip_scale;
      m = beta1_ * m + (S(1) - beta1_) * g;
      v = beta2_ * v + (S(1) - beta2_) * g.cwiseProduct(g);
      p->value.array() -=
          S(lr) * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
    }
    store_.zero_grads();
    ++step_count_;
    return lr;
  }

  long step_count() const { return step_count_; }
  const CosineSchedule& schedule() const { return schedule_; }

 private:
  ParamStore<S>& store_;
  CosineSchedule schedule_;
  S grad_clip_;
  S beta1_, beta2_, eps_;
  std::vector<Mat<S>> moments_, moments2_;
  long step_count_ = 0;
};

}  // namespace ricl::nn
