#pragma once

#include "ricl/common.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace ricl::nn {

// Named persistent tensor with a gradient slot. Frozen parameters never
// receive gradients and are skipped by the optimizer.
template <typename S>
struct Param {
  std::string name;
  Mat<S> value;
  Mat<S> grad;  // empty until a gradient is accumulated
  bool frozen = false;

  bool has_grad() const { return grad.size() > 0; }
  void zero_grad() { grad.resize(0, 0); }
};

template <typename S>
class ParamStore {
 public:
  Param<S>* add(const std::string& name, int rows, int cols, bool frozen = false) {
    require(by_name_.find(name) == by_name_.end(), "duplicate-param", name);
    auto p = std::make_unique<Param<S>>();
    p->name = name;
    p->value = Mat<S>::Zero(rows, cols);
    p->frozen = frozen;
    Param<S>* raw = p.get();
    by_name_[name] = raw;
    params_.push_back(std::move(p));
    return raw;
  }

  Param<S>* find(const std::string& name) const {
    auto it = by_name_.find(name);
    require(it != by_name_.end(), "unknown-param", name);
    return it->second;
  }

  const std::vector<std::unique_ptr<Param<S>>>& all() const { return params_; }

  void zero_grads() {
    for (auto& p : params_) p->zero_grad();
  }

  size_t parameter_count() const {
    size_t n = 0;
    for (const auto& p : params_)
      if (!p->frozen) n += size_t(p->value.size());
    return n;
  }

 private:
  std::vector<std::unique_ptr<Param<S>>> params_;
  std::map<std::string, Param<S>*> by_name_;
};

// Reverse-mode tape over dense matrices. Build a fresh graph per forward
// pass; backward() accumulates parameter gradients into the bound Params.
template <typename S>
class Graph {
 public:
  using Id = int;

  explicit Graph(bool check_finite = false) : check_finite_(check_finite) {}

  Id input(Mat<S> v) { return push(Op::Input, std::move(v), -1, -1, -1, false); }

  Id param(Param<S>* p) {
    Id id = push(Op::ParamLeaf, p->value, -1, -1, -1, false);
    nodes_[size_t(id)].param = p;
    nodes_[size_t(id)].needs_grad = !p->frozen;
    return id;
  }

  // C = A * B
  Id matmul(Id a, Id b) {
    require(val(a).cols() == val(b).rows(), "shape-mismatch", "matmul inner dims");
    return push(Op::MatMul, val(a) * val(b), a, b);
  }

  // C = A * B^T
  Id matmul_nt(Id a, Id b) {
    require(val(a).cols() == val(b).cols(), "shape-mismatch", "matmul_nt inner dims");
    return push(Op::MatMulNT, val(a) * val(b).transpose(), a, b);
  }

  Id add(Id a, Id b) {
    require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "shape-mismatch",
            "add shapes");
    return push(Op::Add, val(a) + val(b), a, b);
  }

  // x: T x C, bias: 1 x C broadcast over rows
  Id add_rowvec(Id x, Id bias) {
    require(val(bias).rows() == 1 && val(bias).cols() == val(x).cols(), "shape-mismatch",
            "row vector bias");
    Mat<S> out = val(x);
    out.rowwise() += val(bias).row(0);
    return push(Op::AddRowVec, std::move(out), x, bias);
  }

  Id scale(Id x, S c) {
    Id id = push(Op::Scale, val(x) * c, x);
    nodes_[size_t(id)].scalar = c;
    return id;
  }

  // out row i = table.row(ids[i]), ids[i] < 0 contributes a zero row
  Id embed(Id table, const std::vector<int>& ids) {
    Mat<S> out = Mat<S>::Zero(Eigen::Index(ids.size()), val(table).cols());
    for (size_t i = 0; i < ids.size(); ++i) {
      require(ids[i] < val(table).rows(), "bad-token-id", "embedding id out of range");
      if (ids[i] >= 0) out.row(Eigen::Index(i)) = val(table).row(ids[i]);
    }
    Id id = push(Op::Embed, std::move(out), table);
    nodes_[size_t(id)].indices = ids;
    return id;
  }

  Id gather_rows(Id x, const std::vector<int>& rows) {
    Mat<S> out(Eigen::Index(rows.size()), val(x).cols());
    for (size_t i = 0; i < rows.size(); ++i) {
      require(rows[i] >= 0 && rows[i] < val(x).rows(), "bad-row-index", "gather_rows");
      out.row(Eigen::Index(i)) = val(x).row(rows[i]);
    }
    Id id = push(Op::GatherRows, std::move(out), x);
    nodes_[size_t(id)].indices = rows;
    return id;
  }

  Id slice_cols(Id x, int start, int n) {
    require(start >= 0 && start + n <= val(x).cols(), "shape-mismatch", "slice_cols range");
    Id id = push(Op::SliceCols, val(x).middleCols(start, n), x);
    nodes_[size_t(id)].i0 = start;
    nodes_[size_t(id)].i1 = n;
    return id;
  }

  Id concat_cols(const std::vector<Id>& parts) {
    require(!parts.empty(), "shape-mismatch", "concat_cols needs inputs");
    Eigen::Index rows = val(parts[0]).rows(), cols = 0;
    for (Id p : parts) {
      require(val(p).rows() == rows, "shape-mismatch", "concat_cols row mismatch");
      cols += val(p).cols();
    }
    Mat<S> out(rows, cols);
    Eigen::Index at = 0;
    for (Id p : parts) {
      out.middleCols(at, val(p).cols()) = val(p);
      at += val(p).cols();
    }
    Id id = push(Op::ConcatCols, std::move(out), -1, -1, -1, false);
    auto& n = nodes_[size_t(id)];
    n.multi = parts;
    for (Id p : parts) n.needs_grad = n.needs_grad || nodes_[size_t(p)].needs_grad;
    if (check_finite_) check(n.value);
    return id;
  }

  // rowwise layer norm with learned gain/bias (1 x C)
  Id layernorm(Id x, Id gain, Id bias) {
    const Mat<S>& v = val(x);
    require(val(gain).rows() == 1 && val(gain).cols() == v.cols(), "shape-mismatch", "ln gain");
    require(val(bias).rows() == 1 && val(bias).cols() == v.cols(), "shape-mismatch", "ln bias");
    const S eps = S(1e-5);
    Mat<S> xhat(v.rows(), v.cols());
    Vec<S> inv_std(v.rows());
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      S mu = v.row(r).mean();
      S var = (v.row(r).array() - mu).square().mean();
      S is = S(1) / std::sqrt(var + eps);
      xhat.row(r) = (v.row(r).array() - mu) * is;
      inv_std[r] = is;
    }
    Mat<S> out = xhat;
    out.array().rowwise() *= val(gain).row(0).array();
    out.rowwise() += val(bias).row(0);
    Id id = push(Op::LayerNorm, std::move(out), x, gain, bias);
    nodes_[size_t(id)].aux = std::move(xhat);
    nodes_[size_t(id)].aux_vec = std::move(inv_std);
    return id;
  }

  Id gelu(Id x) {
    const Mat<S>& v = val(x);
    const S c = S(0.7978845608028654);  // sqrt(2/pi)
    Mat<S> out(v.rows(), v.cols());
    out.array() =
        S(0.5) * v.array() * (S(1) + ((c * (v.array() + S(0.044715) * v.array().cube())).tanh()));
    return push(Op::Gelu, std::move(out), x);
  }

  // rowwise softmax over scores with strictly-upper-triangular masking:
  // position t attends to positions <= t
  Id causal_softmax(Id scores) {
    const Mat<S>& v = val(scores);
    require(v.rows() == v.cols(), "shape-mismatch", "causal softmax needs square scores");
    Mat<S> out = Mat<S>::Zero(v.rows(), v.cols());
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      S mx = v.row(r).head(r + 1).maxCoeff();
      Eigen::Array<S, 1, Eigen::Dynamic> ex = (v.row(r).head(r + 1).array() - mx).exp();
      out.row(r).head(r + 1) = ex / ex.sum();
    }
    return push(Op::CausalSoftmax, std::move(out), scores);
  }

  Id softmax_rows(Id x) {
    const Mat<S>& v = val(x);
    Mat<S> out(v.rows(), v.cols());
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      S mx = v.row(r).maxCoeff();
      Eigen::Array<S, 1, Eigen::Dynamic> ex = (v.row(r).array() - mx).exp();
      out.row(r) = ex / ex.sum();
    }
    return push(Op::SoftmaxRows, std::move(out), x);
  }

  // y = (1 - w) * probs; y(i, mix_ids[i]) += w. Gradient flows through probs only.
  Id interp_rows(Id probs, const std::vector<int>& mix_ids, S w) {
    const Mat<S>& p = val(probs);
    require(Eigen::Index(mix_ids.size()) == p.rows(), "shape-mismatch", "one mix id per row");
    Mat<S> out = (S(1) - w) * p;
    for (size_t i = 0; i < mix_ids.size(); ++i) {
      require(mix_ids[i] >= 0 && mix_ids[i] < p.cols(), "invalid-token-id", "interp mix id");
      out(Eigen::Index(i), mix_ids[i]) += w;
    }
    Id id = push(Op::InterpRows, std::move(out), probs);
    nodes_[size_t(id)].scalar = w;
    return id;
  }

  // -(1/n) sum_i log probs(i, targets[i]); 1x1 output
  Id nll_rows(Id probs, const std::vector<int>& targets) {
    const Mat<S>& p = val(probs);
    require(Eigen::Index(targets.size()) == p.rows(), "shape-mismatch", "one target per row");
    S total = 0;
    for (size_t i = 0; i < targets.size(); ++i) {
      require(targets[i] >= 0 && targets[i] < p.cols(), "invalid-token-id", "nll target");
      total -= std::log(std::max(p(Eigen::Index(i), targets[i]), S(1e-30)));
    }
    Mat<S> out(1, 1);
    out(0, 0) = total / S(targets.size());
    Id id = push(Op::NllRows, std::move(out), probs);
    nodes_[size_t(id)].indices = targets;
    return id;
  }

  // fused stable cross-entropy over logits rows; 1x1 output
  Id softmax_xent(Id logits, const std::vector<int>& targets) {
    const Mat<S>& z = val(logits);
    require(Eigen::Index(targets.size()) == z.rows(), "shape-mismatch", "one target per row");
    Mat<S> soft(z.rows(), z.cols());
    S total = 0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      require(targets[size_t(r)] >= 0 && targets[size_t(r)] < z.cols(), "invalid-token-id",
              "xent target");
      S mx = z.row(r).maxCoeff();
      Eigen::Array<S, 1, Eigen::Dynamic> ex = (z.row(r).array() - mx).exp();
      S denom = ex.sum();
      soft.row(r) = ex / denom;
      total += std::log(denom) + mx - z(r, targets[size_t(r)]);
    }
    Mat<S> out(1, 1);
    out(0, 0) = total / S(targets.size());
    Id id = push(Op::SoftmaxXent, std::move(out), logits);
    nodes_[size_t(id)].indices = targets;
    nodes_[size_t(id)].aux = std::move(soft);
    return id;
  }

  Id sum(Id x) {
    Mat<S> out(1, 1);
    out(0, 0) = val(x).sum();
    return push(Op::Sum, std::move(out), x);
  }

  const Mat<S>& val(Id id) const { return nodes_[size_t(id)].value; }
  S scalar_value(Id id) const {
    require(val(id).size() == 1, "shape-mismatch", "scalar_value on non-scalar");
    return val(id)(0, 0);
  }
  const Mat<S>& grad(Id id) const { return nodes_[size_t(id)].grad; }

  // Reverse pass from a scalar loss; seed scales the whole gradient (use 1/B
  // when accumulating a mean over a batch of graphs).
  void backward(Id loss, S seed = S(1)) {
    require(val(loss).size() == 1, "detached-graph", "backward needs a scalar loss");
    require(nodes_[size_t(loss)].needs_grad, "detached-graph",
            "loss does not depend on any trainable parameter");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    ensure_grad(loss);
    nodes_[size_t(loss)].grad(0, 0) = seed;
    for (Id id = loss; id >= 0; --id) {
      Node& n = nodes_[size_t(id)];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      step_backward(n);
    }
    // fold leaf gradients into bound parameters
    for (auto& n : nodes_) {
      if (n.op == Op::ParamLeaf && n.param && !n.param->frozen && n.grad.size() > 0) {
        if (n.param->grad.size() == 0) n.param->grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
        n.param->grad += n.grad;
      }
    }
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    Input, ParamLeaf, MatMul, MatMulNT, Add, AddRowVec, Scale, Embed, GatherRows, SliceCols,
    ConcatCols, LayerNorm, Gelu, CausalSoftmax, SoftmaxRows, InterpRows, NllRows, SoftmaxXent, Sum,
  };

  struct Node {
    Mat<S> value;
    Mat<S> grad;
    Mat<S> aux;
    Vec<S> aux_vec;
    Op op;
    int a = -1, b = -1, c = -1;
    int i0 = 0, i1 = 0;  // slice bounds
    std::vector<int> multi;
    std::vector<int> indices;
    S scalar = 0;
    Param<S>* param = nullptr;
    bool needs_grad = false;
  };

  void check(const Mat<S>& m) const {
    require(m.allFinite(), "non-finite", "NaN/Inf produced by graph op");
  }

  Id push(Op op, Mat<S> value, int a = -1, int b = -1, int c = -1, bool infer_grad = true) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.a = a;
    n.b = b;
    n.c = c;
    if (infer_grad) {
      for (int in : {a, b, c})
        if (in >= 0 && nodes_[size_t(in)].needs_grad) n.needs_grad = true;
    }
    if (check_finite_) check(n.value);
    nodes_.push_back(std::move(n));
    return Id(nodes_.size()) - 1;
  }

  void ensure_grad(Id id) {
    Node& n = nodes_[size_t(id)];
    if (n.grad.size() == 0) n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
  }

  void add_grad(Id id, const Mat<S>& g) {
    if (id < 0 || !nodes_[size_t(id)].needs_grad) return;
    ensure_grad(id);
    nodes_[size_t(id)].grad += g;
  }

  void step_backward(Node& n) {
    const Mat<S>& gy = n.grad;
    switch (n.op) {
      case Op::Input:
      case Op::ParamLeaf:
        break;
      case Op::MatMul:
        add_grad(n.a, gy * val(n.b).transpose());
        add_grad(n.b, val(n.a).transpose() * gy);
        break;
      case Op::MatMulNT:
        add_grad(n.a, gy * val(n.b));
        add_grad(n.b, gy.transpose() * val(n.a));
        break;
      case Op::Add:
        add_grad(n.a, gy);
        add_grad(n.b, gy);
        break;
      case Op::AddRowVec:
        add_grad(n.a, gy);
        add_grad(n.b, gy.colwise().sum());
        break;
      case Op::Scale:
        add_grad(n.a, gy * n.scalar);
        break;
      case Op::Embed:
        if (n.a >= 0 && nodes_[size_t(n.a)].needs_grad) {
          Mat<S> gt = Mat<S>::Zero(val(n.a).rows(), val(n.a).cols());
          for (size_t i = 0; i < n.indices.size(); ++i)
            if (n.indices[i] >= 0) gt.row(n.indices[i]) += gy.row(Eigen::Index(i));
          add_grad(n.a, gt);
        }
        break;
      case Op::GatherRows:
        if (n.a >= 0 && nodes_[size_t(n.a)].needs_grad) {
          Mat<S> gx = Mat<S>::Zero(val(n.a).rows(), val(n.a).cols());
          for (size_t i = 0; i < n.indices.size(); ++i)
            gx.row(n.indices[i]) += gy.row(Eigen::Index(i));
          add_grad(n.a, gx);
        }
        break;
      case Op::SliceCols:
        if (n.a >= 0 && nodes_[size_t(n.a)].needs_grad) {
          Mat<S> gx = Mat<S>::Zero(val(n.a).rows(), val(n.a).cols());
          gx.middleCols(n.i0, n.i1) = gy;
          add_grad(n.a, gx);
        }
        break;
      case Op::ConcatCols: {
        Eigen::Index at = 0;
        for (Id p : n.multi) {
          add_grad(p, gy.middleCols(at, val(p).cols()));
          at += val(p).cols();
        }
        break;
      }
      case Op::LayerNorm: {
        const Mat<S>& xhat = n.aux;
        const Vec<S>& inv_std = n.aux_vec;
        const Mat<S>& gain = val(n.b);
        if (n.a >= 0 && nodes_[size_t(n.a)].needs_grad) {
          Mat<S> gx(xhat.rows(), xhat.cols());
          const S C = S(xhat.cols());
          for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
            Eigen::Array<S, 1, Eigen::Dynamic> g = gy.row(r).array() * gain.row(0).array();
            S mg = g.mean();
            S mgx = (g * xhat.row(r).array()).mean();
            gx.row(r) = ((g - mg - xhat.row(r).array() * mgx) * inv_std[r]).matrix();
            (void)C;
          }
          add_grad(n.a, gx);
        }
        add_grad(n.b, (gy.array() * xhat.array()).colwise().sum().matrix());
        add_grad(n.c, gy.colwise().sum());
        break;
      }
      case Op::Gelu: {
        const Mat<S>& x = val(n.a);
        const S c = S(0.7978845608028654);
        Mat<S> gx(x.rows(), x.cols());
        gx.array() = [&] {
          auto u = c * (x.array() + S(0.044715) * x.array().cube());
          auto t = u.tanh();
          auto du = c * (S(1) + S(3) * S(0.044715) * x.array().square());
          return gy.array() * (S(0.5) * (S(1) + t) + S(0.5) * x.array() * (S(1) - t.square()) * du);
        }();
        add_grad(n.a, gx);
        break;
      }
      case Op::CausalSoftmax: {
        const Mat<S>& y = n.value;
        Mat<S> gs = Mat<S>::Zero(y.rows(), y.cols());
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
          auto yr = y.row(r).head(r + 1).array();
          auto gr = gy.row(r).head(r + 1).array();
          S dot = (yr * gr).sum();
          gs.row(r).head(r + 1) = (yr * (gr - dot)).matrix();
        }
        add_grad(n.a, gs);
        break;
      }
      case Op::SoftmaxRows: {
        const Mat<S>& y = n.value;
        Mat<S> gs(y.rows(), y.cols());
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
          S dot = (y.row(r).array() * gy.row(r).array()).sum();
          gs.row(r) = (y.row(r).array() * (gy.row(r).array() - dot)).matrix();
        }
        add_grad(n.a, gs);
        break;
      }
      case Op::InterpRows:
        add_grad(n.a, gy * (S(1) - n.scalar));
        break;
      case Op::NllRows: {
        const Mat<S>& p = val(n.a);
        Mat<S> gp = Mat<S>::Zero(p.rows(), p.cols());
        const S gl = gy(0, 0) / S(n.indices.size());
        for (size_t i = 0; i < n.indices.size(); ++i) {
          S pi = std::max(p(Eigen::Index(i), n.indices[i]), S(1e-30));
          gp(Eigen::Index(i), n.indices[i]) -= gl / pi;
        }
        add_grad(n.a, gp);
        break;
      }
      case Op::SoftmaxXent: {
        const Mat<S>& soft = n.aux;
        Mat<S> gz = soft;
        const S gl = gy(0, 0) / S(n.indices.size());
        for (size_t i = 0; i < n.indices.size(); ++i)
          gz(Eigen::Index(i), n.indices[i]) -= S(1);
        gz *= gl;
        add_grad(n.a, gz);
        break;
      }
      case Op::Sum: {
        add_grad(n.a, Mat<S>::Constant(val(n.a).rows(), val(n.a).cols(), gy(0, 0)));
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  bool check_finite_ = false;
};

}  // namespace ricl::nn
