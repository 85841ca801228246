#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sanlab/tensor.hpp"

namespace sanlab {

// Reverse-mode tape. Every op that touches a grad-requiring node appends a
// step; steps execute in recorded order, so replaying them in reverse is a
// valid topological order for gradient accumulation.
template <class S>
class GraphT {
 public:
  using Var = int;

  struct StepInfo {
    std::string op;
    std::vector<Var> inputs;
    Var output;
  };

  Var leaf(TensorT<S> value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), TensorT<S>(), requires_grad});
    return static_cast<Var>(nodes_.size() - 1);
  }

  Var constant(TensorT<S> value) { return leaf(std::move(value), false); }

  const TensorT<S>& value(Var v) const { return nodes_[idx(v)].value; }
  bool requires_grad(Var v) const { return nodes_[idx(v)].requires_grad; }

  const TensorT<S>& grad(Var v) const {
    const Node& n = nodes_[idx(v)];
    if (n.grad.numel() == 0)
      throw DataError("graph: gradient not computed for node " + std::to_string(v));
    return n.grad;
  }

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_steps() const { return steps_.size(); }
  const StepInfo& step_info(std::size_t i) const { return steps_[i].info; }

  // ---- primitive ops ----

  Var matmul(Var a, Var b) {
    TensorT<S> c = sanlab::matmul(value(a), value(b));
    Var out = result(std::move(c), {a, b});
    if (out_requires(a, b)) {
      record("matmul", {a, b}, out, [a, b, out](GraphT& g) {
        const TensorT<S>& dc = g.grad_ref(out);
        if (g.requires_grad(a)) g.accum(a, matmul_nt(dc, g.value(b)));
        if (g.requires_grad(b)) g.accum(b, matmul_tn(g.value(a), dc));
      });
    }
    return out;
  }

  // y = x * w^T, w stored [out x in]
  Var linear(Var x, Var w) {
    TensorT<S> y = matmul_nt(value(x), value(w));
    Var out = result(std::move(y), {x, w});
    if (out_requires(x, w)) {
      record("linear", {x, w}, out, [x, w, out](GraphT& g) {
        const TensorT<S>& dy = g.grad_ref(out);
        if (g.requires_grad(x)) g.accum(x, sanlab::matmul(dy, g.value(w)));
        if (g.requires_grad(w)) g.accum(w, matmul_tn(dy, g.value(x)));
      });
    }
    return out;
  }

  // y = x * w^T + scale * (x * a^T) * b^T   (low-rank bypass, a: [r x in], b: [out x r])
  Var linear_lora(Var x, Var w, Var a, Var b, double scale) {
    const TensorT<S>& xv = value(x);
    TensorT<S> y = matmul_nt(xv, value(w));
    TensorT<S> p = matmul_nt(xv, value(a));
    TensorT<S> low = matmul_nt(p, value(b));
    for (std::size_t i = 0; i < y.numel(); ++i)
      y.data[i] += static_cast<S>(scale * static_cast<double>(low.data[i]));
    Var out = result(std::move(y), {x, w, a, b});
    if (out_requires(x, w) || out_requires(a, b)) {
      record("linear_lora", {x, w, a, b}, out, [x, w, a, b, out, scale](GraphT& g) {
        const TensorT<S>& dy = g.grad_ref(out);
        const bool need_q = g.requires_grad(x) || g.requires_grad(a);
        TensorT<S> q;  // dy * b, [R x r]
        if (need_q) q = sanlab::matmul(dy, g.value(b));
        if (g.requires_grad(x)) {
          TensorT<S> dx = sanlab::matmul(dy, g.value(w));
          TensorT<S> dx_low = sanlab::matmul(q, g.value(a));
          for (std::size_t i = 0; i < dx.numel(); ++i)
            dx.data[i] += static_cast<S>(scale * static_cast<double>(dx_low.data[i]));
          g.accum(x, dx);
        }
        if (g.requires_grad(w)) g.accum(w, matmul_tn(dy, g.value(x)));
        if (g.requires_grad(b)) {
          TensorT<S> p2 = matmul_nt(g.value(x), g.value(a));
          TensorT<S> db = matmul_tn(dy, p2);
          scale_inplace(db, scale);
          g.accum(b, db);
        }
        if (g.requires_grad(a)) {
          TensorT<S> da = matmul_tn(q, g.value(x));
          scale_inplace(da, scale);
          g.accum(a, da);
        }
      });
    }
    return out;
  }

  Var add(Var a, Var b) {
    const TensorT<S>& av = value(a);
    const TensorT<S>& bv = value(b);
    if (!av.same_shape(bv)) throw ShapeError("add: shape mismatch");
    TensorT<S> y = av;
    for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] += bv.data[i];
    Var out = result(std::move(y), {a, b});
    if (out_requires(a, b)) {
      record("add", {a, b}, out, [a, b, out](GraphT& g) {
        const TensorT<S>& dy = g.grad_ref(out);
        if (g.requires_grad(a)) g.accum(a, dy);
        if (g.requires_grad(b)) g.accum(b, dy);
      });
    }
    return out;
  }

  Var scale(Var x, double c) {
    TensorT<S> y = value(x);
    scale_inplace(y, c);
    Var out = result(std::move(y), {x});
    if (requires_grad(x)) {
      record("scale", {x}, out, [x, out, c](GraphT& g) {
        TensorT<S> dx = g.grad_ref(out);
        scale_inplace(dx, c);
        g.accum(x, dx);
      });
    }
    return out;
  }

  // Gathers rows of a [n x d] table; used for token and position embeddings.
  Var embed_rows(Var table, std::vector<int> ids) {
    const TensorT<S>& tv = value(table);
    tv.require_matrix();
    const int d = tv.shape[1];
    const int n = tv.shape[0];
    TensorT<S> y({static_cast<int>(ids.size()), d});
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] < 0 || ids[r] >= n) throw DataError("embed_rows: id out of range");
      std::copy_n(&tv.data[static_cast<std::size_t>(ids[r]) * d], d,
                  &y.data[r * static_cast<std::size_t>(d)]);
    }
    Var out = result(std::move(y), {table});
    if (requires_grad(table)) {
      record("embed_rows", {table}, out,
             [table, out, ids = std::move(ids), d](GraphT& g) {
               const TensorT<S>& dy = g.grad_ref(out);
               TensorT<S>& dt = g.grad_mut(table);
               for (std::size_t r = 0; r < ids.size(); ++r) {
                 S* dst = &dt.data[static_cast<std::size_t>(ids[r]) * d];
                 const S* src = &dy.data[r * static_cast<std::size_t>(d)];
                 for (int c = 0; c < d; ++c) dst[c] += src[c];
               }
             });
    }
    return out;
  }

  Var layernorm(Var x, Var gamma, Var beta, double eps = 1e-5) {
    const TensorT<S>& xv = value(x);
    xv.require_matrix();
    const int rows = xv.shape[0], d = xv.shape[1];
    if (value(gamma).numel() != static_cast<std::size_t>(d) ||
        value(beta).numel() != static_cast<std::size_t>(d))
      throw ShapeError("layernorm: gamma/beta size mismatch");
    auto xhat = std::make_shared<TensorT<S>>(xv.shape);
    auto inv_sigma = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
    TensorT<S> y(xv.shape);
    const TensorT<S>& gv = value(gamma);
    const TensorT<S>& bv = value(beta);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
      double mu = 0.0;
      for (int c = 0; c < d; ++c) mu += static_cast<double>(xv.at(r, c));
      mu /= d;
      double var = 0.0;
      for (int c = 0; c < d; ++c) {
        double t = static_cast<double>(xv.at(r, c)) - mu;
        var += t * t;
      }
      var /= d;
      double inv = 1.0 / std::sqrt(var + eps);
      (*inv_sigma)[static_cast<std::size_t>(r)] = inv;
      for (int c = 0; c < d; ++c) {
        double xh = (static_cast<double>(xv.at(r, c)) - mu) * inv;
        xhat->at(r, c) = static_cast<S>(xh);
        y.at(r, c) = static_cast<S>(xh * static_cast<double>(gv.data[static_cast<std::size_t>(c)]) +
                                    static_cast<double>(bv.data[static_cast<std::size_t>(c)]));
      }
    }
    Var out = result(std::move(y), {x, gamma, beta});
    if (out_requires(x, gamma) || requires_grad(beta)) {
      record("layernorm", {x, gamma, beta}, out,
             [x, gamma, beta, out, xhat, inv_sigma, rows, d](GraphT& g) {
               const TensorT<S>& dy = g.grad_ref(out);
               const TensorT<S>& gv = g.value(gamma);
               if (g.requires_grad(gamma) || g.requires_grad(beta)) {
                 TensorT<S> dgamma({d});
                 TensorT<S> dbeta({d});
                 for (int c = 0; c < d; ++c) {
                   double sg = 0.0, sb = 0.0;
                   for (int r = 0; r < rows; ++r) {
                     sg += static_cast<double>(dy.at(r, c)) * static_cast<double>(xhat->at(r, c));
                     sb += static_cast<double>(dy.at(r, c));
                   }
                   dgamma.data[static_cast<std::size_t>(c)] = static_cast<S>(sg);
                   dbeta.data[static_cast<std::size_t>(c)] = static_cast<S>(sb);
                 }
                 if (g.requires_grad(gamma)) g.accum(gamma, dgamma);
                 if (g.requires_grad(beta)) g.accum(beta, dbeta);
               }
               if (g.requires_grad(x)) {
                 TensorT<S> dx({rows, d});
#pragma omp parallel for schedule(static)
                 for (int r = 0; r < rows; ++r) {
                   double mean_g = 0.0, mean_gx = 0.0;
                   for (int c = 0; c < d; ++c) {
                     double gc = static_cast<double>(dy.at(r, c)) *
                                 static_cast<double>(gv.data[static_cast<std::size_t>(c)]);
                     mean_g += gc;
                     mean_gx += gc * static_cast<double>(xhat->at(r, c));
                   }
                   mean_g /= d;
                   mean_gx /= d;
                   double inv = (*inv_sigma)[static_cast<std::size_t>(r)];
                   for (int c = 0; c < d; ++c) {
                     double gc = static_cast<double>(dy.at(r, c)) *
                                 static_cast<double>(gv.data[static_cast<std::size_t>(c)]);
                     dx.at(r, c) = static_cast<S>(
                         inv * (gc - mean_g -
                                static_cast<double>(xhat->at(r, c)) * mean_gx));
                   }
                 }
                 g.accum(x, dx);
               }
             });
    }
    return out;
  }

  Var gelu(Var x) {
    const TensorT<S>& xv = value(x);
    TensorT<S> y(xv.shape);
    const double inv_sqrt2 = 0.7071067811865476;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(xv.numel()); ++i) {
      double v = static_cast<double>(xv.data[static_cast<std::size_t>(i)]);
      y.data[static_cast<std::size_t>(i)] =
          static_cast<S>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
    }
    Var out = result(std::move(y), {x});
    if (requires_grad(x)) {
      record("gelu", {x}, out, [x, out, inv_sqrt2](GraphT& g) {
        const TensorT<S>& xv = g.value(x);
        const TensorT<S>& dy = g.grad_ref(out);
        TensorT<S> dx(xv.shape);
        const double inv_sqrt2pi = 0.3989422804014327;
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(xv.numel()); ++i) {
          double v = static_cast<double>(xv.data[static_cast<std::size_t>(i)]);
          double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
          double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
          dx.data[static_cast<std::size_t>(i)] = static_cast<S>(
              static_cast<double>(dy.data[static_cast<std::size_t>(i)]) * (cdf + v * pdf));
        }
        g.accum(x, dx);
      });
    }
    return out;
  }

  // Multi-head causal self-attention over packed qkv rows. Row r = b*seq + t;
  // columns [0,d) query, [d,2d) key, [2d,3d) value.
  Var causal_attention(Var qkv, int batch, int seq, int heads) {
    const TensorT<S>& qv = value(qkv);
    qv.require_matrix();
    if (qv.shape[0] != batch * seq || qv.shape[1] % 3 != 0)
      throw ShapeError("attention: bad qkv shape " + qv.shape_str());
    const int d = qv.shape[1] / 3;
    if (d % heads != 0) throw ShapeError("attention: width not divisible by heads");
    const int hd = d / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    auto probs = std::make_shared<std::vector<double>>(
        static_cast<std::size_t>(batch) * heads * seq * seq, 0.0);
    TensorT<S> ctx({batch * seq, d});

#pragma omp parallel for schedule(static)
    for (int bh = 0; bh < batch * heads; ++bh) {
      const int b = bh / heads;
      const int h = bh % heads;
      Eigen::MatrixXd q(seq, hd), k(seq, hd), v(seq, hd);
      for (int t = 0; t < seq; ++t)
        for (int c = 0; c < hd; ++c) {
          const int row = b * seq + t;
          q(t, c) = static_cast<double>(qv.at(row, h * hd + c));
          k(t, c) = static_cast<double>(qv.at(row, d + h * hd + c));
          v(t, c) = static_cast<double>(qv.at(row, 2 * d + h * hd + c));
        }
      Eigen::MatrixXd scores = q * k.transpose() * inv_scale;
      double* p = probs->data() + static_cast<std::size_t>(bh) * seq * seq;
      for (int i = 0; i < seq; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (int j = 0; j <= i; ++j) m = std::max(m, scores(i, j));
        double sum = 0.0;
        for (int j = 0; j <= i; ++j) {
          double e = std::exp(scores(i, j) - m);
          p[static_cast<std::size_t>(i) * seq + j] = e;
          sum += e;
        }
        for (int j = 0; j <= i; ++j) p[static_cast<std::size_t>(i) * seq + j] /= sum;
      }
      for (int i = 0; i < seq; ++i)
        for (int c = 0; c < hd; ++c) {
          double acc = 0.0;
          for (int j = 0; j <= i; ++j)
            acc += p[static_cast<std::size_t>(i) * seq + j] * v(j, c);
          ctx.at(b * seq + i, h * hd + c) = static_cast<S>(acc);
        }
    }

    Var out = result(std::move(ctx), {qkv});
    if (requires_grad(qkv)) {
      record("causal_attention", {qkv}, out,
             [qkv, out, probs, batch, seq, heads, d, hd, inv_scale](GraphT& g) {
               const TensorT<S>& qv = g.value(qkv);
               const TensorT<S>& dy = g.grad_ref(out);
               TensorT<S> dqkv(qv.shape);
#pragma omp parallel for schedule(static)
               for (int bh = 0; bh < batch * heads; ++bh) {
                 const int b = bh / heads;
                 const int h = bh % heads;
                 Eigen::MatrixXd q(seq, hd), k(seq, hd), v(seq, hd), dc(seq, hd);
                 for (int t = 0; t < seq; ++t)
                   for (int c = 0; c < hd; ++c) {
                     const int row = b * seq + t;
                     q(t, c) = static_cast<double>(qv.at(row, h * hd + c));
                     k(t, c) = static_cast<double>(qv.at(row, d + h * hd + c));
                     v(t, c) = static_cast<double>(qv.at(row, 2 * d + h * hd + c));
                     dc(t, c) = static_cast<double>(dy.at(row, h * hd + c));
                   }
                 const double* p = probs->data() + static_cast<std::size_t>(bh) * seq * seq;
                 Eigen::MatrixXd pm = Eigen::MatrixXd::Zero(seq, seq);
                 for (int i = 0; i < seq; ++i)
                   for (int j = 0; j <= i; ++j) pm(i, j) = p[static_cast<std::size_t>(i) * seq + j];
                 Eigen::MatrixXd dv = pm.transpose() * dc;
                 Eigen::MatrixXd dp = dc * v.transpose();
                 Eigen::MatrixXd ds = Eigen::MatrixXd::Zero(seq, seq);
                 for (int i = 0; i < seq; ++i) {
                   double dot = 0.0;
                   for (int j = 0; j <= i; ++j) dot += dp(i, j) * pm(i, j);
                   for (int j = 0; j <= i; ++j) ds(i, j) = pm(i, j) * (dp(i, j) - dot);
                 }
                 Eigen::MatrixXd dq = ds * k * inv_scale;
                 Eigen::MatrixXd dk = ds.transpose() * q * inv_scale;
                 for (int t = 0; t < seq; ++t)
                   for (int c = 0; c < hd; ++c) {
                     const int row = b * seq + t;
                     dqkv.at(row, h * hd + c) = static_cast<S>(dq(t, c));
                     dqkv.at(row, d + h * hd + c) = static_cast<S>(dk(t, c));
                     dqkv.at(row, 2 * d + h * hd + c) = static_cast<S>(dv(t, c));
                   }
               }
               g.accum(qkv, dqkv);
             });
    }
    return out;
  }

  // Summed cross-entropy over unmasked rows; output is a scalar node.
  Var cross_entropy(Var logits, std::vector<int> targets, std::vector<std::uint8_t> mask) {
    const TensorT<S>& lv = value(logits);
    lv.require_matrix();
    const int rows = lv.shape[0], vocab = lv.shape[1];
    if (targets.empty()) throw DataError("cross_entropy: empty sequence");
    if (static_cast<int>(targets.size()) != rows || static_cast<int>(mask.size()) != rows)
      throw ShapeError("cross_entropy: targets/mask length mismatch");
    for (int r = 0; r < rows; ++r)
      if (targets[static_cast<std::size_t>(r)] < 0 ||
          targets[static_cast<std::size_t>(r)] >= vocab)
        throw DataError("cross_entropy: target id out of range at position " +
                        std::to_string(r));
    auto probs = std::make_shared<TensorT<S>>(lv.shape);
    double loss = 0.0;
    std::vector<double> row_loss(static_cast<std::size_t>(rows), 0.0);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
      double m = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < vocab; ++c) m = std::max(m, static_cast<double>(lv.at(r, c)));
      double sum = 0.0;
      for (int c = 0; c < vocab; ++c) sum += std::exp(static_cast<double>(lv.at(r, c)) - m);
      double lse = m + std::log(sum);
      for (int c = 0; c < vocab; ++c)
        probs->at(r, c) = static_cast<S>(std::exp(static_cast<double>(lv.at(r, c)) - lse));
      if (mask[static_cast<std::size_t>(r)])
        row_loss[static_cast<std::size_t>(r)] =
            lse - static_cast<double>(lv.at(r, targets[static_cast<std::size_t>(r)]));
    }
    for (int r = 0; r < rows; ++r) loss += row_loss[static_cast<std::size_t>(r)];
    if (!std::isfinite(loss)) throw NumericError("cross_entropy: non-finite loss");
    TensorT<S> y({1}, {static_cast<S>(loss)});
    Var out = result(std::move(y), {logits});
    if (requires_grad(logits)) {
      record("cross_entropy", {logits}, out,
             [logits, out, probs, targets = std::move(targets), mask = std::move(mask),
              rows, vocab](GraphT& g) {
               double up = static_cast<double>(g.grad_ref(out).data[0]);
               TensorT<S>& dl = g.grad_mut(logits);
#pragma omp parallel for schedule(static)
               for (int r = 0; r < rows; ++r) {
                 if (!mask[static_cast<std::size_t>(r)]) continue;
                 for (int c = 0; c < vocab; ++c)
                   dl.at(r, c) += static_cast<S>(up * static_cast<double>(probs->at(r, c)));
                 dl.at(r, targets[static_cast<std::size_t>(r)]) -= static_cast<S>(up);
               }
             });
    }
    return out;
  }

  // Gradients for every grad-requiring leaf; leaves the loss does not touch
  // keep their zero initialization.
  void backward(Var loss) {
    if (!value(loss).is_scalar()) throw ShapeError("backward: loss node is not scalar");
    for (Node& n : nodes_) {
      n.grad = TensorT<S>(n.value.shape);
    }
    nodes_[idx(loss)].grad.data[0] = S(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) it->back(*this);
  }

  // ---- helpers used by op closures ----
  const TensorT<S>& grad_ref(Var v) const { return nodes_[idx(v)].grad; }
  TensorT<S>& grad_mut(Var v) { return nodes_[idx(v)].grad; }

  void accum(Var v, const TensorT<S>& delta) {
    TensorT<S>& g = nodes_[idx(v)].grad;
    if (!g.same_shape(delta)) throw ShapeError("accum: gradient shape mismatch");
    for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] += delta.data[i];
  }

  static void scale_inplace(TensorT<S>& t, double c) {
    for (S& x : t.data) x = static_cast<S>(static_cast<double>(x) * c);
  }

 private:
  struct Node {
    TensorT<S> value;
    TensorT<S> grad;
    bool requires_grad;
  };
  struct Step {
    StepInfo info;
    std::function<void(GraphT&)> back;
  };

  static std::size_t idx(Var v) { return static_cast<std::size_t>(v); }

  bool out_requires(Var a, Var b) const { return requires_grad(a) || requires_grad(b); }

  Var result(TensorT<S> value, std::initializer_list<Var> inputs) {
    bool rg = false;
    for (Var v : inputs) rg = rg || requires_grad(v);
    return leaf(std::move(value), rg);
  }

  void record(std::string op, std::vector<Var> inputs, Var out,
              std::function<void(GraphT&)> back) {
    steps_.push_back(Step{StepInfo{std::move(op), std::move(inputs), out}, std::move(back)});
  }

  std::vector<Node> nodes_;
  std::vector<Step> steps_;
};

using Graph = GraphT<float>;

}  // namespace sanlab
