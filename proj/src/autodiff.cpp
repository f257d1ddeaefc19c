#include "mklstm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "mklstm/conv.hpp"

namespace mklstm {
namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

void require(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

template <typename T>
void check_same_tape(Var<T> a, Var<T> b, const char* op) {
  require(a.tape == b.tape, std::string(op) + ": operands on different tapes");
}

// b may match a, or broadcast as (1,1,1,C) or (1,H,W,C).
template <typename T>
bool broadcast_ok(const Shape& a, const Shape& b) {
  if (a == b) return true;
  if (b.n != 1 || b.c != a.c) return false;
  return (b.h == 1 && b.w == 1) || (b.h == a.h && b.w == a.w);
}

inline std::int64_t bcast_index(const Shape& b, int /*n*/, int h, int w, int c) {
  const int bh = b.h == 1 ? 0 : h;
  const int bw = b.w == 1 ? 0 : w;
  return ((std::int64_t(0) * b.h + bh) * b.w + bw) * b.c + c;
}

}  // namespace

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad, std::string name) {
  nodes_.push_back(Node{std::move(value), {}, requires_grad, std::move(name), {}});
  return Var<T>{this, int(nodes_.size()) - 1};
}

template <typename T>
Var<T> Tape<T>::make_node(Tensor<T> value, bool requires_grad,
                          std::function<void(Tape&)> backward) {
  nodes_.push_back(Node{std::move(value), {}, requires_grad, {},
                        requires_grad ? std::move(backward)
                                      : std::function<void(Tape&)>{}});
  return Var<T>{this, int(nodes_.size()) - 1};
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(int id) {
  Node& nd = nodes_[id];
  if (nd.grad.empty()) nd.grad = Tensor<T>(nd.value.shape);
  return nd.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> root) {
  require(root.tape == this, "backward: root from a different tape");
  const Shape s = root.shape();
  require(s == Shape{1, 1, 1, 1},
          "backward: root must be a scalar (1,1,1,1), got " + s.str());
  grad_buffer(root.id).data[0] = T(1);
  for (int i = root.id; i >= 0; --i) {
    Node& nd = nodes_[i];
    if (!nd.requires_grad || nd.grad.empty() || !nd.backward) continue;
    nd.backward(*this);
  }
}

template <typename T>
const Tensor<T>* Tape<T>::grad_of(Var<T> v) const {
  if (v.tape != this || v.id < 0) return nullptr;
  const Node& nd = nodes_[v.id];
  return nd.grad.empty() ? nullptr : &nd.grad;
}

// ---- conv2d ----------------------------------------------------------------

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> kernel, Var<T> bias) {
  check_same_tape(x, kernel, "conv2d");
  Tape<T>& t = *x.tape;
  const Shape xs = x.shape();
  const Shape ks = kernel.shape();  // (kh, kw, c_in, c_out)
  require(ks.n % 2 == 1 && ks.h % 2 == 1,
          "conv2d: kernel dims must be odd, got " + ks.str());
  require(xs.c == ks.w, "conv2d: input channels mismatch, input " + xs.str() +
                            " vs kernel " + ks.str());
  const bool has_bias = bias.valid();
  if (has_bias) {
    check_same_tape(x, bias, "conv2d");
    require(bias.shape() == Shape{1, 1, 1, ks.c},
            "conv2d: bias must be (1,1,1," + std::to_string(ks.c) + "), got " +
                bias.shape().str());
  }

  Tensor<T> out;
  conv2d_forward(x.value(), kernel.value(),
                 has_bias ? bias.value().data.data() : nullptr, out);

  const int xid = x.id, wid = kernel.id, bid = has_bias ? bias.id : -1;
  const bool xr = t.node(xid).requires_grad;
  const bool wr = t.node(wid).requires_grad;
  const bool br = has_bias && t.node(bid).requires_grad;
  Var<T> out_var = t.make_node(std::move(out), xr || wr || br, nullptr);
  const int oid = out_var.id;
  if (xr || wr || br) {
    t.node(oid).backward = [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.node(oid).grad;
      if (xr) conv2d_backward_input(g, tp.value(wid), tp.grad_buffer(xid));
      if (wr) {
        conv2d_backward_params(tp.value(xid), g, tp.grad_buffer(wid),
                               br ? tp.grad_buffer(bid).data.data() : nullptr);
      } else if (br) {
        Tensor<T>& db = tp.grad_buffer(bid);
        const int co = g.shape.c;
        const std::int64_t m = g.size() / co;
        const T* gp = g.data.data();
        for (std::int64_t i = 0; i < m; ++i, gp += co)
          for (int oc = 0; oc < co; ++oc) db.data[oc] += gp[oc];
      }
    };
  }
  return out_var;
}

// ---- dense (fully connected) ------------------------------------------------

template <typename T>
Var<T> dense(Var<T> x, Var<T> weights, Var<T> bias) {
  check_same_tape(x, weights, "dense");
  Tape<T>& t = *x.tape;
  const Shape xs = x.shape();
  const Shape ws = weights.shape();  // (1, 1, c_in, c_out)
  require(xs.h == 1 && xs.w == 1,
          "dense: input spatial dims must be 1x1, got " + xs.str());
  require(ws.n == 1 && ws.h == 1 && ws.w == xs.c,
          "dense: weights mismatch, input " + xs.str() + " vs weights " + ws.str());
  const bool has_bias = bias.valid();
  if (has_bias)
    require(bias.shape() == Shape{1, 1, 1, ws.c},
            "dense: bias shape mismatch: " + bias.shape().str());

  const int n = xs.n, ci = xs.c, co = ws.c;
  Tensor<T> out(n, 1, 1, co);
  {
    const Tensor<T>& xv = x.value();
    const Tensor<T>& wv = weights.value();
    for (int in = 0; in < n; ++in)
      for (int oc = 0; oc < co; ++oc) {
        T acc = has_bias ? bias.value().data[oc] : T(0);
        for (int ic = 0; ic < ci; ++ic)
          acc += xv.data[std::int64_t(in) * ci + ic] *
                 wv.data[std::int64_t(ic) * co + oc];
        out.data[std::int64_t(in) * co + oc] = acc;
      }
  }

  const int xid = x.id, wid = weights.id, bid = has_bias ? bias.id : -1;
  const bool xr = t.node(xid).requires_grad;
  const bool wr = t.node(wid).requires_grad;
  const bool br = has_bias && t.node(bid).requires_grad;
  Var<T> out_var = t.make_node(std::move(out), xr || wr || br, nullptr);
  const int oid = out_var.id;
  if (xr || wr || br) {
    t.node(oid).backward = [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.node(oid).grad;
      const Tensor<T>& xv = tp.value(xid);
      const Tensor<T>& wv = tp.value(wid);
      for (int in = 0; in < n; ++in)
        for (int oc = 0; oc < co; ++oc) {
          const T gv = g.data[std::int64_t(in) * co + oc];
          if (xr) {
            Tensor<T>& dx = tp.grad_buffer(xid);
            for (int ic = 0; ic < ci; ++ic)
              dx.data[std::int64_t(in) * ci + ic] +=
                  gv * wv.data[std::int64_t(ic) * co + oc];
          }
          if (wr) {
            Tensor<T>& dw = tp.grad_buffer(wid);
            for (int ic = 0; ic < ci; ++ic)
              dw.data[std::int64_t(ic) * co + oc] +=
                  gv * xv.data[std::int64_t(in) * ci + ic];
          }
          if (br) tp.grad_buffer(bid).data[oc] += gv;
        }
    };
  }
  return out_var;
}

// ---- pointwise nonlinearities ----------------------------------------------

template <typename T>
Var<T> pointwise(Var<T> x, Pointwise fn) {
  Tape<T>& t = *x.tape;
  Tensor<T> out(x.shape());
  const Tensor<T>& xv = x.value();
  if (fn == Pointwise::sigmoid) {
    for (std::size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = T(1) / (T(1) + std::exp(-xv.data[i]));
  } else {
    for (std::size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = std::tanh(xv.data[i]);
  }
  const int xid = x.id;
  const bool xr = t.node(xid).requires_grad;
  Var<T> out_var = t.make_node(std::move(out), xr, nullptr);
  const int oid = out_var.id;
  if (xr) {
    t.node(oid).backward = [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.node(oid).grad;
      const Tensor<T>& y = tp.value(oid);
      Tensor<T>& dx = tp.grad_buffer(xid);
      if (fn == Pointwise::sigmoid) {
        for (std::size_t i = 0; i < g.data.size(); ++i)
          dx.data[i] += g.data[i] * y.data[i] * (T(1) - y.data[i]);
      } else {
        for (std::size_t i = 0; i < g.data.size(); ++i)
          dx.data[i] += g.data[i] * (T(1) - y.data[i] * y.data[i]);
      }
    };
  }
  return out_var;
}

// ---- add / hadamard ----------------------------------------------------------

namespace {

enum class Binary { add, mul };

template <typename T>
Var<T> binary_op(Var<T> a, Var<T> b, Binary op, const char* opname) {
  check_same_tape(a, b, opname);
  Tape<T>& t = *a.tape;
  const Shape as = a.shape(), bs = b.shape();
  require(broadcast_ok<T>(as, bs), std::string(opname) + ": incompatible shapes " +
                                       as.str() + " and " + bs.str());
  const bool same = (as == bs);
  Tensor<T> out(as);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (same) {
    if (op == Binary::add) {
      for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = av.data[i] + bv.data[i];
    } else {
      for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = av.data[i] * bv.data[i];
    }
  } else {
    std::int64_t i = 0;
    for (int n = 0; n < as.n; ++n)
      for (int h = 0; h < as.h; ++h)
        for (int w = 0; w < as.w; ++w)
          for (int c = 0; c < as.c; ++c, ++i) {
            const T rhs = bv.data[bcast_index(bs, n, h, w, c)];
            out.data[i] = op == Binary::add ? av.data[i] + rhs : av.data[i] * rhs;
          }
  }

  const int aid = a.id, bid = b.id;
  const bool ar = t.node(aid).requires_grad;
  const bool br = t.node(bid).requires_grad;
  Var<T> out_var = t.make_node(std::move(out), ar || br, nullptr);
  const int oid = out_var.id;
  if (ar || br) {
    t.node(oid).backward = [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.node(oid).grad;
      const Tensor<T>& av2 = tp.value(aid);
      const Tensor<T>& bv2 = tp.value(bid);
      if (op == Binary::add) {
        if (ar) {
          Tensor<T>& da = tp.grad_buffer(aid);
          for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
        }
        if (br) {
          Tensor<T>& db = tp.grad_buffer(bid);
          if (same) {
            for (std::size_t i = 0; i < g.data.size(); ++i) db.data[i] += g.data[i];
          } else {
            std::int64_t i = 0;
            for (int n = 0; n < as.n; ++n)
              for (int h = 0; h < as.h; ++h)
                for (int w = 0; w < as.w; ++w)
                  for (int c = 0; c < as.c; ++c, ++i)
                    db.data[bcast_index(bs, n, h, w, c)] += g.data[i];
          }
        }
      } else {
        if (same) {
          if (ar) {
            Tensor<T>& da = tp.grad_buffer(aid);
            for (std::size_t i = 0; i < g.data.size(); ++i)
              da.data[i] += g.data[i] * bv2.data[i];
          }
          if (br) {
            Tensor<T>& db = tp.grad_buffer(bid);
            for (std::size_t i = 0; i < g.data.size(); ++i)
              db.data[i] += g.data[i] * av2.data[i];
          }
        } else {
          std::int64_t i = 0;
          for (int n = 0; n < as.n; ++n)
            for (int h = 0; h < as.h; ++h)
              for (int w = 0; w < as.w; ++w)
                for (int c = 0; c < as.c; ++c, ++i) {
                  const std::int64_t bi = bcast_index(bs, n, h, w, c);
                  if (ar) tp.grad_buffer(aid).data[i] += g.data[i] * bv2.data[bi];
                  if (br) tp.grad_buffer(bid).data[bi] += g.data[i] * av2.data[i];
                }
        }
      }
    };
  }
  return out_var;
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return binary_op(a, b, Binary::add, "add");
}

template <typename T>
Var<T> hadamard(Var<T> a, Var<T> b) {
  return binary_op(a, b, Binary::mul, "hadamard");
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  Tape<T>& t = *x.tape;
  Tensor<T> out(x.shape());
  const Tensor<T>& xv = x.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = factor * xv.data[i];
  const int xid = x.id;
  const bool xr = t.node(xid).requires_grad;
  Var<T> out_var = t.make_node(std::move(out), xr, nullptr);
  const int oid = out_var.id;
  if (xr) {
    t.node(oid).backward = [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.node(oid).grad;
      Tensor<T>& dx = tp.grad_buffer(xid);
      for (std::size_t i = 0; i < g.data.size(); ++i) dx.data[i] += factor * g.data[i];
    };
  }
  return out_var;
}

// ---- channel concat / split ---------------------------------------------------

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_channels: empty part list");
  Tape<T>& t = *parts[0].tape;
  const Shape s0 = parts[0].shape();
  int c_total = 0;
  bool any_req = false;
  for (const Var<T>& p : parts) {
    check_same_tape(parts[0], p, "concat_channels");
    const Shape ps = p.shape();
    require(ps.n == s0.n && ps.h == s0.h && ps.w == s0.w,
            "concat_channels: spatial/batch mismatch " + s0.str() + " vs " + ps.str());
    c_total += ps.c;
    any_req = any_req || t.node(p.id).requires_grad;
  }

  Tensor<T> out(s0.n, s0.h, s0.w, c_total);
  const std::int64_t pixels = std::int64_t(s0.n) * s0.h * s0.w;
  {
    int off = 0;
    for (const Var<T>& p : parts) {
      const Tensor<T>& pv = p.value();
      const int pc = pv.shape.c;
      for (std::int64_t px = 0; px < pixels; ++px)
        std::memcpy(&out.data[px * c_total + off], &pv.data[px * pc],
                    sizeof(T) * pc);
      off += pc;
    }
  }

  std::vector<int> ids(parts.size());
  std::vector<int> chans(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    ids[i] = parts[i].id;
    chans[i] = parts[i].shape().c;
  }
  Var<T> out_var = t.make_node(std::move(out), any_req, nullptr);
  const int oid = out_var.id;
  if (any_req) {
    t.node(oid).backward = [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.node(oid).grad;
      int off = 0;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const int pc = chans[i];
        if (tp.node(ids[i]).requires_grad) {
          Tensor<T>& dp = tp.grad_buffer(ids[i]);
          for (std::int64_t px = 0; px < pixels; ++px) {
            const T* src = &g.data[px * c_total + off];
            T* dst = &dp.data[px * pc];
            for (int c = 0; c < pc; ++c) dst[c] += src[c];
          }
        }
        off += pc;
      }
    };
  }
  return out_var;
}

template <typename T>
std::vector<Var<T>> split_channels(Var<T> x, const std::vector<int>& sizes) {
  Tape<T>& t = *x.tape;
  const Shape xs = x.shape();
  int total = 0;
  for (int s : sizes) {
    require(s > 0, "split_channels: non-positive part size");
    total += s;
  }
  require(total == xs.c, "split_channels: sizes sum to " + std::to_string(total) +
                             " but input has " + std::to_string(xs.c) +
                             " channels (" + xs.str() + ")");
  const std::int64_t pixels = std::int64_t(xs.n) * xs.h * xs.w;
  const bool xr = t.node(x.id).requires_grad;
  const int xid = x.id;

  std::vector<Var<T>> out;
  int off = 0;
  for (int sc : sizes) {
    Tensor<T> part(xs.n, xs.h, xs.w, sc);
    const Tensor<T>& xv = t.value(xid);
    for (std::int64_t px = 0; px < pixels; ++px)
      std::memcpy(&part.data[px * sc], &xv.data[px * xs.c + off], sizeof(T) * sc);
    Var<T> pv = t.make_node(std::move(part), xr, nullptr);
    const int pid = pv.id;
    const int poff = off;
    if (xr) {
      t.node(pid).backward = [=](Tape<T>& tp) {
        const Tensor<T>& g = tp.node(pid).grad;
        Tensor<T>& dx = tp.grad_buffer(xid);
        for (std::int64_t px = 0; px < pixels; ++px) {
          const T* src = &g.data[px * sc];
          T* dst = &dx.data[px * xs.c + poff];
          for (int c = 0; c < sc; ++c) dst[c] += src[c];
        }
      };
    }
    out.push_back(pv);
    off += sc;
  }
  return out;
}

// ---- reductions ---------------------------------------------------------------

template <typename T>
Var<T> sum_all(Var<T> x) {
  Tape<T>& t = *x.tape;
  double acc = 0;  // fixed-order accumulation in double
  for (const T& v : x.value().data) acc += double(v);
  Tensor<T> out(1, 1, 1, 1);
  out.data[0] = T(acc);
  const int xid = x.id;
  const bool xr = t.node(xid).requires_grad;
  Var<T> out_var = t.make_node(std::move(out), xr, nullptr);
  const int oid = out_var.id;
  if (xr) {
    t.node(oid).backward = [=](Tape<T>& tp) {
      const T g0 = tp.node(oid).grad.data[0];
      Tensor<T>& dx = tp.grad_buffer(xid);
      for (auto& v : dx.data) v += g0;
    };
  }
  return out_var;
}

template <typename T>
Var<T> sce_sum(Var<T> predictions, Tensor<T> targets, T eps) {
  Tape<T>& t = *predictions.tape;
  require(predictions.shape() == targets.shape,
          "sce_sum: prediction shape " + predictions.shape().str() +
              " vs target shape " + targets.shape.str());
  const Tensor<T>& q = predictions.value();
  double acc = 0;
  for (std::size_t i = 0; i < q.data.size(); ++i) {
    const double qc =
        std::min(std::max(double(q.data[i]), double(eps)), 1.0 - double(eps));
    const double p = double(targets.data[i]);
    acc -= p * std::log(qc) + (1.0 - p) * std::log(1.0 - qc);
  }
  Tensor<T> out(1, 1, 1, 1);
  out.data[0] = T(acc);
  const int pid = predictions.id;
  const bool pr = t.node(pid).requires_grad;
  Var<T> out_var = t.make_node(std::move(out), pr, nullptr);
  const int oid = out_var.id;
  if (pr) {
    auto tgt = std::make_shared<Tensor<T>>(std::move(targets));
    t.node(oid).backward = [=](Tape<T>& tp) {
      const T g0 = tp.node(oid).grad.data[0];
      const Tensor<T>& qv = tp.value(pid);
      Tensor<T>& dq = tp.grad_buffer(pid);
      for (std::size_t i = 0; i < qv.data.size(); ++i) {
        const T qi = qv.data[i];
        if (qi <= eps || qi >= T(1) - eps) continue;  // clamp region: flat
        const T p = tgt->data[i];
        dq.data[i] += g0 * (-(p / qi) + (T(1) - p) / (T(1) - qi));
      }
    };
  }
  return out_var;
}

template class Tape<float>;
template class Tape<double>;

#define MKLSTM_OPS_DEF(T)                                                        \
  template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>);                             \
  template Var<T> dense<T>(Var<T>, Var<T>, Var<T>);                              \
  template Var<T> pointwise<T>(Var<T>, Pointwise);                               \
  template Var<T> add<T>(Var<T>, Var<T>);                                        \
  template Var<T> hadamard<T>(Var<T>, Var<T>);                                   \
  template Var<T> scale<T>(Var<T>, T);                                           \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                \
  template std::vector<Var<T>> split_channels<T>(Var<T>, const std::vector<int>&); \
  template Var<T> sum_all<T>(Var<T>);                                            \
  template Var<T> sce_sum<T>(Var<T>, Tensor<T>, T);
MKLSTM_OPS_DEF(float)
MKLSTM_OPS_DEF(double)
#undef MKLSTM_OPS_DEF

}  // namespace mklstm
