// Copyright 2026 The pkws Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pkws/common.hpp"
#include "pkws/tensor.hpp"

namespace pkws::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
struct Var {
  Tape* tape = nullptr;
  int32_t id = -1;

  const Tensor& value() const;
};

/// Named slot for a trainable tensor. The tape accumulates gradients into
/// `grad`; the optimizer owns the moment buffers.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;  // first-moment accumulator
  Tensor v;  // second-moment accumulator

  explicit Param(std::string n, Tensor init)
      : name(std::move(n)),
        value(std::move(init)),
        grad(value.shape()),
        m(value.shape()),
        v(value.shape()) {}
};

/// Define-by-run graph. A tape is built fresh for every forward pass; nodes
/// are stored in creation order, which is a topological order by
/// construction. Single-threaded per tape.
class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;                       // allocated lazily in backward()
    std::vector<int32_t> parents;
    std::function<void(Tape&, int32_t)> vjp;  // pulls this node's grad into parents
    Param* sink = nullptr;             // set for parameter leaves
    const char* op = "";
    bool needs_grad = false;
  };

  Var constant(Tensor value) {
    return push(std::move(value), {}, nullptr, "const", false, nullptr);
  }

  Var param(Param& p) {
    return push(p.value, {}, nullptr, "param", true, &p);
  }

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  Node& node(int32_t id) { return nodes_[id]; }
  size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Gradients of parameter leaves are
  /// accumulated into their Param::grad. Each node is visited exactly once.
  void backward(Var loss) {
    Node& ln = nodes_[loss.id];
    if (ln.value.numel() != 1)
      throw_numeric("backward: loss must be scalar, got shape " +
                    ln.value.shape_str());
    // Mark ancestors of the loss.
    std::vector<char> reachable(nodes_.size(), 0);
    std::vector<int32_t> stack{loss.id};
    reachable[loss.id] = 1;
    while (!stack.empty()) {
      const int32_t id = stack.back();
      stack.pop_back();
      for (int32_t p : nodes_[id].parents) {
        if (!reachable[p]) {
          reachable[p] = 1;
          stack.push_back(p);
        }
      }
    }
    ln.grad = Tensor(ln.value.shape());
    ln.grad[0] = 1.0;
    for (int32_t id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!reachable[id] || !n.needs_grad) continue;
      if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape());
      if (n.sink) {
        for (int64_t i = 0; i < n.grad.numel(); ++i) n.sink->grad[i] += n.grad[i];
      } else if (n.vjp) {
        n.vjp(*this, id);
      }
    }
  }

  /// Gradient of a non-parameter node after backward(); zeros if unreached.
  Tensor grad_of(Var v) const {
    const Node& n = nodes_[v.id];
    return n.grad.numel() ? n.grad : Tensor(n.value.shape());
  }

  const std::vector<std::string>& warnings() const { return warnings_; }
  void warn(std::string msg) { warnings_.push_back(std::move(msg)); }

  Var push(Tensor value, std::vector<int32_t> parents,
           std::function<void(Tape&, int32_t)> vjp, const char* op,
           bool needs_grad, Param* sink) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.vjp = std::move(vjp);
    n.op = op;
    n.sink = sink;
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
  }

  // Accumulate `g` into parent `pid`, allocating its grad buffer on demand.
  void add_grad(int32_t pid, const Tensor& g) {
    Node& p = nodes_[pid];
    if (!p.needs_grad) return;
    if (p.grad.numel() == 0) p.grad = Tensor(p.value.shape());
    for (int64_t i = 0; i < g.numel(); ++i) p.grad[i] += g[i];
  }

 private:
  std::vector<Node> nodes_;
  std::vector<std::string> warnings_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

namespace detail {

inline bool any_needs_grad(Tape& t, std::initializer_list<Var> vs) {
  for (Var v : vs)
    if (t.node(v.id).needs_grad) return true;
  return false;
}

[[noreturn]] inline void shape_error(const char* op, const std::string& detail) {
  throw_numeric(std::string(op) + ": " + detail);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives. Each op validates shapes up front and registers its
// vector-Jacobian product.
// ---------------------------------------------------------------------------

inline Var add(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv))
    detail::shape_error("add", av.shape_str() + " vs " + bv.shape_str());
  Tensor out(av.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  const bool ng = detail::any_needs_grad(t, {a, b});
  return t.push(std::move(out), {a.id, b.id},
                [](Tape& tp, int32_t id) {
                  auto& n = tp.node(id);
                  tp.add_grad(n.parents[0], n.grad);
                  tp.add_grad(n.parents[1], n.grad);
                },
                "add", ng, nullptr);
}

inline Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv))
    detail::shape_error("sub", av.shape_str() + " vs " + bv.shape_str());
  Tensor out(av.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
  const bool ng = detail::any_needs_grad(t, {a, b});
  return t.push(std::move(out), {a.id, b.id},
                [](Tape& tp, int32_t id) {
                  auto& n = tp.node(id);
                  tp.add_grad(n.parents[0], n.grad);
                  Tensor neg(n.grad.shape());
                  for (int64_t i = 0; i < neg.numel(); ++i) neg[i] = -n.grad[i];
                  tp.add_grad(n.parents[1], neg);
                },
                "sub", ng, nullptr);
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv))
    detail::shape_error("mul", av.shape_str() + " vs " + bv.shape_str());
  Tensor out(av.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  const bool ng = detail::any_needs_grad(t, {a, b});
  return t.push(std::move(out), {a.id, b.id},
                [](Tape& tp, int32_t id) {
                  auto& n = tp.node(id);
                  const Tensor& av = tp.node(n.parents[0]).value;
                  const Tensor& bv = tp.node(n.parents[1]).value;
                  Tensor ga(av.shape()), gb(bv.shape());
                  for (int64_t i = 0; i < av.numel(); ++i) {
                    ga[i] = n.grad[i] * bv[i];
                    gb[i] = n.grad[i] * av[i];
                  }
                  tp.add_grad(n.parents[0], ga);
                  tp.add_grad(n.parents[1], gb);
                },
                "mul", ng, nullptr);
}

/// Multiply by a compile-time constant.
inline Var scale(Var a, double c) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] * c;
  const bool ng = t.node(a.id).needs_grad;
  return t.push(std::move(out), {a.id},
                [c](Tape& tp, int32_t id) {
                  auto& n = tp.node(id);
                  Tensor g(n.grad.shape());
                  for (int64_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * c;
                  tp.add_grad(n.parents[0], g);
                },
                "scale", ng, nullptr);
}

inline Var relu(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  const bool ng = t.node(a.id).needs_grad;
  return t.push(std::move(out), {a.id},
                [](Tape& tp, int32_t id) {
                  auto& n = tp.node(id);
                  const Tensor& av = tp.node(n.parents[0]).value;
                  Tensor g(av.shape());
                  for (int64_t i = 0; i < av.numel(); ++i)
                    g[i] = av[i] > 0.0 ? n.grad[i] : 0.0;
                  tp.add_grad(n.parents[0], g);
                },
                "relu", ng, nullptr);
}

inline Var sigmoid(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-av[i]));
  const bool ng = t.node(a.id).needs_grad;
  return t.push(std::move(out), {a.id},
                [](Tape& tp, int32_t id) {
                  auto& n = tp.node(id);
                  const Tensor& y = n.value;
                  Tensor g(y.shape());
                  for (int64_t i = 0; i < y.numel(); ++i)
                    g[i] = n.grad[i] * y[i] * (1.0 - y[i]);
                  tp.add_grad(n.parents[0], g);
                },
                "sigmoid", ng, nullptr);
}

/// x [n] -> x W + b with W [n, m], b [m]. A leading time axis is allowed:
/// x [T, n] -> [T, m], rows mapped independently.
inline Var affine(Var x, Var w, Var b) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (wv.rank() != 2) detail::shape_error("affine", "weight must be rank 2");
  const int64_t n = wv.dim(0), m = wv.dim(1);
  if (bv.rank() != 1 || bv.dim(0) != m)
    detail::shape_error("affine", "bias shape " + bv.shape_str());
  const bool batched = xv.rank() == 2;
  if ((batched ? xv.dim(1) : (xv.rank() == 1 ? xv.dim(0) : -1)) != n)
    detail::shape_error("affine", "input shape " + xv.shape_str() +
                                      " incompatible with weight " + wv.shape_str());
  const int64_t rows = batched ? xv.dim(0) : 1;
  Tensor out(batched ? std::vector<int64_t>{rows, m} : std::vector<int64_t>{m});
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * n;
    double* yr = out.data() + r * m;
    for (int64_t j = 0; j < m; ++j) yr[j] = bv[j];
    for (int64_t i = 0; i < n; ++i) {
      const double xi = xr[i];
      const double* wi = wv.data() + i * m;
      for (int64_t j = 0; j < m; ++j) yr[j] += xi * wi[j];
    }
  }
  const bool ng = detail::any_needs_grad(t, {x, w, b});
  return t.push(std::move(out), {x.id, w.id, b.id},
                [n, m, rows](Tape& tp, int32_t id) {
                  auto& nd = tp.node(id);
                  const Tensor& xv = tp.node(nd.parents[0]).value;
                  const Tensor& wv = tp.node(nd.parents[1]).value;
                  Tensor gx(xv.shape()), gw(wv.shape()), gb(std::vector<int64_t>{m});
                  for (int64_t r = 0; r < rows; ++r) {
                    const double* gy = nd.grad.data() + r * m;
                    const double* xr = xv.data() + r * n;
                    double* gxr = gx.data() + r * n;
                    for (int64_t j = 0; j < m; ++j) gb[j] += gy[j];
                    for (int64_t i = 0; i < n; ++i) {
                      const double* wi = wv.data() + i * m;
                      double* gwi = gw.data() + i * m;
                      double acc = 0.0;
                      for (int64_t j = 0; j < m; ++j) {
                        acc += gy[j] * wi[j];
                        gwi[j] += xr[i] * gy[j];
                      }
                      gxr[i] += acc;
                    }
                  }
                  tp.add_grad(nd.parents[0], gx);
                  tp.add_grad(nd.parents[1], gw);
                  tp.add_grad(nd.parents[2], gb);
                },
                "affine", ng, nullptr);
}

/// Valid 1-D convolution over the time axis. x [T, Cin], kernel
/// [k, Cin, Cout], bias [Cout] -> [(T-k)/stride + 1, Cout].
inline Var conv1d(Var x, Var kernel, Var bias, int64_t stride = 1) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || kv.rank() != 3)
    detail::shape_error("conv1d", "input " + xv.shape_str() + ", kernel " +
                                      kv.shape_str());
  const int64_t T = xv.dim(0), cin = xv.dim(1);
  const int64_t k = kv.dim(0), cout = kv.dim(2);
  if (kv.dim(1) != cin)
    detail::shape_error("conv1d", "kernel channels " + kv.shape_str() +
                                      " vs input " + xv.shape_str());
  if (bv.rank() != 1 || bv.dim(0) != cout)
    detail::shape_error("conv1d", "bias shape " + bv.shape_str());
  if (stride < 1) detail::shape_error("conv1d", "stride must be >= 1");
  if (T < k) detail::shape_error("conv1d", "input shorter than kernel");
  const int64_t to = (T - k) / stride + 1;
  Tensor out({to, cout});
  for (int64_t ot = 0; ot < to; ++ot) {
    double* yr = out.data() + ot * cout;
    for (int64_t j = 0; j < cout; ++j) yr[j] = bv[j];
    for (int64_t dt = 0; dt < k; ++dt) {
      const double* xr = xv.data() + (ot * stride + dt) * cin;
      const double* kr = kv.data() + dt * cin * cout;
      for (int64_t ci = 0; ci < cin; ++ci) {
        const double xi = xr[ci];
        const double* kc = kr + ci * cout;
        for (int64_t j = 0; j < cout; ++j) yr[j] += xi * kc[j];
      }
    }
  }
  const bool ng = detail::any_needs_grad(t, {x, kernel, bias});
  return t.push(std::move(out), {x.id, kernel.id, bias.id},
                [k, cin, cout, stride, to](Tape& tp, int32_t id) {
                  auto& nd = tp.node(id);
                  const Tensor& xv = tp.node(nd.parents[0]).value;
                  const Tensor& kv = tp.node(nd.parents[1]).value;
                  Tensor gx(xv.shape()), gk(kv.shape()),
                      gb(std::vector<int64_t>{cout});
                  for (int64_t ot = 0; ot < to; ++ot) {
                    const double* gy = nd.grad.data() + ot * cout;
                    for (int64_t j = 0; j < cout; ++j) gb[j] += gy[j];
                    for (int64_t dt = 0; dt < k; ++dt) {
                      const double* xr = xv.data() + (ot * stride + dt) * cin;
                      double* gxr = gx.data() + (ot * stride + dt) * cin;
                      const double* kr = kv.data() + dt * cin * cout;
                      double* gkr = gk.data() + dt * cin * cout;
                      for (int64_t ci = 0; ci < cin; ++ci) {
                        const double* kc = kr + ci * cout;
                        double* gkc = gkr + ci * cout;
                        double acc = 0.0;
                        for (int64_t j = 0; j < cout; ++j) {
                          acc += gy[j] * kc[j];
                          gkc[j] += gy[j] * xr[ci];
                        }
                        gxr[ci] += acc;
                      }
                    }
                  }
                  tp.add_grad(nd.parents[0], gx);
                  tp.add_grad(nd.parents[1], gk);
                  tp.add_grad(nd.parents[2], gb);
                },
                "conv1d", ng, nullptr);
}

/// [T, C] -> [C], mean over the time axis.
inline Var mean_pool_time(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  if (xv.rank() != 2) detail::shape_error("mean_pool_time", xv.shape_str());
  const int64_t T = xv.dim(0), c = xv.dim(1);
  if (T == 0) detail::shape_error("mean_pool_time", "empty time axis");
  Tensor out({c});
  for (int64_t r = 0; r < T; ++r)
    for (int64_t j = 0; j < c; ++j) out[j] += xv.at(r, j);
  for (int64_t j = 0; j < c; ++j) out[j] /= static_cast<double>(T);
  const bool ng = t.node(x.id).needs_grad;
  return t.push(std::move(out), {x.id},
                [T, c](Tape& tp, int32_t id) {
                  auto& nd = tp.node(id);
                  Tensor g({T, c});
                  for (int64_t r = 0; r < T; ++r)
                    for (int64_t j = 0; j < c; ++j)
                      g.at(r, j) = nd.grad[j] / static_cast<double>(T);
                  tp.add_grad(nd.parents[0], g);
                },
                "mean_pool_time", ng, nullptr);
}

/// x / ||x|| for vectors. A zero vector maps to the zero vector and records
/// a warning on the tape instead of producing NaN.
inline Var l2_normalize(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const double nrm = xv.norm();
  Tensor out(xv.shape());
  if (nrm == 0.0) {
    t.warn("l2_normalize: zero-norm input, returning zero vector");
  } else {
    for (int64_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] / nrm;
  }
  const bool ng = t.node(x.id).needs_grad;
  return t.push(std::move(out), {x.id},
                [nrm](Tape& tp, int32_t id) {
                  auto& nd = tp.node(id);
                  const Tensor& xv = tp.node(nd.parents[0]).value;
                  Tensor g(xv.shape());
                  if (nrm > 0.0) {
                    double xg = 0.0;
                    for (int64_t i = 0; i < xv.numel(); ++i) xg += xv[i] * nd.grad[i];
                    const double n3 = nrm * nrm * nrm;
                    for (int64_t i = 0; i < xv.numel(); ++i)
                      g[i] = nd.grad[i] / nrm - xv[i] * xg / n3;
                  }
                  tp.add_grad(nd.parents[0], g);
                },
                "l2_normalize", ng, nullptr);
}

/// Concatenate vectors (or scalars, treated as length-1) along axis 0.
inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw_numeric("concat: empty input list");
  Tape& t = *parts[0].tape;
  int64_t total = 0;
  bool ng = false;
  std::vector<int32_t> ids;
  std::vector<int64_t> lens;
  for (Var p : parts) {
    const Tensor& pv = p.value();
    if (pv.rank() > 1) detail::shape_error("concat", pv.shape_str());
    total += pv.numel();
    lens.push_back(pv.numel());
    ids.push_back(p.id);
    ng = ng || t.node(p.id).needs_grad;
  }
  Tensor out({total});
  int64_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = p.value();
    for (int64_t i = 0; i < pv.numel(); ++i) out[off + i] = pv[i];
    off += pv.numel();
  }
  return t.push(std::move(out), std::move(ids),
                [lens](Tape& tp, int32_t id) {
                  auto& nd = tp.node(id);
                  int64_t off = 0;
                  for (size_t p = 0; p < lens.size(); ++p) {
                    Tensor g(tp.node(nd.parents[p]).value.shape());
                    for (int64_t i = 0; i < lens[p]; ++i) g[i] = nd.grad[off + i];
                    tp.add_grad(nd.parents[p], g);
                    off += lens[p];
                  }
                },
                "concat", ng, nullptr);
}

inline Var concat(Var a, Var b) { return concat(std::vector<Var>{a, b}); }

/// Cosine similarity of two vectors; rejects zero inputs.
inline Var cosine(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv) || av.rank() != 1)
    detail::shape_error("cosine", av.shape_str() + " vs " + bv.shape_str());
  const double na = av.norm(), nb = bv.norm();
  if (na == 0.0 || nb == 0.0) throw_numeric("cosine: zero-norm input");
  const double d = dot(av, bv);
  const double cos = d / (na * nb);
  const bool ng = detail::any_needs_grad(t, {a, b});
  return t.push(Tensor::scalar(cos), {a.id, b.id},
                [na, nb, cos](Tape& tp, int32_t id) {
                  auto& nd = tp.node(id);
                  const double g = nd.grad[0];
                  const Tensor& av = tp.node(nd.parents[0]).value;
                  const Tensor& bv = tp.node(nd.parents[1]).value;
                  Tensor ga(av.shape()), gb(bv.shape());
                  for (int64_t i = 0; i < av.numel(); ++i) {
                    ga[i] = g * (bv[i] / (na * nb) - cos * av[i] / (na * na));
                    gb[i] = g * (av[i] / (na * nb) - cos * bv[i] / (nb * nb));
                  }
                  tp.add_grad(nd.parents[0], ga);
                  tp.add_grad(nd.parents[1], gb);
                },
                "cosine", ng, nullptr);
}

/// Cosine of a vector against every column of a matrix: z [d], W [d, C]
/// -> [C]. Columns with zero norm are rejected.
inline Var cosine_columns(Var z, Var w) {
  Tape& t = *z.tape;
  const Tensor& zv = z.value();
  const Tensor& wv = w.value();
  if (zv.rank() != 1 || wv.rank() != 2 || wv.dim(0) != zv.dim(0))
    detail::shape_error("cosine_columns",
                        zv.shape_str() + " vs " + wv.shape_str());
  const int64_t d = zv.dim(0), c = wv.dim(1);
  const double nz = zv.norm();
  if (nz == 0.0) throw_numeric("cosine_columns: zero-norm embedding");
  std::vector<double> colnorm(c, 0.0);
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < c; ++j) colnorm[j] += wv.at(i, j) * wv.at(i, j);
  Tensor out({c});
  for (int64_t j = 0; j < c; ++j) {
    colnorm[j] = std::sqrt(colnorm[j]);
    if (colnorm[j] == 0.0) throw_numeric("cosine_columns: zero-norm column");
  }
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < c; ++j) out[j] += zv[i] * wv.at(i, j);
  for (int64_t j = 0; j < c; ++j) out[j] /= nz * colnorm[j];
  const bool ng = detail::any_needs_grad(t, {z, w});
  return t.push(std::move(out), {z.id, w.id},
                [d, c, nz, colnorm](Tape& tp, int32_t id) {
                  auto& nd = tp.node(id);
                  const Tensor& zv = tp.node(nd.parents[0]).value;
                  const Tensor& wv = tp.node(nd.parents[1]).value;
                  const Tensor& cosv = nd.value;
                  Tensor gz(zv.shape()), gw(wv.shape());
                  for (int64_t j = 0; j < c; ++j) {
                    const double g = nd.grad[j];
                    if (g == 0.0) continue;
                    for (int64_t i = 0; i < d; ++i) {
                      gz[i] += g * (wv.at(i, j) / (nz * colnorm[j]) -
                                    cosv[j] * zv[i] / (nz * nz));
                      gw.at(i, j) += g * (zv[i] / (nz * colnorm[j]) -
                                          cosv[j] * wv.at(i, j) /
                                              (colnorm[j] * colnorm[j]));
                    }
                  }
                  tp.add_grad(nd.parents[0], gz);
                  tp.add_grad(nd.parents[1], gw);
                },
                "cosine_columns", ng, nullptr);
}

/// y = w * x + b with learnable scalars w, b broadcast over x.
inline Var scale_shift(Var x, Var w, Var b) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (wv.numel() != 1 || bv.numel() != 1)
    detail::shape_error("scale_shift", "scale and shift must be scalars");
  Tensor out(xv.shape());
  for (int64_t i = 0; i < xv.numel(); ++i) out[i] = wv[0] * xv[i] + bv[0];
  const bool ng = detail::any_needs_grad(t, {x, w, b});
  return t.push(std::move(out), {x.id, w.id, b.id},
                [](Tape& tp, int32_t id) {
                  auto& nd = tp.node(id);
                  const Tensor& xv = tp.node(nd.parents[0]).value;
                  const Tensor& wv = tp.node(nd.parents[1]).value;
                  Tensor gx(xv.shape());
                  double gw = 0.0, gb = 0.0;
                  for (int64_t i = 0; i < xv.numel(); ++i) {
                    gx[i] = nd.grad[i] * wv[0];
                    gw += nd.grad[i] * xv[i];
                    gb += nd.grad[i];
                  }
                  tp.add_grad(nd.parents[0], gx);
                  tp.add_grad(nd.parents[1], Tensor(wv.shape(), {gw}));
                  tp.add_grad(nd.parents[2], Tensor(wv.shape(), {gb}));
                },
                "scale_shift", ng, nullptr);
}

/// Softmax over a vector. Shift-by-max for stability; rows sum to 1.
inline Var softmax(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  if (xv.rank() != 1) detail::shape_error("softmax", xv.shape_str());
  const int64_t n = xv.dim(0);
  if (n == 0) detail::shape_error("softmax", "empty input");
  double mx = xv[0];
  for (int64_t i = 1; i < n; ++i) mx = std::max(mx, xv[i]);
  Tensor out({n});
  double z = 0.0;
  for (int64_t i = 0; i < n; ++i) z += out[i] = std::exp(xv[i] - mx);
  for (int64_t i = 0; i < n; ++i) out[i] /= z;
  const bool ng = t.node(x.id).needs_grad;
  return t.push(std::move(out), {x.id},
                [n](Tape& tp, int32_t id) {
                  auto& nd = tp.node(id);
                  const Tensor& y = nd.value;
                  double gy = 0.0;
                  for (int64_t i = 0; i < n; ++i) gy += nd.grad[i] * y[i];
                  Tensor g(y.shape());
                  for (int64_t i = 0; i < n; ++i) g[i] = y[i] * (nd.grad[i] - gy);
                  tp.add_grad(nd.parents[0], g);
                },
                "softmax", ng, nullptr);
}

/// Negative log-likelihood of one class under a probability vector.
inline Var nll(Var probs, int64_t true_class) {
  Tape& t = *probs.tape;
  const Tensor& pv = probs.value();
  if (pv.rank() != 1) detail::shape_error("nll", pv.shape_str());
  if (true_class < 0 || true_class >= pv.dim(0))
    detail::shape_error("nll", "class index out of range");
  const double p = pv[true_class];
  if (p <= 0.0) throw_numeric("nll: non-positive probability for true class");
  const bool ng = t.node(probs.id).needs_grad;
  return t.push(Tensor::scalar(-std::log(p)), {probs.id},
                [true_class, p](Tape& tp, int32_t id) {
                  auto& nd = tp.node(id);
                  Tensor g(tp.node(nd.parents[0]).value.shape());
                  g[true_class] = -nd.grad[0] / p;
                  tp.add_grad(nd.parents[0], g);
                },
                "nll", ng, nullptr);
}

inline Var sum(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  double s = 0.0;
  for (int64_t i = 0; i < xv.numel(); ++i) s += xv[i];
  const bool ng = t.node(x.id).needs_grad;
  return t.push(Tensor::scalar(s), {x.id},
                [](Tape& tp, int32_t id) {
                  auto& nd = tp.node(id);
                  Tensor g(tp.node(nd.parents[0]).value.shape());
                  g.fill(nd.grad[0]);
                  tp.add_grad(nd.parents[0], g);
                },
                "sum", ng, nullptr);
}

inline Var mean_all(Var x) {
  const int64_t n = x.value().numel();
  if (n == 0) detail::shape_error("mean_all", "empty input");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

}  // namespace pkws::ad
