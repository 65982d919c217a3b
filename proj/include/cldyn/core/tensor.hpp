#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace cldyn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

namespace detail {

struct TapeNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<TapeNode>> parents;  // ownership edges
  std::function<void(TapeNode&)> backward;         // pulls self.grad into parents

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<TapeNode>;

inline thread_local int nograd_depth = 0;

}  // namespace detail

inline bool grad_enabled() { return detail::nograd_depth == 0; }

/// Scoped switch that stops ops from recording backward closures.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::nograd_depth; }
  ~NoGradGuard() { --detail::nograd_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Dense 64-bit float array with reverse-mode differentiation. A Tensor is a
/// cheap handle onto a tape node; children own their parents, so dropping the
/// last handle on a loss frees its whole graph while leaf parameters survive.
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size())
      throw std::invalid_argument("Tensor::leaf: shape does not match value count");
    auto n = std::make_shared<detail::TapeNode>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad && grad_enabled();
    return Tensor(std::move(n));
  }

  static Tensor vector(std::vector<double> values, bool requires_grad = false) {
    Shape s{values.size()};
    return leaf(std::move(s), std::move(values), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return leaf({1}, {v}, requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> v(shape_numel(shape), 0.0);
    return leaf(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor full(Shape shape, double fill, bool requires_grad = false) {
    std::vector<double> v(shape_numel(shape), fill);
    return leaf(std::move(shape), std::move(v), requires_grad);
  }

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  std::size_t size() const { return n_->value.size(); }
  const std::vector<double>& values() const { return n_->value; }
  std::vector<double>& values_mut() { return n_->value; }
  double value(std::size_t i) const { return n_->value[i]; }
  bool requires_grad() const { return n_ && n_->requires_grad; }

  double item() const {
    if (size() != 1) throw std::invalid_argument("Tensor::item: tensor is not scalar");
    return n_->value[0];
  }

  /// Gradient of the last backward pass; zero-sized until one has run.
  const std::vector<double>& grad() const { return n_->grad; }
  void zero_grad() { n_->grad.assign(n_->value.size(), 0.0); }

  detail::TapeNode* node() const { return n_.get(); }
  const detail::NodePtr& ptr() const { return n_; }

  explicit Tensor(detail::NodePtr n) : n_(std::move(n)) {}

 private:
  detail::NodePtr n_;
};

namespace detail {

inline Tensor make_node(Shape shape, std::vector<double> value) {
  auto n = std::make_shared<TapeNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return Tensor(std::move(n));
}

/// Records parents and the backward closure when any input needs gradients.
inline void record(Tensor& out, std::initializer_list<Tensor> inputs,
                   std::function<void(TapeNode&)> backward) {
  if (!grad_enabled()) return;
  bool needed = false;
  for (const auto& t : inputs) needed = needed || t.requires_grad();
  if (!needed) return;
  auto* n = out.node();
  n->requires_grad = true;
  n->parents.reserve(inputs.size());
  for (const auto& t : inputs) n->parents.push_back(t.ptr());
  n->backward = std::move(backward);
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value(i) + b.value(i);
  Tensor out = detail::make_node(a.shape(), std::move(v));
  auto *pa = a.node(), *pb = b.node();
  detail::record(out, {a, b}, [pa, pb](detail::TapeNode& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
    }
  });
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value(i) - b.value(i);
  Tensor out = detail::make_node(a.shape(), std::move(v));
  auto *pa = a.node(), *pb = b.node();
  detail::record(out, {a, b}, [pa, pb](detail::TapeNode& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
    }
  });
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value(i) * b.value(i);
  Tensor out = detail::make_node(a.shape(), std::move(v));
  auto *pa = a.node(), *pb = b.node();
  detail::record(out, {a, b}, [pa, pb](detail::TapeNode& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa->grad[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pb->grad[i] += self.grad[i] * pa->value[i];
    }
  });
  return out;
}

inline Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value(i) + c;
  Tensor out = detail::make_node(a.shape(), std::move(v));
  auto* pa = a.node();
  detail::record(out, {a}, [pa](detail::TapeNode& self) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
  });
  return out;
}

inline Tensor mul_scalar(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value(i) * c;
  Tensor out = detail::make_node(a.shape(), std::move(v));
  auto* pa = a.node();
  detail::record(out, {a}, [pa, c](detail::TapeNode& self) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += c * self.grad[i];
  });
  return out;
}

inline Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

inline Tensor sum(const Tensor& a) {
  double s = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  Tensor out = detail::make_node({1}, {s});
  auto* pa = a.node();
  detail::record(out, {a}, [pa](detail::TapeNode& self) {
    pa->ensure_grad();
    for (auto& g : pa->grad) g += self.grad[0];
  });
  return out;
}

inline Tensor mean(const Tensor& a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a.size())); }

/// Elementwise sum of k same-shape tensors in one node (keeps graphs shallow).
inline Tensor add_many(const std::vector<Tensor>& ts) {
  if (ts.empty()) throw std::invalid_argument("add_many: empty input");
  std::vector<double> v(ts.front().size(), 0.0);
  for (const auto& t : ts) {
    detail::check_same_shape(t, ts.front(), "add_many");
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += t.value(i);
  }
  Tensor out = detail::make_node(ts.front().shape(), std::move(v));
  bool needed = false;
  for (const auto& t : ts) needed = needed || t.requires_grad();
  if (grad_enabled() && needed) {
    auto* n = out.node();
    n->requires_grad = true;
    std::vector<detail::TapeNode*> raw;
    raw.reserve(ts.size());
    for (const auto& t : ts) {
      n->parents.push_back(t.ptr());
      raw.push_back(t.node());
    }
    n->backward = [raw = std::move(raw)](detail::TapeNode& self) {
      for (auto* p : raw) {
        if (!p->requires_grad) continue;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      }
    };
  }
  return out;
}

inline Tensor dot(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.value(i) * b.value(i);
  Tensor out = detail::make_node({1}, {s});
  auto *pa = a.node(), *pb = b.node();
  detail::record(out, {a, b}, [pa, pb](detail::TapeNode& self) {
    const double g = self.grad[0];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += g * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < pb->grad.size(); ++i) pb->grad[i] += g * pa->value[i];
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

inline Tensor tanh_t(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(a.value(i));
  Tensor out = detail::make_node(a.shape(), std::move(v));
  auto* pa = a.node();
  detail::record(out, {a}, [pa](detail::TapeNode& self) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
  });
  return out;
}

inline Tensor exp_t(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(a.value(i));
  Tensor out = detail::make_node(a.shape(), std::move(v));
  auto* pa = a.node();
  detail::record(out, {a}, [pa](detail::TapeNode& self) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += self.grad[i] * self.value[i];
  });
  return out;
}

inline Tensor log_t(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log(a.value(i));
  Tensor out = detail::make_node(a.shape(), std::move(v));
  auto* pa = a.node();
  detail::record(out, {a}, [pa](detail::TapeNode& self) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += self.grad[i] / pa->value[i];
  });
  return out;
}

inline Tensor sqrt_t(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sqrt(a.value(i));
  Tensor out = detail::make_node(a.shape(), std::move(v));
  auto* pa = a.node();
  detail::record(out, {a}, [pa](detail::TapeNode& self) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += self.grad[i] / (2.0 * self.value[i]);
  });
  return out;
}

inline Tensor softplus_t(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = a.value(i);
    v[i] = x > 30.0 ? x : std::log1p(std::exp(x));
  }
  Tensor out = detail::make_node(a.shape(), std::move(v));
  auto* pa = a.node();
  detail::record(out, {a}, [pa](detail::TapeNode& self) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-pa->value[i]));
      pa->grad[i] += self.grad[i] * s;
    }
  });
  return out;
}

/// Normalizes the whole (last-axis) vector: zero mean, unit variance, eps 1e-5,
/// no learned affine terms.
inline Tensor layer_norm(const Tensor& a, double eps = 1e-5) {
  const std::size_t n = a.size();
  const double m = std::accumulate(a.values().begin(), a.values().end(), 0.0) / n;
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.value(i) - m;
    var += d * d;
  }
  var /= n;
  const double inv_std = 1.0 / std::sqrt(var + eps);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = (a.value(i) - m) * inv_std;
  Tensor out = detail::make_node(a.shape(), std::move(v));
  auto* pa = a.node();
  detail::record(out, {a}, [pa, inv_std](detail::TapeNode& self) {
    pa->ensure_grad();
    const std::size_t k = self.value.size();
    double g_mean = 0.0, gx_mean = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      g_mean += self.grad[i];
      gx_mean += self.grad[i] * self.value[i];
    }
    g_mean /= k;
    gx_mean /= k;
    for (std::size_t i = 0; i < k; ++i)
      pa->grad[i] += inv_std * (self.grad[i] - g_mean - self.value[i] * gx_mean);
  });
  return out;
}

inline Tensor softmax_t(const Tensor& a) {
  const std::size_t n = a.size();
  const double mx = *std::max_element(a.values().begin(), a.values().end());
  std::vector<double> v(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = std::exp(a.value(i) - mx);
    z += v[i];
  }
  for (auto& x : v) x /= z;
  Tensor out = detail::make_node(a.shape(), std::move(v));
  auto* pa = a.node();
  detail::record(out, {a}, [pa](detail::TapeNode& self) {
    pa->ensure_grad();
    double gy = 0.0;
    for (std::size_t i = 0; i < self.value.size(); ++i) gy += self.grad[i] * self.value[i];
    for (std::size_t i = 0; i < self.value.size(); ++i)
      pa->grad[i] += self.value[i] * (self.grad[i] - gy);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops and linear algebra
// ---------------------------------------------------------------------------

/// y = W x for W with shape [m, n] (row-major) and x with shape [n].
inline Tensor matvec(const Tensor& W, const Tensor& x) {
  if (W.shape().size() != 2 || W.shape()[1] != x.size())
    throw std::invalid_argument("matvec: shape mismatch");
  const std::size_t m = W.shape()[0], n = W.shape()[1];
  std::vector<double> v(m, 0.0);
  const auto& w = W.values();
  const auto& xv = x.values();
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    const double* row = w.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) s += row[j] * xv[j];
    v[i] = s;
  }
  Tensor out = detail::make_node({m}, std::move(v));
  auto *pw = W.node(), *px = x.node();
  detail::record(out, {W, x}, [pw, px, m, n](detail::TapeNode& self) {
    if (pw->requires_grad) {
      pw->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double g = self.grad[i];
        if (g == 0.0) continue;
        double* row = pw->grad.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += g * px->value[j];
      }
    }
    if (px->requires_grad) {
      px->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double g = self.grad[i];
        if (g == 0.0) continue;
        const double* row = pw->value.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) px->grad[j] += g * row[j];
      }
    }
  });
  return out;
}

inline Tensor concat(const Tensor& a, const Tensor& b) {
  std::vector<double> v;
  v.reserve(a.size() + b.size());
  v.insert(v.end(), a.values().begin(), a.values().end());
  v.insert(v.end(), b.values().begin(), b.values().end());
  Tensor out = detail::make_node({a.size() + b.size()}, std::move(v));
  auto *pa = a.node(), *pb = b.node();
  const std::size_t na = a.size();
  detail::record(out, {a, b}, [pa, pb, na](detail::TapeNode& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < na; ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < pb->grad.size(); ++i) pb->grad[i] += self.grad[na + i];
    }
  });
  return out;
}

/// Contiguous slice of the flat value buffer, reinterpreted with `shape`.
inline Tensor slice(const Tensor& a, std::size_t offset, Shape shape) {
  const std::size_t n = shape_numel(shape);
  if (offset + n > a.size()) throw std::invalid_argument("slice: out of range");
  std::vector<double> v(a.values().begin() + offset, a.values().begin() + offset + n);
  Tensor out = detail::make_node(std::move(shape), std::move(v));
  auto* pa = a.node();
  detail::record(out, {a}, [pa, offset](detail::TapeNode& self) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[offset + i] += self.grad[i];
  });
  return out;
}

inline Tensor at(const Tensor& a, std::size_t i) {
  if (i >= a.size()) throw std::invalid_argument("at: index out of range");
  Tensor out = detail::make_node({1}, {a.value(i)});
  auto* pa = a.node();
  detail::record(out, {a}, [pa, i](detail::TapeNode& self) {
    pa->ensure_grad();
    pa->grad[i] += self.grad[0];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian log-density (fused: one node per emission step)
// ---------------------------------------------------------------------------

/// Sum over i of log N(y_i | mean_i, var_i) for observed y (no gradient to y).
inline Tensor gaussian_logpdf(const std::vector<double>& y, const Tensor& mean,
                              const Tensor& var) {
  if (mean.size() != y.size() || var.size() != y.size())
    throw std::invalid_argument("gaussian_logpdf: shape mismatch");
  constexpr double log2pi = 1.8378770664093454835606594728112;
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - mean.value(i);
    s += -0.5 * (log2pi + std::log(var.value(i)) + d * d / var.value(i));
  }
  Tensor out = detail::make_node({1}, {s});
  auto *pm = mean.node(), *pv = var.node();
  detail::record(out, {mean, var}, [pm, pv, y](detail::TapeNode& self) {
    const double g = self.grad[0];
    if (pm->requires_grad) {
      pm->ensure_grad();
      for (std::size_t i = 0; i < y.size(); ++i)
        pm->grad[i] += g * (y[i] - pm->value[i]) / pv->value[i];
    }
    if (pv->requires_grad) {
      pv->ensure_grad();
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - pm->value[i];
        const double v = pv->value[i];
        pv->grad[i] += g * 0.5 * (d * d / (v * v) - 1.0 / v);
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<TapeNode*> topo_order(TapeNode* root) {
  std::vector<TapeNode*> order;
  std::unordered_set<TapeNode*> seen;
  std::vector<std::pair<TapeNode*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TapeNode* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents precede children; traverse in reverse for backward
}

}  // namespace detail

/// Runs reverse-mode accumulation from a scalar loss. Gradients of every
/// reachable grad-requiring node (leaves included) are reset first, so each
/// call reports exactly this loss's derivatives.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (!loss.requires_grad()) return;
  auto order = detail::topo_order(loss.node());
  for (auto* n : order) n->grad.assign(n->value.size(), 0.0);
  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

/// Gradient of a scalar loss with respect to each parameter. Parameters that
/// never entered the recorded graph come back zero-filled with a note on
/// stderr, matching the tape's "absent means constant" convention.
inline std::vector<Tensor> grad(const Tensor& loss, const std::vector<Tensor>& params) {
  if (loss.size() != 1) throw std::invalid_argument("grad: loss must be scalar");
  std::unordered_set<detail::TapeNode*> reached;
  if (loss.requires_grad()) {
    auto order = detail::topo_order(loss.node());
    for (auto* n : order) n->grad.assign(n->value.size(), 0.0);
    loss.node()->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward) (*it)->backward(**it);
    }
    reached.insert(order.begin(), order.end());
  }
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    if (reached.count(p.node())) {
      out.push_back(Tensor::leaf(p.shape(), p.grad()));
    } else {
      std::cerr << "[cldyn] grad: parameter not on the recorded graph; returning zeros\n";
      out.push_back(Tensor::zeros(p.shape()));
    }
  }
  return out;
}

}  // namespace cldyn
