#pragma once

#include <cstddef>
#include <vector>

#include "cldyn/core/rng.hpp"
#include "cldyn/core/tensor.hpp"

namespace cldyn {

/// Dense layer y = W x + b with W stored [out, in].
struct Dense {
  Tensor W;
  Tensor b;

  static Dense make(std::size_t in, std::size_t out, Rng& rng, bool requires_grad = true) {
    // N(0, 1/fan_in) weights, zero bias.
    const double std = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(in * out);
    for (auto& x : w) x = rng.normal() * std;
    Dense d;
    d.W = Tensor::leaf({out, in}, std::move(w), requires_grad);
    d.b = Tensor::zeros({out}, requires_grad);
    return d;
  }

  std::size_t in_dim() const { return W.shape()[1]; }
  std::size_t out_dim() const { return W.shape()[0]; }
};

inline Tensor dense(const Tensor& x, const Tensor& W, const Tensor& b) {
  return add(matvec(W, x), b);
}

inline Tensor apply(const Dense& d, const Tensor& x) { return dense(x, d.W, d.b); }

/// Perceptron with tanh + layer normalization after each hidden layer and a
/// linear output layer. An empty hidden list degenerates to a single dense map.
struct Mlp {
  std::vector<Dense> layers;

  static Mlp make(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                  Rng& rng, bool requires_grad = true) {
    Mlp m;
    std::size_t d = in;
    for (std::size_t h : hidden) {
      m.layers.push_back(Dense::make(d, h, rng, requires_grad));
      d = h;
    }
    m.layers.push_back(Dense::make(d, out, rng, requires_grad));
    return m;
  }

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }

  void collect_parameters(std::vector<Tensor>& out) const {
    for (const auto& l : layers) {
      out.push_back(l.W);
      out.push_back(l.b);
    }
  }
};

inline Tensor apply(const Mlp& m, const Tensor& x) {
  Tensor h = x;
  for (std::size_t i = 0; i + 1 < m.layers.size(); ++i)
    h = layer_norm(tanh_t(apply(m.layers[i], h)));
  return apply(m.layers.back(), h);
}

}  // namespace cldyn
