#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lgb/common.hpp"
#include "lgb/random.hpp"

namespace lgb {

// Parameter structs expose `template <class Self, class F> static void
// visit(Self&, F&&)` calling f(name, matrix) for every tensor. The helpers
// below give generic zeroing, scaling and enumeration on top of that.

template <class P>
std::vector<std::pair<std::string, Matrix*>> named_tensors(P& params) {
  std::vector<std::pair<std::string, Matrix*>> out;
  P::visit(params, [&](const std::string& name, Matrix& m) { out.emplace_back(name, &m); });
  return out;
}

template <class P>
std::vector<std::pair<std::string, const Matrix*>> named_tensors(const P& params) {
  std::vector<std::pair<std::string, const Matrix*>> out;
  P::visit(params,
           [&](const std::string& name, const Matrix& m) { out.emplace_back(name, &m); });
  return out;
}

template <class P>
P zeros_like(const P& params) {
  P out = params;
  P::visit(out, [](const std::string&, Matrix& m) { m.setZero(); });
  return out;
}

template <class P>
std::size_t parameter_count(const P& params) {
  std::size_t n = 0;
  P::visit(params, [&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <class P>
bool all_finite(const P& params) {
  bool ok = true;
  P::visit(params, [&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

/// dst += scale * src, tensor by tensor (same structure required).
template <class P>
void add_scaled(P& dst, const P& src, double scale) {
  auto d = named_tensors(dst);
  auto s = named_tensors(src);
  for (std::size_t i = 0; i < d.size(); ++i) *d[i].second += scale * *s[i].second;
}

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

/// Affine map y = x W + b with W: in x out and b: 1 x out.
struct Linear {
  Matrix weight;
  Matrix bias;

  static Linear init(Eigen::Index in, Eigen::Index out, Rng& rng);
  static Linear zeros(Eigen::Index in, Eigen::Index out);

  Eigen::Index in_dim() const { return weight.rows(); }
  Eigen::Index out_dim() const { return weight.cols(); }

  Matrix forward(const Matrix& x) const;
  /// Accumulates dW/db into grad and returns dx.
  Matrix backward(const Matrix& x, const Matrix& dy, Linear& grad) const;

  template <class Self, class F>
  static void visit(Self& self, F&& f, const std::string& prefix = "") {
    f(join_name(prefix, "weight"), self.weight);
    f(join_name(prefix, "bias"), self.bias);
  }
};

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

/// Row-wise softmax, numerically stabilized.
Matrix softmax_rows(const Matrix& logits);

/// Inverted dropout mask (entries 0 or 1/(1-p)); all ones when p == 0.
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng);

}  // namespace lgb
