#include "lgb/tensor.hpp"

#include <cmath>

namespace lgb {

Linear Linear::init(Eigen::Index in, Eigen::Index out, Rng& rng) {
  // Glorot-uniform weights, zero bias.
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  Linear l = zeros(in, out);
  for (Eigen::Index i = 0; i < in; ++i) {
    for (Eigen::Index j = 0; j < out; ++j) l.weight(i, j) = rng.uniform(-bound, bound);
  }
  return l;
}

Linear Linear::zeros(Eigen::Index in, Eigen::Index out) {
  return {Matrix::Zero(in, out), Matrix::Zero(1, out)};
}

Matrix Linear::forward(const Matrix& x) const {
  Matrix y = x * weight;
  y.rowwise() += bias.row(0);
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy, Linear& grad) const {
  grad.weight.noalias() += x.transpose() * dy;
  grad.bias += dy.colwise().sum();
  return dy * weight.transpose();
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Matrix mask = Matrix::Ones(rows, cols);
  if (p <= 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) mask(i, j) = rng.bernoulli(p) ? 0.0 : keep_scale;
  }
  return mask;
}

}  // namespace lgb
