#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "seqfuse/errors.hpp"
#include "seqfuse/instrumentation.hpp"

namespace seqfuse {

// Dense row-major matrix templated on scalar. Rank-3 tensors appear as
// std::vector<Mat<S>> (arrays of matrices) throughout the library.
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using BoolGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Precision { f32, f64 };

inline const char* to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

inline Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw ContractError("unknown precision '" + s + "' (expected f32 or f64)");
}

// FLOP accounting conventions, shared by the instrumented primitives below and
// by the exact cost model. A multiply-add counts as 2 FLOPs.
inline constexpr long long kFlopsPerSoftmaxElement = 5;
inline constexpr long long kFlopsPerLayerNormElement = 8;

// a (p x q) times b (q x r); 2*p*q*r FLOPs.
template <class S>
Mat<S> matmul(const Mat<S>& a, const Mat<S>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree: " +
                         shape_str(a.rows(), a.cols()) + " * " + shape_str(b.rows(), b.cols()));
  }
  tally_flops(2ll * a.rows() * a.cols() * b.cols());
  return a * b;
}

// a (p x q) times b^T (q x r from b r x q); 2*p*q*r FLOPs.
template <class S>
Mat<S> matmul_nt(const Mat<S>& a, const Mat<S>& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions disagree: " +
                         shape_str(a.rows(), a.cols()) + " * " + shape_str(b.cols(), b.rows()));
  }
  tally_flops(2ll * a.rows() * a.cols() * b.rows());
  return a * b.transpose();
}

template <class S>
Mat<S> add(const Mat<S>& a, const Mat<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("add: shapes disagree: " + shape_str(a.rows(), a.cols()) + " vs " +
                         shape_str(b.rows(), b.cols()));
  }
  tally_flops(static_cast<long long>(a.size()));
  return a + b;
}

// Elementwise (Hadamard) product.
template <class S>
Mat<S> mul(const Mat<S>& a, const Mat<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("mul: shapes disagree: " + shape_str(a.rows(), a.cols()) + " vs " +
                         shape_str(b.rows(), b.cols()));
  }
  tally_flops(static_cast<long long>(a.size()));
  return a.cwiseProduct(b);
}

// Adds a 1 x q bias row to every row of a p x q matrix.
template <class S>
Mat<S> add_row_broadcast(const Mat<S>& a, const Mat<S>& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw DimensionError("add_row_broadcast: bias " + shape_str(bias.rows(), bias.cols()) +
                         " does not broadcast over " + shape_str(a.rows(), a.cols()));
  }
  tally_flops(static_cast<long long>(a.size()));
  Mat<S> out = a;
  out.rowwise() += bias.row(0);
  return out;
}

template <class S>
Mat<S> scale(const Mat<S>& a, S s) {
  tally_flops(static_cast<long long>(a.size()));
  return a * s;
}

// Multiplies row i by keep(i); used to zero rows whose every key is masked.
template <class S>
Mat<S> rows_scale(const Mat<S>& a, const Vec<S>& keep) {
  if (keep.size() != a.rows()) {
    throw DimensionError("rows_scale: keep length " + std::to_string(keep.size()) +
                         " vs " + shape_str(a.rows(), a.cols()));
  }
  tally_flops(static_cast<long long>(a.size()));
  return keep.asDiagonal() * a;
}

template <class S>
Mat<S> relu(const Mat<S>& a) {
  tally_flops(static_cast<long long>(a.size()));
  return a.cwiseMax(S(0));
}

// Row-wise softmax with max subtraction; finite even for +-1e9 logits.
// 5 FLOPs per element.
template <class S>
Mat<S> softmax_rows(const Mat<S>& x) {
  tally_flops(kFlopsPerSoftmaxElement * static_cast<long long>(x.size()));
  Mat<S> out = x;
  if (x.cols() == 0) return out;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S m = x.row(r).maxCoeff();
    // Scalar std::exp, not Eigen's packet exp: the vectorized version clamps
    // very negative arguments to a denormal, but mask biases must underflow
    // to an exact zero so hidden positions cannot leak through.
    S sum = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const S e = std::exp(x(r, c) - m);
      out(r, c) = e;
      sum += e;
    }
    out.row(r) /= sum;
  }
  return out;
}

// Row-wise layer normalization with learned 1 x d gain/shift. Population
// variance, then (x - mean) / sqrt(var + eps) * gamma + beta.
// 8 FLOPs per element. xhat/inv_std outputs feed the backward pass.
template <class S>
Mat<S> layer_norm_with_stats(const Mat<S>& x, const Mat<S>& gamma, const Mat<S>& beta, S eps,
                             Mat<S>* xhat_out, Vec<S>* inv_std_out) {
  if (gamma.rows() != 1 || gamma.cols() != x.cols() || beta.rows() != 1 || beta.cols() != x.cols()) {
    throw DimensionError("layer_norm: gain/shift " + shape_str(gamma.rows(), gamma.cols()) +
                         " do not match " + shape_str(x.rows(), x.cols()));
  }
  tally_flops(kFlopsPerLayerNormElement * static_cast<long long>(x.size()));
  const Eigen::Index d = x.cols();
  Mat<S> xhat(x.rows(), d);
  Vec<S> inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    S mu = x.row(r).mean();
    Eigen::Array<S, 1, Eigen::Dynamic> c = x.row(r).array() - mu;
    S var = c.square().sum() / S(d);
    S inv = S(1) / std::sqrt(var + eps);
    inv_std(r) = inv;
    xhat.row(r) = (c * inv).matrix();
  }
  Mat<S> out(x.rows(), d);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    out.row(r) = (xhat.row(r).array() * gamma.row(0).array() + beta.row(0).array()).matrix();
  }
  if (xhat_out) *xhat_out = std::move(xhat);
  if (inv_std_out) *inv_std_out = std::move(inv_std);
  return out;
}

template <class S>
Mat<S> layer_norm(const Mat<S>& x, const Mat<S>& gamma, const Mat<S>& beta, S eps) {
  return layer_norm_with_stats<S>(x, gamma, beta, eps, nullptr, nullptr);
}

template <class S>
double max_abs_diff(const Mat<S>& a, const Mat<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("max_abs_diff: shapes disagree: " + shape_str(a.rows(), a.cols()) +
                         " vs " + shape_str(b.rows(), b.cols()));
  }
  if (a.size() == 0) return 0.0;
  return (a.template cast<double>() - b.template cast<double>()).cwiseAbs().maxCoeff();
}

// max|a-b| / max(1, max|a|, max|b|): absolute error normalized by the overall
// magnitude, floored at one. Suits post-layernorm outputs, whose scale is O(1)
// while individual coordinates may pass through zero.
template <class S>
double scaled_diff(const Mat<S>& a, const Mat<S>& b) {
  if (a.size() == 0) return 0.0;
  const double scale =
      std::max({1.0, a.template cast<double>().cwiseAbs().maxCoeff(),
                b.template cast<double>().cwiseAbs().maxCoeff()});
  return max_abs_diff(a, b) / scale;
}

// max over elements of |a-b| / max(|a|, |b|, 1e-12).
template <class S>
double max_rel_diff(const Mat<S>& a, const Mat<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("max_rel_diff: shapes disagree: " + shape_str(a.rows(), a.cols()) +
                         " vs " + shape_str(b.rows(), b.cols()));
  }
  double worst = 0.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      double x = static_cast<double>(a(r, c));
      double y = static_cast<double>(b(r, c));
      double denom = std::max({std::abs(x), std::abs(y), 1e-12});
      worst = std::max(worst, std::abs(x - y) / denom);
    }
  }
  return worst;
}

}  // namespace seqfuse
