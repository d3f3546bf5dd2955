#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "seqfuse/errors.hpp"
#include "seqfuse/tensor.hpp"

namespace seqfuse {

// Reverse-mode autodiff over matrices. Operations append nodes to the tape;
// construction order is a topological order, so backward() replays node
// closures once each from the loss down to node 0. Single-threaded by design.
template <class S>
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  int size() const { return static_cast<int>(nodes_.size()); }

  const Mat<S>& value(Var v) const { return nodes_.at(v.id).value; }

  // Zero until backward() has run; exactly zero for nodes the loss never used.
  const Mat<S>& grad(Var v) const { return nodes_.at(v.id).grad; }

  // Leaf holding a parameter or input. Constants are leaves too; both receive
  // gradient accumulation slots, callers simply ignore constants' grads.
  Var leaf(Mat<S> v) { return push(std::move(v), nullptr); }
  Var constant(Mat<S> v) { return push(std::move(v), nullptr); }

  Var matmul(Var a, Var b) {
    Mat<S> out = seqfuse::matmul(value(a), value(b));
    const int ai = a.id, bi = b.id, ci = size();
    return push(std::move(out), [ai, bi, ci](Tape& t) {
      t.g(ai).noalias() += t.g(ci) * t.val(bi).transpose();
      t.g(bi).noalias() += t.val(ai).transpose() * t.g(ci);
    });
  }

  // a * b^T.
  Var matmul_nt(Var a, Var b) {
    Mat<S> out = seqfuse::matmul_nt(value(a), value(b));
    const int ai = a.id, bi = b.id, ci = size();
    return push(std::move(out), [ai, bi, ci](Tape& t) {
      t.g(ai).noalias() += t.g(ci) * t.val(bi);
      t.g(bi).noalias() += t.g(ci).transpose() * t.val(ai);
    });
  }

  Var add(Var a, Var b) {
    Mat<S> out = seqfuse::add(value(a), value(b));
    const int ai = a.id, bi = b.id, ci = size();
    return push(std::move(out), [ai, bi, ci](Tape& t) {
      t.g(ai) += t.g(ci);
      t.g(bi) += t.g(ci);
    });
  }

  Var mul(Var a, Var b) {
    Mat<S> out = seqfuse::mul(value(a), value(b));
    const int ai = a.id, bi = b.id, ci = size();
    return push(std::move(out), [ai, bi, ci](Tape& t) {
      t.g(ai) += t.g(ci).cwiseProduct(t.val(bi));
      t.g(bi) += t.g(ci).cwiseProduct(t.val(ai));
    });
  }

  Var add_rowvec(Var a, Var bias) {
    Mat<S> out = add_row_broadcast(value(a), value(bias));
    const int ai = a.id, bi = bias.id, ci = size();
    return push(std::move(out), [ai, bi, ci](Tape& t) {
      t.g(ai) += t.g(ci);
      t.g(bi) += t.g(ci).colwise().sum();
    });
  }

  Var add_const(Var a, const Mat<S>& m) {
    Mat<S> out = seqfuse::add(value(a), m);
    const int ai = a.id, ci = size();
    return push(std::move(out), [ai, ci](Tape& t) { t.g(ai) += t.g(ci); });
  }

  Var scale(Var a, S s) {
    Mat<S> out = seqfuse::scale(value(a), s);
    const int ai = a.id, ci = size();
    return push(std::move(out), [ai, ci, s](Tape& t) { t.g(ai) += s * t.g(ci); });
  }

  Var rows_scale(Var a, Vec<S> keep) {
    Mat<S> out = seqfuse::rows_scale(value(a), keep);
    const int ai = a.id, ci = size();
    return push(std::move(out), [ai, ci, keep](Tape& t) {
      t.g(ai).noalias() += keep.asDiagonal() * t.g(ci);
    });
  }

  Var softmax_rows(Var a) {
    Mat<S> out = seqfuse::softmax_rows(value(a));
    const int ai = a.id, ci = size();
    return push(std::move(out), [ai, ci](Tape& t) {
      const Mat<S>& p = t.val(ci);
      const Mat<S>& gy = t.g(ci);
      Mat<S>& ga = t.g(ai);
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        S dot = (gy.row(r).array() * p.row(r).array()).sum();
        ga.row(r) += (p.row(r).array() * (gy.row(r).array() - dot)).matrix();
      }
    });
  }

  Var layer_norm(Var a, Var gamma, Var beta, S eps) {
    Mat<S> xhat;
    Vec<S> inv_std;
    Mat<S> out = layer_norm_with_stats(value(a), value(gamma), value(beta), eps, &xhat, &inv_std);
    const int ai = a.id, gi = gamma.id, bi = beta.id, ci = size();
    return push(std::move(out), [ai, gi, bi, ci, xhat, inv_std](Tape& t) {
      const Mat<S>& gy = t.g(ci);
      const Mat<S>& gam = t.val(gi);
      const Eigen::Index d = gy.cols();
      for (Eigen::Index r = 0; r < gy.rows(); ++r) {
        Eigen::Array<S, 1, Eigen::Dynamic> gh = gy.row(r).array() * gam.row(0).array();
        S mean_g = gh.mean();
        S mean_gx = (gh * xhat.row(r).array()).mean();
        t.g(ai).row(r) +=
            (inv_std(r) * (gh - mean_g - xhat.row(r).array() * mean_gx)).matrix();
        t.g(gi) += (gy.row(r).array() * xhat.row(r).array()).matrix();
        t.g(bi) += gy.row(r);
      }
    });
  }

  Var relu(Var a) {
    Mat<S> out = seqfuse::relu(value(a));
    const int ai = a.id, ci = size();
    return push(std::move(out), [ai, ci](Tape& t) {
      t.g(ai) += (t.val(ai).array() > S(0)).template cast<S>().matrix().cwiseProduct(t.g(ci));
    });
  }

  Var slice_rows(Var a, int first, int count) {
    const Mat<S>& v = value(a);
    require(first >= 0 && count >= 0 && first + count <= v.rows(),
            "slice_rows: range [" + std::to_string(first) + ", " + std::to_string(first + count) +
                ") outside " + shape_str(v.rows(), v.cols()));
    Mat<S> out = v.middleRows(first, count);
    const int ai = a.id, ci = size();
    return push(std::move(out), [ai, ci, first, count](Tape& t) {
      t.g(ai).middleRows(first, count) += t.g(ci);
    });
  }

  Var slice_cols(Var a, int first, int count) {
    const Mat<S>& v = value(a);
    require(first >= 0 && count >= 0 && first + count <= v.cols(),
            "slice_cols: range [" + std::to_string(first) + ", " + std::to_string(first + count) +
                ") outside " + shape_str(v.rows(), v.cols()));
    Mat<S> out = v.middleCols(first, count);
    const int ai = a.id, ci = size();
    return push(std::move(out), [ai, ci, first, count](Tape& t) {
      t.g(ai).middleCols(first, count) += t.g(ci);
    });
  }

  Var concat_rows(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_rows: no inputs");
    Eigen::Index rows = 0;
    const Eigen::Index cols = value(parts[0]).cols();
    for (Var p : parts) {
      require_dims(value(p).cols() == cols, "concat_rows: column mismatch: " +
                                                shape_str(value(p).rows(), value(p).cols()) +
                                                " vs expected cols " + std::to_string(cols));
      rows += value(p).rows();
    }
    Mat<S> out(rows, cols);
    Eigen::Index at = 0;
    std::vector<int> ids;
    std::vector<int> heights;
    for (Var p : parts) {
      out.middleRows(at, value(p).rows()) = value(p);
      at += value(p).rows();
      ids.push_back(p.id);
      heights.push_back(static_cast<int>(value(p).rows()));
    }
    const int ci = size();
    return push(std::move(out), [ids, heights, ci](Tape& t) {
      int at = 0;
      for (size_t i = 0; i < ids.size(); ++i) {
        t.g(ids[i]) += t.g(ci).middleRows(at, heights[i]);
        at += heights[i];
      }
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    Eigen::Index cols = 0;
    const Eigen::Index rows = value(parts[0]).rows();
    for (Var p : parts) {
      require_dims(value(p).rows() == rows, "concat_cols: row mismatch: " +
                                                shape_str(value(p).rows(), value(p).cols()) +
                                                " vs expected rows " + std::to_string(rows));
      cols += value(p).cols();
    }
    Mat<S> out(rows, cols);
    Eigen::Index at = 0;
    std::vector<int> ids;
    std::vector<int> widths;
    for (Var p : parts) {
      out.middleCols(at, value(p).cols()) = value(p);
      at += value(p).cols();
      ids.push_back(p.id);
      widths.push_back(static_cast<int>(value(p).cols()));
    }
    const int ci = size();
    return push(std::move(out), [ids, widths, ci](Tape& t) {
      int at = 0;
      for (size_t i = 0; i < ids.size(); ++i) {
        t.g(ids[i]) += t.g(ci).middleCols(at, widths[i]);
        at += widths[i];
      }
    });
  }

  // Replicates a 1 x d row n times.
  Var repeat_row(Var a, int n) {
    const Mat<S>& v = value(a);
    require_dims(v.rows() == 1, "repeat_row: expected a single row, got " +
                                    shape_str(v.rows(), v.cols()));
    Mat<S> out = v.replicate(n, 1);
    const int ai = a.id, ci = size();
    return push(std::move(out), [ai, ci](Tape& t) { t.g(ai) += t.g(ci).colwise().sum(); });
  }

  Var gather_rows(Var table, std::vector<int> ids) {
    const Mat<S>& tab = value(table);
    Mat<S> out(static_cast<Eigen::Index>(ids.size()), tab.cols());
    for (size_t i = 0; i < ids.size(); ++i) {
      require(ids[i] >= 0 && ids[i] < tab.rows(),
              "gather_rows: id " + std::to_string(ids[i]) + " outside table with " +
                  std::to_string(tab.rows()) + " rows");
      out.row(static_cast<Eigen::Index>(i)) = tab.row(ids[i]);
    }
    const int ti = table.id, ci = size();
    return push(std::move(out), [ti, ci, ids](Tape& t) {
      for (size_t i = 0; i < ids.size(); ++i) {
        t.g(ti).row(ids[i]) += t.g(ci).row(static_cast<Eigen::Index>(i));
      }
    });
  }

  // weights^T * a as a 1 x d row; weights is a constant n-vector.
  Var mean_rows_weighted(Var a, Vec<S> weights) {
    const Mat<S>& v = value(a);
    require_dims(weights.size() == v.rows(), "mean_rows_weighted: weight length " +
                                                 std::to_string(weights.size()) + " vs " +
                                                 shape_str(v.rows(), v.cols()));
    tally_flops(2ll * v.rows() * v.cols());
    Mat<S> out = weights.transpose() * v;
    const int ai = a.id, ci = size();
    return push(std::move(out), [ai, ci, weights](Tape& t) {
      t.g(ai).noalias() += weights * t.g(ci);
    });
  }

  // Mean squared error against a constant target of the same shape.
  Var mse(Var pred, const Mat<S>& target) {
    const Mat<S>& p = value(pred);
    require_dims(p.rows() == target.rows() && p.cols() == target.cols(),
                 "mse: shapes disagree: " + shape_str(p.rows(), p.cols()) + " vs " +
                     shape_str(target.rows(), target.cols()));
    require(p.size() > 0, "mse: empty prediction");
    Mat<S> out(1, 1);
    out(0, 0) = (p - target).squaredNorm() / S(p.size());
    const int pi = pred.id, ci = size();
    return push(std::move(out), [pi, ci, target](Tape& t) {
      const Mat<S>& pv = t.val(pi);
      t.g(pi) += (S(2) / S(pv.size())) * t.g(ci)(0, 0) * (pv - target);
    });
  }

  Var sum(Var a) {
    Mat<S> out(1, 1);
    out(0, 0) = value(a).sum();
    const int ai = a.id, ci = size();
    return push(std::move(out), [ai, ci](Tape& t) {
      t.g(ai).array() += t.g(ci)(0, 0);
    });
  }

  // Seeds d(loss)/d(loss) = 1 and replays every recorded closure once, in
  // reverse construction order. The loss must be a 1 x 1 node.
  void backward(Var loss) {
    require(loss.valid() && loss.id < size(), "backward: loss is not a tape node");
    const Mat<S>& lv = nodes_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ContractError("backward: loss must be a 1x1 node, got " +
                          shape_str(lv.rows(), lv.cols()));
    }
    for (Node& n : nodes_) {
      n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
    }
    nodes_[loss.id].grad(0, 0) = S(1);
    for (int i = loss.id; i >= 0; --i) {
      if (nodes_[i].back) nodes_[i].back(*this);
    }
  }

 private:
  struct Node {
    Mat<S> value;
    Mat<S> grad;
    std::function<void(Tape&)> back;
  };

  Mat<S>& g(int id) { return nodes_[id].grad; }
  const Mat<S>& val(int id) const { return nodes_[id].value; }

  Var push(Mat<S> v, std::function<void(Tape&)> b) {
    nodes_.push_back(Node{std::move(v), Mat<S>(), std::move(b)});
    return Var{size() - 1};
  }

  std::vector<Node> nodes_;
};

}  // namespace seqfuse
