#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mcoref {

// Reverse-mode tape over dense Eigen matrices. Ops are recorded at matrix
// granularity so Eigen does the heavy lifting; backward closures scatter
// adjoints into parent nodes. One tape per objective evaluation.
template <typename Scalar>
class Tape {
public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
  };

  Var leaf(Mat value) {
    nodes_.push_back(Node{std::move(value), Mat(), nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Mat& value(Var v) const { return nodes_.at(v.idx).value; }
  const Mat& grad(Var v) const { return nodes_.at(v.idx).grad; }

  Eigen::Index rows(Var v) const { return value(v).rows(); }
  Eigen::Index cols(Var v) const { return value(v).cols(); }

  Var matmul(Var a, Var b) {
    check_inner(cols(a), rows(b), "matmul");
    Mat out = value(a) * value(b);
    return record(std::move(out), [a, b](Tape& t, const Mat& g) {
      t.accum(a, g * t.value(b).transpose());
      t.accum(b, t.value(a).transpose() * g);
    });
  }

  // a * b^T
  Var matmul_nt(Var a, Var b) {
    check_inner(cols(a), cols(b), "matmul_nt");
    Mat out = value(a) * value(b).transpose();
    return record(std::move(out), [a, b](Tape& t, const Mat& g) {
      t.accum(a, g * t.value(b));
      t.accum(b, g.transpose() * t.value(a));
    });
  }

  // a^T * b
  Var matmul_tn(Var a, Var b) {
    check_inner(rows(a), rows(b), "matmul_tn");
    Mat out = value(a).transpose() * value(b);
    return record(std::move(out), [a, b](Tape& t, const Mat& g) {
      t.accum(a, t.value(b) * g.transpose());
      t.accum(b, t.value(a) * g);
    });
  }

  Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Mat out = value(a) + value(b);
    return record(std::move(out), [a, b](Tape& t, const Mat& g) {
      t.accum(a, g);
      t.accum(b, g);
    });
  }

  Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Mat out = value(a) - value(b);
    return record(std::move(out), [a, b](Tape& t, const Mat& g) {
      t.accum(a, g);
      t.accum(b, -g);
    });
  }

  Var hadamard(Var a, Var b) {
    check_same_shape(a, b, "hadamard");
    Mat out = value(a).cwiseProduct(value(b));
    return record(std::move(out), [a, b](Tape& t, const Mat& g) {
      t.accum(a, g.cwiseProduct(t.value(b)));
      t.accum(b, g.cwiseProduct(t.value(a)));
    });
  }

  Var scale(Var a, Scalar c) {
    Mat out = value(a) * c;
    return record(std::move(out), [a, c](Tape& t, const Mat& g) {
      t.accum(a, g * c);
    });
  }

  // Broadcast a 1 x c row (bias) over every row of a.
  Var add_rowvec(Var a, Var row) {
    if (value(row).rows() != 1 || value(row).cols() != cols(a))
      throw std::invalid_argument("add_rowvec: bias shape mismatch");
    Mat out = value(a).rowwise() + value(row).row(0);
    return record(std::move(out), [a, row](Tape& t, const Mat& g) {
      t.accum(a, g);
      t.accum(row, g.colwise().sum());
    });
  }

  Var relu(Var a) {
    Mat out = value(a).cwiseMax(Scalar(0));
    return record(std::move(out), [a, self = next_index()](Tape& t, const Mat& g) {
      const Mat& y = t.nodes_[self].value;
      t.accum(a, (y.array() > Scalar(0)).template cast<Scalar>().matrix().cwiseProduct(g));
    });
  }

  Var square(Var a) {
    Mat out = value(a).array().square().matrix();
    return record(std::move(out), [a](Tape& t, const Mat& g) {
      t.accum(a, Scalar(2) * g.cwiseProduct(t.value(a)));
    });
  }

  // |x|; subgradient 0 at x == 0.
  Var abs(Var a) {
    Mat out = value(a).cwiseAbs();
    return record(std::move(out), [a](Tape& t, const Mat& g) {
      Mat sign = t.value(a).array().sign().matrix();
      t.accum(a, g.cwiseProduct(sign));
    });
  }

  Var softmax_rows(Var a) {
    Mat out = value(a);
    softmax_rows_inplace(out);
    return record(std::move(out), [a, self = next_index()](Tape& t, const Mat& g) {
      const Mat& y = t.nodes_[self].value;
      Mat gx(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        Scalar dot = g.row(i).dot(y.row(i));
        gx.row(i) = y.row(i).cwiseProduct(g.row(i).array().matrix() -
                                          Mat::Constant(1, y.cols(), dot));
      }
      t.accum(a, gx);
    });
  }

  // Row-wise max -> n x 1. Ties break to the lowest column; the adjoint
  // flows only into the selected entry.
  Var rowwise_max(Var a) {
    const Mat& x = value(a);
    Mat out(x.rows(), 1);
    auto argmax = std::make_shared<std::vector<Eigen::Index>>(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      out(i, 0) = row_max(x.row(i), (*argmax)[i]);
    return record(std::move(out), [a, argmax](Tape& t, const Mat& g) {
      Mat gx = Mat::Zero(t.rows(a), t.cols(a));
      for (Eigen::Index i = 0; i < gx.rows(); ++i)
        gx(i, (*argmax)[i]) = g(i, 0);
      t.accum(a, gx);
    });
  }

  // log sum_j mask(i,j) exp(a(i,j)) per row, numerically stable.
  // mask is a constant 0/1 matrix; every row must select >= 1 entry.
  Var masked_rowwise_logsumexp(Var a, const Mat& mask) {
    const Mat& x = value(a);
    if (mask.rows() != x.rows() || mask.cols() != x.cols())
      throw std::invalid_argument("masked_rowwise_logsumexp: mask shape mismatch");
    Mat out(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      Scalar m = -std::numeric_limits<Scalar>::infinity();
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        if (mask(i, j) != Scalar(0) && x(i, j) > m) m = x(i, j);
      if (!std::isfinite(static_cast<double>(m)))
        throw std::invalid_argument("masked_rowwise_logsumexp: empty mask row");
      Scalar s = 0;
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        if (mask(i, j) != Scalar(0)) s += std::exp(x(i, j) - m);
      out(i, 0) = m + std::log(s);
    }
    auto mk = std::make_shared<Mat>(mask);
    return record(std::move(out), [a, mk, self = next_index()](Tape& t, const Mat& g) {
      const Mat& x = t.value(a);
      const Mat& lse = t.nodes_[self].value;
      Mat gx(x.rows(), x.cols());
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j)
          gx(i, j) = ((*mk)(i, j) != Scalar(0))
                         ? g(i, 0) * std::exp(x(i, j) - lse(i, 0))
                         : Scalar(0);
      t.accum(a, gx);
    });
  }

  // Gather fixed (row, col) entries into a k x 1 vector.
  Var pick(Var a, std::vector<std::pair<Eigen::Index, Eigen::Index>> at) {
    const Mat& x = value(a);
    Mat out(static_cast<Eigen::Index>(at.size()), 1);
    for (size_t k = 0; k < at.size(); ++k) out(static_cast<Eigen::Index>(k), 0) = x(at[k].first, at[k].second);
    auto idx = std::make_shared<std::vector<std::pair<Eigen::Index, Eigen::Index>>>(std::move(at));
    return record(std::move(out), [a, idx](Tape& t, const Mat& g) {
      Mat gx = Mat::Zero(t.rows(a), t.cols(a));
      for (size_t k = 0; k < idx->size(); ++k)
        gx((*idx)[k].first, (*idx)[k].second) += g(static_cast<Eigen::Index>(k), 0);
      t.accum(a, gx);
    });
  }

  Var sum(Var a) {
    Mat out(1, 1);
    out(0, 0) = value(a).sum();
    return record(std::move(out), [a](Tape& t, const Mat& g) {
      t.accum(a, Mat::Constant(t.rows(a), t.cols(a), g(0, 0)));
    });
  }

  // a / s with s a 1x1 scalar node.
  Var divide_by_scalar(Var a, Var s) {
    if (value(s).size() != 1) throw std::invalid_argument("divide_by_scalar: s must be 1x1");
    Scalar sv = value(s)(0, 0);
    Mat out = value(a) / sv;
    return record(std::move(out), [a, s, self = next_index()](Tape& t, const Mat& g) {
      Scalar sv = t.value(s)(0, 0);
      t.accum(a, g / sv);
      Mat gs(1, 1);
      gs(0, 0) = -(g.cwiseProduct(t.nodes_[self].value)).sum() / sv;
      t.accum(s, gs);
    });
  }

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    Eigen::Index c = cols(parts[0]);
    Eigen::Index r = 0;
    for (Var p : parts) {
      if (cols(p) != c) throw std::invalid_argument("concat_rows: column mismatch");
      r += rows(p);
    }
    Mat out(r, c);
    Eigen::Index at = 0;
    for (Var p : parts) {
      out.middleRows(at, rows(p)) = value(p);
      at += rows(p);
    }
    auto ps = std::make_shared<std::vector<Var>>(parts);
    return record(std::move(out), [ps](Tape& t, const Mat& g) {
      Eigen::Index at = 0;
      for (Var p : *ps) {
        t.accum(p, g.middleRows(at, t.rows(p)));
        at += t.rows(p);
      }
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    Eigen::Index r = rows(parts[0]);
    Eigen::Index c = 0;
    for (Var p : parts) {
      if (rows(p) != r) throw std::invalid_argument("concat_cols: row mismatch");
      c += cols(p);
    }
    Mat out(r, c);
    Eigen::Index at = 0;
    for (Var p : parts) {
      out.middleCols(at, cols(p)) = value(p);
      at += cols(p);
    }
    auto ps = std::make_shared<std::vector<Var>>(parts);
    return record(std::move(out), [ps](Tape& t, const Mat& g) {
      Eigen::Index at = 0;
      for (Var p : *ps) {
        t.accum(p, g.middleCols(at, t.cols(p)));
        at += t.cols(p);
      }
    });
  }

  Var slice_rows(Var a, Eigen::Index r0, Eigen::Index n) {
    Mat out = value(a).middleRows(r0, n);
    return record(std::move(out), [a, r0, n](Tape& t, const Mat& g) {
      Mat gx = Mat::Zero(t.rows(a), t.cols(a));
      gx.middleRows(r0, n) = g;
      t.accum(a, gx);
    });
  }

  Var slice_cols(Var a, Eigen::Index c0, Eigen::Index n) {
    Mat out = value(a).middleCols(c0, n);
    return record(std::move(out), [a, c0, n](Tape& t, const Mat& g) {
      Mat gx = Mat::Zero(t.rows(a), t.cols(a));
      gx.middleCols(c0, n) = g;
      t.accum(a, gx);
    });
  }

  // Repeat a 1 x c row n times.
  Var replicate_row(Var a, Eigen::Index n) {
    if (rows(a) != 1) throw std::invalid_argument("replicate_row: expects 1 x c");
    Mat out = value(a).replicate(n, 1);
    return record(std::move(out), [a](Tape& t, const Mat& g) {
      t.accum(a, g.colwise().sum());
    });
  }

  // Per-row layer normalization with learnable affine (gamma, beta as 1 x c).
  Var layernorm_rows(Var x, Var gamma, Var beta, Scalar eps = Scalar(1e-5)) {
    const Mat& xv = value(x);
    Eigen::Index n = xv.cols();
    if (value(gamma).rows() != 1 || value(gamma).cols() != n ||
        value(beta).rows() != 1 || value(beta).cols() != n)
      throw std::invalid_argument("layernorm_rows: affine shape mismatch");
    auto xhat = std::make_shared<Mat>(xv.rows(), n);
    auto inv_std = std::make_shared<Mat>(xv.rows(), 1);
    Mat out(xv.rows(), n);
    for (Eigen::Index i = 0; i < xv.rows(); ++i) {
      Scalar mu = xv.row(i).mean();
      Scalar var = (xv.row(i).array() - mu).square().mean();
      Scalar is = Scalar(1) / std::sqrt(var + eps);
      (*inv_std)(i, 0) = is;
      xhat->row(i) = (xv.row(i).array() - mu).matrix() * is;
      out.row(i) = xhat->row(i).cwiseProduct(value(gamma).row(0)) + value(beta).row(0);
    }
    return record(std::move(out), [x, gamma, beta, xhat, inv_std](Tape& t, const Mat& g) {
      const Mat& gm = t.value(gamma);
      Eigen::Index n = g.cols();
      Mat gx(g.rows(), n);
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        Eigen::Matrix<Scalar, 1, Eigen::Dynamic> gy = g.row(i).cwiseProduct(gm.row(0));
        Scalar m1 = gy.mean();
        Scalar m2 = gy.cwiseProduct(xhat->row(i)).mean();
        gx.row(i) = ((gy.array() - m1) - xhat->row(i).array() * m2).matrix() * (*inv_std)(i, 0);
      }
      t.accum(x, gx);
      Mat ggamma = Mat::Zero(1, n);
      for (Eigen::Index i = 0; i < g.rows(); ++i)
        ggamma.row(0) += g.row(i).cwiseProduct(xhat->row(i));
      t.accum(gamma, ggamma);
      t.accum(beta, g.colwise().sum());
    });
  }

  // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse.
  void backward(Var root) {
    if (value(root).size() != 1)
      throw std::invalid_argument("backward: root must be a 1x1 scalar");
    for (auto& n : nodes_) {
      n.grad.resize(n.value.rows(), n.value.cols());
      n.grad.setZero();
    }
    nodes_[root.idx].grad(0, 0) = Scalar(1);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i)
      if (nodes_[i].backward) nodes_[i].backward(*this, nodes_[i].grad);
  }

  size_t size() const { return nodes_.size(); }

  static void softmax_rows_inplace(Mat& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      Scalar mx = m.row(i).maxCoeff();
      m.row(i) = (m.row(i).array() - mx).exp();
      m.row(i) /= m.row(i).sum();
    }
  }

  static Scalar row_max(const Eigen::Ref<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>& row,
                        Eigen::Index& argmax) {
    argmax = 0;
    Scalar best = row(0);
    for (Eigen::Index j = 1; j < row.cols(); ++j)
      if (row(j) > best) { best = row(j); argmax = j; }
    return best;
  }

private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&, const Mat&)> backward;
  };

  int next_index() const { return static_cast<int>(nodes_.size()); }

  Var record(Mat value, std::function<void(Tape&, const Mat&)> bw) {
    nodes_.push_back(Node{std::move(value), Mat(), std::move(bw)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void accum(Var v, const Mat& g) { nodes_[v.idx].grad += g; }

  static void check_inner(Eigen::Index a, Eigen::Index b, const char* op) {
    if (a != b) throw std::invalid_argument(std::string(op) + ": inner dimension mismatch");
  }

  void check_same_shape(Var a, Var b, const char* op) const {
    if (rows(a) != rows(b) || cols(a) != cols(b))
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }

  std::vector<Node> nodes_;
};

}  // namespace mcoref
