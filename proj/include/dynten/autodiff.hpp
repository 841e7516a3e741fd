#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dynten/core.hpp"

namespace dynten::ad {

using IndexList = std::vector<std::int32_t>;
using IndexListPtr = std::shared_ptr<const IndexList>;

struct VarRef {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Operation record on the tape. A node owns its forward value; adjoints live
// in a parallel array that is populated lazily during the backward sweep.
class Tape {
  enum class Op : std::uint8_t {
    Constant,
    Parameter,
    Add,
    Subtract,
    ElementMultiply,
    MatrixMultiply,
    ScaleByScalar,
    Tanh,
    Exponential,
    Logarithm,
    Square,
    SumAll,
    SumRows,
    SelectRows,
    ConcatColumns,
    ScatterAddRows,
  };

  struct Node {
    Op op;
    std::int32_t a = -1;
    std::int32_t b = -1;
    Matrix value;
    double scalar = 0.0;
    bool trans_a = false;
    bool trans_b = false;
    IndexListPtr rows;                   // SelectRows / ScatterAddRows
    std::vector<std::int32_t> parents;   // ConcatColumns only
  };

 public:
  Tape() { nodes_.reserve(1024); }

  std::size_t node_count() const { return nodes_.size(); }

  const Matrix& value(VarRef v) const { return node(v).value; }
  Eigen::Index rows(VarRef v) const { return node(v).value.rows(); }
  Eigen::Index cols(VarRef v) const { return node(v).value.cols(); }

  VarRef constant(Matrix v) { return push(Op::Constant, std::move(v)); }
  VarRef parameter(Matrix v) { return push(Op::Parameter, std::move(v)); }

  VarRef add(VarRef a, VarRef b) {
    ensure_same_shape("add", rows(a), cols(a), rows(b), cols(b));
    return push(Op::Add, value(a) + value(b), a, b);
  }

  VarRef subtract(VarRef a, VarRef b) {
    ensure_same_shape("subtract", rows(a), cols(a), rows(b), cols(b));
    return push(Op::Subtract, value(a) - value(b), a, b);
  }

  VarRef element_multiply(VarRef a, VarRef b) {
    ensure_same_shape("element_multiply", rows(a), cols(a), rows(b), cols(b));
    return push(Op::ElementMultiply, value(a).cwiseProduct(value(b)), a, b);
  }

  VarRef matrix_multiply(VarRef a, VarRef b, bool trans_a = false, bool trans_b = false) {
    Eigen::Index ar = trans_a ? cols(a) : rows(a);
    Eigen::Index ac = trans_a ? rows(a) : cols(a);
    Eigen::Index br = trans_b ? cols(b) : rows(b);
    Eigen::Index bc = trans_b ? rows(b) : cols(b);
    if (ac != br) {
      throw ShapeError("matrix_multiply: inner dimensions differ, " + shape_str(ar, ac) +
                       " vs " + shape_str(br, bc));
    }
    Matrix out(ar, bc);
    if (trans_a && trans_b) {
      out.noalias() = value(a).transpose() * value(b).transpose();
    } else if (trans_a) {
      out.noalias() = value(a).transpose() * value(b);
    } else if (trans_b) {
      out.noalias() = value(a) * value(b).transpose();
    } else {
      out.noalias() = value(a) * value(b);
    }
    VarRef r = push(Op::MatrixMultiply, std::move(out), a, b);
    nodes_.back().trans_a = trans_a;
    nodes_.back().trans_b = trans_b;
    return r;
  }

  VarRef scale_by_scalar(VarRef a, double c) {
    VarRef r = push(Op::ScaleByScalar, value(a) * c, a);
    nodes_.back().scalar = c;
    return r;
  }

  VarRef tanh(VarRef a) { return push(Op::Tanh, value(a).array().tanh().matrix(), a); }
  VarRef exponential(VarRef a) {
    return push(Op::Exponential, value(a).array().exp().matrix(), a);
  }
  VarRef logarithm(VarRef a) {
    return push(Op::Logarithm, value(a).array().log().matrix(), a);
  }
  VarRef square(VarRef a) { return push(Op::Square, value(a).cwiseProduct(value(a)), a); }

  VarRef sum_all(VarRef a) {
    Matrix out(1, 1);
    out(0, 0) = value(a).sum();
    return push(Op::SumAll, std::move(out), a);
  }

  // Column sums: n x m -> 1 x m.
  VarRef sum_rows(VarRef a) {
    return push(Op::SumRows, Matrix(value(a).colwise().sum()), a);
  }

  VarRef select_rows(VarRef a, IndexListPtr idx) {
    const Matrix& src = value(a);
    Matrix out(static_cast<Eigen::Index>(idx->size()), src.cols());
    for (std::size_t i = 0; i < idx->size(); ++i) {
      std::int32_t r = (*idx)[i];
      if (r < 0 || r >= src.rows()) {
        throw Error("select_rows: index " + std::to_string(r) + " out of range for " +
                    shape_str(src));
      }
      out.row(static_cast<Eigen::Index>(i)) = src.row(r);
    }
    VarRef v = push(Op::SelectRows, std::move(out), a);
    nodes_.back().rows = std::move(idx);
    return v;
  }

  VarRef concat_columns(const std::vector<VarRef>& parts) {
    if (parts.empty()) throw Error("concat_columns: no inputs");
    Eigen::Index r = rows(parts[0]);
    Eigen::Index total = 0;
    for (VarRef p : parts) {
      if (rows(p) != r) {
        throw ShapeError("concat_columns: row count mismatch " + shape_str(value(parts[0])) +
                         " vs " + shape_str(value(p)));
      }
      total += cols(p);
    }
    Matrix out(r, total);
    Eigen::Index off = 0;
    for (VarRef p : parts) {
      out.middleCols(off, cols(p)) = value(p);
      off += cols(p);
    }
    VarRef v = push(Op::ConcatColumns, std::move(out));
    for (VarRef p : parts) nodes_.back().parents.push_back(p.id);
    return v;
  }

  // Rows of `a` accumulated into a fresh out_rows x cols matrix; duplicate
  // target rows add up. Adjoint of select_rows and vice versa.
  VarRef scatter_add_rows(VarRef a, IndexListPtr idx, Eigen::Index out_rows) {
    const Matrix& src = value(a);
    if (static_cast<Eigen::Index>(idx->size()) != src.rows()) {
      throw ShapeError("scatter_add_rows: " + std::to_string(idx->size()) +
                       " indices for input " + shape_str(src));
    }
    Matrix out = Matrix::Zero(out_rows, src.cols());
    for (std::size_t i = 0; i < idx->size(); ++i) {
      std::int32_t r = (*idx)[i];
      if (r < 0 || r >= out_rows) {
        throw Error("scatter_add_rows: index " + std::to_string(r) + " out of range for " +
                    std::to_string(out_rows) + " rows");
      }
      out.row(r) += src.row(static_cast<Eigen::Index>(i));
    }
    VarRef v = push(Op::ScatterAddRows, std::move(out), a);
    nodes_.back().rows = std::move(idx);
    return v;
  }

  // Reverse sweep from a 1x1 root. Adjoints accumulate in a fixed order, so
  // repeated runs over an identical tape are bitwise reproducible.
  void backward(VarRef root) {
    const Node& r = node(root);
    if (r.value.rows() != 1 || r.value.cols() != 1) {
      throw Error("backward: root must be 1x1, got " + shape_str(r.value));
    }
    if (ran_backward_) {
      throw Error("backward: adjoints already populated; call reset_adjoints first");
    }
    ran_backward_ = true;
    adjoint_.assign(nodes_.size(), Matrix());
    adjoint_[static_cast<std::size_t>(root.id)] = Matrix::Ones(1, 1);

    for (std::int32_t i = root.id; i >= 0; --i) {
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      Matrix& d = adjoint_[static_cast<std::size_t>(i)];
      if (d.size() == 0) continue;
      switch (n.op) {
        case Op::Constant:
        case Op::Parameter:
          break;
        case Op::Add:
          accum(n.a, d);
          accum(n.b, d);
          break;
        case Op::Subtract:
          accum(n.a, d);
          accum(n.b, -d);
          break;
        case Op::ElementMultiply:
          accum(n.a, d.cwiseProduct(val(n.b)));
          accum(n.b, d.cwiseProduct(val(n.a)));
          break;
        case Op::MatrixMultiply:
          backward_matmul(n, d);
          break;
        case Op::ScaleByScalar:
          accum(n.a, n.scalar * d);
          break;
        case Op::Tanh:
          accum(n.a, d.cwiseProduct((1.0 - n.value.array().square()).matrix()));
          break;
        case Op::Exponential:
          accum(n.a, d.cwiseProduct(n.value));
          break;
        case Op::Logarithm:
          accum(n.a, d.cwiseQuotient(val(n.a)));
          break;
        case Op::Square:
          accum(n.a, 2.0 * d.cwiseProduct(val(n.a)));
          break;
        case Op::SumAll:
          accum(n.a, Matrix::Constant(val(n.a).rows(), val(n.a).cols(), d(0, 0)));
          break;
        case Op::SumRows:
          accum(n.a, d.replicate(val(n.a).rows(), 1));
          break;
        case Op::SelectRows: {
          Matrix g = Matrix::Zero(val(n.a).rows(), val(n.a).cols());
          for (std::size_t k = 0; k < n.rows->size(); ++k) {
            g.row((*n.rows)[k]) += d.row(static_cast<Eigen::Index>(k));
          }
          accum(n.a, g);
          break;
        }
        case Op::ConcatColumns: {
          Eigen::Index off = 0;
          for (std::int32_t p : n.parents) {
            Eigen::Index w = nodes_[static_cast<std::size_t>(p)].value.cols();
            accum(p, d.middleCols(off, w));
            off += w;
          }
          break;
        }
        case Op::ScatterAddRows: {
          Matrix g(static_cast<Eigen::Index>(n.rows->size()), n.value.cols());
          for (std::size_t k = 0; k < n.rows->size(); ++k) {
            g.row(static_cast<Eigen::Index>(k)) = d.row((*n.rows)[k]);
          }
          accum(n.a, std::move(g));
          break;
        }
      }
    }
  }

  void reset_adjoints() {
    adjoint_.clear();
    ran_backward_ = false;
  }

  // Adjoint of a node; zeros when the node does not influence the root.
  Matrix gradient(VarRef v) const {
    if (!ran_backward_) throw Error("gradient: backward has not run");
    const Matrix& a = adjoint_[check(v)];
    if (a.size() == 0) return Matrix::Zero(rows(v), cols(v));
    return a;
  }

 private:
  std::size_t check(VarRef v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw Error("invalid tape reference");
    }
    return static_cast<std::size_t>(v.id);
  }

  const Node& node(VarRef v) const { return nodes_[check(v)]; }
  const Matrix& val(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  VarRef push(Op op, Matrix value, VarRef a = {}, VarRef b = {}) {
    if (ran_backward_) {
      throw Error("tape is frozen after backward; call reset_adjoints before extending");
    }
    if (a.valid()) check(a);
    if (b.valid()) check(b);
    Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return VarRef{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  template <class E>
  void accum(std::int32_t id, E&& contribution) {
    if (nodes_[static_cast<std::size_t>(id)].op == Op::Constant) return;
    Matrix& a = adjoint_[static_cast<std::size_t>(id)];
    if (a.size() == 0) {
      a = std::forward<E>(contribution);
    } else {
      a += contribution;
    }
  }

  void backward_matmul(const Node& n, const Matrix& d) {
    const Matrix& A = val(n.a);
    const Matrix& B = val(n.b);
    if (!n.trans_a && !n.trans_b) {  // C = A B
      accum(n.a, d * B.transpose());
      accum(n.b, A.transpose() * d);
    } else if (!n.trans_a && n.trans_b) {  // C = A B^T
      accum(n.a, d * B);
      accum(n.b, d.transpose() * A);
    } else if (n.trans_a && !n.trans_b) {  // C = A^T B
      accum(n.a, B * d.transpose());
      accum(n.b, A * d);
    } else {  // C = A^T B^T
      accum(n.a, (d * B).transpose());
      accum(n.b, (A * d).transpose());
    }
  }

  std::vector<Node> nodes_;
  std::vector<Matrix> adjoint_;
  bool ran_backward_ = false;
};

}  // namespace dynten::ad
