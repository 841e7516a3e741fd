#pragma once

#include <utility>
#include <vector>

#include "dynten/autodiff.hpp"
#include "dynten/core.hpp"

namespace dynten {

// The model core is written once against this implicit interface and
// instantiated twice: TapeBackend records every operation for reverse-mode
// differentiation, ValueBackend evaluates the same arithmetic directly.
// Both produce identical forward values.

struct TapeBackend {
  using Value = ad::VarRef;
  ad::Tape* tape;

  explicit TapeBackend(ad::Tape* t) : tape(t) {}

  Value constant(Matrix m) const { return tape->constant(std::move(m)); }
  Value leaf(const Matrix& m) const { return tape->parameter(m); }
  const Matrix& value_of(Value v) const { return tape->value(v); }
  Eigen::Index rows(Value v) const { return tape->rows(v); }
  Eigen::Index cols(Value v) const { return tape->cols(v); }

  Value add(Value a, Value b) const { return tape->add(a, b); }
  Value subtract(Value a, Value b) const { return tape->subtract(a, b); }
  Value element_multiply(Value a, Value b) const { return tape->element_multiply(a, b); }
  Value matrix_multiply(Value a, Value b, bool ta = false, bool tb = false) const {
    return tape->matrix_multiply(a, b, ta, tb);
  }
  Value scale_by_scalar(Value a, double c) const { return tape->scale_by_scalar(a, c); }
  Value tanh(Value a) const { return tape->tanh(a); }
  Value exponential(Value a) const { return tape->exponential(a); }
  Value logarithm(Value a) const { return tape->logarithm(a); }
  Value square(Value a) const { return tape->square(a); }
  Value sum_all(Value a) const { return tape->sum_all(a); }
  Value sum_rows(Value a) const { return tape->sum_rows(a); }
  Value select_rows(Value a, ad::IndexListPtr idx) const {
    return tape->select_rows(a, std::move(idx));
  }
  Value concat_columns(const std::vector<Value>& parts) const {
    return tape->concat_columns(parts);
  }
  Value scatter_add_rows(Value a, ad::IndexListPtr idx, Eigen::Index out_rows) const {
    return tape->scatter_add_rows(a, std::move(idx), out_rows);
  }
};

struct ValueBackend {
  using Value = Matrix;

  Value constant(Matrix m) const { return m; }
  Value leaf(const Matrix& m) const { return m; }
  const Matrix& value_of(const Value& v) const { return v; }
  Eigen::Index rows(const Value& v) const { return v.rows(); }
  Eigen::Index cols(const Value& v) const { return v.cols(); }

  Value add(const Value& a, const Value& b) const {
    ensure_same_shape("add", a.rows(), a.cols(), b.rows(), b.cols());
    return a + b;
  }
  Value subtract(const Value& a, const Value& b) const {
    ensure_same_shape("subtract", a.rows(), a.cols(), b.rows(), b.cols());
    return a - b;
  }
  Value element_multiply(const Value& a, const Value& b) const {
    ensure_same_shape("element_multiply", a.rows(), a.cols(), b.rows(), b.cols());
    return a.cwiseProduct(b);
  }
  Value matrix_multiply(const Value& a, const Value& b, bool ta = false,
                        bool tb = false) const {
    Eigen::Index ac = ta ? a.rows() : a.cols();
    Eigen::Index br = tb ? b.cols() : b.rows();
    if (ac != br) {
      throw ShapeError("matrix_multiply: inner dimensions differ, " + shape_str(a) + " vs " +
                       shape_str(b));
    }
    if (ta && tb) return a.transpose() * b.transpose();
    if (ta) return a.transpose() * b;
    if (tb) return a * b.transpose();
    return a * b;
  }
  Value scale_by_scalar(const Value& a, double c) const { return a * c; }
  Value tanh(const Value& a) const { return a.array().tanh().matrix(); }
  Value exponential(const Value& a) const { return a.array().exp().matrix(); }
  Value logarithm(const Value& a) const { return a.array().log().matrix(); }
  Value square(const Value& a) const { return a.cwiseProduct(a); }
  Value sum_all(const Value& a) const { return Matrix::Constant(1, 1, a.sum()); }
  Value sum_rows(const Value& a) const { return a.colwise().sum(); }
  Value select_rows(const Value& a, const ad::IndexListPtr& idx) const {
    Matrix out(static_cast<Eigen::Index>(idx->size()), a.cols());
    for (std::size_t i = 0; i < idx->size(); ++i) {
      std::int32_t r = (*idx)[i];
      if (r < 0 || r >= a.rows()) {
        throw Error("select_rows: index " + std::to_string(r) + " out of range for " +
                    shape_str(a));
      }
      out.row(static_cast<Eigen::Index>(i)) = a.row(r);
    }
    return out;
  }
  Value concat_columns(const std::vector<Value>& parts) const {
    if (parts.empty()) throw Error("concat_columns: no inputs");
    Eigen::Index r = parts[0].rows();
    Eigen::Index total = 0;
    for (const auto& p : parts) {
      if (p.rows() != r) {
        throw ShapeError("concat_columns: row count mismatch " + shape_str(parts[0]) + " vs " +
                         shape_str(p));
      }
      total += p.cols();
    }
    Matrix out(r, total);
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      out.middleCols(off, p.cols()) = p;
      off += p.cols();
    }
    return out;
  }
  Value scatter_add_rows(const Value& a, const ad::IndexListPtr& idx,
                         Eigen::Index out_rows) const {
    if (static_cast<Eigen::Index>(idx->size()) != a.rows()) {
      throw ShapeError("scatter_add_rows: " + std::to_string(idx->size()) +
                       " indices for input " + shape_str(a));
    }
    Matrix out = Matrix::Zero(out_rows, a.cols());
    for (std::size_t i = 0; i < idx->size(); ++i) {
      std::int32_t r = (*idx)[i];
      if (r < 0 || r >= out_rows) {
        throw Error("scatter_add_rows: index " + std::to_string(r) + " out of range for " +
                    std::to_string(out_rows) + " rows");
      }
      out.row(r) += a.row(static_cast<Eigen::Index>(i));
    }
    return out;
  }
};

// Per-mode stack of matrices (one entity-by-rank block per tensor mode).
template <class B>
using ModeStack = std::vector<typename B::Value>;

}  // namespace dynten
