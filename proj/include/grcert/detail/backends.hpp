#pragma once

#include "grcert/tape.hpp"
#include "grcert/tensor.hpp"

namespace grcert::detail {

/// Plain-value backend: operations evaluate immediately on Eigen matrices.
/// Mirrors the Tape surface so numerical passes can be written once and run
/// either with or without gradient recording.
struct EigenOps {
    using V = Matrix;
    V constant(Matrix m) const { return m; }
    V matmul(const V& a, const V& b) const { return a * b; }
    V add(const V& a, const V& b) const { return a + b; }
    V sub(const V& a, const V& b) const { return a - b; }
    V neg(const V& a) const { return -a; }
    V scale(const V& a, double s) const { return s * a; }
    V scalarMul(const V& a, const V& s) const { return a * s(0, 0); }
    V colScale(const V& a, const V& d) const {
        return a.array().rowwise() * d.col(0).transpose().array();
    }
    V cwiseMul(const V& a, const V& b) const { return a.cwiseProduct(b); }
    V posPart(const V& a) const { return a.cwiseMax(0.0); }
    V negPart(const V& a) const { return a.cwiseMin(0.0); }
    V rowAbsSum(const V& a) const { return a.cwiseAbs().rowwise().sum(); }
    V guardedRecip(const V& a, double tiny) const {
        Matrix r(a.rows(), a.cols());
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            for (Eigen::Index i = 0; i < a.rows(); ++i) {
                r(i, j) = a(i, j) < tiny ? 0.0 : 1.0 / a(i, j);
            }
        }
        return r;
    }
    V detach(const V& a) const { return a; }
    V max2(const V& a, const V& b) const { return a.cwiseMax(b); }
    const Matrix& value(const V& v) const { return v; }
};

/// Gradient-recording backend over a Tape.
struct TapeOps {
    Tape* tape = nullptr;
    using V = Var;
    V constant(Matrix m) const { return tape->constant(std::move(m)); }
    V matmul(V a, V b) const { return tape->matmul(a, b); }
    V add(V a, V b) const { return tape->add(a, b); }
    V sub(V a, V b) const { return tape->sub(a, b); }
    V neg(V a) const { return tape->neg(a); }
    V scale(V a, double s) const { return tape->scale(a, s); }
    V scalarMul(V a, V s) const { return tape->scalarMul(a, s); }
    V colScale(V a, V d) const { return tape->colScale(a, d); }
    V cwiseMul(V a, V b) const { return tape->cwiseMul(a, b); }
    V posPart(V a) const { return tape->posPart(a); }
    V negPart(V a) const { return tape->negPart(a); }
    V rowAbsSum(V a) const { return tape->rowAbsSum(a); }
    V guardedRecip(V a, double tiny) const { return tape->guardedRecip(a, tiny); }
    V detach(V a) const { return tape->detach(a); }
    V max2(V a, V b) const { return tape->max2(a, b); }
    const Matrix& value(V v) const { return tape->value(v); }
};

}  // namespace grcert::detail
