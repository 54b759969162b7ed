#pragma once

#include <cstdint>
#include <vector>

#include "grcert/common.hpp"
#include "grcert/tensor.hpp"

namespace grcert {

/// Handle to a node on a Tape; cheap to copy, only meaningful with its tape.
struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

/// Reverse-mode differentiation over dense matrix expressions.
///
/// Values are computed eagerly as operations are recorded; backward() then
/// accumulates adjoints for every node that feeds the seed. Elementwise
/// branch decisions (posPart/negPart/max2 sign patterns, reciprocal guards,
/// the signs inside rowAbsSum) are folded into a running signature so a
/// caller can tell whether two evaluations stayed inside the same
/// piecewise-linear region — points where the signature differs sit on a
/// kink, where one-sided finite differences are meaningless.
class Tape {
public:
    Var constant(Matrix m);
    Var param(Matrix m);

    const Matrix& value(Var v) const;
    /// Adjoint accumulated by the last backward(); zeros when unreached.
    Matrix grad(Var v) const;

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var neg(Var a);
    Var transpose(Var a);
    Var scale(Var a, double s);
    /// a * s with s a 1x1 variable.
    Var scalarMul(Var a, Var s);
    /// a * diag(d) with d a column vector of a.cols() entries.
    Var colScale(Var a, Var d);
    Var cwiseMul(Var a, Var b);
    /// Elementwise max(x, 0).
    Var posPart(Var a);
    /// Elementwise min(x, 0).
    Var negPart(Var a);
    /// Column vector of row L1 norms; d|x|/dx taken as sign(x), sign(0) = 0.
    Var rowAbsSum(Var a);
    /// Elementwise x < tiny ? 0 : 1/x. Inputs are expected non-negative.
    Var guardedRecip(Var a, double tiny);
    /// Value passes through, gradient does not.
    Var detach(Var a);
    /// Elementwise max of two same-shaped variables.
    Var max2(Var a, Var b);
    /// 1x1 sum of all entries.
    Var sum(Var a);

    /// Seeds the 1x1 node with adjoint 1 and propagates; grads accumulate
    /// across calls until zeroGrad().
    void backward(Var seed);
    /// Seeds an arbitrary node with a same-shaped adjoint and propagates;
    /// computes gradients of sum(adjoint ∘ seed).
    void backward(Var seed, const Matrix& adjoint);
    void zeroGrad();

    std::uint64_t branchSignature() const { return signature_; }
    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op {
        Constant, Param, MatMul, Add, Sub, Neg, Transpose, Scale, ScalarMul,
        ColScale, CwiseMul, PosPart, NegPart, RowAbsSum, GuardedRecip, Detach,
        Max2, Sum,
    };
    struct Rec {
        Op op;
        int a = -1, b = -1;
        double aux = 0.0;
        Matrix value;
    };

    std::vector<Rec> nodes_;
    std::vector<Matrix> grads_;  // empty matrix = not yet touched
    std::uint64_t signature_ = 1469598103934665603ull;

    Var push(Op op, Matrix value, int a = -1, int b = -1, double aux = 0.0);
    const Rec& at(Var v) const;
    void sigMix(std::uint64_t v);
    void accumulate(int idx, const Matrix& g);
};

}  // namespace grcert
