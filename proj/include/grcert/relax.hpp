#pragma once

#include <optional>

#include "grcert/common.hpp"
#include "grcert/tensor.hpp"

namespace grcert {

/// Per-neuron interval [lo, hi] on a distance (difference of hidden states
/// between the original and the perturbed run).
struct IntervalBound {
    Vector lo;
    Vector hi;
};

/// Sign constraint branched onto a single ReLU input distance.
enum class BranchSign {
    NonPositive,  // Δx_j ≤ 0
    NonNegative,  // Δx_j ≥ 0
};

/// Linear coefficient of a relaxation side: dense for layers that mix
/// neurons, or a diagonal (stored as a vector) for elementwise layers —
/// the backward pass then only scales columns.
struct Coeff {
    enum class Kind { Dense, Diagonal };
    Kind kind = Kind::Diagonal;
    Matrix dense;
    Vector diag;

    static Coeff denseOf(Matrix m);
    static Coeff diagonalOf(Vector d);
    Matrix toDense() const;
    Vector apply(const Vector& x) const;
};

/// One side of a layer's linear envelope: coefficient on the first operand's
/// distance, optional coefficient on the second operand, and an offset.
struct RelaxSide {
    Coeff j;
    std::optional<Coeff> k;
    Vector offset;

    Vector eval(const Vector& dxj) const;
    Vector eval(const Vector& dxj, const Vector& dxk) const;
};

/// Linear lower/upper envelope of a layer's distance map: for every feasible
/// pair of runs, lower.eval(Δx_j[, Δx_k]) ≤ Δx_i ≤ upper.eval(Δx_j[, Δx_k]).
struct LayerRelaxation {
    RelaxSide lower;
    RelaxSide upper;
};

/// Linear layers map distances exactly: both sides are (W, 0). The bias
/// cancels in the difference and never appears.
LayerRelaxation relaxLinear(const Matrix& W);

/// Add: +1 coefficients on both operands. Exact.
LayerRelaxation relaxAdd(int n);

/// Sub: +1 on the minuend, -1 on the subtrahend. Exact.
LayerRelaxation relaxSub(int n);

/// ReLU distance envelope over Δx_j ∈ [l, u]. The feasible set over all
/// pre-activations is {min(0, Δx_j) ≤ Δx_i ≤ max(0, Δx_j)}; both returned
/// lines support its convex hull:
///   u ≤ 0      → lower (1, 0),  upper (0, 0)
///   l ≥ 0      → lower (0, 0),  upper (1, 0)
///   l < 0 < u  → lower (−l/(u−l), ul/(u−l)), upper (u/(u−l), −ul/(u−l))
///   l = u = 0  → all zeros
/// Throws when lo > hi or entries are not finite.
LayerRelaxation relaxRelu(const IntervalBound& bound);

/// Exact triangle envelopes once the sign of Δx_j is fixed:
/// NonPositive → Δx_j ≤ Δx_i ≤ 0; NonNegative → 0 ≤ Δx_i ≤ Δx_j.
LayerRelaxation relaxReluBranched(BranchSign sign, int n);

}  // namespace grcert
