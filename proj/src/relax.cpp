#include "grcert/relax.hpp"

#include <cmath>

namespace grcert {

Coeff Coeff::denseOf(Matrix m) {
    Coeff c;
    c.kind = Kind::Dense;
    c.dense = std::move(m);
    return c;
}

Coeff Coeff::diagonalOf(Vector d) {
    Coeff c;
    c.kind = Kind::Diagonal;
    c.diag = std::move(d);
    return c;
}

Matrix Coeff::toDense() const {
    if (kind == Kind::Dense) return dense;
    return Matrix(diag.asDiagonal());
}

Vector Coeff::apply(const Vector& x) const {
    if (kind == Kind::Dense) {
        if (dense.cols() != x.size()) throw Error("coefficient/operand size mismatch");
        return dense * x;
    }
    if (diag.size() != x.size()) throw Error("coefficient/operand size mismatch");
    return diag.cwiseProduct(x);
}

Vector RelaxSide::eval(const Vector& dxj) const {
    if (k.has_value()) throw Error("relaxation side expects two operands");
    return j.apply(dxj) + offset;
}

Vector RelaxSide::eval(const Vector& dxj, const Vector& dxk) const {
    if (!k.has_value()) throw Error("relaxation side expects one operand");
    return j.apply(dxj) + k->apply(dxk) + offset;
}

LayerRelaxation relaxLinear(const Matrix& W) {
    RelaxSide side{Coeff::denseOf(W), std::nullopt, Vector::Zero(W.rows())};
    return LayerRelaxation{side, side};
}

LayerRelaxation relaxAdd(int n) {
    RelaxSide side{Coeff::diagonalOf(Vector::Ones(n)),
                   Coeff::diagonalOf(Vector::Ones(n)), Vector::Zero(n)};
    return LayerRelaxation{side, side};
}

LayerRelaxation relaxSub(int n) {
    RelaxSide side{Coeff::diagonalOf(Vector::Ones(n)),
                   Coeff::diagonalOf(-Vector::Ones(n)), Vector::Zero(n)};
    return LayerRelaxation{side, side};
}

LayerRelaxation relaxRelu(const IntervalBound& bound) {
    const Vector& l = bound.lo;
    const Vector& u = bound.hi;
    if (l.size() != u.size()) throw Error("relu interval lo/hi size mismatch");
    if (!l.allFinite() || !u.allFinite()) throw Error("relu interval must be finite");
    Eigen::Index n = l.size();
    Vector sl = Vector::Zero(n), ol = Vector::Zero(n);
    Vector su = Vector::Zero(n), ou = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (l[i] > u[i]) {
            throw Error("relu interval has lo > hi at neuron " + std::to_string(i));
        }
        if (u[i] <= 0.0) {
            if (l[i] < 0.0) sl[i] = 1.0;  // l = u = 0 degenerates to all zeros
        } else if (l[i] >= 0.0) {
            su[i] = 1.0;
        } else {
            double den = u[i] - l[i];
            sl[i] = -l[i] / den;
            ol[i] = u[i] * l[i] / den;
            su[i] = u[i] / den;
            ou[i] = -ol[i];
        }
    }
    return LayerRelaxation{
        RelaxSide{Coeff::diagonalOf(std::move(sl)), std::nullopt, std::move(ol)},
        RelaxSide{Coeff::diagonalOf(std::move(su)), std::nullopt, std::move(ou)}};
}

LayerRelaxation relaxReluBranched(BranchSign sign, int n) {
    Vector one = Vector::Ones(n), zero = Vector::Zero(n);
    RelaxSide identity{Coeff::diagonalOf(one), std::nullopt, zero};
    RelaxSide flat{Coeff::diagonalOf(zero), std::nullopt, zero};
    if (sign == BranchSign::NonPositive) return LayerRelaxation{identity, flat};
    return LayerRelaxation{flat, identity};
}

}  // namespace grcert
