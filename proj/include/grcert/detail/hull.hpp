#pragma once

#include "grcert/detail/backends.hpp"

namespace grcert::detail {

/// Diagonal slopes and offsets of the ReLU distance envelope, as n×1 values.
template <class Ops>
struct HullSides {
    typename Ops::V slopeLower, offsetLower, slopeUpper, offsetUpper;
};

/// Branch-free form of the ReLU distance envelope over per-neuron intervals
/// [l, u], written in backend primitives so it can record gradients w.r.t.
/// the interval ends. With p = max(u, 0), m = min(l, 0), den = p − m:
///   slopeLower = −m/den, offsetLower = p·m/den,
///   slopeUpper =  p/den, offsetUpper = −p·m/den,
/// and everything 0 when den < 1e-12 (the l = u = 0 point). This reproduces
/// the exact stable cases (u ≤ 0 and l ≥ 0) up to one reciprocal rounding;
/// the certification path uses the exact per-case construction instead.
template <class Ops>
HullSides<Ops> reluDistanceHull(const Ops& ops, typename Ops::V l, typename Ops::V u) {
    auto p = ops.posPart(u);
    auto m = ops.negPart(l);
    auto inv = ops.guardedRecip(ops.sub(p, m), 1e-12);
    auto offsetLower = ops.cwiseMul(ops.cwiseMul(p, m), inv);
    return HullSides<Ops>{ops.neg(ops.cwiseMul(m, inv)), offsetLower,
                          ops.cwiseMul(p, inv), ops.neg(offsetLower)};
}

}  // namespace grcert::detail
