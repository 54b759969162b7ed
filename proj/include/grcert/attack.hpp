#pragma once

#include <cstdint>
#include <vector>

#include "grcert/graph.hpp"
#include "grcert/tensor.hpp"

namespace grcert {

struct AttackConfig {
    int steps = 50;
    int restarts = 5;
    /// Step length as a fraction of delta: each sign-gradient step moves
    /// every coordinate by stepSize * delta before projection.
    double stepSize = 0.05;
    std::uint64_t seed = 0;
};

/// A point and perturbation achieving an observed output variation.
struct Witness {
    Vector x;
    Vector dx;  // ‖dx‖∞ ≤ delta
};

/// Empirical per-channel lower bound on the maximal output variation.
/// Every certified bound must dominate it.
struct UnderApprox {
    Vector epsUnder;                 // max observed |variation| per channel
    std::vector<Witness> witnesses;  // one per channel
    double delta = 0.0;

    double worst() const;  // max over channels, 0 when empty
};

/// Projected sign-gradient ascent on the output variation around each given
/// point: for every channel both +variation and -variation are maximized
/// (the absolute value is nonsmooth at 0), over `restarts` starts (the
/// first at dx = 0, the rest uniform in the box), keeping the best iterate.
UnderApprox pgdVariation(const Graph& g, const std::vector<Vector>& points,
                         double delta, const AttackConfig& config = {});

struct SamplingBox {
    double xLo = 0.0;
    double xHi = 1.0;
};

/// Monte-Carlo under-approximation: n uniform (x, dx) draws from
/// box^n × [-delta, delta]^n, tracking the max |variation| per channel.
UnderApprox samplingOracle(const Graph& g, double delta, int n, std::uint64_t seed,
                           const SamplingBox& box = {});

/// Re-evaluates a witness: F(x + dx) - F(x) per output channel.
Vector replayVariation(const Graph& g, const Witness& w);

}  // namespace grcert
