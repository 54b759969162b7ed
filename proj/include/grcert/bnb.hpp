#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "grcert/propagate.hpp"

namespace grcert {

/// One sign split of a ReLU's input-distance coordinate.
struct DomainConstraint {
    NodeId relu = -1;  // the branched ReLU node
    int neuron = 0;    // coordinate within its input
    BranchSign sign = BranchSign::NonPositive;
};

/// A leaf of the branch-and-bound tree: a conjunction of sign constraints
/// plus the Lagrange multipliers and bounds computed for it.
struct Domain {
    std::vector<DomainConstraint> constraints;
    std::vector<double> betasLower;  // one per constraint, >= 0
    std::vector<double> betasUpper;  // one per constraint, >= 0
    ConcreteBounds cached;           // sound on this sub-domain
};

struct BnBConfig {
    int maxSplits = 16;
    double timeoutSecs = 300.0;
    int betaSteps = 20;
    double betaLr = 0.05;
    std::string selection = "gap";  // branch-selection heuristic tag
};

/// Snapshot of the global bound after a number of neuron splits.
struct HistoryEntry {
    double timeSecs = 0.0;
    int splits = 0;
    double lo = 0.0;
    double hi = 0.0;
};

struct BnBResult {
    ConcreteBounds best;
    std::vector<HistoryEntry> history;
    int domainsExplored = 0;
    int splits = 0;

    /// CSV with header "time_s,splits,lo,hi"; floats printed round-trip.
    std::string historyCsv() const;
};

/// Picks the unconstrained unstable coordinate with the widest relaxation
/// gap, scored as -l*u/(u-l); ties break toward the smallest (node id,
/// neuron). Coordinates whose underlying input-distance entry is already
/// constrained (possibly through a ReLU sharing that input) are skipped.
/// Returns nothing when no splittable coordinate remains.
std::optional<std::pair<NodeId, int>> selectBranchNeuron(const Graph& graph,
                                                         const IntervalMap& intervals,
                                                         const Domain& domain);

/// Bounds the scalar output variation on one sign-constrained sub-domain.
/// Branched coordinates use their exact half-interval envelopes, and each
/// constraint contributes a multiplier term optimized by projected gradient
/// ascent (clamped to >= 0) against the lower bound and, independently,
/// against the negated upper bound. Best-iterate tracking makes the result
/// never worse than the multiplier-free bound. The optimized multipliers
/// and the resulting bounds are written back into `domain`.
ConcreteBounds boundDomain(const Graph& graph, const IntervalMap& intervals, Domain& domain,
                           double delta, const BnBConfig& config);

/// Anytime refinement of the scalar output-variation bound: repeatedly
/// splits the sign of one ReLU input-distance coordinate on the leaf
/// attaining the current global worst bound, bounds both children, and
/// clips them to the parent so the reported interval only ever tightens.
/// Stops at maxSplits, on timeout, or when the worst leaves are fully
/// split. Every history row is a sound bound.
BnBResult branchAndBound(const Graph& graph, double delta, const BnBConfig& config);

}  // namespace grcert
