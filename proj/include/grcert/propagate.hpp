#pragma once

#include <map>
#include <string>
#include <vector>

#include "grcert/graph.hpp"
#include "grcert/relax.hpp"

namespace grcert {

/// Linear form over a frontier of nodes: row r bounds one quantity by
/// Σ_i coeffs[i].row(r) · Δx_i + offset[r].
struct LinearForm {
    std::map<NodeId, Matrix> coeffs;
    Vector offset;
};

/// Simultaneous lower (A, b) and upper (C, d) forms of the same quantities.
struct BoundsPair {
    LinearForm lower;
    LinearForm upper;
};

/// Scalar concretized interval under an L∞ perturbation ball of radius delta.
struct ConcreteBounds {
    double lo = 0.0;
    double hi = 0.0;
    double delta = 0.0;
};

/// Per-channel concretized intervals (one row per output channel).
struct ChannelBounds {
    Vector lo;
    Vector hi;
    double delta = 0.0;
};

/// Sign constraint with Lagrange multiplier on one ReLU input distance.
/// sign = +1 encodes Δx_j ≤ 0, sign = −1 encodes Δx_j ≥ 0.
struct BranchTerm {
    NodeId node = -1;  // the ReLU's input node
    int neuron = 0;
    int sign = +1;
    double beta = 0.0;  // ≥ 0
};

/// Relaxations keyed by ReLU node id.
using RelaxMap = std::map<NodeId, LayerRelaxation>;

/// Input-distance intervals keyed by ReLU node id.
using IntervalMap = std::map<NodeId, IntervalBound>;

/// Builds the standard interval relaxation for every ReLU.
RelaxMap buildRelaxations(const IntervalMap& intervals);

/// Eliminates frontier nodes from `target` back to the input node, starting
/// from `init` (one row per bounded quantity; identity by default). The
/// graph must be lowered and relaxations must cover every ReLU on the way.
BoundsPair backwardSubstitute(const Graph& g, const RelaxMap& relaxations, NodeId target,
                              const std::vector<BranchTerm>& terms = {});
BoundsPair backwardSubstitute(const Graph& g, const RelaxMap& relaxations, NodeId target,
                              const Matrix& init, const std::vector<BranchTerm>& terms = {});

/// Row-wise lo = b − ‖A‖₁δ, hi = d + ‖C‖₁δ. The frontier must be exactly
/// the input node.
IntervalBound concretizeRows(const Graph& g, const BoundsPair& bounds, double delta);

/// Scalar variant; the forms must have a single row.
ConcreteBounds concretize(const Graph& g, const BoundsPair& bounds, double delta);

/// Distance interval of every ReLU's input, each ReLU bounded through the
/// sub-network ending at its input node, in topological order (lowered
/// graphs only).
IntervalMap computeReluInputIntervals(const Graph& g, double delta);

/// Full pipeline on a scalar-output network: lower, bound every ReLU input,
/// substitute from the output, concretize. The result contains
/// F(x+Δ) − F(x) for every x and every ‖Δ‖∞ ≤ δ.
ConcreteBounds outputVariationBounds(const Graph& g, double delta);

/// Same pipeline for all output channels in one multi-row pass.
ChannelBounds channelVariationBounds(const Graph& g, double delta);

enum class Verdict { Robust, Unknown };
const char* verdictName(Verdict v);

struct CertifyOptions {
    bool includeIntervals = false;  // attach per-ReLU input intervals
};

struct CertificateReport {
    double delta = 0.0;
    double epsilon = 0.0;
    Vector lo;  // per output channel
    Vector hi;
    Verdict verdict = Verdict::Unknown;
    double wallTimeSecs = 0.0;
    bool hasIntervals = false;
    IntervalMap reluIntervals;

    std::string toJson() const;
};

/// Robust iff every channel's |variation| stays within epsilon — a
/// sufficient condition only, so the negative verdict is UNKNOWN.
CertificateReport certify(const Graph& g, double delta, double epsilon,
                          const CertifyOptions& opts = {});

}  // namespace grcert
