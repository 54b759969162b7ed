#include "grcert/bnb.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <utility>

#include "grcert/detail/backends.hpp"
#include "grcert/detail/engine.hpp"
#include "grcert/lowering.hpp"
#include "grcert/tape.hpp"

namespace grcert {

namespace {

using TapeEngine = detail::Engine<detail::TapeOps>;

/// A constraint resolved against the graph: the branched ReLU, its input
/// node (the node the sign constraint actually lives on), and the sign as
/// the pattern entry S (+1 encodes the non-positive branch).
struct ResolvedConstraint {
    NodeId relu = -1;
    NodeId input = -1;
    int neuron = 0;
    double signVal = 1.0;
};

std::vector<ResolvedConstraint> resolveConstraints(const Graph& g, const Domain& domain) {
    std::vector<ResolvedConstraint> out;
    out.reserve(domain.constraints.size());
    std::set<std::pair<NodeId, int>> seen;
    for (const DomainConstraint& c : domain.constraints) {
        if (!g.has(c.relu) || g.node(c.relu).kind != NodeKind::ReLU) {
            throw Error("branch constraint does not reference a relu node");
        }
        NodeId j = g.node(c.relu).inputs[0];
        if (c.neuron < 0 || c.neuron >= g.width(j)) {
            throw Error("branch neuron out of range");
        }
        if (!seen.insert({j, c.neuron}).second) {
            throw Error("distance coordinate constrained twice");
        }
        double s = c.sign == BranchSign::NonPositive ? 1.0 : -1.0;
        out.push_back({c.relu, j, c.neuron, s});
    }
    return out;
}

struct EnvVectors {
    Vector slopeLower, offsetLower, slopeUpper, offsetUpper;
};

/// Standard hull of the interval, with constrained coordinates replaced by
/// their exact half-interval triangles. A sign constraint lives on the
/// ReLU's input node, so it tightens every ReLU fed by that node.
EnvVectors envelopeVectors(const IntervalBound& bound,
                           const std::vector<ResolvedConstraint>& cons, NodeId reluInput) {
    LayerRelaxation r = relaxRelu(bound);
    EnvVectors e{r.lower.j.diag, r.lower.offset, r.upper.j.diag, r.upper.offset};
    for (const ResolvedConstraint& c : cons) {
        if (c.input != reluInput) continue;
        if (c.signVal > 0.0) {  // Δx ≤ 0: output distance in [Δx, 0]
            e.slopeLower[c.neuron] = 1.0;
            e.slopeUpper[c.neuron] = 0.0;
        } else {  // Δx ≥ 0: output distance in [0, Δx]
            e.slopeLower[c.neuron] = 0.0;
            e.slopeUpper[c.neuron] = 1.0;
        }
        e.offsetLower[c.neuron] = 0.0;
        e.offsetUpper[c.neuron] = 0.0;
    }
    return e;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

std::string BnBResult::historyCsv() const {
    std::string out = "time_s,splits,lo,hi\n";
    char buf[160];
    for (const HistoryEntry& h : history) {
        std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g,%.17g\n", h.timeSecs, h.splits, h.lo,
                      h.hi);
        out += buf;
    }
    return out;
}

std::optional<std::pair<NodeId, int>> selectBranchNeuron(const Graph& graph,
                                                         const IntervalMap& intervals,
                                                         const Domain& domain) {
    std::set<std::pair<NodeId, int>> constrained;
    for (const DomainConstraint& c : domain.constraints) {
        if (!graph.has(c.relu) || graph.node(c.relu).kind != NodeKind::ReLU) {
            throw Error("branch constraint does not reference a relu node");
        }
        constrained.insert({graph.node(c.relu).inputs[0], c.neuron});
    }
    std::optional<std::pair<NodeId, int>> best;
    double bestScore = 0.0;
    for (const auto& [id, b] : intervals) {
        if (!graph.has(id) || graph.node(id).kind != NodeKind::ReLU) continue;
        NodeId j = graph.node(id).inputs[0];
        for (int k = 0; k < static_cast<int>(b.lo.size()); ++k) {
            double l = b.lo[k], u = b.hi[k];
            if (!(l < 0.0 && 0.0 < u)) continue;
            if (constrained.count({j, k}) != 0) continue;
            double score = -l * u / (u - l);
            if (!best || score > bestScore) {
                best = std::pair<NodeId, int>{id, k};
                bestScore = score;
            }
        }
    }
    return best;
}

ConcreteBounds boundDomain(const Graph& graph, const IntervalMap& intervals, Domain& domain,
                           double delta, const BnBConfig& config) {
    graph.requireValid();
    if (graph.width(graph.outputId()) != 1) {
        throw Error("domain bounding requires a scalar output");
    }
    if (!(delta >= 0.0) || !std::isfinite(delta)) {
        throw Error("delta must be a finite nonnegative radius");
    }
    if (config.betaSteps < 0 || !(config.betaLr > 0.0)) {
        throw Error("multiplier steps must be >= 0 and the step size positive");
    }

    const std::vector<ResolvedConstraint> cons = resolveConstraints(graph, domain);
    const std::size_t m = cons.size();
    domain.betasLower.resize(m, 0.0);
    domain.betasUpper.resize(m, 0.0);
    for (double& v : domain.betasLower) v = std::max(0.0, v);
    for (double& v : domain.betasUpper) v = std::max(0.0, v);

    // One pass evaluates both concretized bounds; gradients of lo land on
    // the lower-side multipliers only and of hi on the upper-side ones.
    auto evaluate = [&](const std::vector<double>& bl, const std::vector<double>& bu,
                        std::vector<double>* gl, std::vector<double>* gu) {
        Tape tape;
        detail::TapeOps ops{&tape};
        TapeEngine engine(graph, ops);
        for (const auto& [id, bound] : intervals) {
            EnvVectors e = envelopeVectors(bound, cons, graph.node(id).inputs[0]);
            engine.setRelu(id, TapeEngine::Envelope{
                                   ops.constant(e.slopeLower), ops.constant(e.offsetLower),
                                   ops.constant(e.slopeUpper), ops.constant(e.offsetUpper)});
        }
        std::vector<TapeEngine::BranchHook> hooks;
        std::vector<Var> lowerVars, upperVars;
        hooks.reserve(m);
        for (std::size_t i = 0; i < m; ++i) {
            Matrix pattern = Matrix::Zero(1, graph.width(cons[i].input));
            pattern(0, cons[i].neuron) = cons[i].signVal;
            Var vl = tape.param(Matrix::Constant(1, 1, bl[i]));
            Var vu = tape.param(Matrix::Constant(1, 1, bu[i]));
            lowerVars.push_back(vl);
            upperVars.push_back(vu);
            hooks.push_back({cons[i].input, std::move(pattern), vl, vu});
        }
        auto forms = engine.substitute(graph.outputId(), Matrix::Identity(1, 1), hooks);
        auto [lo, hi] = engine.concretize(forms, delta);
        double loVal = tape.value(lo)(0, 0);
        double hiVal = tape.value(hi)(0, 0);
        if (gl != nullptr) {
            tape.backward(lo);
            tape.backward(hi);
            for (std::size_t i = 0; i < m; ++i) {
                (*gl)[i] = tape.grad(lowerVars[i])(0, 0);
                (*gu)[i] = tape.grad(upperVars[i])(0, 0);
            }
        }
        return std::pair<double, double>{loVal, hiVal};
    };

    double bestLo = -kInf, bestHi = kInf;
    std::vector<double> bestBl(m, 0.0), bestBu(m, 0.0);

    if (m == 0) {
        auto [lo, hi] = evaluate({}, {}, nullptr, nullptr);
        bestLo = lo;
        bestHi = hi;
    } else {
        std::vector<double> bl = domain.betasLower, bu = domain.betasUpper;
        bool warmStart = std::any_of(bl.begin(), bl.end(), [](double v) { return v != 0.0; }) ||
                         std::any_of(bu.begin(), bu.end(), [](double v) { return v != 0.0; });
        if (warmStart) {  // the zero vector is the soundness baseline
            std::vector<double> zeros(m, 0.0);
            auto [lo, hi] = evaluate(zeros, zeros, nullptr, nullptr);
            bestLo = lo;
            bestHi = hi;
        }
        for (int step = 0; step < config.betaSteps; ++step) {
            std::vector<double> gl(m, 0.0), gu(m, 0.0);
            auto [lo, hi] = evaluate(bl, bu, &gl, &gu);
            if (lo > bestLo) {
                bestLo = lo;
                bestBl = bl;
            }
            if (hi < bestHi) {
                bestHi = hi;
                bestBu = bu;
            }
            for (std::size_t i = 0; i < m; ++i) {
                bl[i] = std::max(0.0, bl[i] + config.betaLr * gl[i]);  // ascent on lo
                bu[i] = std::max(0.0, bu[i] - config.betaLr * gu[i]);  // descent on hi
            }
        }
        auto [lo, hi] = evaluate(bl, bu, nullptr, nullptr);
        if (lo > bestLo) {
            bestLo = lo;
            bestBl = std::move(bl);
        }
        if (hi < bestHi) {
            bestHi = hi;
            bestBu = std::move(bu);
        }
    }

    domain.betasLower = std::move(bestBl);
    domain.betasUpper = std::move(bestBu);
    domain.cached = ConcreteBounds{bestLo, bestHi, delta};
    return domain.cached;
}

namespace {

struct Leaf {
    Domain domain;
    bool splittable = true;
};

}  // namespace

BnBResult branchAndBound(const Graph& graph, double delta, const BnBConfig& config) {
    Graph lowered = lower(graph);
    lowered.requireValid();
    if (lowered.width(lowered.outputId()) != 1) {
        throw Error("refinement requires a scalar output");
    }
    if (config.maxSplits < 0 || !(config.timeoutSecs > 0.0)) {
        throw Error("split and time limits must be positive");
    }

    auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&t0] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    // The refinement keeps the root's interval map: per-domain interval
    // recomputation would tighten little here because the constraints act
    // on the envelopes directly.
    const IntervalMap intervals = computeReluInputIntervals(lowered, delta);

    BnBResult res;
    std::vector<Leaf> leaves(1);
    boundDomain(lowered, intervals, leaves[0].domain, delta, config);
    res.domainsExplored = 1;

    double globalLo = 0.0, globalHi = 0.0;
    auto refreshGlobal = [&] {
        globalLo = kInf;
        globalHi = -kInf;
        for (const Leaf& l : leaves) {
            globalLo = std::min(globalLo, l.domain.cached.lo);
            globalHi = std::max(globalHi, l.domain.cached.hi);
        }
    };
    refreshGlobal();
    res.history.push_back({elapsed(), res.splits, globalLo, globalHi});

    while (res.splits < config.maxSplits && elapsed() < config.timeoutSecs) {
        // Only a leaf attaining the global extreme can move the global
        // bound; among those take the worst score, ties to the oldest.
        int pick = -1;
        double bestScore = -kInf;
        for (std::size_t i = 0; i < leaves.size(); ++i) {
            const Leaf& l = leaves[i];
            if (!l.splittable) continue;
            const ConcreteBounds& b = l.domain.cached;
            if (b.lo != globalLo && b.hi != globalHi) continue;
            double score = std::max(-b.lo, b.hi);
            if (score > bestScore) {
                bestScore = score;
                pick = static_cast<int>(i);
            }
        }
        if (pick < 0) break;

        auto sel = selectBranchNeuron(lowered, intervals, leaves[pick].domain);
        if (!sel) {
            leaves[pick].splittable = false;
            continue;
        }

        const ConcreteBounds parentBounds = leaves[pick].domain.cached;
        std::vector<Leaf> children(2);
        BranchSign signs[2] = {BranchSign::NonPositive, BranchSign::NonNegative};
        for (int c = 0; c < 2; ++c) {
            children[c].domain.constraints = leaves[pick].domain.constraints;
            children[c].domain.constraints.push_back({sel->first, sel->second, signs[c]});
            boundDomain(lowered, intervals, children[c].domain, delta, config);
            // Clipping to the parent keeps the history monotone even when
            // the multiplier ascent underperforms; it is sound because the
            // child domain is contained in the parent's.
            ConcreteBounds& cb = children[c].domain.cached;
            cb.lo = std::max(cb.lo, parentBounds.lo);
            cb.hi = std::min(cb.hi, parentBounds.hi);
        }
        res.domainsExplored += 2;
        res.splits += 1;
        leaves.erase(leaves.begin() + pick);
        for (Leaf& c : children) leaves.push_back(std::move(c));
        refreshGlobal();
        res.history.push_back({elapsed(), res.splits, globalLo, globalHi});
    }

    res.best = ConcreteBounds{globalLo, globalHi, delta};
    return res;
}

}  // namespace grcert
