#pragma once

#include <map>
#include <set>
#include <vector>

#include "grcert/detail/backends.hpp"
#include "grcert/detail/hull.hpp"
#include "grcert/graph.hpp"
#include "grcert/relax.hpp"

namespace grcert::detail {

/// Builds an envelope of backend constants from a relaxation whose
/// coefficients are diagonal (elementwise layers).
template <class Ops>
HullSides<Ops> envelopeFromRelaxation(const Ops& ops, const LayerRelaxation& r) {
    if (r.lower.j.kind != Coeff::Kind::Diagonal || r.upper.j.kind != Coeff::Kind::Diagonal) {
        throw Error("expected a diagonal (elementwise) relaxation");
    }
    return HullSides<Ops>{ops.constant(r.lower.j.diag), ops.constant(r.lower.offset),
                          ops.constant(r.upper.j.diag), ops.constant(r.upper.offset)};
}

/// Backward-substitution engine over a lowered graph, templated on the value
/// backend so the same elimination pass produces either plain bounds or a
/// differentiation tape.
///
/// A substitution keeps, per frontier node i, coefficient matrices of the
/// running lower/upper forms (one row per bounded quantity) plus offset
/// columns. It repeatedly eliminates the frontier node latest in topological
/// order, so fan-out contributions to a node are all accumulated before that
/// node is expanded:
///   linear   — coefficient times the weight moves to the predecessor;
///   relu     — the positive part of the coefficient picks up the same-side
///              envelope, the negative part the opposite side; offsets fold
///              into the running offset (row-by-row matrix-vector products);
///   add/sub  — the coefficient is forwarded to both operands (negated for
///              a subtrahend);
///   output   — identity.
/// Biases never appear: they cancel in the difference of two runs.
template <class Ops>
class Engine {
public:
    using V = typename Ops::V;
    using Envelope = HullSides<Ops>;

    /// Lagrangian term for one sign-branched neuron: when `node` is
    /// eliminated, betaLower times the pattern row is added to the lower
    /// form's coefficient and betaUpper times it is subtracted from the
    /// upper form's. With pattern entry S at the branched neuron,
    /// S·Δx_j ≤ 0 on the branch makes both edits sound for any beta ≥ 0;
    /// the two sides carry independent multipliers because they are
    /// optimized against different objectives.
    struct BranchHook {
        NodeId node;     // the branched ReLU's input node
        Matrix pattern;  // 1 × width(node), S at the branched neuron
        V betaLower;     // 1×1, nonnegative
        V betaUpper;     // 1×1, nonnegative
    };

    struct Forms {
        std::map<NodeId, V> lowerCoeff;
        V lowerOffset;
        std::map<NodeId, V> upperCoeff;
        V upperOffset;
        int rows = 0;
    };

    Engine(const Graph& g, Ops ops) : g_(&g), ops_(ops) {
        g.requireValid();
        if (!isLoweredCore(g)) throw Error("propagation requires a lowered graph");
        int pos = 0;
        for (NodeId id : g.topoOrder()) topoPos_[id] = pos++;
    }

    const Ops& ops() const { return ops_; }
    const Graph& graph() const { return *g_; }

    /// Overrides the weight of a linear node (e.g. with a tape parameter).
    void setWeight(NodeId id, V w) { weights_.insert_or_assign(id, std::move(w)); }

    void setRelu(NodeId reluId, Envelope env) { relus_.insert_or_assign(reluId, std::move(env)); }
    bool hasRelu(NodeId reluId) const { return relus_.count(reluId) != 0; }

    Forms substitute(NodeId target, const Matrix& init,
                     const std::vector<BranchHook>& hooks = {}) {
        if (!g_->has(target)) throw Error("unknown substitution target");
        if (init.cols() != g_->width(target)) {
            throw Error("init columns must match the target width");
        }
        NodeId input = g_->inputId();
        Forms f;
        f.rows = static_cast<int>(init.rows());
        V initV = ops_.constant(init);
        f.lowerCoeff.emplace(target, initV);
        f.upperCoeff.emplace(target, initV);
        V zero = ops_.constant(Matrix::Zero(init.rows(), 1));
        f.lowerOffset = zero;
        f.upperOffset = zero;

        auto later = [this](NodeId a, NodeId b) { return topoPos_.at(a) > topoPos_.at(b); };
        std::set<NodeId, decltype(later)> frontier(later);
        frontier.insert(target);

        auto addCoeff = [&](std::map<NodeId, V>& coeffs, NodeId id, V v) {
            auto it = coeffs.find(id);
            if (it == coeffs.end()) {
                coeffs.emplace(id, std::move(v));
                frontier.insert(id);  // set: the mirrored map's insert is a no-op
            } else {
                it->second = ops_.add(it->second, std::move(v));
            }
        };

        while (!(frontier.size() == 1 && *frontier.begin() == input)) {
            NodeId i = *frontier.begin();
            frontier.erase(frontier.begin());
            const Node& n = g_->node(i);

            V A = std::move(f.lowerCoeff.at(i));
            V C = std::move(f.upperCoeff.at(i));
            f.lowerCoeff.erase(i);
            f.upperCoeff.erase(i);
            applyHooks(hooks, i, f.rows, A, C);

            switch (n.kind) {
                case NodeKind::Linear: {
                    const V& W = weight(i);
                    addCoeff(f.lowerCoeff, n.inputs[0], ops_.matmul(A, W));
                    addCoeff(f.upperCoeff, n.inputs[0], ops_.matmul(C, W));
                    break;
                }
                case NodeKind::ReLU: {
                    auto it = relus_.find(i);
                    if (it == relus_.end()) {
                        throw Error("missing relaxation for relu node " + std::to_string(i));
                    }
                    const Envelope& e = it->second;
                    V Ap = ops_.posPart(A), An = ops_.negPart(A);
                    addCoeff(f.lowerCoeff, n.inputs[0],
                             ops_.add(ops_.colScale(Ap, e.slopeLower),
                                      ops_.colScale(An, e.slopeUpper)));
                    f.lowerOffset = ops_.add(
                        f.lowerOffset, ops_.add(ops_.matmul(Ap, e.offsetLower),
                                                ops_.matmul(An, e.offsetUpper)));
                    V Cp = ops_.posPart(C), Cn = ops_.negPart(C);
                    addCoeff(f.upperCoeff, n.inputs[0],
                             ops_.add(ops_.colScale(Cp, e.slopeUpper),
                                      ops_.colScale(Cn, e.slopeLower)));
                    f.upperOffset = ops_.add(
                        f.upperOffset, ops_.add(ops_.matmul(Cp, e.offsetUpper),
                                                ops_.matmul(Cn, e.offsetLower)));
                    break;
                }
                case NodeKind::Add:
                    addCoeff(f.lowerCoeff, n.inputs[0], A);
                    addCoeff(f.lowerCoeff, n.inputs[1], std::move(A));
                    addCoeff(f.upperCoeff, n.inputs[0], C);
                    addCoeff(f.upperCoeff, n.inputs[1], std::move(C));
                    break;
                case NodeKind::Sub:
                    addCoeff(f.lowerCoeff, n.inputs[0], A);
                    addCoeff(f.lowerCoeff, n.inputs[1], ops_.neg(A));
                    addCoeff(f.upperCoeff, n.inputs[0], C);
                    addCoeff(f.upperCoeff, n.inputs[1], ops_.neg(C));
                    break;
                case NodeKind::Output:
                    addCoeff(f.lowerCoeff, n.inputs[0], std::move(A));
                    addCoeff(f.upperCoeff, n.inputs[0], std::move(C));
                    break;
                default:
                    throw Error("cannot eliminate node kind in propagation");
            }
        }

        // A branched neuron sitting on the input node is never eliminated;
        // its term lands on the final coefficient instead.
        V& Ain = f.lowerCoeff.at(input);
        V& Cin = f.upperCoeff.at(input);
        applyHooks(hooks, input, f.rows, Ain, Cin);
        return f;
    }

    /// lo = b − δ·‖A‖₁ per row, hi = d + δ·‖C‖₁ per row (L∞-ball duality).
    std::pair<V, V> concretize(const Forms& f, double delta) const {
        NodeId input = g_->inputId();
        if (f.lowerCoeff.size() != 1 || f.lowerCoeff.begin()->first != input) {
            throw Error("concretize: frontier not reduced to the input node");
        }
        V lo = ops_.sub(f.lowerOffset,
                        ops_.scale(ops_.rowAbsSum(f.lowerCoeff.begin()->second), delta));
        V hi = ops_.add(f.upperOffset,
                        ops_.scale(ops_.rowAbsSum(f.upperCoeff.begin()->second), delta));
        return {std::move(lo), std::move(hi)};
    }

    /// Distance intervals of every ReLU input, in topological order, each
    /// obtained by substituting from the ReLU's input node (one multi-row
    /// pass per distinct input node) and concretizing. makeEnvelope turns
    /// each (l, u) pair into the envelope installed for later passes.
    template <class HullFn>
    std::map<NodeId, std::pair<V, V>> computeIntervals(double delta, HullFn makeEnvelope,
                                                       bool detachIntervals = false) {
        std::map<NodeId, std::pair<V, V>> out;
        std::map<NodeId, std::pair<V, V>> byInput;
        for (NodeId id : g_->topoOrder()) {
            const Node& n = g_->node(id);
            if (n.kind != NodeKind::ReLU) continue;
            NodeId j = n.inputs[0];
            auto it = byInput.find(j);
            if (it == byInput.end()) {
                int w = g_->width(j);
                Forms forms = substitute(j, Matrix::Identity(w, w));
                it = byInput.emplace(j, concretize(forms, delta)).first;
            }
            V l = it->second.first, u = it->second.second;
            out.emplace(id, std::pair<V, V>{l, u});
            if (detachIntervals) {
                l = ops_.detach(l);
                u = ops_.detach(u);
            }
            setRelu(id, makeEnvelope(l, u));
        }
        return out;
    }

private:
    const Graph* g_;
    Ops ops_;
    std::map<NodeId, int> topoPos_;
    std::map<NodeId, V> weights_;
    std::map<NodeId, Envelope> relus_;

    static bool isLoweredCore(const Graph& g) {
        for (const Node& n : g.nodes()) {
            if (n.kind == NodeKind::Conv2d || n.kind == NodeKind::MaxPool) return false;
        }
        return true;
    }

    const V& weight(NodeId id) {
        auto it = weights_.find(id);
        if (it == weights_.end()) {
            it = weights_.emplace(id, ops_.constant(g_->node(id).weight.toMatrix())).first;
        }
        return it->second;
    }

    void applyHooks(const std::vector<BranchHook>& hooks, NodeId node, int rows, V& A, V& C) {
        for (const BranchHook& h : hooks) {
            if (h.node != node) continue;
            V pat = ops_.constant(h.pattern.replicate(rows, 1));
            A = ops_.add(A, ops_.scalarMul(pat, h.betaLower));
            C = ops_.sub(C, ops_.scalarMul(pat, h.betaUpper));
        }
    }
};

}  // namespace grcert::detail
