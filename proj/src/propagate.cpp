#include "grcert/propagate.hpp"

#include <chrono>
#include <cmath>

#include "grcert/detail/engine.hpp"
#include "grcert/lowering.hpp"
#include "json.hpp"

namespace grcert {

namespace {

using PlainEngine = detail::Engine<detail::EigenOps>;

void requireDelta(double delta) {
    if (!(delta >= 0.0) || !std::isfinite(delta)) {
        throw Error("delta must be a finite nonnegative radius");
    }
}

std::vector<PlainEngine::BranchHook> toHooks(const Graph& g,
                                             const std::vector<BranchTerm>& terms) {
    std::vector<PlainEngine::BranchHook> hooks;
    hooks.reserve(terms.size());
    for (const BranchTerm& t : terms) {
        if (t.beta < 0.0) throw Error("branch multiplier must be nonnegative");
        if (t.sign != 1 && t.sign != -1) throw Error("branch sign must be +1 or -1");
        int w = g.width(t.node);
        if (t.neuron < 0 || t.neuron >= w) throw Error("branch neuron out of range");
        Matrix pattern = Matrix::Zero(1, w);
        pattern(0, t.neuron) = static_cast<double>(t.sign);
        Matrix beta = Matrix::Constant(1, 1, t.beta);
        hooks.push_back({t.node, std::move(pattern), beta, beta});
    }
    return hooks;
}

void installRelaxations(PlainEngine& engine, const RelaxMap& relaxations) {
    for (const auto& [id, r] : relaxations) {
        engine.setRelu(id, detail::envelopeFromRelaxation(engine.ops(), r));
    }
}

BoundsPair toBoundsPair(const PlainEngine::Forms& f) {
    BoundsPair out;
    for (const auto& [id, m] : f.lowerCoeff) out.lower.coeffs.emplace(id, m);
    for (const auto& [id, m] : f.upperCoeff) out.upper.coeffs.emplace(id, m);
    out.lower.offset = f.lowerOffset.col(0);
    out.upper.offset = f.upperOffset.col(0);
    return out;
}

/// Envelope maker for the certification path: exact per-case construction.
detail::HullSides<detail::EigenOps> exactEnvelope(const detail::EigenOps& ops,
                                                  const Matrix& l, const Matrix& u) {
    IntervalBound b{l.col(0), u.col(0)};
    return detail::envelopeFromRelaxation(ops, relaxRelu(b));
}

struct Pipeline {
    Graph lowered;
    std::map<NodeId, IntervalBound> intervals;
    Vector lo;
    Vector hi;
};

Pipeline runPipeline(const Graph& g, double delta) {
    requireDelta(delta);
    Pipeline p{lower(g), {}, {}, {}};
    p.lowered.requireValid();
    detail::EigenOps ops;
    PlainEngine engine(p.lowered, ops);
    auto raw = engine.computeIntervals(delta, [&](const Matrix& l, const Matrix& u) {
        return exactEnvelope(ops, l, u);
    });
    for (const auto& [id, lu] : raw) {
        p.intervals.emplace(id, IntervalBound{lu.first.col(0), lu.second.col(0)});
    }
    int k = p.lowered.width(p.lowered.outputId());
    auto forms = engine.substitute(p.lowered.outputId(), Matrix::Identity(k, k));
    auto [lo, hi] = engine.concretize(forms, delta);
    p.lo = lo.col(0);
    p.hi = hi.col(0);
    return p;
}

}  // namespace

RelaxMap buildRelaxations(const std::map<NodeId, IntervalBound>& intervals) {
    RelaxMap out;
    for (const auto& [id, b] : intervals) out.emplace(id, relaxRelu(b));
    return out;
}

BoundsPair backwardSubstitute(const Graph& g, const RelaxMap& relaxations, NodeId target,
                              const std::vector<BranchTerm>& terms) {
    int w = g.width(target);
    return backwardSubstitute(g, relaxations, target, Matrix::Identity(w, w), terms);
}

BoundsPair backwardSubstitute(const Graph& g, const RelaxMap& relaxations, NodeId target,
                              const Matrix& init, const std::vector<BranchTerm>& terms) {
    detail::EigenOps ops;
    PlainEngine engine(g, ops);
    installRelaxations(engine, relaxations);
    return toBoundsPair(engine.substitute(target, init, toHooks(g, terms)));
}

IntervalBound concretizeRows(const Graph& g, const BoundsPair& bounds, double delta) {
    requireDelta(delta);
    NodeId input = g.inputId();
    if (bounds.lower.coeffs.size() != 1 || bounds.lower.coeffs.count(input) == 0 ||
        bounds.upper.coeffs.size() != 1 || bounds.upper.coeffs.count(input) == 0) {
        throw Error("concretize: frontier not reduced to the input node");
    }
    const Matrix& A = bounds.lower.coeffs.at(input);
    const Matrix& C = bounds.upper.coeffs.at(input);
    IntervalBound out;
    out.lo = bounds.lower.offset - delta * A.cwiseAbs().rowwise().sum();
    out.hi = bounds.upper.offset + delta * C.cwiseAbs().rowwise().sum();
    return out;
}

ConcreteBounds concretize(const Graph& g, const BoundsPair& bounds, double delta) {
    IntervalBound rows = concretizeRows(g, bounds, delta);
    if (rows.lo.size() != 1) throw Error("concretize: expected single-row forms");
    return ConcreteBounds{rows.lo[0], rows.hi[0], delta};
}

std::map<NodeId, IntervalBound> computeReluInputIntervals(const Graph& g, double delta) {
    requireDelta(delta);
    detail::EigenOps ops;
    PlainEngine engine(g, ops);
    auto raw = engine.computeIntervals(delta, [&](const Matrix& l, const Matrix& u) {
        return exactEnvelope(ops, l, u);
    });
    std::map<NodeId, IntervalBound> out;
    for (const auto& [id, lu] : raw) {
        out.emplace(id, IntervalBound{lu.first.col(0), lu.second.col(0)});
    }
    return out;
}

ConcreteBounds outputVariationBounds(const Graph& g, double delta) {
    Pipeline p = runPipeline(g, delta);
    if (p.lo.size() != 1) {
        throw Error("output must be scalar; select a channel first");
    }
    return ConcreteBounds{p.lo[0], p.hi[0], delta};
}

ChannelBounds channelVariationBounds(const Graph& g, double delta) {
    Pipeline p = runPipeline(g, delta);
    return ChannelBounds{std::move(p.lo), std::move(p.hi), delta};
}

const char* verdictName(Verdict v) {
    return v == Verdict::Robust ? "ROBUST" : "UNKNOWN";
}

CertificateReport certify(const Graph& g, double delta, double epsilon,
                          const CertifyOptions& opts) {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
        throw Error("epsilon must be a finite nonnegative threshold");
    }
    auto t0 = std::chrono::steady_clock::now();
    Pipeline p = runPipeline(g, delta);

    CertificateReport report;
    report.delta = delta;
    report.epsilon = epsilon;
    report.lo = std::move(p.lo);
    report.hi = std::move(p.hi);
    double worst = 0.0;
    for (Eigen::Index c = 0; c < report.lo.size(); ++c) {
        worst = std::max({worst, std::abs(report.lo[c]), std::abs(report.hi[c])});
    }
    report.verdict = worst <= epsilon ? Verdict::Robust : Verdict::Unknown;
    if (opts.includeIntervals) {
        report.hasIntervals = true;
        report.reluIntervals = std::move(p.intervals);
    }
    report.wallTimeSecs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::string CertificateReport::toJson() const {
    nlohmann::json j;
    j["delta"] = delta;
    j["epsilon"] = epsilon;
    j["lo"] = std::vector<double>(lo.data(), lo.data() + lo.size());
    j["hi"] = std::vector<double>(hi.data(), hi.data() + hi.size());
    j["verdict"] = verdictName(verdict);
    j["wall_time_secs"] = wallTimeSecs;
    if (hasIntervals) {
        nlohmann::json iv = nlohmann::json::object();
        for (const auto& [id, b] : reluIntervals) {
            iv[std::to_string(id)] = {
                {"lo", std::vector<double>(b.lo.data(), b.lo.data() + b.lo.size())},
                {"hi", std::vector<double>(b.hi.data(), b.hi.data() + b.hi.size())}};
        }
        j["relu_intervals"] = std::move(iv);
    }
    return j.dump(2);
}

}  // namespace grcert
