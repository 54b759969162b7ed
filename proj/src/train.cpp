#include "grcert/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <utility>

#include "grcert/detail/backends.hpp"
#include "grcert/detail/batchnet.hpp"
#include "grcert/detail/engine.hpp"
#include "grcert/detail/hull.hpp"
#include "grcert/lowering.hpp"
#include "grcert/propagate.hpp"
#include "grcert/rng.hpp"
#include "grcert/tape.hpp"

namespace grcert {

namespace {

using TapeEngine = detail::Engine<detail::TapeOps>;

RGRValue rgrImpl(const Graph& g, double delta, const RgrOptions& opts) {
    if (!(delta >= 0.0) || !std::isfinite(delta)) {
        throw Error("delta must be a finite nonnegative radius");
    }
    Tape tape;
    detail::TapeOps ops{&tape};
    TapeEngine engine(g, ops);

    std::map<NodeId, Var> weightVars;
    for (const Node& n : g.nodes()) {
        if (n.kind != NodeKind::Linear) continue;
        Var w = tape.param(n.weight.toMatrix());
        weightVars.emplace(n.id, w);
        engine.setWeight(n.id, w);
    }

    auto hull = [&ops](Var l, Var u) { return detail::reluDistanceHull(ops, l, u); };
    engine.computeIntervals(delta, hull, opts.detachIntervals);

    const int K = g.width(g.outputId());
    auto forms = engine.substitute(g.outputId(), Matrix::Identity(K, K));
    auto [lo, hi] = engine.concretize(forms, delta);
    Var widths = tape.sub(hi, lo);  // K×1

    Var objective;
    if (opts.agg == RgrAggregation::Sum || K == 1) {
        objective = tape.matmul(tape.constant(Matrix::Ones(1, K)), widths);
    } else {
        // fold max over channels; one-hot rows pull out single entries
        auto channel = [&](int c) {
            Matrix pick = Matrix::Zero(1, K);
            pick(0, c) = 1.0;
            return tape.matmul(tape.constant(pick), widths);
        };
        objective = channel(0);
        for (int c = 1; c < K; ++c) objective = tape.max2(objective, channel(c));
    }
    tape.backward(objective);

    RGRValue out;
    out.value = tape.value(objective)(0, 0);
    out.perChannel = tape.value(widths).col(0);
    for (const auto& [id, v] : weightVars) out.grads.emplace(id, tape.grad(v));
    return out;
}

Matrix stackRows(const std::vector<Vector>& inputs, int width) {
    Matrix X(static_cast<Eigen::Index>(inputs.size()), width);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].size() != width) {
            throw Error("sample width does not match the network input");
        }
        X.row(static_cast<Eigen::Index>(i)) = inputs[i].transpose();
    }
    return X;
}

double accuracy(const Graph& g, const Dataset& ds) {
    if (ds.inputs.empty()) return 0.0;
    if (ds.inputs.size() != ds.labels.size()) {
        throw Error("dataset inputs and labels must align");
    }
    Tape tape;
    auto net = detail::batchForward(tape, g, stackRows(ds.inputs, g.width(g.inputId())),
                                    false, false);
    std::vector<int> pred = detail::argmaxRows(tape.value(net.logits));
    int hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == ds.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace

RGRValue rgrWithGrad(const Graph& g, double delta, const RgrOptions& opts) {
    g.requireValid();
    if (g.width(g.outputId()) != 1) {
        throw Error("bound-width gradient requires a scalar output");
    }
    return rgrImpl(g, delta, opts);
}

RGRValue channelRgrWithGrad(const Graph& g, double delta, const RgrOptions& opts) {
    g.requireValid();
    return rgrImpl(g, delta, opts);
}

LossValue loss(const Graph& g, const std::vector<Vector>& inputs,
               const std::vector<int>& labels, const TrainConfig& config) {
    if (inputs.empty()) throw Error("training batch must be nonempty");
    if (inputs.size() != labels.size()) throw Error("batch inputs and labels must align");
    if (config.lambdaReg < 0.0) throw Error("the regularizer weight must be nonnegative");

    Tape tape;
    auto net = detail::batchForward(tape, g, stackRows(inputs, g.width(g.inputId())),
                                    false, true);
    auto [ce, dLogits] = detail::softmaxCrossEntropy(tape.value(net.logits), labels);
    tape.backward(net.logits, dLogits);

    LossValue out;
    out.crossEntropy = ce;
    for (const auto& [id, wv] : net.weights) out.weightGrads.emplace(id, tape.grad(wv));
    for (const auto& [id, bv] : net.biases) {
        out.biasGrads.emplace(id, Vector(tape.grad(bv).col(0)));
    }

    if (config.lambdaReg > 0.0) {
        RgrOptions ro;
        ro.detachIntervals = config.detachIntervals;
        ro.agg = config.rgrAgg;
        RGRValue r = channelRgrWithGrad(g, config.delta, ro);
        out.rgr = r.value;
        for (const auto& [id, gw] : r.grads) out.weightGrads.at(id) += config.lambdaReg * gw;
    }
    out.total = out.crossEntropy + config.lambdaReg * out.rgr;
    return out;
}

std::string TrainResult::metricsCsv() const {
    std::string out = "epoch,train_acc,test_acc,rgr,eps_certified\n";
    char buf[200];
    for (const EpochMetrics& m : metrics) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", m.epoch, m.trainAcc,
                      m.testAcc, m.rgr, m.epsCertified);
        out += buf;
    }
    return out;
}

TrainResult sgdTrain(const Graph& g, const Dataset& train, const Dataset& test,
                     const TrainConfig& config) {
    if (!(config.lr > 0.0) || config.batch <= 0 || config.epochs < 0) {
        throw Error("training schedule must have positive lr and batch size");
    }
    if (train.inputs.empty()) throw Error("training set must be nonempty");
    if (train.inputs.size() != train.labels.size() ||
        test.inputs.size() != test.labels.size()) {
        throw Error("dataset inputs and labels must align");
    }

    Graph start = lower(g);
    start.requireValid();
    std::vector<Node> nodes = start.nodes();
    const NodeId inId = start.inputId(), outId = start.outputId();
    auto currentGraph = [&] { return Graph(std::vector<Node>(nodes), inId, outId); };

    Rng rng(config.seed);
    TrainResult res{currentGraph(), {}};

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<std::size_t> order(train.inputs.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);

        for (std::size_t pos = 0; pos < order.size();
             pos += static_cast<std::size_t>(config.batch)) {
            std::size_t end =
                std::min(order.size(), pos + static_cast<std::size_t>(config.batch));
            std::vector<Vector> bx;
            std::vector<int> by;
            bx.reserve(end - pos);
            by.reserve(end - pos);
            for (std::size_t i = pos; i < end; ++i) {
                bx.push_back(train.inputs[order[i]]);
                by.push_back(train.labels[order[i]]);
            }
            LossValue step = loss(currentGraph(), bx, by, config);
            for (Node& nd : nodes) {
                if (nd.kind != NodeKind::Linear) continue;
                auto wg = step.weightGrads.find(nd.id);
                if (wg != step.weightGrads.end()) {
                    nd.weight = Tensor::fromMatrix(nd.weight.toMatrix() - config.lr * wg->second);
                }
                auto bg = step.biasGrads.find(nd.id);
                if (bg != step.biasGrads.end()) {
                    nd.bias = Tensor::fromVector(nd.bias.toVector() - config.lr * bg->second);
                }
            }
        }

        Graph cur = currentGraph();
        ChannelBounds cb = channelVariationBounds(cur, config.delta);
        Vector widths = cb.hi - cb.lo;
        EpochMetrics m;
        m.epoch = epoch;
        m.trainAcc = accuracy(cur, train);
        m.testAcc = accuracy(cur, test);
        m.rgr = config.rgrAgg == RgrAggregation::Max ? widths.maxCoeff() : widths.sum();
        m.epsCertified = std::max(cb.lo.cwiseAbs().maxCoeff(), cb.hi.cwiseAbs().maxCoeff());
        res.metrics.push_back(m);
    }

    res.graph = currentGraph();
    return res;
}

std::string FiniteDiffReport::str() const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "%s: max rel error %.3e over %d weights (tolerance %.1e), %zu kink-excluded",
                  pass ? "PASS" : "FAIL", maxRelError, checked, tolerance, excluded.size());
    return buf;
}

FiniteDiffReport finiteDiffCheck(const Graph& g, double delta, double tolerance) {
    g.requireValid();
    RGRValue base = channelRgrWithGrad(g, delta);

    std::vector<Node> nodes = g.nodes();
    const NodeId inId = g.inputId(), outId = g.outputId();
    const int K = g.width(outId);
    auto evalWidth = [&](const std::vector<Node>& ns) -> std::pair<double, std::uint64_t> {
        Graph gg(std::vector<Node>(ns), inId, outId);
        Tape tape;
        detail::TapeOps ops{&tape};
        TapeEngine engine(gg, ops);
        auto hull = [&ops](Var l, Var u) { return detail::reluDistanceHull(ops, l, u); };
        engine.computeIntervals(delta, hull, false);
        auto forms = engine.substitute(outId, Matrix::Identity(K, K));
        auto [lo, hi] = engine.concretize(forms, delta);
        return {(tape.value(hi) - tape.value(lo)).sum(), tape.branchSignature()};
    };

    FiniteDiffReport rep;
    rep.tolerance = tolerance;
    for (std::size_t ni = 0; ni < nodes.size(); ++ni) {
        if (nodes[ni].kind != NodeKind::Linear) continue;
        const NodeId id = nodes[ni].id;
        const Matrix W = nodes[ni].weight.toMatrix();
        const Matrix& analytic = base.grads.at(id);
        for (Eigen::Index r = 0; r < W.rows(); ++r) {
            for (Eigen::Index c = 0; c < W.cols(); ++c) {
                const double w = W(r, c);
                const double h = 1e-5 * (1.0 + std::abs(w));
                auto perturbed = [&](double v) {
                    Matrix Wp = W;
                    Wp(r, c) = v;
                    std::vector<Node> ns = nodes;
                    ns[ni].weight = Tensor::fromMatrix(Wp);
                    return evalWidth(ns);
                };
                auto [fPlus, sigPlus] = perturbed(w + h);
                auto [fMinus, sigMinus] = perturbed(w - h);
                FiniteDiffEntry e;
                e.node = id;
                e.row = static_cast<int>(r);
                e.col = static_cast<int>(c);
                e.analytic = analytic(r, c);
                if (sigPlus != sigMinus) {
                    // the two evaluations straddle a kink of the piecewise
                    // propagation; a central difference is meaningless here
                    rep.excluded.push_back(e);
                    continue;
                }
                e.numeric = (fPlus - fMinus) / (2.0 * h);
                e.relError = std::abs(e.analytic - e.numeric) /
                             std::max({1.0, std::abs(e.analytic), std::abs(e.numeric)});
                ++rep.checked;
                if (e.relError > rep.maxRelError) {
                    rep.maxRelError = e.relError;
                    rep.worst = e;
                }
            }
        }
    }
    rep.pass = rep.maxRelError <= tolerance;
    return rep;
}

}  // namespace grcert
