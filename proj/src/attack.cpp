#include "grcert/attack.hpp"

#include <algorithm>
#include <cmath>

#include "grcert/detail/batchnet.hpp"
#include "grcert/lowering.hpp"
#include "grcert/rng.hpp"
#include "grcert/tape.hpp"

namespace grcert {

namespace {

void requireDelta(double delta) {
    if (!(delta >= 0.0) || !std::isfinite(delta)) {
        throw Error("delta must be a finite nonnegative radius");
    }
}

Matrix logitsOf(const Graph& g, const Matrix& X) {
    Tape tape;
    auto net = detail::batchForward(tape, g, X, false, false);
    return tape.value(net.logits);
}

double signOf(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double UnderApprox::worst() const {
    return epsUnder.size() == 0 ? 0.0 : epsUnder.maxCoeff();
}

UnderApprox pgdVariation(const Graph& g, const std::vector<Vector>& points,
                         double delta, const AttackConfig& config) {
    requireDelta(delta);
    if (points.empty()) throw Error("the attack needs at least one point");
    if (config.steps <= 0 || config.restarts <= 0 || !(config.stepSize > 0.0)) {
        throw Error("attack schedule must have positive steps, restarts, and step size");
    }

    Graph net = lower(g);
    net.requireValid();
    const int n = net.width(net.inputId());
    const int K = net.width(net.outputId());
    const auto B = static_cast<Eigen::Index>(points.size());

    Matrix X(B, n);
    for (Eigen::Index b = 0; b < B; ++b) {
        if (points[b].size() != n) throw Error("point width does not match the network input");
        X.row(b) = points[b].transpose();
    }
    const Matrix L0 = logitsOf(net, X);

    UnderApprox out;
    out.delta = delta;
    out.epsUnder = Vector::Constant(K, -1.0);  // first candidate always wins
    out.witnesses.assign(static_cast<std::size_t>(K), Witness{});

    auto score = [&](int c, const Matrix& L, const Matrix& D) {
        for (Eigen::Index b = 0; b < B; ++b) {
            const double v = std::abs(L(b, c) - L0(b, c));
            if (v > out.epsUnder(c)) {
                out.epsUnder(c) = v;
                out.witnesses[static_cast<std::size_t>(c)] = {points[b], Vector(D.row(b))};
            }
        }
    };

    Rng rng(config.seed);
    const double alpha = config.stepSize * delta;
    for (int c = 0; c < K; ++c) {
        for (double s : {1.0, -1.0}) {
            for (int r = 0; r < config.restarts; ++r) {
                Matrix D = Matrix::Zero(B, n);
                if (r > 0) {
                    for (Eigen::Index b = 0; b < B; ++b) {
                        for (int j = 0; j < n; ++j) D(b, j) = rng.uniform(-delta, delta);
                    }
                }
                for (int step = 0; step < config.steps; ++step) {
                    Tape tape;
                    auto bn = detail::batchForward(tape, net, X + D, true, false);
                    score(c, tape.value(bn.logits), D);
                    Matrix adj = Matrix::Zero(B, K);
                    adj.col(c).setConstant(s);
                    tape.backward(bn.logits, adj);
                    D += alpha * tape.grad(bn.input).unaryExpr(&signOf);
                    D = D.cwiseMax(-delta).cwiseMin(delta);
                }
                score(c, logitsOf(net, X + D), D);
            }
        }
    }
    return out;
}

UnderApprox samplingOracle(const Graph& g, double delta, int n, std::uint64_t seed,
                           const SamplingBox& box) {
    requireDelta(delta);
    if (n < 1) throw Error("the sampling oracle needs at least one draw");
    if (!(box.xLo <= box.xHi)) throw Error("sampling box is empty");

    Graph net = lower(g);
    net.requireValid();
    const int in = net.width(net.inputId());
    const int K = net.width(net.outputId());

    UnderApprox out;
    out.delta = delta;
    out.epsUnder = Vector::Constant(K, -1.0);
    out.witnesses.assign(static_cast<std::size_t>(K), Witness{});

    Rng rng(seed);
    int remaining = n;
    while (remaining > 0) {
        const int chunk = std::min(remaining, 256);
        remaining -= chunk;
        Matrix X(chunk, in), D(chunk, in);
        for (int b = 0; b < chunk; ++b) {
            for (int j = 0; j < in; ++j) X(b, j) = rng.uniform(box.xLo, box.xHi);
            for (int j = 0; j < in; ++j) D(b, j) = rng.uniform(-delta, delta);
        }
        Matrix V = logitsOf(net, X + D) - logitsOf(net, X);
        for (int c = 0; c < K; ++c) {
            for (int b = 0; b < chunk; ++b) {
                const double v = std::abs(V(b, c));
                if (v > out.epsUnder(c)) {
                    out.epsUnder(c) = v;
                    out.witnesses[static_cast<std::size_t>(c)] = {Vector(X.row(b)),
                                                                  Vector(D.row(b))};
                }
            }
        }
    }
    return out;
}

Vector replayVariation(const Graph& g, const Witness& w) {
    Graph net = lower(g);
    net.requireValid();
    if (w.x.size() != net.width(net.inputId()) || w.dx.size() != w.x.size()) {
        throw Error("witness width does not match the network input");
    }
    Matrix both(2, w.x.size());
    both.row(0) = (w.x + w.dx).transpose();
    both.row(1) = w.x.transpose();
    Matrix L = logitsOf(net, both);
    return Vector(L.row(0) - L.row(1));
}

}  // namespace grcert
