// Acceptance suite for the certifier: one self-contained check per line of
// output, no test framework. Exit status is the number of failed checks, so
// a zero exit means every property held at its stated tolerance.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "grcert/attack.hpp"
#include "grcert/bnb.hpp"
#include "grcert/lowering.hpp"
#include "grcert/propagate.hpp"
#include "grcert/relax.hpp"
#include "grcert/train.hpp"
#include "testsupport.hpp"

using namespace grcert;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

void putNum(std::string& digest, double v) {
    digest += fmt("%.17g;", v);
}

/// Drops lines carrying wall-clock timings so two seeded runs can be
/// compared byte for byte.
std::string stripTimingLines(const std::string& text) {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(pos, end - pos);
        if (line.find("wall_time_secs") == std::string::npos) {
            out += line;
            out += '\n';
        }
        pos = end + 1;
    }
    return out;
}

const std::array<double, 3> kDeltas = {0.01, 0.1, 1.0};

/// The shared pool of random already-lowered scalar-output networks used by
/// the soundness, branch-and-bound, and width-consistency checks.
std::vector<Graph> suitePool() {
    std::vector<Graph> out;
    out.reserve(50);
    for (int i = 0; i < 50; ++i) {
        Rng rng(1000 + i);
        out.push_back(test::randomLoweredGraph(rng));
    }
    return out;
}

/// Dense relu MLP with the given layer widths and seeded random weights.
Graph mlpGraph(const std::vector<int>& widths, Rng& rng, double scale) {
    std::vector<Node> nodes;
    nodes.push_back(Node::input(0, TensorShape{{widths.front()}}));
    NodeId prev = 0;
    NodeId next = 1;
    for (std::size_t l = 1; l < widths.size(); ++l) {
        Matrix W = test::randomMatrix(rng, widths[l], widths[l - 1], scale);
        Vector b = test::randomVector(rng, widths[l], scale);
        nodes.push_back(Node::linear(next, prev, std::move(W), std::move(b)));
        prev = next++;
        if (l + 1 < widths.size()) {
            nodes.push_back(Node::relu(next, prev));
            prev = next++;
        }
    }
    nodes.push_back(Node::output(next, prev));
    return Graph(std::move(nodes), 0, next);
}

// --- 1: certified intervals contain everything a sampling oracle finds ---

Outcome soundnessSuite(const std::vector<Graph>& graphs, std::string& digest) {
    int cases = 0;
    int bad = 0;
    double worstExcess = -1e300;
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        const Graph& g = graphs[i];
        for (std::size_t d = 0; d < kDeltas.size(); ++d) {
            const double delta = kDeltas[d];
            const ChannelBounds cb = channelVariationBounds(g, delta);
            const UnderApprox ua = samplingOracle(g, delta, 10000, 7000 + 13 * i + d);
            for (int c = 0; c < cb.lo.size(); ++c) {
                const double cert = std::max(std::abs(cb.lo(c)), std::abs(cb.hi(c)));
                const double excess = ua.epsUnder(c) - cert;
                worstExcess = std::max(worstExcess, excess);
                ++cases;
                if (excess > 1e-6) ++bad;
                putNum(digest, cb.lo(c));
                putNum(digest, cb.hi(c));
                putNum(digest, ua.epsUnder(c));
            }
        }
        if (i < 5) digest += stripTimingLines(certify(g, 0.1, 1.0).toJson());
    }
    Outcome o;
    o.pass = bad == 0;
    o.detail = fmt("%d/%d cases kept the 1e4-sample variation inside the certified bound "
                   "(worst oracle-minus-bound %.2e)",
                   cases - bad, cases, worstExcess);
    return o;
}

// --- 2: on linear-only networks the bound is exact and pgd reaches it ---

Outcome affineExactness(std::string& digest) {
    int bad = 0;
    double worstRel = 0.0;
    double worstGap = 0.0;
    for (int i = 0; i < 20; ++i) {
        Rng rng(2000 + i);
        const int nIn = 1 + static_cast<int>(rng.below(8));
        const int layers = 1 + static_cast<int>(rng.below(4));
        std::vector<Node> nodes;
        nodes.push_back(Node::input(0, TensorShape{{nIn}}));
        Matrix total = Matrix::Identity(nIn, nIn);
        NodeId prev = 0;
        NodeId next = 1;
        int cur = nIn;
        for (int l = 0; l < layers; ++l) {
            const int rows = (l + 1 == layers) ? 1 : 1 + static_cast<int>(rng.below(8));
            Matrix W = test::randomMatrix(rng, rows, cur, 0.9);
            Vector b = test::randomVector(rng, rows, 0.5);  // biases must cancel
            total = W * total;
            nodes.push_back(Node::linear(next, prev, std::move(W), std::move(b)));
            prev = next++;
            cur = rows;
        }
        nodes.push_back(Node::output(next, prev));
        Graph g(std::move(nodes), 0, next);

        const double delta = 0.1;
        const double expect = total.cwiseAbs().sum() * delta;
        const ConcreteBounds cb = outputVariationBounds(g, delta);
        const double relHi = std::abs(cb.hi - expect) / std::max(1.0, expect);
        const double relLo = std::abs(cb.lo + expect) / std::max(1.0, expect);
        worstRel = std::max({worstRel, relHi, relLo});

        AttackConfig cfg;
        cfg.steps = 60;
        cfg.restarts = 2;
        cfg.seed = 50 + i;
        const Vector x0 = test::randomVector(rng, nIn, 1.0);
        const UnderApprox ua = pgdVariation(g, {x0}, delta, cfg);
        const double gap = std::abs(ua.epsUnder(0) - expect);
        worstGap = std::max(worstGap, gap);

        if (relHi > 1e-9 || relLo > 1e-9 || gap > 1e-6) ++bad;
        putNum(digest, cb.lo);
        putNum(digest, cb.hi);
        putNum(digest, ua.epsUnder(0));
    }
    Outcome o;
    o.pass = bad == 0;
    o.detail = fmt("20 linear chains: interval == +/- l1-norm * delta (max rel err %.1e) "
                   "and pgd attains it (max gap %.1e)",
                   worstRel, worstGap);
    return o;
}

// --- 3: the relu distance hull contains the region and touches it ---

double reluDistance(double x, double dx) {
    return std::max(x + dx, 0.0) - std::max(x, 0.0);
}

Outcome reluHull(std::string& digest) {
    Rng rng(3000);
    int badContain = 0;
    int badTouch = 0;
    for (int t = 0; t < 1000; ++t) {
        const double l = -std::exp(rng.uniform(-3.0, 2.0));
        const double u = std::exp(rng.uniform(-3.0, 2.0));
        IntervalBound b;
        b.lo = Vector::Constant(1, l);
        b.hi = Vector::Constant(1, u);
        const LayerRelaxation r = relaxRelu(b);
        const double la = r.lower.j.toDense()(0, 0);
        const double lb = r.lower.offset(0);
        const double ra = r.upper.j.toDense()(0, 0);
        const double rb = r.upper.offset(0);
        for (int s = 0; s < 10000; ++s) {
            const double dxj = rng.uniform(l, u);
            const double x = rng.uniform(-10.0, 10.0);
            const double dxi = reluDistance(x, dxj);
            if (!(la * dxj + lb <= dxi + 1e-9 && ra * dxj + rb >= dxi - 1e-9)) ++badContain;
        }
        // Achievable extremes at the interval ends: the bottom line meets the
        // region at (l, l) and (u, 0), the top line at (l, 0) and (u, u).
        const bool touches = std::abs(la * l + lb - l) <= 1e-9 * (1.0 + std::abs(l)) &&
                             std::abs(la * u + lb) <= 1e-9 * (1.0 + std::abs(u)) &&
                             std::abs(ra * l + rb) <= 1e-9 * (1.0 + std::abs(l)) &&
                             std::abs(ra * u + rb - u) <= 1e-9 * (1.0 + std::abs(u));
        if (!touches) ++badTouch;
        putNum(digest, la);
        putNum(digest, lb);
        putNum(digest, ra);
        putNum(digest, rb);
    }
    Outcome o;
    o.pass = badContain == 0 && badTouch == 0;
    o.detail = fmt("1000 intervals x 10000 samples: %d containment misses, %d hulls "
                   "failing to touch the region",
                   badContain, badTouch);
    return o;
}

// --- 4: lowering conv/pool graphs preserves the computed function ---

Outcome loweringEquivalence(std::string& digest) {
    int bad = 0;
    double worstRel = 0.0;
    for (int i = 0; i < 20; ++i) {
        Rng rng(4000 + i);
        const Graph g = test::randomConvPoolGraph(rng, 9);
        const Graph flat = lower(g);
        const int n = g.width(g.inputId());
        double sumAbs = 0.0;
        for (int s = 0; s < 1000; ++s) {
            const Vector x = test::randomVector(rng, n, 1.0);
            const Vector a = g.forward(Tensor::fromVector(x)).toVector();
            const Vector b = flat.forward(Tensor::fromVector(x)).toVector();
            for (int c = 0; c < a.size(); ++c) {
                const double rel =
                    std::abs(a(c) - b(c)) / std::max({1.0, std::abs(a(c)), std::abs(b(c))});
                worstRel = std::max(worstRel, rel);
                if (rel > 1e-6) ++bad;
                sumAbs += std::abs(b(c));
            }
        }
        putNum(digest, sumAbs);
    }
    Outcome o;
    o.pass = bad == 0;
    o.detail = fmt("20 conv/pool graphs x 1000 inputs: original and lowered outputs agree "
                   "(max rel diff %.1e, %d over 1e-6)",
                   worstRel, bad);
    return o;
}

// --- 5: branch-and-bound only ever tightens and stays sound ---

Outcome bnbAnytime(const std::vector<Graph>& graphs, std::string& digest) {
    int runs = 0;
    int badMono = 0;
    int badSound = 0;
    int badWidth = 0;
    int strictly = 0;
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        const Graph& g = graphs[i];
        for (std::size_t d = 0; d < kDeltas.size(); ++d) {
            const double delta = kDeltas[d];
            BnBConfig cfg;  // 16 splits by default
            const BnBResult res = branchAndBound(g, delta, cfg);
            ++runs;
            if (res.history.empty()) {
                ++badMono;
                ++badWidth;
                continue;
            }
            bool mono = true;
            for (std::size_t k = 1; k < res.history.size(); ++k) {
                if (res.history[k].lo < res.history[k - 1].lo ||
                    res.history[k].hi > res.history[k - 1].hi)
                    mono = false;
            }
            const UnderApprox ua = samplingOracle(g, delta, 10000, 8000 + 13 * i + d);
            const double cert = std::max(std::abs(res.best.lo), std::abs(res.best.hi));
            const bool sound = ua.epsUnder(0) <= cert + 1e-6;
            const double rootWidth = res.history.front().hi - res.history.front().lo;
            const double finalWidth = res.best.hi - res.best.lo;
            if (!mono) ++badMono;
            if (!sound) ++badSound;
            if (finalWidth > rootWidth) ++badWidth;
            if (finalWidth < rootWidth - 1e-12) ++strictly;
            putNum(digest, res.best.lo);
            putNum(digest, res.best.hi);
            digest += fmt("%d;", res.splits);
            for (const HistoryEntry& h : res.history) {
                digest += fmt("%d;", h.splits);
                putNum(digest, h.lo);
                putNum(digest, h.hi);
            }
        }
    }
    Outcome o;
    o.pass = badMono == 0 && badSound == 0 && badWidth == 0;
    o.detail = fmt("%d runs at 16 splits: %d non-monotone histories, %d unsound finals, "
                   "%d wider than the unbranched bound; strictly tighter in %d",
                   runs, badMono, badSound, badWidth, strictly);
    return o;
}

// --- 6: analytic regularizer gradients match finite differences ---

Outcome gradientCheck(std::string& digest) {
    int bad = 0;
    int checked = 0;
    int excluded = 0;
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        Rng rng(6000 + i);
        const int layers = 2 + i % 3;  // 2, 3, or 4 linear layers
        std::vector<int> widths;
        widths.push_back(2 + static_cast<int>(rng.below(5)));
        for (int l = 1; l < layers; ++l) widths.push_back(2 + static_cast<int>(rng.below(7)));
        widths.push_back(1 + static_cast<int>(rng.below(3)));
        const Graph g = mlpGraph(widths, rng, 0.8);
        const FiniteDiffReport rep = finiteDiffCheck(g, 0.1, 1e-4);
        if (!rep.pass) ++bad;
        worst = std::max(worst, rep.maxRelError);
        checked += rep.checked;
        excluded += static_cast<int>(rep.excluded.size());
        putNum(digest, rep.maxRelError);
    }
    Outcome o;
    o.pass = bad == 0;
    o.detail = fmt("20 nets at tolerance 1e-4: %d passed, max rel error %.2e over %d "
                   "weights, %d kink-excluded",
                   20 - bad, worst, checked, excluded);
    return o;
}

// --- 7: the training-side width equals the certifier's width ---

Outcome widthConsistency(const std::vector<Graph>& graphs, std::string& digest) {
    int cases = 0;
    int bad = 0;
    double worstRel = 0.0;
    for (const Graph& g : graphs) {
        for (const double delta : kDeltas) {
            const ChannelBounds cb = channelVariationBounds(g, delta);
            const RGRValue r = channelRgrWithGrad(g, delta);
            const double width = (cb.hi - cb.lo).sum();
            const double rel = std::abs(r.value - width) / std::max(1.0, width);
            worstRel = std::max(worstRel, rel);
            ++cases;
            if (rel > 1e-12) ++bad;
            putNum(digest, r.value);
        }
    }
    Outcome o;
    o.pass = bad == 0;
    o.detail = fmt("%d cases: regularizer value matches certified hi-lo within 1e-12 "
                   "relative (worst %.1e)",
                   cases, worstRel);
    return o;
}

// --- 8: the regularizer shrinks certified bounds without wrecking accuracy ---

constexpr double kTrendLambda = 0.02;
constexpr double kTrendDelta = 2.0 / 255.0;

Dataset toDataset(const test::LabeledImages& li, const char* split) {
    Dataset d;
    d.inputs = li.images;
    d.labels = li.labels;
    d.split = split;
    return d;
}

struct TrendData {
    Dataset train;
    Dataset test;
};

TrendData trendData() {
    Rng trainRng(42);
    Rng testRng(43);
    TrendData td;
    td.train = toDataset(test::syntheticDigits(2000, trainRng), "train");
    td.test = toDataset(test::syntheticDigits(400, testRng), "test");
    return td;
}

Graph digitsNet(std::uint64_t seed) {
    Rng rng(seed);
    const std::vector<int> widths = {784, 64, 64, 10};
    std::vector<Node> nodes;
    nodes.push_back(Node::input(0, TensorShape{{widths.front()}}));
    NodeId prev = 0;
    NodeId next = 1;
    for (std::size_t l = 1; l < widths.size(); ++l) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(widths[l - 1]));
        Matrix W = test::randomMatrix(rng, widths[l], widths[l - 1], scale);
        nodes.push_back(Node::linear(next, prev, std::move(W), Vector::Zero(widths[l])));
        prev = next++;
        if (l + 1 < widths.size()) {
            nodes.push_back(Node::relu(next, prev));
            prev = next++;
        }
    }
    nodes.push_back(Node::output(next, prev));
    return Graph(std::move(nodes), 0, next);
}

TrainResult trendRun(const TrendData& td, const Graph& net, std::uint64_t seed, double lambda) {
    TrainConfig cfg;
    cfg.lambdaReg = lambda;
    cfg.delta = kTrendDelta;
    cfg.lr = 0.05;
    cfg.batch = 64;
    cfg.epochs = 10;
    cfg.seed = seed;
    return sgdTrain(net, td.train, td.test, cfg);
}

std::string seedZeroRegularizedCsv() {
    const TrendData td = trendData();
    const Graph net = digitsNet(900);
    return trendRun(td, net, 0, kTrendLambda).metricsCsv();
}

Outcome trainingTrend(std::string& csvSeed0) {
    const TrendData td = trendData();
    bool pass = true;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const Graph net = digitsNet(900 + seed);
        const TrainResult plain = trendRun(td, net, seed, 0.0);
        const TrainResult reg = trendRun(td, net, seed, kTrendLambda);
        const EpochMetrics& mp = plain.metrics.back();
        const EpochMetrics& mr = reg.metrics.back();
        const bool okBound = mr.epsCertified <= 0.7 * mp.epsCertified;
        const bool okAcc = mr.testAcc >= mp.testAcc - 0.05;
        pass = pass && okBound && okAcc;
        detail += fmt("seed %llu: eps %.3g->%.3g (-%.0f%%), test acc %.3f->%.3f%s",
                      static_cast<unsigned long long>(seed), mp.epsCertified, mr.epsCertified,
                      100.0 * (1.0 - mr.epsCertified / mp.epsCertified), mp.testAcc, mr.testAcc,
                      seed + 1 < 3 ? "; " : "");
        if (seed == 0) csvSeed0 = reg.metricsCsv();
    }
    Outcome o;
    o.pass = pass;
    o.detail = detail;
    return o;
}

// --- 9: every seeded computation above replays byte-identically ---

Outcome reproducibility(const std::string& digest1, const std::string& csv1) {
    std::string digest2;
    const std::vector<Graph> graphs = suitePool();
    soundnessSuite(graphs, digest2);
    affineExactness(digest2);
    reluHull(digest2);
    loweringEquivalence(digest2);
    bnbAnytime(graphs, digest2);
    gradientCheck(digest2);
    widthConsistency(graphs, digest2);
    const std::string csv2 = seedZeroRegularizedCsv();
    const bool digestOk = digest1 == digest2;
    const bool csvOk = csv1 == csv2;
    Outcome o;
    o.pass = digestOk && csvOk;
    o.detail = fmt("recomputed outputs %s (%zu digest chars), regularized training csv %s",
                   digestOk ? "identical" : "DIFFER", digest1.size(),
                   csvOk ? "identical" : "DIFFERS");
    return o;
}

struct Timed {
    Outcome o;
    double secs = 0.0;
};

template <typename F>
Timed timed(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    Timed t;
    t.o = f();
    t.secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return t;
}

}  // namespace

int main() {
    int failures = 0;
    const auto note = [&failures](int idx, const char* name, const Timed& t) {
        if (!t.o.pass) ++failures;
        std::printf("[%s] %d %s: %s (%.1fs)\n", t.o.pass ? "PASS" : "FAIL", idx, name,
                    t.o.detail.c_str(), t.secs);
        std::fflush(stdout);
    };

    std::string digest;
    const std::vector<Graph> graphs = suitePool();
    note(1, "soundness", timed([&] { return soundnessSuite(graphs, digest); }));
    note(2, "affine exactness", timed([&] { return affineExactness(digest); }));
    note(3, "relu distance hull", timed([&] { return reluHull(digest); }));
    note(4, "lowering equivalence", timed([&] { return loweringEquivalence(digest); }));
    note(5, "branch-and-bound anytime", timed([&] { return bnbAnytime(graphs, digest); }));
    note(6, "regularizer gradients", timed([&] { return gradientCheck(digest); }));
    note(7, "regularizer width consistency", timed([&] { return widthConsistency(graphs, digest); }));

    std::string csvSeed0;
    note(8, "training trend", timed([&] { return trainingTrend(csvSeed0); }));
    note(9, "reproducibility", timed([&] { return reproducibility(digest, csvSeed0); }));

    std::printf("%d of 9 checks passed\n", 9 - failures);
    return failures;
}
