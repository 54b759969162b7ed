#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "grcert/graph.hpp"
#include "grcert/tensor.hpp"

namespace grcert {

/// Width of the certified output-variation interval together with its
/// gradient with respect to every linear layer's weight matrix.
struct RGRValue {
    double value = 0.0;              // aggregated (hi − lo)
    Vector perChannel;               // per-channel widths
    std::map<NodeId, Matrix> grads;  // keyed by linear node id
};

enum class RgrAggregation { Sum, Max };

struct RgrOptions {
    bool detachIntervals = false;  // stop gradients at the (l, u) intervals
    RgrAggregation agg = RgrAggregation::Sum;
};

/// Bound width of a scalar-output lowered network, differentiated through
/// the whole propagation (intervals, envelopes, substitution, and the L1
/// concretization, with sign(0) taken as 0).
RGRValue rgrWithGrad(const Graph& g, double delta, const RgrOptions& opts = {});

/// Multi-output variant: per-channel widths aggregated by sum (default) or
/// max, computed in one multi-row pass.
RGRValue channelRgrWithGrad(const Graph& g, double delta, const RgrOptions& opts = {});

struct Dataset {
    std::vector<Vector> inputs;
    std::vector<int> labels;
    std::string split = "train";
};

struct TrainConfig {
    double lambdaReg = 0.0;  // weight of the bound-width regularizer
    double delta = 0.1;      // perturbation radius the regularizer certifies
    double lr = 0.05;
    int batch = 32;
    int epochs = 10;
    std::uint64_t seed = 0;
    bool detachIntervals = false;
    RgrAggregation rgrAgg = RgrAggregation::Sum;
};

struct LossValue {
    double total = 0.0;
    double crossEntropy = 0.0;
    double rgr = 0.0;  // aggregated width (0 when the regularizer is off)
    std::map<NodeId, Matrix> weightGrads;
    std::map<NodeId, Vector> biasGrads;
};

/// Mean softmax cross-entropy over the batch plus lambdaReg times the
/// channel-aggregated bound width. The width term does not depend on the
/// batch, and biases only receive the cross-entropy gradient.
LossValue loss(const Graph& g, const std::vector<Vector>& inputs,
               const std::vector<int>& labels, const TrainConfig& config);

struct EpochMetrics {
    int epoch = 0;
    double trainAcc = 0.0;
    double testAcc = 0.0;
    double rgr = 0.0;           // channel-aggregated width at config.delta
    double epsCertified = 0.0;  // max over channels of max(|lo|, |hi|)
};

struct TrainResult {
    Graph graph;
    std::vector<EpochMetrics> metrics;

    /// CSV with header "epoch,train_acc,test_acc,rgr,eps_certified".
    std::string metricsCsv() const;
};

/// Shuffled mini-batch SGD on the lowered graph; deterministic for a fixed
/// seed. Metrics are recorded after every epoch.
TrainResult sgdTrain(const Graph& g, const Dataset& train, const Dataset& test,
                     const TrainConfig& config);

struct FiniteDiffEntry {
    NodeId node = -1;
    int row = 0;
    int col = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double relError = 0.0;
};

struct FiniteDiffReport {
    bool pass = false;
    double tolerance = 0.0;
    double maxRelError = 0.0;
    FiniteDiffEntry worst;
    int checked = 0;
    std::vector<FiniteDiffEntry> excluded;  // weights straddling a kink

    std::string str() const;
};

/// Central-difference validation of the analytic bound-width gradient, one
/// weight entry at a time with h = 1e-5·(1+|w|). Entries whose two-sided
/// evaluations land in different piecewise-linear regions (detected by the
/// tape's branch signature) are excluded and reported separately.
FiniteDiffReport finiteDiffCheck(const Graph& g, double delta, double tolerance);

}  // namespace grcert
