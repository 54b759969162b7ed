#pragma once

#include <map>
#include <utility>
#include <vector>

#include "grcert/graph.hpp"
#include "grcert/tape.hpp"

namespace grcert::detail {

/// Handles into a batched forward pass recorded on a tape.
struct BatchNet {
    Var input;                      // B×n, a parameter when requested
    Var logits;                     // B×K raw outputs, one row per sample
    std::map<NodeId, Var> weights;  // per linear node, parameters when requested
    std::map<NodeId, Var> biases;   // column vectors, parameters when requested
};

/// Records a batched forward pass of a lowered graph; row b of every value
/// matrix belongs to sample b. Marking the input or the weights as
/// parameters lets the caller pull their gradients after a backward pass.
BatchNet batchForward(Tape& tape, const Graph& g, const Matrix& X, bool inputAsParam,
                      bool weightsAsParams);

/// Row-stable softmax cross-entropy averaged over rows, together with its
/// gradient with respect to the logits.
std::pair<double, Matrix> softmaxCrossEntropy(const Matrix& logits,
                                              const std::vector<int>& labels);

/// Index of the largest entry per row (first on ties).
std::vector<int> argmaxRows(const Matrix& logits);

}  // namespace grcert::detail
