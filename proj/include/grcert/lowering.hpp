#pragma once

#include "grcert/graph.hpp"

namespace grcert {

/// Replaces every conv2d node with a linear node (same id, zero bias) whose
/// weight is the explicit dense matrix of the convolution.
Graph lowerConv(const Graph& g);

/// Replaces every maxpool node with a balanced tree of pairwise maxima,
/// each built from linear selectors and max(a, b) = b + relu(a - b).
/// The tree's final node reuses the pool's id, so successors are untouched.
Graph lowerMaxpool(const Graph& g);

/// Full lowering: after this the graph only contains input, linear, relu,
/// add, sub and output nodes.
Graph lower(const Graph& g);

/// True when the graph contains only the node kinds lowering produces.
bool isLowered(const Graph& g);

/// Inserts a one-hot row selector in front of the output node so the graph
/// computes just the given channel. Throws when channel is out of range.
Graph selectOutput(const Graph& g, int channel);

}  // namespace grcert
