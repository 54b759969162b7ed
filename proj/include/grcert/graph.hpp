#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "grcert/tensor.hpp"

namespace grcert {

enum class NodeKind { Input, Linear, Conv2d, ReLU, MaxPool, Add, Sub, Output };

const char* nodeKindName(NodeKind k);

/// One layer vertex. Attribute fields are meaningful only for the kinds
/// that use them (weight/bias for Linear, kernel/stride/padding for Conv2d,
/// window for MaxPool, declared shape for Input).
struct Node {
    NodeId id = -1;
    NodeKind kind = NodeKind::Input;
    std::vector<NodeId> inputs;  // (minuend, subtrahend) order for Sub

    Tensor weight;  // Linear: {out, in}
    Tensor bias;    // Linear: {out}
    Tensor kernel;  // Conv2d: {outC, inC, kH, kW}
    int stride = 1;
    int padding = 0;
    int window = 0;          // MaxPool group size over the flattened input
    TensorShape shape;       // Input only: declared shape

    static Node input(NodeId id, TensorShape shape);
    static Node linear(NodeId id, NodeId in, Matrix W, Vector b);
    static Node conv2d(NodeId id, NodeId in, Tensor kernel, int stride, int padding);
    static Node relu(NodeId id, NodeId in);
    static Node maxpool(NodeId id, NodeId in, int window);
    static Node add(NodeId id, NodeId lhs, NodeId rhs);
    static Node sub(NodeId id, NodeId minuend, NodeId subtrahend);
    static Node output(NodeId id, NodeId in);
};

enum class IssueKind {
    DuplicateId,
    BadReference,
    Arity,
    Cycle,
    NodeCount,       // not exactly one Input / one Output, or wrong id wiring
    ShapeMismatch,
    BadAttribute,
    NonFinite,
    Unreachable,     // not reachable from Input
    NotCoReachable,  // Output not reachable from node
};

struct ValidationIssue {
    IssueKind kind;
    NodeId node;  // -1 when not tied to a node
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    bool ok() const { return issues.empty(); }
    bool has(IssueKind k) const;
    std::string str() const;
};

/// Immutable layer DAG. Construction indexes the nodes, resolves a
/// topological order when one exists, and infers per-node output shapes;
/// validate() reports everything that would make propagation unsound.
class Graph {
public:
    Graph() = default;
    Graph(std::vector<Node> nodes, NodeId inputId, NodeId outputId);

    NodeId inputId() const { return input_id_; }
    NodeId outputId() const { return output_id_; }

    bool has(NodeId id) const;
    const Node& node(NodeId id) const;
    const std::vector<Node>& nodes() const { return nodes_; }

    /// Topological order over node ids; empty when the graph is cyclic.
    const std::vector<NodeId>& topoOrder() const { return topo_; }

    /// Inferred output shape of a node; nullptr if inference failed.
    const TensorShape* shapeOf(NodeId id) const;
    /// Flattened neuron count of a node; 0 if shape inference failed.
    int width(NodeId id) const;

    NodeId maxId() const;

    const ValidationReport& validate() const { return report_; }
    bool isValid() const { return report_.ok(); }
    /// Throws Error with the validation report if the graph is invalid.
    void requireValid() const;

    Tensor forward(const Tensor& x) const;
    /// Flattened value of every node for the given input.
    std::map<NodeId, Vector> forwardValues(const Tensor& x) const;

private:
    std::vector<Node> nodes_;
    NodeId input_id_ = -1;
    NodeId output_id_ = -1;
    std::map<NodeId, std::size_t> index_;
    std::vector<NodeId> topo_;
    std::map<NodeId, TensorShape> shapes_;
    ValidationReport report_;

    void buildIndex();
    void checkNodes();
    void topoSort();
    void inferShapes();
    void checkReachability();
};

}  // namespace grcert
