#include "grcert/graph.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <sstream>

namespace grcert {

const char* nodeKindName(NodeKind k) {
    switch (k) {
        case NodeKind::Input: return "input";
        case NodeKind::Linear: return "linear";
        case NodeKind::Conv2d: return "conv2d";
        case NodeKind::ReLU: return "relu";
        case NodeKind::MaxPool: return "maxpool";
        case NodeKind::Add: return "add";
        case NodeKind::Sub: return "sub";
        case NodeKind::Output: return "output";
    }
    return "?";
}

Node Node::input(NodeId id, TensorShape shape) {
    Node n;
    n.id = id;
    n.kind = NodeKind::Input;
    n.shape = std::move(shape);
    return n;
}

Node Node::linear(NodeId id, NodeId in, Matrix W, Vector b) {
    Node n;
    n.id = id;
    n.kind = NodeKind::Linear;
    n.inputs = {in};
    n.weight = Tensor::fromMatrix(W);
    n.bias = Tensor::fromVector(b);
    return n;
}

Node Node::conv2d(NodeId id, NodeId in, Tensor kernel, int stride, int padding) {
    Node n;
    n.id = id;
    n.kind = NodeKind::Conv2d;
    n.inputs = {in};
    n.kernel = std::move(kernel);
    n.stride = stride;
    n.padding = padding;
    return n;
}

Node Node::relu(NodeId id, NodeId in) {
    Node n;
    n.id = id;
    n.kind = NodeKind::ReLU;
    n.inputs = {in};
    return n;
}

Node Node::maxpool(NodeId id, NodeId in, int window) {
    Node n;
    n.id = id;
    n.kind = NodeKind::MaxPool;
    n.inputs = {in};
    n.window = window;
    return n;
}

Node Node::add(NodeId id, NodeId lhs, NodeId rhs) {
    Node n;
    n.id = id;
    n.kind = NodeKind::Add;
    n.inputs = {lhs, rhs};
    return n;
}

Node Node::sub(NodeId id, NodeId minuend, NodeId subtrahend) {
    Node n;
    n.id = id;
    n.kind = NodeKind::Sub;
    n.inputs = {minuend, subtrahend};
    return n;
}

Node Node::output(NodeId id, NodeId in) {
    Node n;
    n.id = id;
    n.kind = NodeKind::Output;
    n.inputs = {in};
    return n;
}

bool ValidationReport::has(IssueKind k) const {
    return std::any_of(issues.begin(), issues.end(),
                       [k](const ValidationIssue& i) { return i.kind == k; });
}

std::string ValidationReport::str() const {
    std::ostringstream os;
    for (const auto& i : issues) {
        os << "node " << i.node << ": " << i.message << "\n";
    }
    return os.str();
}

Graph::Graph(std::vector<Node> nodes, NodeId inputId, NodeId outputId)
    : nodes_(std::move(nodes)), input_id_(inputId), output_id_(outputId) {
    buildIndex();
    checkNodes();
    topoSort();
    if (!topo_.empty()) {
        inferShapes();
        checkReachability();
    }
}

bool Graph::has(NodeId id) const { return index_.count(id) != 0; }

const Node& Graph::node(NodeId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error("unknown node id " + std::to_string(id));
    return nodes_[it->second];
}

const TensorShape* Graph::shapeOf(NodeId id) const {
    auto it = shapes_.find(id);
    return it == shapes_.end() ? nullptr : &it->second;
}

int Graph::width(NodeId id) const {
    const TensorShape* s = shapeOf(id);
    return s ? static_cast<int>(s->count()) : 0;
}

NodeId Graph::maxId() const {
    NodeId m = -1;
    for (const auto& n : nodes_) m = std::max(m, n.id);
    return m;
}

void Graph::requireValid() const {
    if (!report_.ok()) throw Error("invalid graph:\n" + report_.str());
}

void Graph::buildIndex() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        NodeId id = nodes_[i].id;
        if (!index_.emplace(id, i).second) {
            report_.issues.push_back(
                {IssueKind::DuplicateId, id, "duplicate node id"});
        }
    }
}

void Graph::checkNodes() {
    int n_inputs = 0, n_outputs = 0;
    for (const auto& n : nodes_) {
        if (n.kind == NodeKind::Input) ++n_inputs;
        if (n.kind == NodeKind::Output) ++n_outputs;

        std::size_t want_arity =
            n.kind == NodeKind::Input ? 0
            : (n.kind == NodeKind::Add || n.kind == NodeKind::Sub) ? 2
                                                                   : 1;
        if (n.inputs.size() != want_arity) {
            report_.issues.push_back(
                {IssueKind::Arity, n.id,
                 std::string(nodeKindName(n.kind)) + " expects " +
                     std::to_string(want_arity) + " inputs, has " +
                     std::to_string(n.inputs.size())});
        }
        for (NodeId p : n.inputs) {
            if (!has(p)) {
                report_.issues.push_back(
                    {IssueKind::BadReference, n.id,
                     "references unknown node " + std::to_string(p)});
            }
        }

        switch (n.kind) {
            case NodeKind::Input:
                if (!n.shape.valid()) {
                    report_.issues.push_back(
                        {IssueKind::BadAttribute, n.id, "input shape must have positive dims"});
                }
                break;
            case NodeKind::Linear:
                if (n.weight.shape.dims.size() != 2 || !n.weight.shape.valid()) {
                    report_.issues.push_back(
                        {IssueKind::BadAttribute, n.id, "linear weight must be 2-d"});
                } else if (n.bias.shape.dims.size() != 1 ||
                           n.bias.shape.dims[0] != n.weight.shape.dims[0]) {
                    report_.issues.push_back(
                        {IssueKind::BadAttribute, n.id,
                         "linear bias must be 1-d with one entry per output row"});
                }
                if (!n.weight.allFinite() || !n.bias.allFinite()) {
                    report_.issues.push_back(
                        {IssueKind::NonFinite, n.id, "linear parameters must be finite"});
                }
                break;
            case NodeKind::Conv2d:
                if (n.kernel.shape.dims.size() != 4 || !n.kernel.shape.valid()) {
                    report_.issues.push_back(
                        {IssueKind::BadAttribute, n.id,
                         "conv2d kernel must be 4-d {outC, inC, kH, kW}"});
                }
                if (n.stride < 1 || n.padding < 0) {
                    report_.issues.push_back(
                        {IssueKind::BadAttribute, n.id,
                         "conv2d needs stride >= 1 and padding >= 0"});
                }
                if (!n.kernel.allFinite()) {
                    report_.issues.push_back(
                        {IssueKind::NonFinite, n.id, "conv2d kernel must be finite"});
                }
                break;
            case NodeKind::MaxPool:
                if (n.window < 1) {
                    report_.issues.push_back(
                        {IssueKind::BadAttribute, n.id, "maxpool window must be >= 1"});
                }
                break;
            default:
                break;
        }
    }

    if (n_inputs != 1 || n_outputs != 1 || !has(input_id_) || !has(output_id_) ||
        (has(input_id_) && node(input_id_).kind != NodeKind::Input) ||
        (has(output_id_) && node(output_id_).kind != NodeKind::Output)) {
        report_.issues.push_back(
            {IssueKind::NodeCount, -1,
             "graph needs exactly one input node and one output node, wired as declared"});
    }
}

void Graph::topoSort() {
    if (report_.has(IssueKind::DuplicateId) || report_.has(IssueKind::BadReference)) {
        return;  // edge structure is not trustworthy
    }
    std::map<NodeId, int> indegree;
    std::map<NodeId, std::vector<NodeId>> succ;
    for (const auto& n : nodes_) indegree[n.id] = 0;
    for (const auto& n : nodes_) {
        for (NodeId p : n.inputs) {
            succ[p].push_back(n.id);
            ++indegree[n.id];
        }
    }
    std::deque<NodeId> ready;
    for (const auto& [id, deg] : indegree) {
        if (deg == 0) ready.push_back(id);
    }
    while (!ready.empty()) {
        NodeId id = ready.front();
        ready.pop_front();
        topo_.push_back(id);
        for (NodeId s : succ[id]) {
            if (--indegree[s] == 0) ready.push_back(s);
        }
    }
    if (topo_.size() != nodes_.size()) {
        topo_.clear();
        report_.issues.push_back({IssueKind::Cycle, -1, "graph contains a cycle"});
    }
}

void Graph::inferShapes() {
    auto pred_shape = [&](const Node& n, std::size_t i) -> const TensorShape* {
        if (i >= n.inputs.size()) return nullptr;
        return shapeOf(n.inputs[i]);
    };
    for (NodeId id : topo_) {
        const Node& n = node(id);
        switch (n.kind) {
            case NodeKind::Input:
                if (n.shape.valid()) shapes_[id] = n.shape;
                break;
            case NodeKind::Linear: {
                const TensorShape* in = pred_shape(n, 0);
                if (!in || n.weight.shape.dims.size() != 2) break;
                if (in->count() != n.weight.shape.dims[1]) {
                    report_.issues.push_back(
                        {IssueKind::ShapeMismatch, id,
                         "linear expects " + std::to_string(n.weight.shape.dims[1]) +
                             " inputs, predecessor has " + std::to_string(in->count())});
                    break;
                }
                shapes_[id] = TensorShape{{n.weight.shape.dims[0]}};
                break;
            }
            case NodeKind::Conv2d: {
                const TensorShape* in = pred_shape(n, 0);
                if (!in || n.kernel.shape.dims.size() != 4) break;
                if (in->dims.size() != 3 || in->dims[0] != n.kernel.shape.dims[1]) {
                    report_.issues.push_back(
                        {IssueKind::ShapeMismatch, id,
                         "conv2d expects a {channels, height, width} predecessor matching "
                         "the kernel's input channels"});
                    break;
                }
                int h = in->dims[1], w = in->dims[2];
                int kh = n.kernel.shape.dims[2], kw = n.kernel.shape.dims[3];
                int oh = (h + 2 * n.padding - kh) / n.stride + 1;
                int ow = (w + 2 * n.padding - kw) / n.stride + 1;
                if (h + 2 * n.padding < kh || w + 2 * n.padding < kw || oh < 1 || ow < 1) {
                    report_.issues.push_back(
                        {IssueKind::ShapeMismatch, id, "conv2d kernel larger than padded input"});
                    break;
                }
                shapes_[id] = TensorShape{{n.kernel.shape.dims[0], oh, ow}};
                break;
            }
            case NodeKind::ReLU: {
                const TensorShape* in = pred_shape(n, 0);
                if (in) shapes_[id] = *in;
                break;
            }
            case NodeKind::MaxPool: {
                const TensorShape* in = pred_shape(n, 0);
                if (!in || n.window < 1) break;
                auto count = in->count();
                if (count % n.window != 0) {
                    report_.issues.push_back(
                        {IssueKind::ShapeMismatch, id,
                         "maxpool window " + std::to_string(n.window) +
                             " does not divide predecessor size " + std::to_string(count)});
                    break;
                }
                shapes_[id] = TensorShape{{static_cast<int>(count) / n.window}};
                break;
            }
            case NodeKind::Add:
            case NodeKind::Sub: {
                const TensorShape* a = pred_shape(n, 0);
                const TensorShape* b = pred_shape(n, 1);
                if (!a || !b) break;
                if (*a != *b) {
                    report_.issues.push_back(
                        {IssueKind::ShapeMismatch, id,
                         std::string(nodeKindName(n.kind)) + " operands have shapes " +
                             a->str() + " and " + b->str()});
                    break;
                }
                shapes_[id] = *a;
                break;
            }
            case NodeKind::Output: {
                const TensorShape* in = pred_shape(n, 0);
                if (in) shapes_[id] = *in;
                break;
            }
        }
    }
}

void Graph::checkReachability() {
    std::map<NodeId, std::vector<NodeId>> succ;
    for (const auto& n : nodes_) {
        for (NodeId p : n.inputs) succ[p].push_back(n.id);
    }
    auto bfs = [&](NodeId start, bool forward) {
        std::set<NodeId> seen{start};
        std::deque<NodeId> q{start};
        while (!q.empty()) {
            NodeId id = q.front();
            q.pop_front();
            const auto& next = forward ? succ[id] : node(id).inputs;
            for (NodeId s : next) {
                if (seen.insert(s).second) q.push_back(s);
            }
        }
        return seen;
    };
    if (!has(input_id_) || !has(output_id_)) return;
    std::set<NodeId> from_input = bfs(input_id_, true);
    std::set<NodeId> to_output = bfs(output_id_, false);
    for (const auto& n : nodes_) {
        if (!from_input.count(n.id)) {
            report_.issues.push_back(
                {IssueKind::Unreachable, n.id, "not reachable from the input node"});
        } else if (!to_output.count(n.id)) {
            report_.issues.push_back(
                {IssueKind::NotCoReachable, n.id, "does not reach the output node"});
        }
    }
}

Tensor Graph::forward(const Tensor& x) const {
    std::map<NodeId, Vector> values = forwardValues(x);
    Tensor out = Tensor::zeros(*shapeOf(output_id_));
    const Vector& y = values.at(output_id_);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = y[static_cast<Eigen::Index>(i)];
    return out;
}

std::map<NodeId, Vector> Graph::forwardValues(const Tensor& x) const {
    requireValid();
    if (x.count() != width(input_id_)) {
        throw Error("forward input has " + std::to_string(x.count()) +
                    " values, graph expects " + std::to_string(width(input_id_)));
    }
    std::map<NodeId, Vector> values;
    values[input_id_] = x.toVector();

    for (NodeId id : topo_) {
        const Node& n = node(id);
        if (n.kind == NodeKind::Input) continue;
        switch (n.kind) {
            case NodeKind::Linear: {
                const Vector& v = values.at(n.inputs[0]);
                values[id] = n.weight.toMatrix() * v + n.bias.toVector();
                break;
            }
            case NodeKind::Conv2d: {
                const Vector& v = values.at(n.inputs[0]);
                const TensorShape& in = *shapeOf(n.inputs[0]);
                const TensorShape& out = *shapeOf(id);
                int ic = in.dims[0], h = in.dims[1], w = in.dims[2];
                int oc = out.dims[0], oh = out.dims[1], ow = out.dims[2];
                int kh = n.kernel.shape.dims[2], kw = n.kernel.shape.dims[3];
                Vector y = Vector::Zero(out.count());
                const auto& k = n.kernel.data;
                for (int c = 0; c < oc; ++c) {
                    for (int i = 0; i < oh; ++i) {
                        for (int j = 0; j < ow; ++j) {
                            double acc = 0.0;
                            for (int cc = 0; cc < ic; ++cc) {
                                for (int ki = 0; ki < kh; ++ki) {
                                    int si = i * n.stride + ki - n.padding;
                                    if (si < 0 || si >= h) continue;
                                    for (int kj = 0; kj < kw; ++kj) {
                                        int sj = j * n.stride + kj - n.padding;
                                        if (sj < 0 || sj >= w) continue;
                                        acc += k[((static_cast<std::size_t>(c) * ic + cc) * kh + ki) * kw + kj] *
                                               v[(cc * h + si) * w + sj];
                                    }
                                }
                            }
                            y[(c * oh + i) * ow + j] = acc;
                        }
                    }
                }
                values[id] = std::move(y);
                break;
            }
            case NodeKind::ReLU:
                values[id] = values.at(n.inputs[0]).cwiseMax(0.0);
                break;
            case NodeKind::MaxPool: {
                const Vector& v = values.at(n.inputs[0]);
                int groups = static_cast<int>(v.size()) / n.window;
                Vector y(groups);
                for (int g = 0; g < groups; ++g) {
                    y[g] = v.segment(static_cast<Eigen::Index>(g) * n.window, n.window).maxCoeff();
                }
                values[id] = std::move(y);
                break;
            }
            case NodeKind::Add:
                values[id] = values.at(n.inputs[0]) + values.at(n.inputs[1]);
                break;
            case NodeKind::Sub:
                values[id] = values.at(n.inputs[0]) - values.at(n.inputs[1]);
                break;
            case NodeKind::Output:
                values[id] = values.at(n.inputs[0]);
                break;
            case NodeKind::Input:
                break;
        }
    }
    return values;
}

}  // namespace grcert
