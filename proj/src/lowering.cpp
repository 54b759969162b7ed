#include "grcert/lowering.hpp"

#include <algorithm>

namespace grcert {

namespace {

/// Row r of the result picks element cols[r] of a width-n predecessor.
Matrix selector(const std::vector<int>& cols, int n) {
    Matrix S = Matrix::Zero(static_cast<Eigen::Index>(cols.size()), n);
    for (std::size_t r = 0; r < cols.size(); ++r) S(static_cast<Eigen::Index>(r), cols[r]) = 1.0;
    return S;
}

Matrix denseConvMatrix(const Node& n, const TensorShape& in, const TensorShape& out) {
    int ic = in.dims[0], h = in.dims[1], w = in.dims[2];
    int oc = out.dims[0], oh = out.dims[1], ow = out.dims[2];
    int kh = n.kernel.shape.dims[2], kw = n.kernel.shape.dims[3];
    Matrix W = Matrix::Zero(out.count(), in.count());
    const auto& k = n.kernel.data;
    for (int c = 0; c < oc; ++c) {
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                Eigen::Index row = (static_cast<Eigen::Index>(c) * oh + i) * ow + j;
                for (int cc = 0; cc < ic; ++cc) {
                    for (int ki = 0; ki < kh; ++ki) {
                        int si = i * n.stride + ki - n.padding;
                        if (si < 0 || si >= h) continue;
                        for (int kj = 0; kj < kw; ++kj) {
                            int sj = j * n.stride + kj - n.padding;
                            if (sj < 0 || sj >= w) continue;
                            W(row, (static_cast<Eigen::Index>(cc) * h + si) * w + sj) =
                                k[((static_cast<std::size_t>(c) * ic + cc) * kh + ki) * kw + kj];
                        }
                    }
                }
            }
        }
    }
    return W;
}

/// Emits nodes computing the per-group maximum of a group-major vector with
/// `groups` rows of `m` columns, halving the column count per round. The node
/// holding the final width-`groups` result gets id `finalId`.
void emitMaxTree(std::vector<Node>& out, NodeId src, int groups, int m,
                 NodeId finalId, NodeId& nextId) {
    if (m == 1) {  // width-1 windows: the max is the identity
        out.push_back(Node::linear(finalId, src, Matrix::Identity(groups, groups),
                                   Vector::Zero(groups)));
        return;
    }
    NodeId cur = src;
    while (m > 1) {
        int pairs = m / 2;
        bool odd = (m % 2) != 0;
        int next_m = pairs + (odd ? 1 : 0);
        int n = groups * m;

        std::vector<int> left, right;
        for (int g = 0; g < groups; ++g) {
            for (int p = 0; p < pairs; ++p) {
                left.push_back(g * m + 2 * p);
                right.push_back(g * m + 2 * p + 1);
            }
        }
        int paired = groups * pairs;
        Vector zp = Vector::Zero(paired);
        NodeId a = nextId++, b = nextId++, t = nextId++, r = nextId++;
        out.push_back(Node::linear(a, cur, selector(left, n), zp));
        out.push_back(Node::linear(b, cur, selector(right, n), zp));
        out.push_back(Node::sub(t, a, b));
        out.push_back(Node::relu(r, t));

        bool last = (next_m == 1);
        NodeId y = last && !odd ? finalId : nextId++;
        out.push_back(Node::add(y, b, r));  // b + relu(a - b) = max(a, b)

        if (odd) {
            // Interleave the pairwise maxima with the carried last column.
            int width = groups * next_m;
            std::vector<int> carry_cols;
            for (int g = 0; g < groups; ++g) carry_cols.push_back(g * m + (m - 1));
            Matrix embed_max = Matrix::Zero(width, paired);
            Matrix embed_carry = Matrix::Zero(width, groups);
            for (int g = 0; g < groups; ++g) {
                for (int p = 0; p < pairs; ++p) embed_max(g * next_m + p, g * pairs + p) = 1.0;
                embed_carry(g * next_m + pairs, g) = 1.0;
            }
            Vector zw = Vector::Zero(width);
            NodeId c = nextId++, em = nextId++, ec = nextId++;
            NodeId merged = last ? finalId : nextId++;
            out.push_back(Node::linear(c, cur, selector(carry_cols, n), Vector::Zero(groups)));
            out.push_back(Node::linear(em, y, std::move(embed_max), zw));
            out.push_back(Node::linear(ec, c, std::move(embed_carry), zw));
            out.push_back(Node::add(merged, em, ec));
            cur = merged;
        } else {
            cur = y;
        }
        m = next_m;
    }
}

}  // namespace

Graph lowerConv(const Graph& g) {
    g.requireValid();
    std::vector<Node> nodes;
    for (const Node& n : g.nodes()) {
        if (n.kind != NodeKind::Conv2d) {
            nodes.push_back(n);
            continue;
        }
        const TensorShape& in = *g.shapeOf(n.inputs[0]);
        const TensorShape& out = *g.shapeOf(n.id);
        Matrix W = denseConvMatrix(n, in, out);
        nodes.push_back(Node::linear(n.id, n.inputs[0], std::move(W),
                                     Vector::Zero(out.count())));
    }
    return Graph(std::move(nodes), g.inputId(), g.outputId());
}

Graph lowerMaxpool(const Graph& g) {
    g.requireValid();
    std::vector<Node> nodes;
    NodeId next_id = g.maxId() + 1;
    for (const Node& n : g.nodes()) {
        if (n.kind != NodeKind::MaxPool) {
            nodes.push_back(n);
            continue;
        }
        int in_width = g.width(n.inputs[0]);
        int groups = in_width / n.window;
        emitMaxTree(nodes, n.inputs[0], groups, n.window, n.id, next_id);
    }
    return Graph(std::move(nodes), g.inputId(), g.outputId());
}

Graph lower(const Graph& g) { return lowerMaxpool(lowerConv(g)); }

bool isLowered(const Graph& g) {
    return std::none_of(g.nodes().begin(), g.nodes().end(), [](const Node& n) {
        return n.kind == NodeKind::Conv2d || n.kind == NodeKind::MaxPool;
    });
}

Graph selectOutput(const Graph& g, int channel) {
    g.requireValid();
    int k = g.width(g.outputId());
    if (channel < 0 || channel >= k) {
        throw Error("output channel " + std::to_string(channel) +
                    " out of range for " + std::to_string(k) + " channels");
    }
    Matrix row = Matrix::Zero(1, k);
    row(0, channel) = 1.0;
    NodeId sel = g.maxId() + 1;
    std::vector<Node> nodes;
    for (const Node& n : g.nodes()) {
        if (n.id == g.outputId()) {
            nodes.push_back(Node::linear(sel, n.inputs[0], row, Vector::Zero(1)));
            Node out = n;
            out.inputs = {sel};
            nodes.push_back(out);
        } else {
            nodes.push_back(n);
        }
    }
    return Graph(std::move(nodes), g.inputId(), g.outputId());
}

}  // namespace grcert
