#include "grcert/detail/batchnet.hpp"

#include <cmath>

namespace grcert::detail {

BatchNet batchForward(Tape& tape, const Graph& g, const Matrix& X, bool inputAsParam,
                      bool weightsAsParams) {
    g.requireValid();
    for (const Node& n : g.nodes()) {
        if (n.kind == NodeKind::Conv2d || n.kind == NodeKind::MaxPool) {
            throw Error("batched evaluation requires a lowered graph");
        }
    }
    if (X.cols() != g.width(g.inputId())) {
        throw Error("sample width " + std::to_string(X.cols()) +
                    " does not match the input width " +
                    std::to_string(g.width(g.inputId())));
    }

    BatchNet net;
    Var ones = tape.constant(Matrix::Ones(X.rows(), 1));
    std::map<NodeId, Var> vals;
    for (NodeId id : g.topoOrder()) {
        const Node& n = g.node(id);
        switch (n.kind) {
            case NodeKind::Input:
                net.input = inputAsParam ? tape.param(X) : tape.constant(X);
                vals[id] = net.input;
                break;
            case NodeKind::Linear: {
                Matrix W = n.weight.toMatrix();
                Matrix b = n.bias.toVector();
                Var wv = weightsAsParams ? tape.param(std::move(W)) : tape.constant(std::move(W));
                Var bv = weightsAsParams ? tape.param(std::move(b)) : tape.constant(std::move(b));
                net.weights[id] = wv;
                net.biases[id] = bv;
                vals[id] = tape.add(tape.matmul(vals.at(n.inputs[0]), tape.transpose(wv)),
                                    tape.matmul(ones, tape.transpose(bv)));
                break;
            }
            case NodeKind::ReLU:
                vals[id] = tape.posPart(vals.at(n.inputs[0]));
                break;
            case NodeKind::Add:
                vals[id] = tape.add(vals.at(n.inputs[0]), vals.at(n.inputs[1]));
                break;
            case NodeKind::Sub:
                vals[id] = tape.sub(vals.at(n.inputs[0]), vals.at(n.inputs[1]));
                break;
            case NodeKind::Output:
                vals[id] = vals.at(n.inputs[0]);
                break;
            default:
                throw Error("unsupported node kind in batched evaluation");
        }
    }
    net.logits = vals.at(g.outputId());
    return net;
}

std::pair<double, Matrix> softmaxCrossEntropy(const Matrix& logits,
                                              const std::vector<int>& labels) {
    const Eigen::Index B = logits.rows();
    const Eigen::Index K = logits.cols();
    if (B == 0) throw Error("cross-entropy needs a nonempty batch");
    if (static_cast<Eigen::Index>(labels.size()) != B) {
        throw Error("labels do not match the batch size");
    }

    double ce = 0.0;
    Matrix grad(B, K);
    for (Eigen::Index i = 0; i < B; ++i) {
        int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= K) throw Error("label out of range");
        double m = logits.row(i).maxCoeff();
        Eigen::ArrayXd e = (logits.row(i).array() - m).exp();
        double z = e.sum();
        ce += m + std::log(z) - logits(i, y);
        grad.row(i) = (e / z).matrix();
        grad(i, y) -= 1.0;
    }
    ce /= static_cast<double>(B);
    grad /= static_cast<double>(B);
    return {ce, std::move(grad)};
}

std::vector<int> argmaxRows(const Matrix& logits) {
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index best = 0;
        logits.row(i).maxCoeff(&best);
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

}  // namespace grcert::detail
