#include "grcert/tape.hpp"

namespace grcert {

namespace {

void requireSameShape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(std::string(what) + ": shapes " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()));
    }
}

}  // namespace

Var Tape::push(Op op, Matrix value, int a, int b, double aux) {
    nodes_.push_back(Rec{op, a, b, aux, std::move(value)});
    grads_.emplace_back();
    return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Rec& Tape::at(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.idx) >= nodes_.size()) {
        throw Error("variable does not belong to this tape");
    }
    return nodes_[static_cast<std::size_t>(v.idx)];
}

void Tape::sigMix(std::uint64_t v) {
    signature_ = (signature_ ^ v) * 1099511628211ull;
}

Var Tape::constant(Matrix m) { return push(Op::Constant, std::move(m)); }

Var Tape::param(Matrix m) { return push(Op::Param, std::move(m)); }

const Matrix& Tape::value(Var v) const { return at(v).value; }

Matrix Tape::grad(Var v) const {
    const Rec& r = at(v);
    const Matrix& g = grads_[static_cast<std::size_t>(v.idx)];
    if (g.size() == 0) return Matrix::Zero(r.value.rows(), r.value.cols());
    return g;
}

Var Tape::matmul(Var a, Var b) {
    const Matrix& A = at(a).value;
    const Matrix& B = at(b).value;
    if (A.cols() != B.rows()) {
        throw Error("matmul: inner dimensions " + std::to_string(A.cols()) + " vs " +
                    std::to_string(B.rows()));
    }
    return push(Op::MatMul, A * B, a.idx, b.idx);
}

Var Tape::add(Var a, Var b) {
    requireSameShape(at(a).value, at(b).value, "add");
    return push(Op::Add, at(a).value + at(b).value, a.idx, b.idx);
}

Var Tape::sub(Var a, Var b) {
    requireSameShape(at(a).value, at(b).value, "sub");
    return push(Op::Sub, at(a).value - at(b).value, a.idx, b.idx);
}

Var Tape::neg(Var a) { return push(Op::Neg, -at(a).value, a.idx); }

Var Tape::transpose(Var a) { return push(Op::Transpose, at(a).value.transpose(), a.idx); }

Var Tape::scale(Var a, double s) { return push(Op::Scale, s * at(a).value, a.idx, -1, s); }

Var Tape::scalarMul(Var a, Var s) {
    const Matrix& S = at(s).value;
    if (S.rows() != 1 || S.cols() != 1) throw Error("scalarMul: scalar operand must be 1x1");
    return push(Op::ScalarMul, at(a).value * S(0, 0), a.idx, s.idx);
}

Var Tape::colScale(Var a, Var d) {
    const Matrix& A = at(a).value;
    const Matrix& D = at(d).value;
    if (D.cols() != 1 || D.rows() != A.cols()) {
        throw Error("colScale: diagonal must be a column vector of a.cols entries");
    }
    Matrix v = A.array().rowwise() * D.col(0).transpose().array();
    return push(Op::ColScale, std::move(v), a.idx, d.idx);
}

Var Tape::cwiseMul(Var a, Var b) {
    requireSameShape(at(a).value, at(b).value, "cwiseMul");
    return push(Op::CwiseMul, at(a).value.cwiseProduct(at(b).value), a.idx, b.idx);
}

Var Tape::posPart(Var a) {
    const Matrix& A = at(a).value;
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
        for (Eigen::Index i = 0; i < A.rows(); ++i) sigMix(A(i, j) > 0.0 ? 3 : 2);
    }
    return push(Op::PosPart, A.cwiseMax(0.0), a.idx);
}

Var Tape::negPart(Var a) {
    const Matrix& A = at(a).value;
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
        for (Eigen::Index i = 0; i < A.rows(); ++i) sigMix(A(i, j) < 0.0 ? 5 : 4);
    }
    return push(Op::NegPart, A.cwiseMin(0.0), a.idx);
}

Var Tape::rowAbsSum(Var a) {
    const Matrix& A = at(a).value;
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
        for (Eigen::Index i = 0; i < A.rows(); ++i) {
            sigMix(A(i, j) > 0.0 ? 7 : (A(i, j) < 0.0 ? 8 : 6));
        }
    }
    Matrix v = A.cwiseAbs().rowwise().sum();
    return push(Op::RowAbsSum, std::move(v), a.idx);
}

Var Tape::guardedRecip(Var a, double tiny) {
    const Matrix& A = at(a).value;
    Matrix v(A.rows(), A.cols());
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
        for (Eigen::Index i = 0; i < A.rows(); ++i) {
            bool degenerate = A(i, j) < tiny;
            sigMix(degenerate ? 10 : 9);
            v(i, j) = degenerate ? 0.0 : 1.0 / A(i, j);
        }
    }
    return push(Op::GuardedRecip, std::move(v), a.idx, -1, tiny);
}

Var Tape::detach(Var a) { return push(Op::Detach, at(a).value, a.idx); }

Var Tape::max2(Var a, Var b) {
    const Matrix& A = at(a).value;
    const Matrix& B = at(b).value;
    requireSameShape(A, B, "max2");
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
        for (Eigen::Index i = 0; i < A.rows(); ++i) sigMix(A(i, j) > B(i, j) ? 12 : 11);
    }
    return push(Op::Max2, A.cwiseMax(B), a.idx, b.idx);
}

Var Tape::sum(Var a) {
    Matrix v(1, 1);
    v(0, 0) = at(a).value.sum();
    return push(Op::Sum, std::move(v), a.idx);
}

void Tape::zeroGrad() {
    for (auto& g : grads_) g.resize(0, 0);
}

void Tape::accumulate(int idx, const Matrix& g) {
    Matrix& slot = grads_[static_cast<std::size_t>(idx)];
    if (slot.size() == 0) {
        slot = g;
    } else {
        slot += g;
    }
}

void Tape::backward(Var seed) {
    const Rec& s = at(seed);
    if (s.value.rows() != 1 || s.value.cols() != 1) {
        throw Error("backward: seed must be 1x1");
    }
    backward(seed, Matrix::Ones(1, 1));
}

void Tape::backward(Var seed, const Matrix& adjoint) {
    const Rec& s = at(seed);
    requireSameShape(s.value, adjoint, "backward");
    // Propagate through a per-call adjoint buffer so repeated backward calls
    // (e.g. one per output channel) each contribute exactly once to grads_.
    std::vector<Matrix> adj(static_cast<std::size_t>(seed.idx) + 1);
    auto accumulate = [&adj](int idx, const Matrix& g) {
        Matrix& slot = adj[static_cast<std::size_t>(idx)];
        if (slot.size() == 0) {
            slot = g;
        } else {
            slot += g;
        }
    };
    adj[static_cast<std::size_t>(seed.idx)] = adjoint;

    for (int idx = seed.idx; idx >= 0; --idx) {
        const Matrix& g = adj[static_cast<std::size_t>(idx)];
        if (g.size() == 0) continue;
        const Rec& r = nodes_[static_cast<std::size_t>(idx)];
        const auto val = [&](int i) -> const Matrix& {
            return nodes_[static_cast<std::size_t>(i)].value;
        };
        switch (r.op) {
            case Op::Constant:
            case Op::Param:
            case Op::Detach:
                break;
            case Op::MatMul:
                accumulate(r.a, g * val(r.b).transpose());
                accumulate(r.b, val(r.a).transpose() * g);
                break;
            case Op::Add:
                accumulate(r.a, g);
                accumulate(r.b, g);
                break;
            case Op::Sub:
                accumulate(r.a, g);
                accumulate(r.b, -g);
                break;
            case Op::Neg:
                accumulate(r.a, -g);
                break;
            case Op::Transpose:
                accumulate(r.a, g.transpose());
                break;
            case Op::Scale:
                accumulate(r.a, r.aux * g);
                break;
            case Op::ScalarMul: {
                double s0 = val(r.b)(0, 0);
                accumulate(r.a, g * s0);
                Matrix gs(1, 1);
                gs(0, 0) = g.cwiseProduct(val(r.a)).sum();
                accumulate(r.b, gs);
                break;
            }
            case Op::ColScale: {
                const Matrix& A = val(r.a);
                const Matrix& D = val(r.b);
                accumulate(r.a, g.array().rowwise() * D.col(0).transpose().array());
                Matrix gd = g.cwiseProduct(A).colwise().sum().transpose();
                accumulate(r.b, gd);
                break;
            }
            case Op::CwiseMul:
                accumulate(r.a, g.cwiseProduct(val(r.b)));
                accumulate(r.b, g.cwiseProduct(val(r.a)));
                break;
            case Op::PosPart: {
                const Matrix& A = val(r.a);
                accumulate(r.a, (A.array() > 0.0).cast<double>().matrix().cwiseProduct(g));
                break;
            }
            case Op::NegPart: {
                const Matrix& A = val(r.a);
                accumulate(r.a, (A.array() < 0.0).cast<double>().matrix().cwiseProduct(g));
                break;
            }
            case Op::RowAbsSum: {
                const Matrix& A = val(r.a);
                Matrix ga(A.rows(), A.cols());
                for (Eigen::Index j = 0; j < A.cols(); ++j) {
                    for (Eigen::Index i = 0; i < A.rows(); ++i) {
                        double sgn = A(i, j) > 0.0 ? 1.0 : (A(i, j) < 0.0 ? -1.0 : 0.0);
                        ga(i, j) = g(i, 0) * sgn;
                    }
                }
                accumulate(r.a, ga);
                break;
            }
            case Op::GuardedRecip: {
                const Matrix& A = val(r.a);
                Matrix ga(A.rows(), A.cols());
                for (Eigen::Index j = 0; j < A.cols(); ++j) {
                    for (Eigen::Index i = 0; i < A.rows(); ++i) {
                        ga(i, j) = A(i, j) < r.aux ? 0.0
                                                   : -g(i, j) / (A(i, j) * A(i, j));
                    }
                }
                accumulate(r.a, ga);
                break;
            }
            case Op::Max2: {
                const Matrix& A = val(r.a);
                const Matrix& B = val(r.b);
                Matrix mask = (A.array() > B.array()).cast<double>().matrix();
                accumulate(r.a, mask.cwiseProduct(g));
                accumulate(r.b, (Matrix::Ones(A.rows(), A.cols()) - mask).cwiseProduct(g));
                break;
            }
            case Op::Sum:
                accumulate(r.a, Matrix::Constant(val(r.a).rows(), val(r.a).cols(), g(0, 0)));
                break;
        }
    }

    for (std::size_t i = 0; i < adj.size(); ++i) {
        if (adj[i].size() != 0) this->accumulate(static_cast<int>(i), adj[i]);
    }
}

}  // namespace grcert
