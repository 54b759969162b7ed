#include "grcert/tensor.hpp"

#include <cmath>
#include <sstream>

namespace grcert {

std::int64_t TensorShape::count() const {
    std::int64_t n = 1;
    for (int d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

bool TensorShape::valid() const {
    if (dims.empty()) return false;
    for (int d : dims)
        if (d < 1) return false;
    return true;
}

std::string TensorShape::str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << ",";
        os << dims[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(TensorShape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::int64_t>(data.size()) != shape.count())
        throw Error("tensor data length " + std::to_string(data.size()) +
                    " does not match shape " + shape.str());
}

Tensor Tensor::zeros(const TensorShape& s) {
    return Tensor(s, std::vector<double>(static_cast<std::size_t>(s.count()), 0.0));
}

Tensor Tensor::fromVector(const Vector& v) {
    return Tensor(TensorShape{static_cast<int>(v.size())},
                  std::vector<double>(v.data(), v.data() + v.size()));
}

Tensor Tensor::fromMatrix(const Matrix& m) {
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) d.push_back(m(r, c));
    return Tensor(TensorShape{static_cast<int>(m.rows()), static_cast<int>(m.cols())},
                  std::move(d));
}

bool Tensor::allFinite() const {
    for (double x : data)
        if (!std::isfinite(x)) return false;
    return true;
}

Vector Tensor::toVector() const {
    return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

Matrix Tensor::toMatrix() const {
    if (shape.dims.empty()) throw Error("toMatrix on empty tensor");
    const Eigen::Index rows = shape.dims[0];
    const Eigen::Index cols = static_cast<Eigen::Index>(shape.count() / shape.dims[0]);
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        data.data(), rows, cols);
}

}  // namespace grcert
