#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "grcert/common.hpp"

namespace grcert {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct TensorShape {
    std::vector<int> dims;

    TensorShape() = default;
    TensorShape(std::initializer_list<int> d) : dims(d) {}
    explicit TensorShape(std::vector<int> d) : dims(std::move(d)) {}

    std::int64_t count() const;
    bool valid() const;  // all extents >= 1
    std::string str() const;

    bool operator==(const TensorShape& o) const { return dims == o.dims; }
    bool operator!=(const TensorShape& o) const { return dims != o.dims; }
};

/// Dense real tensor, flat row-major storage.
struct Tensor {
    TensorShape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(TensorShape s, std::vector<double> d);

    static Tensor zeros(const TensorShape& s);
    static Tensor fromVector(const Vector& v);
    /// Row-major matrix, shape {rows, cols}.
    static Tensor fromMatrix(const Matrix& m);

    std::int64_t count() const { return shape.count(); }
    bool allFinite() const;

    Vector toVector() const;
    /// Interprets the first shape dim as rows, remaining dims flattened as cols.
    Matrix toMatrix() const;
};

}  // namespace grcert
