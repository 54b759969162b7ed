#include "grcert/relax.hpp"

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "testsupport.hpp"

using namespace grcert;

namespace {

double reluDistance(double x, double dx) {
    return std::max(x + dx, 0.0) - std::max(x, 0.0);
}

LayerRelaxation reluAt(double l, double u) {
    IntervalBound b;
    b.lo = Vector::Constant(1, l);
    b.hi = Vector::Constant(1, u);
    return relaxRelu(b);
}

double lowerAt(const LayerRelaxation& r, double dxj) {
    return r.lower.eval(Vector::Constant(1, dxj))[0];
}

double upperAt(const LayerRelaxation& r, double dxj) {
    return r.upper.eval(Vector::Constant(1, dxj))[0];
}

}  // namespace

TEST_CASE("linear relaxation is the matrix itself with zero offset") {
    Matrix W(1, 2);
    W << 2.0, -3.0;
    LayerRelaxation r = relaxLinear(W);
    CHECK(r.lower.j.toDense() == W);
    CHECK(r.upper.j.toDense() == W);
    CHECK(r.lower.offset.isZero(0.0));
    CHECK(r.upper.offset.isZero(0.0));
    CHECK_FALSE(r.lower.k.has_value());

    LayerRelaxation id = relaxLinear(Matrix::Identity(3, 3));
    CHECK(id.lower.j.toDense().isIdentity(0.0));

    Rng rng(2);
    Matrix R = test::randomMatrix(rng, 3, 4);
    LayerRelaxation rr = relaxLinear(R);
    for (int s = 0; s < 20; ++s) {
        Vector dx = test::randomVector(rng, 4, 2.0);
        Vector want = R * dx;
        CHECK(rr.lower.eval(dx).isApprox(want, 1e-15));
        CHECK(rr.upper.eval(dx).isApprox(want, 1e-15));
    }
}

TEST_CASE("add and sub relaxations are exact") {
    Vector dj = Vector::Constant(1, 1.0);
    Vector dk = Vector::Constant(1, -2.0);
    LayerRelaxation add = relaxAdd(1);
    CHECK(add.lower.eval(dj, dk)[0] == -1.0);
    CHECK(add.upper.eval(dj, dk)[0] == -1.0);
    LayerRelaxation sub = relaxSub(1);
    CHECK(sub.lower.eval(dj, dk)[0] == 3.0);
    CHECK(sub.upper.eval(dj, dk)[0] == 3.0);

    Rng rng(4);
    LayerRelaxation add5 = relaxAdd(5);
    LayerRelaxation sub5 = relaxSub(5);
    for (int s = 0; s < 20; ++s) {
        Vector a = test::randomVector(rng, 5, 3.0);
        Vector b = test::randomVector(rng, 5, 3.0);
        CHECK(add5.lower.eval(a, b).isApprox(a + b, 1e-15));
        CHECK(add5.upper.eval(a, b).isApprox(a + b, 1e-15));
        CHECK(sub5.lower.eval(a, b).isApprox(a - b, 1e-15));
        CHECK(sub5.upper.eval(a, b).isApprox(a - b, 1e-15));
    }
}

TEST_CASE("relu relaxation case table") {
    SUBCASE("straddling interval [-1, 1]") {
        LayerRelaxation r = reluAt(-1.0, 1.0);
        CHECK(r.lower.j.diag[0] == 0.5);
        CHECK(r.lower.offset[0] == -0.5);
        CHECK(r.upper.j.diag[0] == 0.5);
        CHECK(r.upper.offset[0] == 0.5);
    }
    SUBCASE("nonnegative interval [2, 5]") {
        LayerRelaxation r = reluAt(2.0, 5.0);
        CHECK(r.lower.j.diag[0] == 0.0);
        CHECK(r.lower.offset[0] == 0.0);
        CHECK(r.upper.j.diag[0] == 1.0);
        CHECK(r.upper.offset[0] == 0.0);
    }
    SUBCASE("nonpositive interval [-3, 0]") {
        LayerRelaxation r = reluAt(-3.0, 0.0);
        CHECK(r.lower.j.diag[0] == 1.0);
        CHECK(r.lower.offset[0] == 0.0);
        CHECK(r.upper.j.diag[0] == 0.0);
        CHECK(r.upper.offset[0] == 0.0);
    }
    SUBCASE("degenerate point interval") {
        LayerRelaxation r = reluAt(0.0, 0.0);
        CHECK(r.lower.j.diag[0] == 0.0);
        CHECK(r.lower.offset[0] == 0.0);
        CHECK(r.upper.j.diag[0] == 0.0);
        CHECK(r.upper.offset[0] == 0.0);
    }
    SUBCASE("inverted interval throws") {
        IntervalBound b;
        b.lo = Vector::Constant(1, 1.0);
        b.hi = Vector::Constant(1, -1.0);
        CHECK_THROWS_AS(relaxRelu(b), Error);
    }
}

TEST_CASE("relu hull: containment and touching over random straddling intervals") {
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        double l = -std::exp(rng.uniform(-3.0, 2.0));
        double u = std::exp(rng.uniform(-3.0, 2.0));
        LayerRelaxation r = reluAt(l, u);

        for (int s = 0; s < 500; ++s) {
            double dxj = rng.uniform(l, u);
            double x = rng.uniform(-10.0, 10.0);
            double dxi = reluDistance(x, dxj);
            CHECK(lowerAt(r, dxj) <= dxi + 1e-9);
            CHECK(upperAt(r, dxj) >= dxi - 1e-9);
        }
        // Each hull line touches the feasible region at both interval ends:
        // lower meets Δx_i = Δx_j at l and Δx_i = 0 at u; upper mirrors it.
        CHECK(std::abs(lowerAt(r, l) - l) <= 1e-9 * (1.0 + std::abs(l)));
        CHECK(std::abs(lowerAt(r, u) - 0.0) <= 1e-9 * (1.0 + std::abs(u)));
        CHECK(std::abs(upperAt(r, l) - 0.0) <= 1e-9 * (1.0 + std::abs(l)));
        CHECK(std::abs(upperAt(r, u) - u) <= 1e-9 * (1.0 + std::abs(u)));
    }
}

TEST_CASE("stable relu cases contain all feasible points") {
    Rng rng(10);
    for (int trial = 0; trial < 50; ++trial) {
        double a = rng.uniform(0.1, 4.0), b = rng.uniform(0.1, 4.0);
        double lo = std::min(a, b), hi = std::max(a, b);
        LayerRelaxation pos = reluAt(lo, hi);
        LayerRelaxation neg = reluAt(-hi, -lo);
        for (int s = 0; s < 200; ++s) {
            double x = rng.uniform(-10.0, 10.0);
            double dp = rng.uniform(lo, hi);
            double vp = reluDistance(x, dp);
            CHECK(lowerAt(pos, dp) <= vp + 1e-9);
            CHECK(upperAt(pos, dp) >= vp - 1e-9);
            double dn = rng.uniform(-hi, -lo);
            double vn = reluDistance(x, dn);
            CHECK(lowerAt(neg, dn) <= vn + 1e-9);
            CHECK(upperAt(neg, dn) >= vn - 1e-9);
        }
    }
}

TEST_CASE("branched triangles: examples, containment, dominance") {
    LayerRelaxation nn = relaxReluBranched(BranchSign::NonNegative, 1);
    CHECK(lowerAt(nn, 0.4) == 0.0);
    CHECK(upperAt(nn, 0.4) == 0.4);
    LayerRelaxation np = relaxReluBranched(BranchSign::NonPositive, 1);
    CHECK(lowerAt(np, -0.4) == -0.4);
    CHECK(upperAt(np, -0.4) == 0.0);

    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        double l = -std::exp(rng.uniform(-2.0, 1.5));
        double u = std::exp(rng.uniform(-2.0, 1.5));
        LayerRelaxation unbranched = reluAt(l, u);
        for (int s = 0; s < 200; ++s) {
            double x = rng.uniform(-10.0, 10.0);
            double dpos = rng.uniform(0.0, u);
            double vpos = reluDistance(x, dpos);
            CHECK(lowerAt(nn, dpos) <= vpos + 1e-9);
            CHECK(upperAt(nn, dpos) >= vpos - 1e-9);
            // On its half-interval the triangle dominates the full hull.
            CHECK(lowerAt(nn, dpos) >= lowerAt(unbranched, dpos) - 1e-12);
            CHECK(upperAt(nn, dpos) <= upperAt(unbranched, dpos) + 1e-12);

            double dneg = rng.uniform(l, 0.0);
            double vneg = reluDistance(x, dneg);
            CHECK(lowerAt(np, dneg) <= vneg + 1e-9);
            CHECK(upperAt(np, dneg) >= vneg - 1e-9);
            CHECK(lowerAt(np, dneg) >= lowerAt(unbranched, dneg) - 1e-12);
            CHECK(upperAt(np, dneg) <= upperAt(unbranched, dneg) + 1e-12);
        }
    }
}

TEST_CASE("widening the interval never shrinks the relaxation gap") {
    Rng rng(14);
    for (int trial = 0; trial < 100; ++trial) {
        double l = -std::exp(rng.uniform(-2.0, 1.5));
        double u = std::exp(rng.uniform(-2.0, 1.5));
        double wider_l = l - std::exp(rng.uniform(-3.0, 1.0));
        double wider_u = u + std::exp(rng.uniform(-3.0, 1.0));
        LayerRelaxation inner = reluAt(l, u);
        LayerRelaxation outer = reluAt(wider_l, wider_u);
        for (int s = 0; s < 100; ++s) {
            double dxj = rng.uniform(l, u);
            double gap_inner = upperAt(inner, dxj) - lowerAt(inner, dxj);
            double gap_outer = upperAt(outer, dxj) - lowerAt(outer, dxj);
            CHECK(gap_outer >= gap_inner - 1e-12);
        }
    }
}
