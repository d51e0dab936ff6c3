#include <gtest/gtest.h>

#include "bfn/complexlin.hpp"
#include "support/oracles.hpp"

using namespace bfn;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
    Rng rng(1);
    const auto m = oracle::random_matrix(2, 2, rng);
    EXPECT_EQ(matmul(ComplexMatrix::identity(2), m), m);
}

TEST(Matmul, ImaginaryUnitSquaredIsMinusOne) {
    ComplexMatrix j(1, 1);
    j.set(0, 0, {0.0, 1.0});
    const auto p = matmul(j, j);
    EXPECT_EQ(p(0, 0), cplx(-1.0, 0.0));
}

TEST(Matmul, MatchesTripleLoop) {
    Rng rng(2);
    const auto a = oracle::random_matrix(3, 4, rng);
    const auto b = oracle::random_matrix(4, 2, rng);
    EXPECT_LT(max_abs_diff(matmul(a, b), oracle::naive_matmul(a, b)), 1e-12);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    try {
        (void)matmul(ComplexMatrix(2, 3), ComplexMatrix(2, 3));
        FAIL();
    } catch (const shape_error& e) {
        EXPECT_NE(std::string(e.what()).find("2x3"), std::string::npos);
    }
}

TEST(Matmul, Associative) {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const auto a = oracle::random_matrix(3, 5, rng);
        const auto b = oracle::random_matrix(5, 4, rng);
        const auto c = oracle::random_matrix(4, 2, rng);
        const auto l = matmul(matmul(a, b), c);
        const auto r = matmul(a, matmul(b, c));
        EXPECT_LT(max_abs_diff(l, r), 1e-10 * std::max(1.0, l.frobenius_norm()));
    }
}

TEST(Matmul, AdjointOfProduct) {
    Rng rng(4);
    const auto a = oracle::random_matrix(3, 4, rng);
    const auto b = oracle::random_matrix(4, 5, rng);
    EXPECT_LT(max_abs_diff(matmul(a, b).adjoint(), matmul(b.adjoint(), a.adjoint())), 1e-12);
}

TEST(HermitianEig, Diagonal) {
    ComplexMatrix h(2, 2);
    h.set(0, 0, 2.0);
    h.set(1, 1, 1.0);
    const auto e = hermitian_eig(h);
    ASSERT_EQ(e.values.size(), 2u);
    EXPECT_NEAR(e.values[0], 2.0, 1e-12);
    EXPECT_NEAR(e.values[1], 1.0, 1e-12);
}

TEST(HermitianEig, PauliY) {
    ComplexMatrix h(2, 2);
    h.set(0, 1, {0.0, -1.0});
    h.set(1, 0, {0.0, 1.0});
    const auto e = hermitian_eig(h);
    EXPECT_NEAR(e.values[0], 1.0, 1e-12);
    EXPECT_NEAR(e.values[1], -1.0, 1e-12);
}

namespace {

ComplexMatrix random_hermitian(std::size_t n, Rng& rng) {
    const auto g = oracle::random_matrix(n, n, rng);
    return matmul(g, g.adjoint());
}

void expect_valid_decomposition(const ComplexMatrix& h) {
    const auto e = hermitian_eig(h);
    const std::size_t n = h.rows();
    const double hf = h.frobenius_norm();
    for (std::size_t k = 0; k + 1 < n; ++k) EXPECT_GE(e.values[k], e.values[k + 1]);
    for (std::size_t k = 0; k < n; ++k) {
        const auto v = e.vectors.column(k);
        const auto res = matmul(h, v) - v.scaled(e.values[k]);
        EXPECT_LT(res.frobenius_norm(), 1e-8 * std::max(hf, 1.0));
    }
    const auto gram = matmul(e.vectors.adjoint(), e.vectors);
    EXPECT_LT(max_abs_diff(gram, ComplexMatrix::identity(n)), 1e-8);
}

}  // namespace

TEST(HermitianEig, RecoversConstructedSpectrum) {
    Rng rng(5);
    const auto q = oracle::random_unitary(6, rng);
    const std::vector<double> lambda{5.0, 3.5, 2.0, 0.5, -1.0, -4.0};
    ComplexMatrix d(6, 6);
    for (std::size_t i = 0; i < 6; ++i) d.set(i, i, lambda[i]);
    const auto h = matmul(matmul(q, d), q.adjoint());
    const auto e = hermitian_eig(h);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(e.values[i], lambda[i], 1e-8);
    expect_valid_decomposition(h);
}

TEST(HermitianEig, RepeatedEigenvalues) {
    Rng rng(6);
    const auto q = oracle::random_unitary(5, rng);
    ComplexMatrix d(5, 5);
    const std::vector<double> lambda{2.0, 2.0, 2.0, 0.0, 0.0};
    for (std::size_t i = 0; i < 5; ++i) d.set(i, i, lambda[i]);
    const auto h = matmul(matmul(q, d), q.adjoint());
    const auto e = hermitian_eig(h);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(e.values[i], lambda[i], 1e-8);
    expect_valid_decomposition(h);
}

TEST(HermitianEig, TraceAndDeterminant) {
    Rng rng(7);
    for (std::size_t n : {2u, 3u}) {
        for (int trial = 0; trial < 5; ++trial) {
            const auto h = random_hermitian(n, rng);
            const auto e = hermitian_eig(h);
            double sum = 0.0, prod = 1.0;
            for (double v : e.values) {
                sum += v;
                prod *= v;
            }
            const double tr = trace(h).real();
            EXPECT_NEAR(sum, tr, 1e-9 * std::max(1.0, std::abs(tr)));
            const double det = oracle::det(oracle::to_rows(h)).real();
            EXPECT_NEAR(prod, det, 1e-9 * std::max(1.0, std::abs(det)));
        }
    }
}

TEST(HermitianEig, RandomSizesAreValid) {
    Rng rng(8);
    for (std::size_t n : {1u, 4u, 8u, 16u}) expect_valid_decomposition(random_hermitian(n, rng));
}

TEST(HermitianEig, RejectsNonHermitian) {
    ComplexMatrix h(2, 2);
    h.set(0, 1, 1.0);
    EXPECT_THROW((void)hermitian_eig(h), validation_error);
    EXPECT_THROW((void)hermitian_eig(ComplexMatrix(2, 3)), shape_error);
}

TEST(Lstsq, IdentitySystem) {
    Rng rng(9);
    const auto y = oracle::random_matrix(4, 2, rng);
    const auto ls = lstsq(ComplexMatrix::identity(4), y);
    EXPECT_LT(max_abs_diff(ls.solution, y), 1e-12);
    EXPECT_LT(ls.residual, 1e-12);
}

TEST(Lstsq, OverdeterminedConsistentDuplicates) {
    Rng rng(10);
    const auto base = oracle::random_matrix(3, 3, rng);
    ComplexMatrix a(6, 3);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 3; ++j) a.set(i, j, base(i % 3, j));
    const auto x = oracle::random_matrix(3, 1, rng);
    const auto ls = lstsq(a, matmul(a, x));
    EXPECT_LT(ls.residual, 1e-10);
    EXPECT_LT(max_abs_diff(ls.solution, x), 1e-8);
}

TEST(Lstsq, UnderdeterminedMinimumNorm) {
    Rng rng(11);
    const auto a = oracle::random_matrix(2, 4, rng);
    const auto y = oracle::random_matrix(2, 1, rng);
    const auto ls = lstsq(a, y);
    EXPECT_LT((matmul(a, ls.solution) - y).frobenius_norm(), 1e-10);

    // Pseudo-inverse via the eigendecomposition of aᴴa: x = Σ_{λ>0} v vᴴ aᴴ y / λ.
    const auto e = hermitian_eig(matmul(a.adjoint(), a));
    const auto rhs = matmul(a.adjoint(), y);
    ComplexMatrix pinv_x(4, 1);
    for (std::size_t k = 0; k < 4; ++k) {
        if (e.values[k] < 1e-10 * e.values[0]) continue;
        const auto v = e.vectors.column(k);
        const cplx coef = matmul(v.adjoint(), rhs)(0, 0) / e.values[k];
        pinv_x = pinv_x + v.scaled(coef);
    }
    EXPECT_LT(max_abs_diff(ls.solution, pinv_x), 1e-8);

    // Adding any null-space direction keeps a·x = y but grows the norm.
    for (std::size_t k = 2; k < 4; ++k) {
        const auto v = e.vectors.column(k);
        for (double s : {0.1, -0.5, 1.0}) {
            const auto alt = ls.solution + v.scaled(s);
            EXPECT_LT((matmul(a, alt) - y).frobenius_norm(), 1e-8);
            EXPECT_GT(alt.frobenius_norm(), ls.solution.frobenius_norm());
        }
    }
}

TEST(Lstsq, ResidualNeverExceedsZeroSolution) {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t r = 2 + rng.below(5), c = 1 + rng.below(5);
        const auto a = oracle::random_matrix(r, c, rng);
        const auto y = oracle::random_matrix(r, 2, rng);
        EXPECT_LE(lstsq(a, y).residual, y.frobenius_norm() + 1e-12);
    }
}

TEST(Lstsq, RankDeficientStaysFinite) {
    ComplexMatrix a(3, 2);
    for (std::size_t i = 0; i < 3; ++i) {
        a.set(i, 0, 1.0);
        a.set(i, 1, 1.0);
    }
    ComplexMatrix y(3, 1);
    for (std::size_t i = 0; i < 3; ++i) y.set(i, 0, 2.0);
    const auto ls = lstsq(a, y);
    EXPECT_TRUE(ls.solution.all_finite());
    EXPECT_LT(ls.residual, 1e-6);
}

TEST(Lstsq, ShapeMismatch) { EXPECT_THROW((void)lstsq(ComplexMatrix(3, 2), ComplexMatrix(2, 1)), shape_error); }
