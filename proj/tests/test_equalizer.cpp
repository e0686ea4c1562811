#include <gtest/gtest.h>

#include <random>

#include "ddmux/channel.hpp"
#include "ddmux/equalizer.hpp"
#include "oracles.hpp"

using namespace ddmux;

namespace {

CMatrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng)
{
    CMatrix a(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) a.col(j) = oracle::random_vector(std::size_t(rows), rng);
    return a;
}

double rel(const CVector& a, const CVector& b) { return (a - b).norm() / b.norm(); }

} // namespace

TEST(EqualizeMmse, IdentityZeroForcing)
{
    std::mt19937_64 rng(1);
    const FrameConfig f(4, 4, 0);
    const auto y = oracle::random_grid(f, rng);
    EXPECT_LT((equalize_mmse(y, CMatrix::Identity(16, 16), 0.0).vec() - y.vec()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(EqualizeMmse, ZeroForcingResidual)
{
    std::mt19937_64 rng(2);
    const FrameConfig f(4, 4, 0);
    const CMatrix h = random_matrix(16, 16, rng);
    const auto y = oracle::random_grid(f, rng);
    const auto d = equalize_mmse(y, h, 0.0);
    EXPECT_LE((h * d.vec() - y.vec()).norm(), 1e-8 * y.vec().norm());
}

TEST(EqualizeMmse, UnitaryDiagonalClosedForm)
{
    std::mt19937_64 rng(3);
    const FrameConfig f(8, 4, 0);
    const CMatrix om = oracle::omega_matrix(8, 4);
    const auto y = oracle::random_grid(f, rng);
    const double s2 = 0.37;
    const CVector expected = om.adjoint() * y.vec() / (1.0 + s2);
    EXPECT_LT((equalize_mmse(y, om, s2).vec() - expected).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(EqualizeMmse, SingularZeroForcingFails)
{
    const FrameConfig f(2, 2, 0);
    CMatrix h = CMatrix::Identity(4, 4);
    h(3, 3) = 0.0;
    EXPECT_THROW(equalize_mmse(DelayDopplerGrid(f), h, 0.0), SolverError);
    EXPECT_NO_THROW(equalize_mmse(DelayDopplerGrid(f), h, 0.1));
    EXPECT_THROW(equalize_mmse(DelayDopplerGrid(f), CMatrix::Identity(3, 3), 0.1), ShapeError);
}

TEST(EqualizeMmse, MatchesNormalEquationsOracle)
{
    std::mt19937_64 rng(4);
    const CMatrix h = random_matrix(24, 10, rng);
    const CVector y = oracle::random_vector(24, rng);
    const CMatrix g = h.adjoint() * h + 0.2 * CMatrix::Identity(10, 10);
    const CVector expected = g.inverse() * h.adjoint() * y;
    EXPECT_LT(rel(mmse_solve(h, y, 0.2), expected), 1e-12);
}

TEST(Lsmr, IdentityConvergesImmediately)
{
    std::mt19937_64 rng(5);
    const CMatrix eye = CMatrix::Identity(16, 16);
    const CVector y = oracle::random_vector(16, rng);
    const auto res = equalize_iterative(y, DenseOperator(eye), 0.25, 50, 1e-12);
    EXPECT_TRUE(res.converged);
    EXPECT_LE(res.iterations, 2u);
    EXPECT_LT((res.x - y / 1.25).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Lsmr, MatchesDirectSolveOnWellConditionedMatrix)
{
    std::mt19937_64 rng(6);
    for (int t = 0; t < 10; ++t) {
        const CMatrix h = CMatrix::Identity(16, 16) * 4.0 + random_matrix(16, 16, rng);
        const CVector y = oracle::random_vector(16, rng);
        for (double s2 : {0.0, 0.01, 1.0}) {
            const auto res = equalize_iterative(y, DenseOperator(h), s2, 200, 1e-12);
            EXPECT_TRUE(res.converged);
            EXPECT_LT(rel(res.x, mmse_solve(h, y, s2)), 1e-6);
            EXPECT_NEAR(res.residual, (y - h * res.x).norm(), 1e-9);
        }
    }
}

TEST(Lsmr, ZeroBudgetAndZeroRhs)
{
    std::mt19937_64 rng(7);
    const CMatrix h = random_matrix(8, 8, rng);
    const CVector y = oracle::random_vector(8, rng);
    const auto none = equalize_iterative(y, DenseOperator(h), 0.1, 0, 1e-10);
    EXPECT_FALSE(none.converged);
    EXPECT_EQ(none.iterations, 0u);
    EXPECT_EQ(none.x, CVector::Zero(8));
    const auto zero = equalize_iterative(CVector::Zero(8), DenseOperator(h), 0.1, 10, 1e-10);
    EXPECT_TRUE(zero.converged);
    EXPECT_EQ(zero.x, CVector::Zero(8));
}

TEST(Lsmr, ReportsNonConvergence)
{
    std::mt19937_64 rng(8);
    const CMatrix h = random_matrix(64, 64, rng);
    const CVector y = oracle::random_vector(64, rng);
    const auto res = equalize_iterative(y, DenseOperator(h), 0.0, 3, 1e-14);
    EXPECT_FALSE(res.converged);
    EXPECT_EQ(res.iterations, 3u);
    EXPECT_GT(res.residual, 0.0);
}

TEST(Lsmr, MatrixFreeChannelAgreesWithDirectMmse)
{
    std::mt19937_64 rng(9);
    const FrameConfig f(16, 16, 4);
    for (int t = 0; t < 3; ++t) {
        const auto ch = oracle::random_channel(f, rng);
        for (auto w : {Waveform::OTFS, Waveform::SC_IFDMA}) {
            const CMatrix h = build_dd_matrix(ch, w).matrix;
            const CVector y = oracle::random_vector(256, rng);
            const auto res = equalize_iterative(y, DdChannelOperator(ch, w), 0.05, 500, 1e-12);
            EXPECT_TRUE(res.converged);
            EXPECT_LT(rel(res.x, mmse_solve(h, y, 0.05)), 1e-6);
        }
    }
}

TEST(ColumnSubset, MatchesSelectedColumns)
{
    std::mt19937_64 rng(10);
    const CMatrix h = random_matrix(12, 12, rng);
    const std::vector<std::size_t> cols = {0, 3, 4, 9, 11};
    CMatrix sub(12, 5);
    for (std::size_t i = 0; i < cols.size(); ++i) sub.col(Eigen::Index(i)) = h.col(Eigen::Index(cols[i]));
    const DenseOperator full(h);
    const ColumnSubset<DenseOperator> op(full, cols);
    const CVector v = oracle::random_vector(5, rng);
    const CVector u = oracle::random_vector(12, rng);
    EXPECT_LT((op.apply(v) - sub * v).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LT((op.apply_adjoint(u) - sub.adjoint() * u).cwiseAbs().maxCoeff(), 1e-13);
    const CVector y = oracle::random_vector(12, rng);
    EXPECT_LT(rel(lsmr(op, y, 0.3, 100, 1e-13).x, mmse_solve(sub, y, 0.09)), 1e-8);
    EXPECT_THROW(ColumnSubset<DenseOperator>(full, {12}), std::out_of_range);
}
