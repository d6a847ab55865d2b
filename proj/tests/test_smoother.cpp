#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ebsc/estimating.hpp"
#include "ebsc/simulation.hpp"
#include "ebsc/smoother.hpp"

using namespace ebsc;

namespace {

Eigen::VectorXd gaussian(int n, std::uint64_t seed, double sd = 1.0)
{
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> nd(0.0, sd);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = nd(eng);
    return v;
}

const DRBasis& basis(int n, int q) { return default_basis_cache().get(n, q); }

Eigen::VectorXd banded_row()
{
    Eigen::VectorXd row(4);
    row << 1.0, 0.4, 0.2, 0.1;
    return row;
}

} // namespace

TEST(ApplyFast, InfinitePenaltyIsLinearRegression)
{
    const int n = 150;
    const Eigen::VectorXd y = gaussian(n, 1);
    const Eigen::VectorXd t = uniform_grid(n);
    Eigen::MatrixXd X(n, 2);
    X.col(0).setOnes();
    X.col(1) = t;
    const Eigen::VectorXd ls = X * X.colPivHouseholderQr().solve(y);
    const auto f = apply_fast({1e12, 2, white_spectral_model(n)}, y, basis(n, 2));
    EXPECT_LT((f.fhat - ls).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ApplyFast, ZeroPenaltyInterpolates)
{
    const int n = 90;
    const Eigen::VectorXd y = gaussian(n, 2);
    const auto f = apply_fast({0.0, 3, white_spectral_model(n)}, y, basis(n, 3));
    EXPECT_LT((f.fhat - y).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((f.shrink.array() - 1.0).abs().maxCoeff(), 1e-15);
}

TEST(ApplyFast, NullSpaceDirectionIsReproduced)
{
    const int n = 90;
    const auto& b = basis(n, 2);
    for (double lambda : {1e-8, 1.0, 1e8}) {
        const auto f = apply_fast({lambda, 2, white_spectral_model(n)}, b.phi.col(0), b);
        EXPECT_LT((f.fhat - b.phi.col(0)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(ApplyFast, ReproducesPolynomialsForAnySpectrum)
{
    const int n = 120;
    const Eigen::VectorXd t = uniform_grid(n);
    std::mt19937_64 eng(4);
    std::lognormal_distribution<double> ln(0.0, 1.0);
    for (int q = 1; q <= 6; ++q) {
        Eigen::VectorXd raw(n);
        for (int i = 0; i < n; ++i) raw(i) = ln(eng);
        const auto rho = make_spectral_model(raw);
        for (double lambda : {1e-6, 1e-2, 1e3}) {
            for (int d = 0; d < q; ++d) {
                const Eigen::VectorXd p = (2.0 * t.array() - 0.3).pow(d).matrix();
                const auto f = apply_fast({lambda, q, rho}, p, basis(n, q));
                EXPECT_LT((f.fhat - p).cwiseAbs().maxCoeff(), 1e-8) << "q=" << q << " d=" << d;
            }
        }
    }
}

TEST(ApplyFast, ShrinkageWeightsAndEdf)
{
    const int n = 200;
    const Eigen::VectorXd y = gaussian(n, 5);
    for (int q = 1; q <= 4; ++q) {
        double prev_edf = n + 1.0;
        for (double lambda : {1e-12, 1e-9, 1e-6, 1e-3, 1.0}) {
            const auto f = apply_fast({lambda, q, white_spectral_model(n)}, y, basis(n, q));
            for (int i = 0; i < q; ++i) EXPECT_EQ(f.shrink(i), 1.0);
            EXPECT_GT(f.shrink.minCoeff(), 0.0);
            EXPECT_LE(f.shrink.maxCoeff(), 1.0);
            for (int i = 1; i < n; ++i) EXPECT_LE(f.shrink(i), f.shrink(i - 1));
            EXPECT_GE(f.edf, q);
            EXPECT_LE(f.edf, n);
            EXPECT_LT(f.edf, prev_edf);
            prev_edf = f.edf;
            EXPECT_GT(f.sigma2hat, 0.0);
        }
    }
}

TEST(ApplyFast, VarianceEstimateClosedForm)
{
    const int n = 100;
    const auto& b = basis(n, 2);
    const Eigen::VectorXd y = gaussian(n, 6);
    const auto rho = true_spectral({NoiseKind::ar1, {0.5}, 1.0}, n);
    const double lambda = 1e-5;
    const auto f = apply_fast({lambda, 2, rho}, y, b);
    double s = 0.0;
    for (int i = 2; i < n; ++i) {
        const double x = lambda * b.scaled_eta(i);
        s += f.B(i) * f.B(i) * x / (1.0 + x * rho.rho(i));
    }
    EXPECT_NEAR(f.sigma2hat, (s + 1.0) / (n + 1.0), 1e-14);
    const auto zero = apply_fast({lambda, 2, rho}, Eigen::VectorXd::Zero(n), b);
    EXPECT_NEAR(zero.sigma2hat, 1.0 / (n + 1.0), 1e-15);
    EXPECT_EQ(zero.fhat.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ApplyFast, RejectsMismatchedInputs)
{
    const auto& b = basis(64, 2);
    EXPECT_THROW(apply_fast({1.0, 3, white_spectral_model(64)}, Eigen::VectorXd::Zero(64), b), precondition_error);
    EXPECT_THROW(apply_fast({1.0, 2, white_spectral_model(64)}, Eigen::VectorXd::Zero(63), b), precondition_error);
    EXPECT_THROW(apply_fast({-1.0, 2, white_spectral_model(64)}, Eigen::VectorXd::Zero(64), b), precondition_error);
}

TEST(ApplyExact, IdentityCorrelationMatchesFast)
{
    const int n = 160;
    const Eigen::VectorXd y = make_function(TestFunction::f1, n) + gaussian(n, 7, 0.33);
    for (int q : {1, 2, 3}) {
        const SmootherSpec spec{1e-3 * std::pow(10.0, -2.0 * q), q, white_spectral_model(n)};
        const auto fast = apply_fast(spec, y, basis(n, q));
        const auto exact = apply_exact(spec, y, basis(n, q), Eigen::MatrixXd::Identity(n, n));
        EXPECT_LT((fast.fhat - exact.fhat).cwiseAbs().maxCoeff(), 1e-8 * exact.fhat.cwiseAbs().maxCoeff());
        EXPECT_NEAR(fast.sigma2hat, exact.sigma2hat, 1e-10);
        EXPECT_NEAR(fast.edf, exact.edf, 1e-8);
    }
}

TEST(ApplyExact, ZeroDataGivesPriorVariance)
{
    const int n = 80;
    const auto f = apply_exact({1e-4, 2, white_spectral_model(n)}, Eigen::VectorXd::Zero(n), basis(n, 2),
                               toeplitz(banded_row(), n));
    EXPECT_EQ(f.fhat.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_NEAR(f.sigma2hat, 1.0 / (n + 1.0), 1e-15);
}

TEST(ApplyExact, RejectsIndefiniteCorrelation)
{
    const int n = 40;
    Eigen::MatrixXd R = Eigen::MatrixXd::Identity(n, n);
    R(0, 1) = R(1, 0) = 2.0;
    EXPECT_THROW(apply_exact({1e-4, 2, white_spectral_model(n)}, Eigen::VectorXd::Ones(n), basis(n, 2), R),
                 numerical_error);
}

// The diagonal approximation of a banded Toeplitz R improves with n. The
// observed rate at the estimated lambda is slower than 1/n (about n^-0.4 to
// n^-0.8) because the effective bandwidth of S grows with n.
TEST(ApplyExact, BandedCorrelationGapShrinksWithN)
{
    const Eigen::VectorXd row = banded_row();
    for (int q : {1, 2, 3}) {
        std::vector<double> gap;
        for (int n : {128, 256, 512}) {
            const auto& b = basis(n, q);
            const auto rho = spectral_from_autocorr(row, n);
            Eigen::LLT<Eigen::MatrixXd> llt(toeplitz(row, n));
            double mean_gap = 0.0;
            const int reps = 6;
            for (int r = 0; r < reps; ++r) {
                const Eigen::VectorXd noise = llt.matrixL() * gaussian(n, 40 + 10 * q + r);
                const Eigen::VectorXd y = make_function(TestFunction::f1, n) + 0.33 * noise;
                const auto sol = solve_lambda(b, rho.rho, coefficients(b, y));
                const SmootherSpec spec{sol.lambda, q, rho};
                const auto fast = apply_fast(spec, y, b);
                const auto exact = apply_exact(spec, y, b, toeplitz(row, n));
                mean_gap += (fast.fhat - exact.fhat).cwiseAbs().maxCoeff() / exact.fhat.cwiseAbs().maxCoeff() / reps;
            }
            gap.push_back(mean_gap);
        }
        EXPECT_LT(gap[1], gap[0]) << "q=" << q;
        EXPECT_LT(gap[2], gap[1]) << "q=" << q;
        RecordProperty("gap_q" + std::to_string(q), std::to_string(gap[0]) + "," + std::to_string(gap[1]) + "," +
                                                        std::to_string(gap[2]));
    }
}

TEST(LogMarginal, ZeroDataClosedForm)
{
    const int n = 100;
    const auto& b = basis(n, 2);
    const auto rho = true_spectral({NoiseKind::ma1, {0.4}, 1.0}, n);
    const double lambda = 3e-6;
    double expect = 0.0;
    for (int i = 2; i < n; ++i) {
        const double x = lambda * b.scaled_eta(i);
        expect += 0.5 * std::log(x / (1.0 + x * rho.rho(i)));
    }
    EXPECT_NEAR(log_marginal({lambda, 2, rho}, Eigen::VectorXd::Zero(n), b), expect, 1e-10 * std::abs(expect));
}

// d l / d log(lambda) = - n_{lambda,q} T_lambda / (2 sigma2hat).
TEST(LogMarginal, FiniteDifferenceMatchesLambdaScore)
{
    const int n = 300;
    std::mt19937_64 eng(12);
    std::uniform_real_distribution<double> u(-14.0, -2.0);
    for (int q : {2, 3}) {
        const auto& b = basis(n, q);
        const Eigen::VectorXd y = make_function(TestFunction::f1, n) + gaussian(n, 8, 0.33);
        const auto rho = true_spectral({NoiseKind::ar1, {0.3}, 1.0}, n);
        const Eigen::VectorXd B = coefficients(b, y);
        for (int k = 0; k < 5; ++k) {
            const double lambda = std::pow(10.0, u(eng));
            const double h = 1e-4;
            const double lp = log_marginal({lambda * std::exp(h), q, rho}, y, b);
            const double lm = log_marginal({lambda * std::exp(-h), q, rho}, y, b);
            const double fd = (lp - lm) / (2 * h);
            const double s2 = variance_estimate(lambda, q, b.scaled_eta, rho.rho, B);
            const double analytic = -scaling_factor(lambda, q, n) * t_lambda(lambda, b, rho.rho, B) / (2.0 * s2);
            EXPECT_NEAR(fd, analytic, 1e-4 * std::max(1.0, std::abs(analytic))) << "q=" << q << " lambda=" << lambda;
        }
    }
}

TEST(LogMarginal, MaximizerCoincidesWithScoreRoot)
{
    const int n = 400;
    const auto& b = basis(n, 2);
    const Eigen::VectorXd y = make_function(TestFunction::f1, n) + gaussian(n, 9, 0.33);
    const auto rho = white_spectral_model(n);
    const auto grid = resolve_grid({}, n, 2);
    const auto sol = solve_lambda(b, rho.rho, coefficients(b, y));
    ASSERT_TRUE(sol.root_found);
    double best = -std::numeric_limits<double>::infinity(), arg = 0.0;
    const double step = (std::log(grid.max) - std::log(grid.min)) / (grid.points - 1);
    for (int j = 0; j < grid.points; ++j) {
        const double lambda = std::exp(std::log(grid.min) + step * j);
        const double l = log_marginal({lambda, 2, rho}, y, b);
        if (l > best) {
            best = l;
            arg = lambda;
        }
    }
    EXPECT_LE(std::abs(std::log(arg / sol.lambda)), step * 1.0001);
}

TEST(ExactScore, IdentityCorrelationMatchesApproximateScore)
{
    const int n = 200;
    const Eigen::VectorXd y = make_function(TestFunction::f3, n) + gaussian(n, 10, 0.33);
    for (int q : {1, 2, 4}) {
        const auto& b = basis(n, q);
        for (double lambda : {1e-9, 1e-6, 1e-3}) {
            const SmootherSpec spec{lambda, q, white_spectral_model(n)};
            const auto ex = t_lambda_exact(spec, y, b, Eigen::MatrixXd::Identity(n, n));
            const double approx = t_lambda(lambda, b, spec.spectral.rho, coefficients(b, y)) * scaling_factor(lambda, q, n);
            EXPECT_NEAR(ex.t_lambda, approx, 1e-8 * std::max(1.0, std::abs(approx)));
        }
    }
}
