#ifndef EBSC_CREDIBLE_HPP
#define EBSC_CREDIBLE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ebsc/dr_basis.hpp"
#include "ebsc/driver.hpp"
#include "ebsc/errors.hpp"
#include "ebsc/noise_model.hpp"
#include "ebsc/random.hpp"

namespace ebsc {

enum class CovarianceMode {
    spectral, // S* R in the DR basis: Phi diag(w rho) Phi^T
    toeplitz, // S* times the Toeplitz matrix of r_hat, symmetrized
};

inline constexpr int min_draws = 100;
inline constexpr int toeplitz_lags = 200;

// Posterior scale matrix U diag(scale^2) U^T with orthonormal U.
struct PosteriorFactor {
    Eigen::MatrixXd basis;
    Eigen::VectorXd scale;
};

inline PosteriorFactor posterior_factor(const FitResult& fit, const DRBasis& basis,
                                        CovarianceMode mode = CovarianceMode::spectral)
{
    detail::require(basis.n == fit.n && basis.q == fit.q_hat, "basis does not match the fit");
    const Eigen::VectorXd w = shrinkage(fit.lambda_hat, basis.scaled_eta, fit.rho_hat.rho);
    PosteriorFactor f;
    if (mode == CovarianceMode::spectral) {
        f.basis = basis.phi;
        f.scale = (w.array() * fit.rho_hat.rho.array()).sqrt().matrix();
        return f;
    }
    const int n = fit.n;
    const int lags = std::min(n - 1, toeplitz_lags);
    const Eigen::MatrixXd R = toeplitz(fit.r_hat.head(lags + 1), n);
    const Eigen::MatrixXd S = basis.phi * w.asDiagonal() * basis.phi.transpose();
    Eigen::MatrixXd M = S * R;
    M = 0.5 * (M + M.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    if (es.info() != Eigen::Success) throw numerical_error("posterior covariance eigendecomposition failed");
    const double top = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -1e-8 * top)
        throw numerical_error("symmetrized posterior covariance has a negative eigenvalue " +
                              std::to_string(es.eigenvalues().minCoeff()));
    f.basis = es.eigenvectors();
    f.scale = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return f;
}

namespace detail {

// Coefficients of draw j in the factor basis, before the sigma and mean shift:
// scale o z * sqrt((n+1)/U), z ~ N(0, I), U ~ chi^2_{n+1}.
inline Eigen::VectorXd draw_coefficients(const PosteriorFactor& f, std::uint64_t seed, std::uint64_t j)
{
    const Eigen::Index n = f.scale.size();
    Engine eng = make_engine(seed, j);
    std::normal_distribution<double> nd;
    Eigen::VectorXd c(n);
    for (Eigen::Index i = 0; i < n; ++i) c(i) = nd(eng);
    std::chi_squared_distribution<double> chi(static_cast<double>(n + 1));
    const double u = chi(eng);
    return c.cwiseProduct(f.scale) * std::sqrt((n + 1.0) / u);
}

inline std::vector<double> radius_statistics(const PosteriorFactor& f, int num_draws, std::uint64_t seed)
{
    std::vector<double> d(num_draws);
    for (int j = 0; j < num_draws; ++j) d[j] = draw_coefficients(f, seed, j).squaredNorm();
    return d;
}

inline double empirical_quantile(std::vector<double> v, double p)
{
    const std::size_t k = static_cast<std::size_t>(std::ceil(p * v.size()));
    const std::size_t idx = std::clamp<std::size_t>(k, 1, v.size()) - 1;
    std::nth_element(v.begin(), v.begin() + idx, v.end());
    return v[idx];
}

inline void check_draw_args(int num_draws, double alpha)
{
    require(num_draws >= min_draws, "need at least 100 posterior draws");
    require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
}

} // namespace detail

// Draws from the multivariate t with n+1 degrees of freedom, location fhat and
// scale sigma2hat * S R. Columns are curves.
inline Eigen::MatrixXd sample_posterior(const FitResult& fit, const DRBasis& basis, int num_draws, std::uint64_t seed,
                                        CovarianceMode mode = CovarianceMode::spectral)
{
    detail::require(num_draws >= min_draws, "need at least 100 posterior draws");
    const auto f = posterior_factor(fit, basis, mode);
    const double sd = std::sqrt(fit.sigma2hat);
    Eigen::MatrixXd coef(fit.n, num_draws);
    for (int j = 0; j < num_draws; ++j) coef.col(j) = detail::draw_coefficients(f, seed, j);
    Eigen::MatrixXd d = f.basis * coef * sd;
    d.colwise() += fit.fhat;
    return d;
}

// (1 - alpha) quantile of (n+1) Z^T S R Z / U, the radius statistic in units of sigma2hat.
inline double radius_quantile(const PosteriorFactor& factor, double alpha, int num_draws, std::uint64_t seed)
{
    detail::check_draw_args(num_draws, alpha);
    return detail::empirical_quantile(detail::radius_statistics(factor, num_draws, seed), 1.0 - alpha);
}

inline double radius_quantile(const FitResult& fit, const DRBasis& basis, double alpha, int num_draws,
                              std::uint64_t seed, CovarianceMode mode = CovarianceMode::spectral)
{
    return radius_quantile(posterior_factor(fit, basis, mode), alpha, num_draws, seed);
}

struct CredibleSet {
    double alpha = 0.05;
    double L = 1.0;
    double s_n = 0.0;
    double radius = 0.0; // L * sigma2hat * s_n
    int num_draws = 0;
    int retained = 0;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    Eigen::MatrixXd draws; // retained curves as columns, only when requested
};

struct CredibleOptions {
    CovarianceMode mode = CovarianceMode::spectral;
    bool keep_draws = false;
    int block = 256;
};

inline bool contains(const CredibleSet& set, const FitResult& fit, const Eigen::VectorXd& f)
{
    return (f - fit.fhat).squaredNorm() <= set.radius;
}

// Keeps the ceil((1 - alpha) N) draws closest to fhat. Retained draws are
// regenerated from their seeds in blocks, so memory stays O(n * block).
inline CredibleSet credible_set(const FitResult& fit, const DRBasis& basis, double alpha, double L, int num_draws,
                                std::uint64_t seed, const CredibleOptions& opt = {})
{
    detail::check_draw_args(num_draws, alpha);
    detail::require(L >= 1.0, "credible-set multiplier L must be >= 1");
    const auto f = posterior_factor(fit, basis, opt.mode);
    const auto stat = detail::radius_statistics(f, num_draws, seed);
    std::vector<int> order(num_draws);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return stat[a] < stat[b]; });
    const int keep = std::clamp(static_cast<int>(std::ceil((1.0 - alpha) * num_draws - 1e-9)), 1, num_draws);

    CredibleSet out;
    out.alpha = alpha;
    out.L = L;
    out.num_draws = num_draws;
    out.retained = keep;
    out.s_n = stat[order[keep - 1]];
    out.radius = L * fit.sigma2hat * out.s_n;

    std::vector<int> kept(order.begin(), order.begin() + keep);
    std::sort(kept.begin(), kept.end());
    const double sd = std::sqrt(fit.sigma2hat);
    out.lower = Eigen::VectorXd::Constant(fit.n, std::numeric_limits<double>::infinity());
    out.upper = Eigen::VectorXd::Constant(fit.n, -std::numeric_limits<double>::infinity());
    if (opt.keep_draws) out.draws.resize(fit.n, keep);
    const int block = std::max(1, opt.block);
    for (int start = 0; start < keep; start += block) {
        const int m = std::min(block, keep - start);
        Eigen::MatrixXd coef(fit.n, m);
        for (int j = 0; j < m; ++j) coef.col(j) = detail::draw_coefficients(f, seed, kept[start + j]);
        Eigen::MatrixXd d = f.basis * coef * sd;
        d.colwise() += fit.fhat;
        out.lower = out.lower.cwiseMin(d.rowwise().minCoeff());
        out.upper = out.upper.cwiseMax(d.rowwise().maxCoeff());
        if (opt.keep_draws) out.draws.middleCols(start, m) = d;
    }
    return out;
}

} // namespace ebsc

#endif
