#ifndef EBSC_SMOOTHER_HPP
#define EBSC_SMOOTHER_HPP

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "ebsc/dr_basis.hpp"
#include "ebsc/errors.hpp"
#include "ebsc/noise_model.hpp"

namespace ebsc {

struct SmootherSpec {
    double lambda = 1.0;
    int q = 2;
    SpectralModel spectral;
};

struct SmoothFit {
    Eigen::VectorXd fhat;
    Eigen::VectorXd B;      // Phi^T y
    Eigen::VectorXd shrink; // per-coefficient weights in (0, 1]
    double sigma2hat = 0.0;
    double edf = 0.0;
};

namespace detail {

inline void check_spec(const SmootherSpec& spec, const DRBasis& basis, Eigen::Index n)
{
    require(spec.q == basis.q, "smoother order " + std::to_string(spec.q) + " does not match basis order " +
                                   std::to_string(basis.q));
    require(n == basis.n, "response length does not match basis size");
    require(spec.spectral.size() == basis.n, "spectral vector length does not match basis size");
    require(spec.lambda >= 0.0 && std::isfinite(spec.lambda), "lambda must be finite and non-negative");
}

} // namespace detail

// w_i = 1 / (1 + lambda n eta_i rho_i).
inline Eigen::VectorXd shrinkage(double lambda, const Eigen::VectorXd& scaled_eta, const Eigen::VectorXd& rho)
{
    return (1.0 + lambda * (scaled_eta.array() * rho.array())).inverse().matrix();
}

// Posterior-mode variance under the (q+1)/2, 1/2 inverse-gamma prior:
// (sum_{i>q} B_i^2 lambda nu_i w_i + 1) / (n + 1).
inline double variance_estimate(double lambda, int q, const Eigen::VectorXd& scaled_eta, const Eigen::VectorXd& rho,
                                const Eigen::VectorXd& B)
{
    const Eigen::Index n = B.size();
    double s = 0.0;
    for (Eigen::Index i = q; i < n; ++i) {
        const double x = lambda * scaled_eta(i);
        s += B(i) * B(i) * x / (1.0 + x * rho(i));
    }
    return (s + 1.0) / (static_cast<double>(n) + 1.0);
}

inline SmoothFit apply_fast(const SmootherSpec& spec, const Eigen::VectorXd& y, const DRBasis& basis)
{
    detail::check_spec(spec, basis, y.size());
    SmoothFit f;
    f.B = coefficients(basis, y);
    f.shrink = shrinkage(spec.lambda, basis.scaled_eta, spec.spectral.rho);
    f.fhat = basis.phi * f.shrink.cwiseProduct(f.B);
    f.sigma2hat = variance_estimate(spec.lambda, spec.q, basis.scaled_eta, spec.spectral.rho, f.B);
    f.edf = f.shrink.sum();
    return f;
}

namespace detail {

struct ExactSystem {
    Eigen::LLT<Eigen::MatrixXd> chol_r;
    Eigen::MatrixXd gram; // Phi^T R^-1 Phi
    Eigen::LDLT<Eigen::MatrixXd> a;
    Eigen::VectorXd coef;
    Eigen::VectorXd fhat;
    Eigen::VectorXd rinv_y;
};

inline ExactSystem solve_exact(const SmootherSpec& spec, const Eigen::VectorXd& y, const DRBasis& basis,
                               const Eigen::MatrixXd& R)
{
    check_spec(spec, basis, y.size());
    require(R.rows() == basis.n && R.cols() == basis.n, "correlation matrix has the wrong size");
    ExactSystem s;
    s.chol_r.compute(R);
    if (s.chol_r.info() != Eigen::Success) throw numerical_error("correlation matrix is not positive definite");
    const Eigen::MatrixXd rinv_phi = s.chol_r.solve(basis.phi);
    s.gram = basis.phi.transpose() * rinv_phi;
    s.gram = 0.5 * (s.gram + s.gram.transpose()).eval();
    Eigen::MatrixXd a = s.gram;
    a.diagonal() += spec.lambda * basis.scaled_eta;
    s.a.compute(a);
    if (s.a.info() != Eigen::Success) throw numerical_error("penalized normal equations are singular");
    s.rinv_y = s.chol_r.solve(y);
    s.coef = s.a.solve(basis.phi.transpose() * s.rinv_y);
    s.fhat = basis.phi * s.coef;
    return s;
}

} // namespace detail

// Dense generalized smoother f = Phi (Phi^T R^-1 Phi + lambda diag(n eta))^-1 Phi^T R^-1 y.
// shrink holds the diagonal of the smoother in basis coordinates.
inline SmoothFit apply_exact(const SmootherSpec& spec, const Eigen::VectorXd& y, const DRBasis& basis,
                             const Eigen::MatrixXd& R)
{
    auto s = detail::solve_exact(spec, y, basis, R);
    SmoothFit f;
    f.B = coefficients(basis, y);
    f.fhat = s.fhat;
    const Eigen::MatrixXd hat = s.a.solve(s.gram);
    f.shrink = hat.diagonal();
    f.edf = hat.trace();
    const double resid = s.rinv_y.dot(y - s.fhat);
    f.sigma2hat = (resid + 1.0) / (static_cast<double>(y.size()) + 1.0);
    return f;
}

// Log marginal likelihood after integrating out the coefficients and sigma^2,
// up to a constant in lambda.
inline double log_marginal(const SmootherSpec& spec, const Eigen::VectorXd& y, const DRBasis& basis)
{
    detail::check_spec(spec, basis, y.size());
    const Eigen::VectorXd B = coefficients(basis, y);
    const auto& nu = basis.scaled_eta;
    const auto& rho = spec.spectral.rho;
    const double n = static_cast<double>(y.size());
    double quad = 0.0, logdet = 0.0;
    for (Eigen::Index i = spec.q; i < B.size(); ++i) {
        const double x = spec.lambda * nu(i);
        const double w = 1.0 / (1.0 + x * rho(i));
        quad += B(i) * B(i) * x * w;
        logdet += std::log(x * w);
    }
    return -0.5 * (n + 1.0) * std::log(quad + 1.0) + 0.5 * logdet;
}

struct ExactScore {
    double t_lambda = 0.0;
    double sigma2hat = 0.0;
    double trace = 0.0;
};

// Unscaled lambda score with the full correlation matrix:
// y^T R^-1 (I - S) S y - sigma2hat (tr S - q).
inline ExactScore t_lambda_exact(const SmootherSpec& spec, const Eigen::VectorXd& y, const DRBasis& basis,
                                 const Eigen::MatrixXd& R)
{
    auto s = detail::solve_exact(spec, y, basis, R);
    ExactScore out;
    out.trace = s.a.solve(s.gram).trace();
    const Eigen::VectorXd resid = y - s.fhat;
    out.sigma2hat = (s.rinv_y.dot(resid) + 1.0) / (static_cast<double>(y.size()) + 1.0);
    const Eigen::VectorXd rinv_f = s.chol_r.solve(s.fhat);
    out.t_lambda = resid.dot(rinv_f) - out.sigma2hat * (out.trace - spec.q);
    return out;
}

} // namespace ebsc

#endif
