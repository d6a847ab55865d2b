#ifndef EBSC_DR_BASIS_HPP
#define EBSC_DR_BASIS_HPP

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "ebsc/errors.hpp"

namespace ebsc {

inline constexpr int min_order = 1;
inline constexpr int max_order = 6;

inline void check_order(int q)
{
    detail::require(q >= min_order && q <= max_order,
                    "penalty order must lie in [1, 6], got " + std::to_string(q));
}

// Asymptotic eigenvalue of the order-beta periodic-free Sobolev penalty on [0,1].
// Zero on the polynomial null space (i <= beta).
inline double sobolev_eigenvalue(int beta, int i)
{
    detail::require(beta >= 1 && i >= 1, "sobolev_eigenvalue needs beta >= 1 and i >= 1");
    if (i <= beta) return 0.0;
    return std::pow(std::numbers::pi * (i - 0.5 * (beta + 1)), 2 * beta);
}

namespace detail {

// Shifted Legendre polynomial, orthonormal on [0,1].
inline double shifted_legendre(int degree, double x)
{
    const double s = 2.0 * x - 1.0;
    double p0 = 1.0;
    if (degree == 0) return 1.0;
    double p1 = s;
    for (int k = 2; k <= degree; ++k) {
        const double p2 = ((2.0 * k - 1.0) * s * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    return p1 * std::sqrt(2.0 * degree + 1.0);
}

} // namespace detail

// Eigenfunction of the order-beta Sobolev problem with natural boundary
// conditions: a cosine plus exponentially decaying boundary layers at both ends.
// The layer amplitudes are fitted so that derivatives beta..2beta-1 vanish at 0;
// the other end follows from the (-1)^(i+1) reflection symmetry.
// For i <= beta the function is the orthonormal polynomial of degree i-1.
class SobolevEigenfunction {
public:
    SobolevEigenfunction(int beta, int i) : beta_(beta), i_(i)
    {
        detail::require(beta >= 1 && i >= 1, "SobolevEigenfunction needs beta >= 1 and i >= 1");
        if (i <= beta) return;
        k_ = std::numbers::pi * (i - 0.5 * (beta + 1));
        phase_ = std::numbers::pi * (beta - 1) / 4.0;
        parity_ = (i % 2 == 1) ? 1.0 : -1.0;
        for (int j = beta % 2; j <= beta - 2; j += 2) {
            const auto a = std::polar(1.0, std::numbers::pi * j / (2.0 * beta));
            terms_.push_back({a, false});
            if (j != 0) terms_.push_back({a, true});
        }
        fit_boundary_layers();
    }

    double operator()(double x) const
    {
        if (i_ <= beta_) return detail::shifted_legendre(i_ - 1, x);
        double layer = 0.0;
        for (std::size_t m = 0; m < terms_.size(); ++m) {
            const auto& t = terms_[m];
            const auto near = std::exp(-t.root * (k_ * x));
            const auto far = std::exp(-t.root * (k_ * (1.0 - x)));
            layer += coef_[m] * (part(t, near) + parity_ * part(t, far));
        }
        return std::numbers::sqrt2 * (std::cos(k_ * x + phase_) + layer);
    }

    double frequency() const noexcept { return k_; }
    const std::vector<double>& layer_coefficients() const noexcept { return coef_; }
    // Max |residual| of the scaled boundary equations; zero up to rounding.
    double boundary_residual() const noexcept { return residual_; }

private:
    struct Term {
        std::complex<double> root;
        bool imaginary;
    };

    static double part(const Term& t, std::complex<double> z)
    {
        return t.imaginary ? z.imag() : z.real();
    }

    void fit_boundary_layers()
    {
        const int rows = beta_;
        const int cols = static_cast<int>(terms_.size());
        Eigen::MatrixXd a(rows, cols);
        Eigen::VectorXd rhs(rows);
        for (int r = 0; r < rows; ++r) {
            const int l = beta_ + r;
            // l-th derivative at x = 0, divided by k^l.
            rhs(r) = -std::cos(phase_ + l * std::numbers::pi / 2.0);
            for (int c = 0; c < cols; ++c) {
                const auto& t = terms_[c];
                const auto z = std::pow(-t.root, l) + parity_ * std::pow(t.root, l) * std::exp(-t.root * k_);
                a(r, c) = part(t, z);
            }
        }
        if (cols == 0) {
            residual_ = rhs.cwiseAbs().maxCoeff();
            return;
        }
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        if (!(sv(sv.size() - 1) > 1e-12 * sv(0)))
            throw numerical_error("boundary-layer system is singular for beta=" + std::to_string(beta_) +
                                  ", i=" + std::to_string(i_));
        const Eigen::VectorXd c = svd.solve(rhs);
        coef_.assign(c.data(), c.data() + c.size());
        residual_ = (a * c - rhs).cwiseAbs().maxCoeff();
    }

    int beta_;
    int i_;
    double k_ = 0.0;
    double phase_ = 0.0;
    double parity_ = 1.0;
    std::vector<Term> terms_;
    std::vector<double> coef_;
    double residual_ = 0.0;
};

inline double sobolev_eigenfunction(int beta, int i, double x)
{
    return SobolevEigenfunction(beta, i)(x);
}

enum class EigenvalueMode {
    asymptotic, // n*eta_i = (pi (i - (q+1)/2))^(2q)
    exact,      // eigenvalues of the discretized penalty; small n only
};

// Orthonormal Demmler-Reinsch basis on the grid t_k = k/(n-1).
// Column i (0-based) has penalty eta(i); the first q columns span polynomials.
struct DRBasis {
    int n = 0;
    int q = 0;
    Eigen::MatrixXd phi;
    Eigen::VectorXd eta;
    Eigen::VectorXd scaled_eta; // n * eta
};

inline Eigen::VectorXd uniform_grid(int n)
{
    detail::require(n >= 2, "grid needs at least two points");
    return Eigen::VectorXd::LinSpaced(n, 0.0, 1.0);
}

struct PenaltyModes {
    Eigen::VectorXd eta;     // ascending, length n - q
    Eigen::MatrixXd vectors; // n x (n - q), matching order
};

inline constexpr int max_exact_size = 512;

namespace detail {

inline Eigen::MatrixXd polynomial_columns(const Eigen::VectorXd& t, int q)
{
    const int n = static_cast<int>(t.size());
    Eigen::MatrixXd m(n, q);
    for (int k = 0; k < n; ++k) {
        double v = 1.0;
        for (int j = 0; j < q; ++j) {
            m(k, j) = v;
            v *= t(k) - 0.5;
        }
    }
    return m;
}

// Householder orthonormalization with a positive R diagonal.
inline Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& m)
{
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
    const auto& r = qr.matrixQR();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    return q;
}

inline void fix_signs(Eigen::MatrixXd& phi)
{
    for (Eigen::Index j = 0; j < phi.cols(); ++j) {
        const double scale = phi.col(j).cwiseAbs().maxCoeff();
        for (Eigen::Index k = 0; k < phi.rows(); ++k) {
            if (std::abs(phi(k, j)) > 1e-10 * scale) {
                if (phi(k, j) < 0.0) phi.col(j) *= -1.0;
                break;
            }
        }
    }
}

// Reproducing kernel of W_q with the polynomial part removed:
// int_0^min(s,t) (s-u)^(q-1) (t-u)^(q-1) du / ((q-1)!)^2, expanded termwise.
inline double sobolev_kernel(double s, double t, int q)
{
    const double m = std::min(s, t);
    const double d = std::max(s, t) - m;
    double binom = 1.0, total = 0.0, fact = 1.0;
    for (int j = 1; j < q; ++j) fact *= j;
    for (int j = 0; j < q; ++j) {
        total += binom * std::pow(d, q - 1 - j) * std::pow(m, q + j) / (q + j);
        binom = binom * (q - 1 - j) / (j + 1);
    }
    return total / (fact * fact);
}

} // namespace detail

// Exact eigensystem of the discretized penalty for small n. The penalty is
// the inverse of the kernel Gram matrix on the complement of the polynomials.
// Low modes (largest kernel eigenvalues) are accurate; the top of the
// spectrum is limited by conditioning.
inline PenaltyModes exact_penalty_modes(int n, int q)
{
    check_order(q);
    detail::require(n >= 4 * q, "exact penalty needs n >= 4q");
    detail::require(n <= max_exact_size, "exact penalty eigenvalues are limited to n <= 512");
    const Eigen::VectorXd t = uniform_grid(n);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(detail::polynomial_columns(t, q));
    const Eigen::MatrixXd full = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd comp = full.rightCols(n - q);
    Eigen::MatrixXd k(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b <= a; ++b) k(a, b) = k(b, a) = detail::sobolev_kernel(t(a), t(b), q);
    const Eigen::MatrixXd g = comp.transpose() * k * comp;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    if (es.info() != Eigen::Success) throw numerical_error("kernel eigendecomposition failed");
    PenaltyModes out;
    out.eta.resize(n - q);
    out.vectors.resize(n, n - q);
    const auto& mu = es.eigenvalues();
    const double floor = mu.cwiseAbs().maxCoeff() * 1e-300;
    for (int j = 0; j < n - q; ++j) {
        const int src = n - q - 1 - j;
        out.eta(j) = 1.0 / std::max(mu(src), floor);
        out.vectors.col(j) = comp * es.eigenvectors().col(src);
    }
    return out;
}

inline DRBasis build_basis(int n, int q, EigenvalueMode mode = EigenvalueMode::asymptotic)
{
    check_order(q);
    detail::require(n >= 4 * q, "basis needs n >= 4q (n=" + std::to_string(n) + ", q=" + std::to_string(q) + ")");
    const Eigen::VectorXd t = uniform_grid(n);
    Eigen::MatrixXd m(n, n);
    m.leftCols(q) = detail::polynomial_columns(t, q);
    const double inv_root_n = 1.0 / std::sqrt(static_cast<double>(n));
    for (int j = q; j < n; ++j) {
        const SobolevEigenfunction psi(q, j + 1);
        for (int k = 0; k < n; ++k) m(k, j) = psi(t(k)) * inv_root_n;
    }
    DRBasis b;
    b.n = n;
    b.q = q;
    b.phi = detail::orthonormalize(m);
    detail::fix_signs(b.phi);
    b.eta.resize(n);
    if (mode == EigenvalueMode::asymptotic) {
        for (int i = 0; i < n; ++i) b.eta(i) = sobolev_eigenvalue(q, i + 1) / n;
    } else {
        const auto modes = exact_penalty_modes(n, q);
        b.eta.head(q).setZero();
        b.eta.tail(n - q) = modes.eta;
    }
    b.scaled_eta = b.eta * static_cast<double>(n);
    return b;
}

inline Eigen::VectorXd coefficients(const DRBasis& basis, const Eigen::VectorXd& y)
{
    detail::require(y.size() == basis.n, "response length " + std::to_string(y.size()) +
                                             " does not match basis size " + std::to_string(basis.n));
    return basis.phi.transpose() * y;
}

} // namespace ebsc

#endif
