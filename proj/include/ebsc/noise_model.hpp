#ifndef EBSC_NOISE_MODEL_HPP
#define EBSC_NOISE_MODEL_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ebsc/errors.hpp"
#include "ebsc/random.hpp"

namespace ebsc {

inline constexpr double default_delta = 0.05;

// Spectral density on the grid, normalized so sum(rho) == n and
// delta <= rho <= 1/delta, together with its autocorrelation row.
struct SpectralModel {
    Eigen::VectorXd rho;
    Eigen::VectorXd r;
    double delta = default_delta;

    int size() const noexcept { return static_cast<int>(rho.size()); }
};

namespace detail {

// cos(pi * m / (n-1)) for m mod 2(n-1); exact periodic indexing of the cosine grid.
class CosineTable {
public:
    explicit CosineTable(int n) : period_(2 * static_cast<std::int64_t>(n - 1)), table_(period_)
    {
        for (std::int64_t m = 0; m < period_; ++m)
            table_[m] = std::cos(std::numbers::pi * static_cast<double>(m) / static_cast<double>(n - 1));
    }
    double operator()(std::int64_t k, std::int64_t l) const { return table_[(k * l) % period_]; }

private:
    std::int64_t period_;
    std::vector<double> table_;
};

} // namespace detail

// r_k = n^-1 sum_l cos(k pi t_l) rho_l, k = 0..n-1.
inline Eigen::VectorXd autocorr_from_spectral(const Eigen::VectorXd& rho)
{
    const int n = static_cast<int>(rho.size());
    detail::require(n >= 2, "spectral vector needs at least two entries");
    const detail::CosineTable c(n);
    Eigen::VectorXd r(n);
    for (int k = 0; k < n; ++k) {
        double s = 0.0;
        for (int l = 0; l < n; ++l) s += c(k, l) * rho(l);
        r(k) = s / n;
    }
    return r;
}

// rho_i = 1 + 2 sum_{k>=1} r_k cos(k pi t_i). r may be shorter or longer than n.
inline Eigen::VectorXd raw_spectral_from_autocorr(const Eigen::VectorXd& r, int n)
{
    detail::require(n >= 2 && r.size() >= 1, "need n >= 2 and a nonempty autocorrelation row");
    const detail::CosineTable c(n);
    Eigen::VectorXd rho(n);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (Eigen::Index k = 1; k < r.size(); ++k) s += r(k) * c(k, i);
        rho(i) = r(0) + 2.0 * s;
    }
    return rho;
}

// Scale and clip so that delta <= rho <= 1/delta and sum(rho) == n both hold.
// The scale c solves sum clip(c * raw, delta, 1/delta) = n (monotone in c).
// Non-positive raw entries sit at the floor.
inline Eigen::VectorXd normalize_spectrum(const Eigen::VectorXd& raw, double delta)
{
    detail::require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    const Eigen::Index n = raw.size();
    detail::require(n >= 1, "empty spectral vector");
    const double hi = 1.0 / delta;
    double pos_sum = 0.0;
    Eigen::Index pos = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        detail::require(std::isfinite(raw(i)), "non-finite spectral value");
        if (raw(i) > 0.0) {
            pos_sum += raw(i);
            ++pos;
        }
    }
    if (pos == 0) return Eigen::VectorXd::Ones(n);
    auto clipped = [&](double c) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = std::clamp(c * raw(i), delta, hi);
        return v;
    };
    const double target = static_cast<double>(n);
    if (pos * hi + (n - pos) * delta <= target) {
        Eigen::VectorXd v(n);
        const double rest = (n == pos) ? 0.0 : (target - pos * hi) / (n - pos);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = raw(i) > 0.0 ? hi : rest;
        return v;
    }
    double lo_c = target / pos_sum, hi_c = lo_c;
    while (clipped(lo_c).sum() > target) lo_c *= 0.5;
    while (clipped(hi_c).sum() < target) hi_c *= 2.0;
    for (int it = 0; it < 200 && hi_c > lo_c * (1.0 + 1e-15); ++it) {
        const double mid = std::sqrt(lo_c * hi_c);
        (clipped(mid).sum() < target ? lo_c : hi_c) = mid;
    }
    Eigen::VectorXd v = clipped(0.5 * (lo_c + hi_c));
    // Spread the bisection residual over the unclipped entries.
    double free_sum = 0.0, fixed_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (v(i) > delta && v(i) < hi) free_sum += v(i);
        else fixed_sum += v(i);
    }
    if (free_sum > 0.0) {
        const double s = (target - fixed_sum) / free_sum;
        for (Eigen::Index i = 0; i < n; ++i)
            if (v(i) > delta && v(i) < hi) v(i) = std::clamp(v(i) * s, delta, hi);
    }
    return v;
}

inline SpectralModel make_spectral_model(const Eigen::VectorXd& raw, double delta = default_delta)
{
    SpectralModel m;
    m.delta = delta;
    m.rho = normalize_spectrum(raw, delta);
    m.r = autocorr_from_spectral(m.rho);
    return m;
}

inline SpectralModel white_spectral_model(int n, double delta = default_delta)
{
    SpectralModel m;
    m.delta = delta;
    m.rho = Eigen::VectorXd::Ones(n);
    m.r = Eigen::VectorXd::Zero(n);
    m.r(0) = 1.0;
    return m;
}

// Inverse map. Fails if more than 10% of the raw cosine transform is
// non-positive, which means r is far from a valid autocorrelation.
inline SpectralModel spectral_from_autocorr(const Eigen::VectorXd& r, int n, double delta = default_delta)
{
    const Eigen::VectorXd raw = raw_spectral_from_autocorr(r, n);
    const auto bad = (raw.array() <= 0.0).count();
    if (bad > n / 10)
        throw numerical_error("autocorrelation row has a non-positive spectrum on " + std::to_string(bad) + " of " +
                              std::to_string(n) + " frequencies");
    return make_spectral_model(raw, delta);
}

inline Eigen::MatrixXd toeplitz(const Eigen::VectorXd& row, int n)
{
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            const int lag = std::abs(a - b);
            if (lag < row.size()) m(a, b) = row(lag);
        }
    return m;
}

enum class NoiseKind { iid, ar1, ma1, arma22, gp };

// Defaults: ar1 phi = 0.5, ma1 theta = 0.5, arma22 phi = (0.7, -0.4),
// theta = (-0.2, 0.2), gp kernel cos(6.5 d) exp(-d/20) with eigenvalue floor 0.05.
struct NoiseSpec {
    NoiseKind kind = NoiseKind::iid;
    std::vector<double> params;
    double sigma = 1.0;
};

inline std::string to_string(NoiseKind k)
{
    switch (k) {
    case NoiseKind::iid: return "iid";
    case NoiseKind::ar1: return "ar1";
    case NoiseKind::ma1: return "ma1";
    case NoiseKind::arma22: return "arma22";
    case NoiseKind::gp: return "gp";
    }
    return "?";
}

inline NoiseKind noise_kind_from_string(const std::string& s)
{
    for (auto k : {NoiseKind::iid, NoiseKind::ar1, NoiseKind::ma1, NoiseKind::arma22, NoiseKind::gp})
        if (to_string(k) == s) return k;
    throw precondition_error("unknown noise kind '" + s + "'");
}

namespace detail {

struct Arma {
    std::vector<double> phi, theta;
};

inline void check_roots_outside(const std::vector<double>& c, const char* what)
{
    // polynomial 1 + c1 z + c2 z^2 (c holds the signed coefficients)
    if (c.empty()) return;
    if (c.size() == 1 || c[1] == 0.0) {
        require(std::abs(c[0]) < 1.0, std::string(what) + " root inside the unit circle");
        return;
    }
    const std::complex<double> a = c[1], b = c[0], disc = std::sqrt(b * b - 4.0 * a);
    for (auto z : {(-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a)})
        require(std::abs(z) > 1.0, std::string(what) + " root inside the unit circle");
}

inline Arma arma_of(const NoiseSpec& s)
{
    Arma a;
    const auto& p = s.params;
    switch (s.kind) {
    case NoiseKind::ar1:
        a.phi = {p.empty() ? 0.5 : p[0]};
        require(std::abs(a.phi[0]) < 1.0, "AR(1) coefficient must satisfy |phi| < 1");
        break;
    case NoiseKind::ma1:
        a.theta = {p.empty() ? 0.5 : p[0]};
        require(std::abs(a.theta[0]) < 1.0, "MA(1) coefficient must satisfy |theta| < 1");
        break;
    case NoiseKind::arma22:
        if (p.empty()) {
            a.phi = {0.7, -0.4};
            a.theta = {-0.2, 0.2};
        } else {
            require(p.size() == 4, "ARMA(2,2) takes phi1 phi2 theta1 theta2");
            a.phi = {p[0], p[1]};
            a.theta = {p[2], p[3]};
        }
        {
            std::vector<double> neg{-a.phi[0], -a.phi[1]};
            check_roots_outside(neg, "AR polynomial");
            check_roots_outside(a.theta, "MA polynomial");
        }
        break;
    default: break;
    }
    return a;
}

// Autocovariances (unit innovation variance) via psi weights.
inline std::vector<double> arma_autocov(const Arma& a, int lags)
{
    const int tail = a.phi.empty() ? 0 : 20000;
    const int len = lags + static_cast<int>(a.theta.size()) + tail + 1;
    std::vector<double> psi(len, 0.0);
    psi[0] = 1.0;
    for (int j = 1; j < len; ++j) {
        double v = j <= static_cast<int>(a.theta.size()) ? a.theta[j - 1] : 0.0;
        for (std::size_t i = 1; i <= a.phi.size(); ++i)
            if (j >= static_cast<int>(i)) v += a.phi[i - 1] * psi[j - i];
        psi[j] = v;
    }
    int used = len;
    while (used > 1 && std::abs(psi[used - 1]) < 1e-300) --used;
    std::vector<double> g(lags, 0.0);
    for (int k = 0; k < lags; ++k) {
        double s = 0.0;
        for (int j = 0; j + k < used; ++j) s += psi[j] * psi[j + k];
        g[k] = s;
    }
    return g;
}

inline std::complex<double> lag_poly(const std::vector<double>& c, double sign, double x)
{
    std::complex<double> s = 1.0;
    for (std::size_t j = 0; j < c.size(); ++j) s += sign * c[j] * std::polar(1.0, -static_cast<double>(j + 1) * x);
    return s;
}

struct GpParams {
    double omega = 6.5, length = 20.0, floor = default_delta;
};

inline GpParams gp_of(const NoiseSpec& s)
{
    GpParams g;
    if (s.params.size() > 0) g.omega = s.params[0];
    if (s.params.size() > 1) g.length = s.params[1];
    if (s.params.size() > 2) g.floor = s.params[2];
    require(g.length > 0.0 && g.floor >= 0.0, "GP kernel needs length > 0 and floor >= 0");
    return g;
}

struct Projection {
    Eigen::VectorXd row;
    int clipped = 0;
    double max_change = 0.0;
};

// Circulant embedding of the kernel row; negative eigenvalues are raised to the
// floor, then the row is returned to unit diagonal.
inline Projection project_row(const Eigen::VectorXd& g, double floor)
{
    const int n = static_cast<int>(g.size());
    const std::int64_t period = 2 * static_cast<std::int64_t>(n - 1);
    std::vector<double> cosv(period);
    for (std::int64_t m = 0; m < period; ++m) cosv[m] = std::cos(2.0 * std::numbers::pi * m / period);
    std::vector<double> c(period);
    for (int j = 0; j < n; ++j) c[j] = g(j);
    for (int j = 1; j < n - 1; ++j) c[period - j] = g(j);
    std::vector<double> lam(period);
    Projection p;
    for (std::int64_t m = 0; m < period; ++m) {
        double s = 0.0;
        for (std::int64_t j = 0; j < period; ++j) s += c[j] * cosv[(j * m) % period];
        if (s < 0.0) {
            s = floor;
            ++p.clipped;
        }
        lam[m] = s;
    }
    p.row.resize(n);
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::int64_t m = 0; m < period; ++m) s += lam[m] * cosv[(j * m) % period];
        p.row(j) = s / period;
    }
    p.row /= p.row(0);
    p.max_change = (p.row - g).cwiseAbs().maxCoeff();
    return p;
}

} // namespace detail

struct NoiseCorrelation {
    Eigen::VectorXd row; // r_0..r_{n-1}
    bool projected = false;
    int clipped_eigenvalues = 0;
    double max_row_change = 0.0;
};

inline NoiseCorrelation noise_correlation(const NoiseSpec& spec, int n)
{
    detail::require(n >= 2, "noise length must be >= 2");
    detail::require(spec.sigma > 0.0 && std::isfinite(spec.sigma), "noise sigma must be positive");
    NoiseCorrelation out;
    out.row = Eigen::VectorXd::Zero(n);
    switch (spec.kind) {
    case NoiseKind::iid: out.row(0) = 1.0; break;
    case NoiseKind::ar1: {
        const double phi = detail::arma_of(spec).phi[0];
        for (int k = 0; k < n; ++k) out.row(k) = std::pow(phi, k);
        break;
    }
    case NoiseKind::ma1: {
        const double th = detail::arma_of(spec).theta[0];
        out.row(0) = 1.0;
        out.row(1) = th / (1.0 + th * th);
        break;
    }
    case NoiseKind::arma22: {
        const auto g = detail::arma_autocov(detail::arma_of(spec), n);
        for (int k = 0; k < n; ++k) out.row(k) = g[k] / g[0];
        break;
    }
    case NoiseKind::gp: {
        const auto gp = detail::gp_of(spec);
        Eigen::VectorXd g(n);
        for (int k = 0; k < n; ++k) g(k) = std::cos(gp.omega * k) * std::exp(-k / gp.length);
        auto p = detail::project_row(g, gp.floor);
        out.row = p.row;
        out.projected = p.clipped > 0;
        out.clipped_eigenvalues = p.clipped;
        out.max_row_change = p.max_change;
        break;
    }
    }
    return out;
}

inline Eigen::VectorXd noise_autocorr(const NoiseSpec& spec, int n) { return noise_correlation(spec, n).row; }

// Spectral density at frequency x in [0, pi], normalized to mean one over [0, pi].
// ARMA kinds use the rational closed form; the GP kind uses the cosine
// transform of its (projected) length-n row.
inline double spectral_density(const NoiseSpec& spec, double x, int n = 0)
{
    switch (spec.kind) {
    case NoiseKind::iid: return 1.0;
    case NoiseKind::ar1:
    case NoiseKind::ma1:
    case NoiseKind::arma22: {
        const auto a = detail::arma_of(spec);
        const double g0 = detail::arma_autocov(a, 1)[0];
        const double num = std::norm(detail::lag_poly(a.theta, 1.0, x));
        const double den = std::norm(detail::lag_poly(a.phi, -1.0, x));
        return num / den / g0;
    }
    case NoiseKind::gp: {
        detail::require(n >= 2, "GP spectral density needs the series length");
        const auto row = noise_autocorr(spec, n);
        double s = row(0);
        for (int k = 1; k < n; ++k) s += 2.0 * row(k) * std::cos(k * x);
        return s;
    }
    }
    return 1.0;
}

// Spectral density on the grid x_i = pi t_i.
inline Eigen::VectorXd spectral_density_grid(const NoiseSpec& spec, int n)
{
    Eigen::VectorXd v(n);
    if (spec.kind == NoiseKind::gp) {
        v = raw_spectral_from_autocorr(noise_autocorr(spec, n), n);
        return v;
    }
    if (spec.kind == NoiseKind::iid) return Eigen::VectorXd::Ones(n);
    const auto a = detail::arma_of(spec);
    const double g0 = detail::arma_autocov(a, 1)[0];
    for (int i = 0; i < n; ++i) {
        const double x = std::numbers::pi * i / (n - 1.0);
        v(i) = std::norm(detail::lag_poly(a.theta, 1.0, x)) / std::norm(detail::lag_poly(a.phi, -1.0, x)) / g0;
    }
    return v;
}

// Normalized SpectralModel of the true process on the grid.
inline SpectralModel true_spectral(const NoiseSpec& spec, int n, double delta = default_delta)
{
    return make_spectral_model(spectral_density_grid(spec, n), delta);
}

inline constexpr int max_dense_noise = 2048;

// Gaussian noise sampler with the factor computed once.
class NoiseGenerator {
public:
    NoiseGenerator(const NoiseSpec& spec, int n) : spec_(spec), n_(n), corr_(noise_correlation(spec, n))
    {
        if (spec.kind == NoiseKind::iid) return;
        if (n <= max_dense_noise) {
            Eigen::LLT<Eigen::MatrixXd> llt(toeplitz(corr_.row, n));
            if (llt.info() != Eigen::Success) throw numerical_error("noise correlation matrix is not positive definite");
            chol_ = llt.matrixL();
        } else {
            build_circulant();
        }
    }

    Eigen::VectorXd draw(std::uint64_t seed, std::uint64_t index = 0) const
    {
        Engine eng = make_engine(seed, index);
        std::normal_distribution<double> nd;
        if (spec_.kind == NoiseKind::iid) {
            Eigen::VectorXd z(n_);
            for (int i = 0; i < n_; ++i) z(i) = nd(eng);
            return spec_.sigma * z;
        }
        if (chol_.size() > 0) {
            Eigen::VectorXd z(n_);
            for (int i = 0; i < n_; ++i) z(i) = nd(eng);
            Eigen::VectorXd x = chol_.triangularView<Eigen::Lower>() * z;
            return spec_.sigma * x;
        }
        return spec_.sigma * circulant_draw(eng);
    }

    // Covariance realized by the sampler (dense mode: L L^T).
    Eigen::MatrixXd covariance() const
    {
        const double s2 = spec_.sigma * spec_.sigma;
        if (spec_.kind == NoiseKind::iid) return s2 * Eigen::MatrixXd::Identity(n_, n_);
        if (chol_.size() > 0) return s2 * chol_ * chol_.transpose();
        return s2 * toeplitz(corr_.row, n_);
    }

    const NoiseCorrelation& correlation() const noexcept { return corr_; }
    const NoiseSpec& spec() const noexcept { return spec_; }
    int size() const noexcept { return n_; }

private:
    void build_circulant()
    {
        const std::int64_t period = 2 * static_cast<std::int64_t>(n_ - 1);
        twiddle_.resize(period);
        for (std::int64_t m = 0; m < period; ++m) twiddle_[m] = std::polar(1.0, 2.0 * std::numbers::pi * m / period);
        std::vector<double> c(period);
        for (int j = 0; j < n_; ++j) c[j] = corr_.row(j);
        for (int j = 1; j < n_ - 1; ++j) c[period - j] = corr_.row(j);
        sqrt_lam_.resize(period);
        for (std::int64_t m = 0; m < period; ++m) {
            double s = 0.0;
            for (std::int64_t j = 0; j < period; ++j) s += c[j] * twiddle_[(j * m) % period].real();
            sqrt_lam_[m] = std::sqrt(std::max(s, 0.0) / period);
        }
    }

    Eigen::VectorXd circulant_draw(Engine& eng) const
    {
        const std::int64_t period = static_cast<std::int64_t>(sqrt_lam_.size());
        std::normal_distribution<double> nd;
        std::vector<std::complex<double>> w(period);
        for (std::int64_t m = 0; m < period; ++m) w[m] = sqrt_lam_[m] * std::complex<double>(nd(eng), nd(eng));
        Eigen::VectorXd x(n_);
        for (int j = 0; j < n_; ++j) {
            std::complex<double> s = 0.0;
            for (std::int64_t m = 0; m < period; ++m) s += w[m] * twiddle_[(j * m) % period];
            x(j) = s.real();
        }
        return x;
    }

    NoiseSpec spec_;
    int n_;
    NoiseCorrelation corr_;
    Eigen::MatrixXd chol_;
    std::vector<std::complex<double>> twiddle_;
    std::vector<double> sqrt_lam_;
};

inline Eigen::VectorXd simulate_noise(const NoiseSpec& spec, int n, std::uint64_t seed)
{
    return NoiseGenerator(spec, n).draw(seed);
}

} // namespace ebsc

#endif
