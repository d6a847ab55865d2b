#ifndef EBSC_ESTIMATING_HPP
#define EBSC_ESTIMATING_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "ebsc/dr_basis.hpp"
#include "ebsc/errors.hpp"
#include "ebsc/noise_model.hpp"
#include "ebsc/smoother.hpp"

namespace ebsc {

// n_{lambda,q} = lambda^{-1/(2q)} + n lambda^{1/(2q)}
inline double scaling_factor(double lambda, int q, int n)
{
    const double e = 1.0 / (2.0 * q);
    return std::pow(lambda, -e) + n * std::pow(lambda, e);
}

// n'_{lambda,q} = n_{lambda,q} (log lambda)^2, kept away from zero at lambda = 1.
inline double order_scaling_factor(double lambda, int q, int n)
{
    const double l2 = std::log(lambda) * std::log(lambda);
    return scaling_factor(lambda, q, n) * std::max(l2, 1e-12);
}

namespace detail {

struct ScoreSums {
    double bias = 0.0;  // sum B^2 x / d^2
    double trace = 0.0; // sum 1 / d
    double quad = 0.0;  // sum B^2 x / d
    double bias_log = 0.0;
    double trace_log = 0.0;
};

inline ScoreSums score_sums(double lambda, int q, const Eigen::VectorXd& nu, const Eigen::VectorXd& rho,
                            const Eigen::VectorXd& B, bool with_log)
{
    ScoreSums s;
    const Eigen::Index n = B.size();
    for (Eigen::Index i = q; i < n; ++i) {
        if (nu(i) <= 0.0) continue;
        const double x = lambda * nu(i);
        const double d = 1.0 + x * rho(i);
        const double b2 = B(i) * B(i);
        const double bias = b2 * x / (d * d);
        s.bias += bias;
        s.trace += 1.0 / d;
        s.quad += b2 * x / d;
        if (with_log) {
            const double lg = std::log(nu(i));
            s.bias_log += bias * lg;
            s.trace_log += lg / d;
        }
    }
    return s;
}

inline void check_inputs(double lambda, const DRBasis& basis, const Eigen::VectorXd& rho, const Eigen::VectorXd& B)
{
    require(lambda > 0.0 && std::isfinite(lambda), "lambda must be positive and finite");
    require(rho.size() == basis.n && B.size() == basis.n, "rho and B must match the basis size");
}

} // namespace detail

inline double t_lambda(double lambda, const DRBasis& basis, const Eigen::VectorXd& rho, const Eigen::VectorXd& B)
{
    detail::check_inputs(lambda, basis, rho, B);
    const auto s = detail::score_sums(lambda, basis.q, basis.scaled_eta, rho, B, false);
    const double n = static_cast<double>(basis.n);
    const double sigma2 = (s.quad + 1.0) / (n + 1.0);
    return (s.bias - sigma2 * s.trace) / scaling_factor(lambda, basis.q, basis.n);
}

inline double t_q(double lambda, const DRBasis& basis, const Eigen::VectorXd& rho, const Eigen::VectorXd& B)
{
    detail::check_inputs(lambda, basis, rho, B);
    const auto s = detail::score_sums(lambda, basis.q, basis.scaled_eta, rho, B, true);
    const double n = static_cast<double>(basis.n);
    const double sigma2 = (s.quad + 1.0) / (n + 1.0);
    return (s.bias_log - sigma2 * s.trace_log) / order_scaling_factor(lambda, basis.q, basis.n);
}

struct ScorePoint {
    double lambda = 0.0;
    int q = 0;
    SpectralModel rho;
    double t_lambda = 0.0;
    double t_q = 0.0;
    double sigma2hat = 0.0;
};

inline ScorePoint evaluate_scores(double lambda, const DRBasis& basis, const SpectralModel& rho,
                                  const Eigen::VectorXd& B)
{
    ScorePoint p;
    p.lambda = lambda;
    p.q = basis.q;
    p.rho = rho;
    p.t_lambda = t_lambda(lambda, basis, rho.rho, B);
    p.t_q = t_q(lambda, basis, rho.rho, B);
    p.sigma2hat = variance_estimate(lambda, basis.q, basis.scaled_eta, rho.rho, B);
    return p;
}

struct LambdaGrid {
    double min = 0.0; // <= 0 selects the order-scaled default
    double max = 0.0;
    int points = 101;
};

// Default search range in lambda for order q. In terms of the transition index
// i* ~ 1/(pi lambda^{1/(2q)}) it runs from i* = 2n (interpolation) down to the
// point where every non-polynomial coefficient is shrunk by at least 1/100.
inline LambdaGrid resolve_grid(const LambdaGrid& g, int n, int q)
{
    detail::require(g.points >= 3, "lambda grid needs at least 3 points");
    LambdaGrid out = g;
    if (!(out.min > 0.0)) out.min = std::pow(2.0 * std::numbers::pi * n, -2.0 * q);
    if (!(out.max > 0.0)) out.max = std::pow(10.0 / std::numbers::pi, 2.0 * q);
    detail::require(out.max > out.min, "lambda grid max must exceed min");
    return out;
}

struct LambdaSolution {
    double lambda = 0.0;
    double t_value = 0.0;
    bool root_found = false;
};

// First upcrossing (- to +) of t_lambda on the geometric grid, refined by
// bisection in log lambda. The score is minus a positive multiple of the
// log-likelihood derivative, so an upcrossing is a local maximum of the likelihood.
inline LambdaSolution solve_lambda(const DRBasis& basis, const Eigen::VectorXd& rho, const Eigen::VectorXd& B,
                                   const LambdaGrid& grid_in = {})
{
    const LambdaGrid grid = resolve_grid(grid_in, basis.n, basis.q);
    const double lmin = std::log(grid.min), lmax = std::log(grid.max);
    std::vector<double> lam(grid.points), val(grid.points);
    for (int j = 0; j < grid.points; ++j) {
        lam[j] = std::exp(lmin + (lmax - lmin) * j / (grid.points - 1));
        val[j] = t_lambda(lam[j], basis, rho, B);
    }
    for (int j = 0; j + 1 < grid.points; ++j) {
        if (val[j] < 0.0 && val[j + 1] >= 0.0) {
            double lo = std::log(lam[j]), hi = std::log(lam[j + 1]);
            while (hi - lo > 1e-6) {
                const double mid = 0.5 * (lo + hi);
                (t_lambda(std::exp(mid), basis, rho, B) < 0.0 ? lo : hi) = mid;
            }
            LambdaSolution s;
            s.lambda = std::exp(0.5 * (lo + hi));
            s.t_value = t_lambda(s.lambda, basis, rho, B);
            s.root_found = true;
            return s;
        }
    }
    int best = 0;
    for (int j = 1; j < grid.points; ++j)
        if (std::abs(val[j]) < std::abs(val[best])) best = j;
    return {lam[best], val[best], false};
}

struct QSelection {
    int q = 0;
    std::vector<std::string> flags;
};

// Negative t_q means the order can be raised; the selected order sits at the
// first - to + transition, on whichever side has the smaller |t_q|.
inline QSelection solve_q(const std::map<int, double>& tq)
{
    detail::require(!tq.empty(), "solve_q needs at least one order");
    QSelection s;
    std::vector<std::pair<int, double>> v(tq.begin(), tq.end());
    for (std::size_t k = 0; k + 1 < v.size(); ++k) {
        if (v[k].second < 0.0 && v[k + 1].second >= 0.0) {
            s.q = std::abs(v[k].second) <= std::abs(v[k + 1].second) ? v[k].first : v[k + 1].first;
            return s;
        }
    }
    const bool all_neg = std::all_of(v.begin(), v.end(), [](auto& p) { return p.second < 0.0; });
    const bool all_pos = std::all_of(v.begin(), v.end(), [](auto& p) { return p.second >= 0.0; });
    if (all_neg) {
        s.q = v.back().first;
    } else if (all_pos) {
        s.q = v.front().first;
        s.flags.push_back("q-score-positive-throughout");
    } else {
        auto it = std::min_element(v.begin(), v.end(),
                                   [](auto& a, auto& b) { return std::abs(a.second) < std::abs(b.second); });
        s.q = it->first;
        s.flags.push_back("q-score-no-upcrossing");
    }
    return s;
}

// Raw spectrum with the polynomial head (first `missing_head` entries) undefined.
struct RawSpectrum {
    Eigen::VectorXd values;
    int missing_head = 0;
};

// One fixed-point step of T_rho = 0: rho <- rho + T_rho(rho), i.e.
// rho_i B_i^2 lambda nu_i / (1 + lambda nu_i rho_i).
inline RawSpectrum update_rho(double lambda, const DRBasis& basis, const Eigen::VectorXd& rho_prev,
                              const Eigen::VectorXd& B)
{
    detail::check_inputs(lambda, basis, rho_prev, B);
    RawSpectrum out;
    out.missing_head = basis.q;
    out.values = Eigen::VectorXd::Constant(basis.n, std::numeric_limits<double>::quiet_NaN());
    for (int i = basis.q; i < basis.n; ++i) {
        const double x = lambda * basis.scaled_eta(i);
        out.values(i) = rho_prev(i) * B(i) * B(i) * x / (1.0 + x * rho_prev(i));
    }
    return out;
}

struct SmoothedSpectrum {
    SpectralModel model;
    double xi = 0.0;
    bool root_found = false;
};

// Spline-smooths the raw spectrum across frequency with an iid working
// correlation, order p, xi from the same lambda equation; then clips and normalizes.
// The raw values are rescaled to mean one first so the prior's +1 in the
// variance does not depend on the units of y.
inline SmoothedSpectrum smooth_rho(const RawSpectrum& raw, const DRBasis& basis_p, double delta = default_delta,
                                   const LambdaGrid& grid = {}, bool with_autocorr = true)
{
    const int n = static_cast<int>(raw.values.size());
    detail::require(basis_p.n == n, "smoothing basis does not match spectrum length");
    detail::require(raw.missing_head <= n / 2, "raw spectrum needs at least n/2 available entries");
    Eigen::VectorXd v = raw.values;
    for (int i = raw.missing_head; i < n; ++i)
        detail::require(std::isfinite(v(i)), "raw spectrum has a non-finite entry");
    for (int i = 0; i < raw.missing_head; ++i) v(i) = v(raw.missing_head);
    SmoothedSpectrum out;
    const double mean = v.mean();
    if (!(mean > 0.0)) {
        out.model = white_spectral_model(n, delta);
        return out;
    }
    v /= mean;
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const Eigen::VectorXd B = coefficients(basis_p, v);
    const auto sol = solve_lambda(basis_p, ones, B, grid);
    out.xi = sol.lambda;
    out.root_found = sol.root_found;
    const Eigen::VectorXd w = shrinkage(sol.lambda, basis_p.scaled_eta, ones);
    const Eigen::VectorXd smooth = basis_p.phi * w.cwiseProduct(B);
    out.model.delta = delta;
    out.model.rho = normalize_spectrum(smooth, delta);
    if (with_autocorr) out.model.r = autocorr_from_spectral(out.model.rho);
    return out;
}

} // namespace ebsc

#endif
