#ifndef EBSC_SIMULATION_HPP
#define EBSC_SIMULATION_HPP

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "ebsc/dr_basis.hpp"
#include "ebsc/driver.hpp"
#include "ebsc/errors.hpp"
#include "ebsc/noise_model.hpp"
#include "ebsc/parallel.hpp"
#include "ebsc/random.hpp"

namespace ebsc {

enum class TestFunction { f1, f2, f3 };

inline std::string to_string(TestFunction f)
{
    switch (f) {
    case TestFunction::f1: return "f1";
    case TestFunction::f2: return "f2";
    case TestFunction::f3: return "f3";
    }
    return "?";
}

inline TestFunction test_function_from_string(const std::string& s)
{
    for (auto f : {TestFunction::f1, TestFunction::f2, TestFunction::f3})
        if (to_string(f) == s) return f;
    throw precondition_error("unknown test function '" + s + "' (expected f1, f2 or f3)");
}

// Order whose smoothness the function matches: the target of q selection.
inline int target_order(TestFunction f)
{
    switch (f) {
    case TestFunction::f1: return 3;
    case TestFunction::f2: return 5;
    case TestFunction::f3: return 6;
    }
    return 0;
}

// Eigenfunction series sum_{i=first}^{terms} c_i psi_{beta,i}, c_i = (pi (i-1))^-beta cos(2i).
// psi_{beta,i} exists only for i > beta, so terms inside the polynomial null
// space contribute nothing and the series effectively starts at beta + 1.
struct FunctionSeries {
    int beta = 0;
    int first = 0;
    std::vector<double> coef; // coef[i - first]
};

inline FunctionSeries function_series(TestFunction f, int terms)
{
    FunctionSeries s;
    if (f == TestFunction::f3) return s;
    s.beta = f == TestFunction::f1 ? 3 : 5;
    s.first = s.beta + 1;
    for (int i = s.first; i <= terms; ++i)
        s.coef.push_back(std::pow(std::numbers::pi * (i - 1), -s.beta) * std::cos(2.0 * i));
    return s;
}

// Unscaled values on the grid. Series are truncated at `terms` (default n).
inline Eigen::VectorXd raw_function(TestFunction f, int n, int terms = 0)
{
    detail::require(n >= 2, "function grid needs n >= 2");
    const Eigen::VectorXd t = uniform_grid(n);
    if (f == TestFunction::f3) return (4.0 * std::numbers::pi * t.array()).sin().matrix() * 2.0;
    const auto s = function_series(f, terms > 0 ? terms : n);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    for (std::size_t j = 0; j < s.coef.size(); ++j) {
        const SobolevEigenfunction psi(s.beta, s.first + static_cast<int>(j));
        for (int k = 0; k < n; ++k) v(k) += s.coef[j] * psi(t(k));
    }
    return v;
}

inline double sample_sd(const Eigen::VectorXd& v)
{
    const double m = v.mean();
    return std::sqrt((v.array() - m).square().sum() / (v.size() - 1.0));
}

// Divides by the sample sd (n - 1 denominator); the mean is left in place.
inline double function_scale(TestFunction f, int n) { return sample_sd(raw_function(f, n)); }

inline Eigen::VectorXd make_function(TestFunction f, int n)
{
    detail::require(n >= 30, "test functions need n >= 30");
    const Eigen::VectorXd v = raw_function(f, n);
    return v / sample_sd(v);
}

// ||f^{(q)}||^2 of the scaled function over [0,1]. For the series this is
// Parseval in the order-beta eigenbasis and requires q == beta.
inline double derivative_norm_sq(TestFunction f, int n, int q)
{
    const double scale = function_scale(f, n);
    if (f == TestFunction::f3) return 2.0 * std::pow(4.0 * std::numbers::pi, 2.0 * q) / (scale * scale);
    const auto s = function_series(f, n);
    detail::require(q == s.beta, "series derivative norm is only available at its own order");
    double total = 0.0;
    for (std::size_t j = 0; j < s.coef.size(); ++j)
        total += s.coef[j] * s.coef[j] * sobolev_eigenvalue(s.beta, s.first + static_cast<int>(j));
    return total / (scale * scale);
}

using SpectralFunction = std::function<double(double)>; // argument t in [0,1], frequency pi t

struct KappaArgs {
    int m = 0;
    int l = 2;
    int t = 0;
    int s = 0;
};

// (2 pi q)^-1 int y^{1/(2q)+m-1} g^{m+s} h^t / (1 + y g)^{m+l} dy over
// [lambda pi^{2q}, lambda (pi (n-q))^{2q}], with g, h the working and true
// densities at the index matching y. Integrated in log y.
inline double kappa(const KappaArgs& a, const SpectralFunction& varrho, const SpectralFunction& rho, int q,
                    double lambda, int n)
{
    check_order(q);
    detail::require(lambda > 0.0 && n > q + 1, "kappa needs lambda > 0 and n > q + 1");
    const double e = 1.0 / (2.0 * q);
    const double shift = 0.5 * (q + 1);
    auto index_t = [&](double y) {
        const double u = std::pow(y / lambda, e) / std::numbers::pi + shift;
        return std::clamp((u - 1.0) / (n - 1.0), 0.0, 1.0);
    };
    auto integrand = [&](double logy) {
        const double y = std::exp(logy);
        const double tt = index_t(y);
        const double g = rho ? rho(tt) : 1.0;
        const double h = varrho ? varrho(tt) : 1.0;
        return std::pow(y, e + a.m) * std::pow(g, a.m + a.s) * std::pow(h, a.t) / std::pow(1.0 + y * g, a.m + a.l);
    };
    const double lo = std::log(lambda) + 2.0 * q * std::log(std::numbers::pi);
    const double hi = std::log(lambda) + 2.0 * q * std::log(std::numbers::pi * (n - q));
    double err = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, lo, hi, 20, 1e-9, &err);
    if (!std::isfinite(v) || err > 1e-6 * std::abs(v) + 1e-300) throw numerical_error("kappa quadrature did not converge");
    return v / (2.0 * std::numbers::pi * q);
}

inline double oracle_lambda(double f_norm_sq, double sigma2, double kappa_val, int n, int q)
{
    detail::require(f_norm_sq > 0.0 && sigma2 > 0.0 && kappa_val > 0.0 && n > 0, "oracle_lambda needs positive inputs");
    return std::pow(n * f_norm_sq / (sigma2 * kappa_val), -2.0 * q / (2.0 * q + 1.0));
}

inline constexpr double default_sigma = 0.33;

struct ScenarioSpec {
    TestFunction function = TestFunction::f1;
    NoiseSpec noise{NoiseKind::iid, {}, default_sigma};
    int n = 500;
    int M = 50;
    std::optional<int> fixed_q = 2; // nullopt: adaptive order selection
    std::uint64_t seed = 1;
    int threads = 0;
    FitConfig config{};
};

struct Replication {
    double err_f = 0.0;
    double err_r = 0.0;
    double spectral_sup_error = 0.0;
    double lambda_hat = 0.0;
    double sigma2hat = 0.0;
    int q_hat = 0;
    bool converged = true;
    bool root_found = true;
};

struct ScenarioResult {
    TestFunction function = TestFunction::f1;
    NoiseSpec noise;
    int n = 0;
    int M = 0;
    std::optional<int> fixed_q;
    std::uint64_t seed = 0;
    double A_f = 0.0;
    double A_R = 0.0;
    double q_recovery = std::numeric_limits<double>::quiet_NaN();
    bool noise_projected = false;
    int clipped_eigenvalues = 0;
    std::vector<Replication> replications;
};

inline ScenarioResult run_scenario(const ScenarioSpec& spec, BasisCache& cache = default_basis_cache())
{
    detail::require(spec.M >= 1, "scenario needs M >= 1");
    const int n = spec.n;
    const Eigen::VectorXd f = make_function(spec.function, n);
    const NoiseGenerator gen(spec.noise, n);
    const Eigen::VectorXd r_true = gen.correlation().row;
    const Eigen::VectorXd dens_true = spectral_density_grid(spec.noise, n);
    const double s2 = spec.noise.sigma * spec.noise.sigma;
    // Warm the bases once so replications only read the cache.
    if (spec.fixed_q) cache.get(n, *spec.fixed_q);
    else
        for (int q : spec.config.q_set) cache.get(n, q);
    cache.get(n, spec.config.p);

    ScenarioResult out;
    out.function = spec.function;
    out.noise = spec.noise;
    out.n = n;
    out.M = spec.M;
    out.fixed_q = spec.fixed_q;
    out.seed = spec.seed;
    out.noise_projected = gen.correlation().projected;
    out.clipped_eigenvalues = gen.correlation().clipped_eigenvalues;
    out.replications.resize(spec.M);
    parallel_for(static_cast<std::size_t>(spec.M), spec.threads, [&](std::size_t m) {
        const Eigen::VectorXd y = f + gen.draw(spec.seed, m);
        const FitResult fr =
            spec.fixed_q ? fit_fixed_q(y, *spec.fixed_q, spec.config, cache) : fit(y, spec.config, cache);
        Replication& rep = out.replications[m];
        rep.err_f = (fr.fhat - f).squaredNorm() / n;
        rep.err_r = (fr.r_hat - r_true).squaredNorm() / n;
        rep.spectral_sup_error = (fr.sigma2hat * fr.rho_hat.rho - s2 * dens_true).cwiseAbs().maxCoeff();
        rep.lambda_hat = fr.lambda_hat;
        rep.sigma2hat = fr.sigma2hat;
        rep.q_hat = fr.q_hat;
        for (const auto& [q, o] : fr.per_q) {
            rep.converged = rep.converged && o.converged;
            rep.root_found = rep.root_found && o.root_found;
        }
    });
    int hits = 0;
    for (const auto& rep : out.replications) {
        out.A_f += rep.err_f;
        out.A_R += rep.err_r;
        if (rep.q_hat == target_order(spec.function)) ++hits;
    }
    out.A_f /= spec.M;
    out.A_R /= spec.M;
    if (!spec.fixed_q) out.q_recovery = static_cast<double>(hits) / spec.M;
    return out;
}

} // namespace ebsc

#endif
