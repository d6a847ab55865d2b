#ifndef EBSC_DRIVER_HPP
#define EBSC_DRIVER_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ebsc/dr_basis.hpp"
#include "ebsc/errors.hpp"
#include "ebsc/estimating.hpp"
#include "ebsc/noise_model.hpp"
#include "ebsc/smoother.hpp"

namespace ebsc {

inline constexpr int min_observations = 30;
inline constexpr int psd_check_lags = 200;

struct FitConfig {
    std::vector<int> q_set{1, 2, 3, 4, 5, 6};
    double delta = default_delta;
    int p = 2;
    LambdaGrid lambda_grid{};
    int max_iter = 50;
    double tol_lambda = 1e-3;
    double tol_rho = 1e-4;
    double damping = 0.5;
    std::optional<Eigen::VectorXd> initial_rho;
};

struct OrderFit {
    int q = 0;
    double lambda = 0.0;
    double t_q = 0.0;
    double sigma2hat = 0.0;
    int iterations = 0;
    bool converged = false;
    bool root_found = false;
    Eigen::VectorXd rho;
};

struct FitResult {
    int n = 0;
    Eigen::VectorXd y;
    Eigen::VectorXd fhat;
    double lambda_hat = 0.0;
    int q_hat = 0;
    double sigma2hat = 0.0;
    SpectralModel rho_hat;
    Eigen::VectorXd r_hat;
    Eigen::VectorXd B;
    Eigen::VectorXd shrink;
    double edf = 0.0;
    std::map<int, OrderFit> per_q;
    std::vector<std::string> flags;
};

// Bases are costly (O(n^3)); fits share them through a cache.
class BasisCache {
public:
    const DRBasis& get(int n, int q)
    {
        std::shared_ptr<Slot> slot;
        {
            std::lock_guard lock(mutex_);
            auto& s = slots_[{n, q}];
            if (!s) s = std::make_shared<Slot>();
            slot = s;
        }
        std::call_once(slot->once, [&] { slot->basis = build_basis(n, q); });
        return slot->basis;
    }

    void clear()
    {
        std::lock_guard lock(mutex_);
        slots_.clear();
    }

private:
    struct Slot {
        std::once_flag once;
        DRBasis basis;
    };
    std::mutex mutex_;
    std::map<std::pair<int, int>, std::shared_ptr<Slot>> slots_;
};

inline BasisCache& default_basis_cache()
{
    static BasisCache cache;
    return cache;
}

namespace detail {

inline void check_fit_inputs(const Eigen::VectorXd& y, const FitConfig& c)
{
    require(y.size() >= min_observations, "need at least 30 observations, got " + std::to_string(y.size()));
    require(y.allFinite(), "observations contain NaN or Inf");
    require(!c.q_set.empty(), "q_set is empty");
    for (int q : c.q_set) {
        check_order(q);
        require(y.size() >= 4 * q, "n too small for order " + std::to_string(q));
    }
    check_order(c.p);
    require(c.delta > 0.0 && c.delta < 1.0, "delta must lie in (0, 1)");
    require(c.max_iter >= 1, "max_iter must be >= 1");
    require(c.damping > 0.0 && c.damping <= 1.0, "damping must lie in (0, 1]");
    require(c.tol_lambda > 0.0 && c.tol_rho > 0.0, "tolerances must be positive");
    if (c.initial_rho) {
        require(c.initial_rho->size() == y.size(), "initial_rho length does not match y");
        require(c.initial_rho->allFinite() && c.initial_rho->minCoeff() > 0.0, "initial_rho must be positive");
    }
}

inline OrderFit fit_order(const Eigen::VectorXd& y, int q, const FitConfig& c, BasisCache& cache)
{
    const int n = static_cast<int>(y.size());
    const DRBasis& basis = cache.get(n, q);
    const DRBasis& basis_p = cache.get(n, c.p);
    const Eigen::VectorXd B = coefficients(basis, y);
    OrderFit f;
    f.q = q;
    f.rho = c.initial_rho ? normalize_spectrum(*c.initial_rho, c.delta) : Eigen::VectorXd::Ones(n);

    const double tail = B.tail(n - q).norm();
    if (!(tail > 1e-12 * std::max(1.0, B.norm()))) {
        f.lambda = resolve_grid(c.lambda_grid, n, q).max;
        f.rho = Eigen::VectorXd::Ones(n);
        f.converged = true;
        f.root_found = false;
        f.t_q = t_q(f.lambda, basis, f.rho, B);
        f.sigma2hat = variance_estimate(f.lambda, q, basis.scaled_eta, f.rho, B);
        return f;
    }

    const LambdaGrid grid_p{0.0, 0.0, c.lambda_grid.points};
    double prev_lambda = 0.0;
    for (int j = 1; j <= c.max_iter; ++j) {
        const auto sol = solve_lambda(basis, f.rho, B, c.lambda_grid);
        const auto raw = update_rho(sol.lambda, basis, f.rho, B);
        const auto sm = smooth_rho(raw, basis_p, c.delta, grid_p, false);
        const Eigen::VectorXd next = (1.0 - c.damping) * f.rho + c.damping * sm.model.rho;
        const double drho = (next - f.rho).norm() / n;
        const double dlambda = j >= 2 ? std::abs(sol.lambda / prev_lambda - 1.0) : 1.0;
        f.rho = next;
        f.lambda = sol.lambda;
        f.root_found = sol.root_found;
        f.iterations = j;
        prev_lambda = sol.lambda;
        if (j >= 2 && dlambda < c.tol_lambda && drho < c.tol_rho) {
            f.converged = true;
            break;
        }
    }
    f.t_q = t_q(f.lambda, basis, f.rho, B);
    f.sigma2hat = variance_estimate(f.lambda, q, basis.scaled_eta, f.rho, B);
    return f;
}

inline FitResult assemble(const Eigen::VectorXd& y, std::map<int, OrderFit> per_q, int q_hat,
                          std::vector<std::string> flags, const FitConfig& c, BasisCache& cache)
{
    const int n = static_cast<int>(y.size());
    FitResult r;
    r.n = n;
    r.y = y;
    r.q_hat = q_hat;
    r.per_q = std::move(per_q);
    r.flags = std::move(flags);
    const OrderFit& best = r.per_q.at(q_hat);
    r.lambda_hat = best.lambda;
    r.rho_hat.delta = c.delta;
    r.rho_hat.rho = best.rho;
    r.rho_hat.r = autocorr_from_spectral(best.rho);
    r.r_hat = r.rho_hat.r;
    const DRBasis& basis = cache.get(n, q_hat);
    const SmootherSpec spec{r.lambda_hat, q_hat, r.rho_hat};
    const SmoothFit sf = apply_fast(spec, y, basis);
    r.fhat = sf.fhat;
    r.B = sf.B;
    r.shrink = sf.shrink;
    r.sigma2hat = sf.sigma2hat;
    r.edf = sf.edf;

    for (const auto& [q, f] : r.per_q) {
        if (!f.converged) r.flags.push_back("not-converged q=" + std::to_string(q));
        if (!f.root_found && f.converged && f.iterations == 0)
            r.flags.push_back("pure-null-space q=" + std::to_string(q));
        else if (!f.root_found)
            r.flags.push_back("no-root q=" + std::to_string(q));
    }
    const int m = std::min(n, psd_check_lags);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(toeplitz(r.r_hat.head(m), m), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-6) r.flags.push_back("autocorrelation-not-psd");
    return r;
}

} // namespace detail

inline FitResult fit(const Eigen::VectorXd& y, const FitConfig& config = {},
                     BasisCache& cache = default_basis_cache())
{
    detail::check_fit_inputs(y, config);
    std::vector<int> qs = config.q_set;
    std::sort(qs.begin(), qs.end());
    qs.erase(std::unique(qs.begin(), qs.end()), qs.end());
    std::map<int, OrderFit> per_q;
    std::map<int, double> tq;
    for (int q : qs) {
        per_q[q] = detail::fit_order(y, q, config, cache);
        tq[q] = per_q[q].t_q;
    }
    auto sel = solve_q(tq);
    return detail::assemble(y, std::move(per_q), sel.q, std::move(sel.flags), config, cache);
}

inline FitResult fit_fixed_q(const Eigen::VectorXd& y, int q, const FitConfig& config = {},
                             BasisCache& cache = default_basis_cache())
{
    FitConfig c = config;
    c.q_set = {q};
    detail::check_fit_inputs(y, c);
    std::map<int, OrderFit> per_q;
    per_q[q] = detail::fit_order(y, q, c, cache);
    return detail::assemble(y, std::move(per_q), q, {}, c, cache);
}

} // namespace ebsc

#endif
