#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tcrep/sde.hpp"

namespace tcrep {

/// Zero-drift Black quote: H = x Phi(d1) - K Phi(d2) with the asset itself a
/// martingale under the pricing measure, sigma_bar the RMS volatility on [t,T].
struct BSQuote {
    double price = 0.0;
    double delta = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
};

BSQuote bs_price_delta(double x, double strike, double t, double T, double sigma_bar);

double norm_cdf(double z);

/// Per-path evolving state handed to kernel evaluators. w is the cumulative
/// Wiener value at t; market fields are maintained only when the payoff uses a
/// market. w_mark captures w at payoff-declared mark times (set by the engine).
struct PathState {
    double t = 0.0;
    double tau = 0.0;  // T - t
    Vector w;
    double S = 0.0;
    double asian_sum = 0.0;  // running sum of S(t_i) dt_i
    std::array<Vector, 2> w_mark;
};

/// Terminal target f with its mean and martingale-representation kernel k_f.
class Payoff {
  public:
    virtual ~Payoff() = default;

    virtual int n() const = 0;
    virtual int d() const = 0;
    virtual std::string family() const = 0;
    virtual bool stochastic() const { return true; }
    virtual const GbmMarket* market() const { return nullptr; }
    /// Times at which the engine must capture w into PathState::w_mark.
    virtual std::vector<double> mark_times() const { return {}; }

    virtual Vector mean() const = 0;                          // E f
    virtual Matrix kernel(const PathState& s) const = 0;      // k_f(t), n x d
    virtual Vector terminal(const PathState& s) const = 0;    // pathwise f

    /// Closed-form E[k_f k_f^T](t) when the family admits one.
    virtual std::optional<Matrix> kernel_second_moment(double t, double tau) const {
        (void)t;
        (void)tau;
        return std::nullopt;
    }
};

std::shared_ptr<Payoff> make_deterministic(const Vector& f0, int d = 1);
std::shared_ptr<Payoff> make_linear_wiener(const Vector& c0, const Matrix& C);
std::shared_ptr<Payoff> make_gbm_terminal(double scale, const GbmMarket& mkt, double T);
std::shared_ptr<Payoff> make_european_call(double scale, double strike,
                                           const GbmMarket& mkt, double T);
std::shared_ptr<Payoff> make_asian_average(double scale, const GbmMarket& mkt, double T);
std::shared_ptr<Payoff> make_lognormal_increment(double theta, double eta, double t_a,
                                                 double t_b);

/// Public kernel evaluation with the t < T domain check.
Matrix kernel_eval(const Payoff& payoff, const PathState& s, double T);

struct KfNodeEstimate {
    double t = 0.0;
    double mean_sq = 0.0;  // MC estimate of E |k_f(t)|_F^2
    double se = 0.0;
};

/// Diagnostic for the kernel-boundedness condition on [from_time, T).
struct KfReport {
    double from_time = 0.0;
    std::vector<KfNodeEstimate> nodes;
    double sup_estimate = 0.0;
    double sup_se = 0.0;
    int sup_node = -1;
    bool diverging = false;
};

KfReport validate_kf(const Payoff& payoff, const PathEnsemble& ens, double from_time);

}  // namespace tcrep
