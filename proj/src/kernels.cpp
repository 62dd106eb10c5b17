#include "tcrep/kernels.hpp"

#include <cmath>
#include <sstream>

namespace tcrep {

double norm_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

BSQuote bs_price_delta(double x, double strike, double t, double T, double sigma_bar) {
    if (!(x > 0.0)) throw ValidationError("bs: spot must be positive");
    if (!(strike > 0.0)) throw ValidationError("bs: strike must be positive");
    if (!(t < T)) throw ValidationError("bs: need t < T");
    if (!(sigma_bar > 0.0)) throw ValidationError("bs: sigma must be positive");
    const double sv = sigma_bar * std::sqrt(T - t);
    BSQuote q;
    q.d1 = (std::log(x / strike) + 0.5 * sv * sv) / sv;
    q.d2 = q.d1 - sv;
    q.delta = norm_cdf(q.d1);
    q.price = x * q.delta - strike * norm_cdf(q.d2);
    return q;
}

namespace {

class DeterministicPayoff final : public Payoff {
  public:
    DeterministicPayoff(Vector f0, int d) : f0_(std::move(f0)), d_(d) {
        if (f0_.size() < 1) throw ValidationError("payoff.f0: empty target");
        if (d_ < 1) throw ValidationError("payoff: Wiener dimension must be >= 1");
    }
    int n() const override { return static_cast<int>(f0_.size()); }
    int d() const override { return d_; }
    std::string family() const override { return "deterministic"; }
    bool stochastic() const override { return false; }
    Vector mean() const override { return f0_; }
    Matrix kernel(const PathState&) const override { return Matrix::Zero(n(), d_); }
    Vector terminal(const PathState&) const override { return f0_; }
    std::optional<Matrix> kernel_second_moment(double, double) const override {
        return Matrix::Zero(n(), n());
    }

  private:
    Vector f0_;
    int d_;
};

class LinearWienerPayoff final : public Payoff {
  public:
    LinearWienerPayoff(Vector c0, Matrix C) : c0_(std::move(c0)), C_(std::move(C)) {
        if (c0_.size() != C_.rows())
            throw ValidationError("payoff: c0 and C row dimensions differ");
        if (C_.cols() < 1) throw ValidationError("payoff.C: needs at least one column");
    }
    int n() const override { return static_cast<int>(c0_.size()); }
    int d() const override { return static_cast<int>(C_.cols()); }
    std::string family() const override { return "linear-wiener"; }
    Vector mean() const override { return c0_; }
    Matrix kernel(const PathState&) const override { return C_; }
    Vector terminal(const PathState& s) const override { return c0_ + C_ * s.w; }
    std::optional<Matrix> kernel_second_moment(double, double) const override {
        return C_ * C_.transpose();
    }

  private:
    Vector c0_;
    Matrix C_;
};

class GbmTerminalPayoff final : public Payoff {
  public:
    GbmTerminalPayoff(double scale, GbmMarket mkt, double T)
        : c_(scale), mkt_(mkt), T_(T) {
        if (!(scale > 0.0)) throw ValidationError("payoff.scale: must be positive");
    }
    int n() const override { return 1; }
    int d() const override { return 1; }
    std::string family() const override { return "gbm-terminal"; }
    const GbmMarket* market() const override { return &mkt_; }
    Vector mean() const override { return Vector::Constant(1, c_ * mkt_.S0); }
    Matrix kernel(const PathState& s) const override {
        return Matrix::Constant(1, 1, c_ * mkt_.sigma * s.S);
    }
    Vector terminal(const PathState& s) const override {
        return Vector::Constant(1, c_ * s.S);
    }
    std::optional<Matrix> kernel_second_moment(double t, double) const override {
        const double v = c_ * mkt_.sigma * mkt_.S0;
        return Matrix::Constant(1, 1, v * v * std::exp(mkt_.sigma * mkt_.sigma * t));
    }

  private:
    double c_;
    GbmMarket mkt_;
    double T_;
};

class EuropeanCallPayoff final : public Payoff {
  public:
    EuropeanCallPayoff(double scale, double strike, GbmMarket mkt, double T)
        : c_(scale), K_(strike), mkt_(mkt), T_(T) {
        if (!(scale > 0.0)) throw ValidationError("payoff.scale: must be positive");
        if (!(strike > 0.0)) throw ValidationError("payoff.strike: must be positive");
    }
    int n() const override { return 1; }
    int d() const override { return 1; }
    std::string family() const override { return "european-call"; }
    const GbmMarket* market() const override { return &mkt_; }
    Vector mean() const override {
        return Vector::Constant(1, c_ * bs_price_delta(mkt_.S0, K_, 0.0, T_, mkt_.sigma).price);
    }
    Matrix kernel(const PathState& s) const override {
        const double delta = bs_price_delta(s.S, K_, s.t, T_, mkt_.sigma).delta;
        return Matrix::Constant(1, 1, c_ * delta * mkt_.sigma * s.S);
    }
    Vector terminal(const PathState& s) const override {
        return Vector::Constant(1, c_ * std::max(s.S - K_, 0.0));
    }

  private:
    double c_, K_;
    GbmMarket mkt_;
    double T_;
};

class AsianAveragePayoff final : public Payoff {
  public:
    AsianAveragePayoff(double scale, GbmMarket mkt, double T)
        : c_(scale), mkt_(mkt), T_(T) {
        if (!(scale > 0.0)) throw ValidationError("payoff.scale: must be positive");
    }
    int n() const override { return 1; }
    int d() const override { return 1; }
    std::string family() const override { return "asian-average"; }
    const GbmMarket* market() const override { return &mkt_; }
    Vector mean() const override { return Vector::Constant(1, c_ * mkt_.S0); }
    // From E[S(u)|F_t] = S(t): the not-yet-averaged stretch contributes (T-t) S(t).
    Matrix kernel(const PathState& s) const override {
        return Matrix::Constant(1, 1, (c_ / T_) * s.tau * mkt_.sigma * s.S);
    }
    Vector terminal(const PathState& s) const override {
        return Vector::Constant(1, (c_ / T_) * s.asian_sum);
    }
    std::optional<Matrix> kernel_second_moment(double t, double tau) const override {
        const double v = (c_ / T_) * tau * mkt_.sigma * mkt_.S0;
        return Matrix::Constant(1, 1, v * v * std::exp(mkt_.sigma * mkt_.sigma * t));
    }

  private:
    double c_;
    GbmMarket mkt_;
    double T_;
};

// f = exp(theta + eta (w(t_b) - w(t_a))); the conditional mean is lognormal with
// a closed form, which is exactly the kernel up to the factor eta.
class LognormalIncrementPayoff final : public Payoff {
  public:
    LognormalIncrementPayoff(double theta, double eta, double t_a, double t_b)
        : theta_(theta), eta_(eta), ta_(t_a), tb_(t_b) {
        if (!(eta > 0.0)) throw ValidationError("payoff.eta: must be positive");
        if (!(t_a >= 0.0) || !(t_b > t_a))
            throw ValidationError("payoff: need 0 <= t_a < t_b");
    }
    int n() const override { return 1; }
    int d() const override { return 1; }
    std::string family() const override { return "lognormal-increment"; }
    std::vector<double> mark_times() const override { return {ta_, tb_}; }
    Vector mean() const override {
        return Vector::Constant(1, std::exp(theta_ + 0.5 * eta_ * eta_ * (tb_ - ta_)));
    }
    Matrix kernel(const PathState& s) const override {
        if (s.t < ta_ || s.t >= tb_) return Matrix::Zero(1, 1);
        const double dwin = s.w(0) - s.w_mark[0](0);
        const double m = std::exp(theta_ + eta_ * dwin + 0.5 * eta_ * eta_ * (tb_ - s.t));
        return Matrix::Constant(1, 1, eta_ * m);
    }
    Vector terminal(const PathState& s) const override {
        const double dwin = s.w_mark[1](0) - s.w_mark[0](0);
        return Vector::Constant(1, std::exp(theta_ + eta_ * dwin));
    }
    std::optional<Matrix> kernel_second_moment(double t, double) const override {
        if (t < ta_ || t >= tb_) return Matrix::Zero(1, 1);
        const double m2 = std::exp(2.0 * theta_ + eta_ * eta_ * (tb_ - ta_) +
                                   eta_ * eta_ * (t - ta_));
        return Matrix::Constant(1, 1, eta_ * eta_ * m2);
    }

  private:
    double theta_, eta_, ta_, tb_;
};

}  // namespace

std::shared_ptr<Payoff> make_deterministic(const Vector& f0, int d) {
    return std::make_shared<DeterministicPayoff>(f0, d);
}
std::shared_ptr<Payoff> make_linear_wiener(const Vector& c0, const Matrix& C) {
    return std::make_shared<LinearWienerPayoff>(c0, C);
}
std::shared_ptr<Payoff> make_gbm_terminal(double scale, const GbmMarket& mkt, double T) {
    return std::make_shared<GbmTerminalPayoff>(scale, make_market(mkt.S0, mkt.sigma), T);
}
std::shared_ptr<Payoff> make_european_call(double scale, double strike,
                                           const GbmMarket& mkt, double T) {
    return std::make_shared<EuropeanCallPayoff>(scale, strike,
                                                make_market(mkt.S0, mkt.sigma), T);
}
std::shared_ptr<Payoff> make_asian_average(double scale, const GbmMarket& mkt, double T) {
    return std::make_shared<AsianAveragePayoff>(scale, make_market(mkt.S0, mkt.sigma), T);
}
std::shared_ptr<Payoff> make_lognormal_increment(double theta, double eta, double t_a,
                                                 double t_b) {
    return std::make_shared<LognormalIncrementPayoff>(theta, eta, t_a, t_b);
}

Matrix kernel_eval(const Payoff& payoff, const PathState& s, double T) {
    if (!(s.t < T)) throw ValidationError("kernel: evaluation requires t < T");
    return payoff.kernel(s);
}

namespace {

int mark_node(const TimeGrid& grid, double tmark) {
    for (int i = 0; i <= grid.steps(); ++i)
        if (std::abs(grid.t[i] - tmark) <= 1e-12 * std::max(1.0, grid.T)) return i;
    std::ostringstream os;
    os << "payoff: mark time " << tmark << " is not a grid node";
    throw ValidationError(os.str());
}

}  // namespace

KfReport validate_kf(const Payoff& payoff, const PathEnsemble& ens, double from_time) {
    if (!(from_time > 0.0 && from_time < ens.grid.T))
        throw ValidationError("validate_kf: from_time must lie in (0,T)");
    const int N = ens.grid.steps();
    const int d = payoff.d();
    if (d != ens.dim) throw ValidationError("validate_kf: ensemble dimension mismatch");

    std::vector<int> marks;
    for (double tm : payoff.mark_times()) marks.push_back(mark_node(ens.grid, tm));

    int first = N;
    for (int i = 0; i < N; ++i)
        if (ens.grid.t[i] >= from_time) {
            first = i;
            break;
        }
    const int m = N - first;
    std::vector<double> sum(m, 0.0), sumsq(m, 0.0);

    const GbmMarket* mkt = payoff.market();
    std::vector<double> dw;
    for (int p = 0; p < ens.paths; ++p) {
        path_increments(ens, p, dw);
        PathState st;
        st.w = Vector::Zero(d);
        st.w_mark[0] = Vector::Zero(d);
        st.w_mark[1] = Vector::Zero(d);
        st.S = mkt ? mkt->S0 : 0.0;
        for (int i = 0; i < N; ++i) {
            st.t = ens.grid.t[i];
            st.tau = ens.grid.tau[i];
            for (std::size_t j = 0; j < marks.size(); ++j)
                if (marks[j] == i) st.w_mark[j] = st.w;
            if (i >= first) {
                const double k2 = payoff.kernel(st).squaredNorm();
                sum[i - first] += k2;
                sumsq[i - first] += k2 * k2;
            }
            if (mkt) {
                st.asian_sum += st.S * ens.grid.dt[i];
                st.S *= std::exp(mkt->sigma * dw[static_cast<std::size_t>(i) * d] -
                                 0.5 * mkt->sigma * mkt->sigma * ens.grid.dt[i]);
            }
            for (int j = 0; j < d; ++j) st.w(j) += dw[static_cast<std::size_t>(i) * d + j];
        }
    }

    KfReport rep;
    rep.from_time = from_time;
    rep.nodes.resize(m);
    const double M = ens.paths;
    for (int k = 0; k < m; ++k) {
        const double mean = sum[k] / M;
        const double var = M > 1 ? std::max(0.0, (sumsq[k] - M * mean * mean) / (M - 1)) : 0.0;
        rep.nodes[k] = {ens.grid.t[first + k], mean, std::sqrt(var / M)};
        if (rep.sup_node < 0 || mean > rep.sup_estimate) {
            rep.sup_estimate = mean;
            rep.sup_se = rep.nodes[k].se;
            rep.sup_node = first + k;
        }
    }
    if (m >= 4) {
        double fit = 0.0;
        for (const auto& nd : rep.nodes) fit += nd.mean_sq;
        fit /= m;
        const auto& a = rep.nodes[m - 3];
        const auto& b = rep.nodes[m - 2];
        const auto& c = rep.nodes[m - 1];
        const bool trend_up = c.mean_sq > b.mean_sq && b.mean_sq > a.mean_sq;
        const bool excess = c.mean_sq - fit > 6.0 * c.se + 0.5 * std::abs(fit);
        rep.diverging = trend_up && excess;
    }
    return rep;
}

}  // namespace tcrep
