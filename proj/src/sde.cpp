#include "tcrep/sde.hpp"

#include <cmath>
#include <sstream>

namespace tcrep {

TimeGrid build_grid(int steps, double T, double grading) {
    if (steps < 2) throw ValidationError("grid: need at least 2 steps");
    if (!(T > 0.0) || !std::isfinite(T)) throw ValidationError("grid: T must be positive");
    if (!(grading >= 1.0)) throw ValidationError("grid: grading exponent must be >= 1");

    TimeGrid g;
    g.T = T;
    g.grading = grading;
    g.t.resize(steps + 1);
    g.tau.resize(steps + 1);
    g.dt.resize(steps);
    for (int i = 0; i <= steps; ++i) {
        const double s = 1.0 - static_cast<double>(i) / steps;
        g.tau[i] = T * std::pow(s, grading);
        g.t[i] = T - g.tau[i];
    }
    g.t[0] = 0.0;
    g.tau[0] = T;
    g.t[steps] = T;
    g.tau[steps] = 0.0;
    for (int i = 0; i < steps; ++i) {
        g.dt[i] = g.tau[i] - g.tau[i + 1];
        if (!(g.dt[i] > 0.0)) {
            std::ostringstream os;
            os << "grid: nodes collapsed at i=" << i
               << " (grading too steep for this step count)";
            throw ValidationError(os.str());
        }
    }
    return g;
}

namespace {

inline std::uint64_t sm_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

}  // namespace

PathRng::PathRng(std::uint64_t seed, std::uint64_t path) {
    state_ = sm_mix(sm_mix(seed + kGamma) ^ sm_mix((path + 1) * kGamma));
}

std::uint64_t PathRng::raw() {
    state_ += kGamma;
    return sm_mix(state_);
}

double PathRng::uniform() {
    // 53-bit mantissa, offset keeps the value strictly inside (0,1)
    return (static_cast<double>(raw() >> 11) + 0.5) * 0x1.0p-53;
}

double PathRng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * M_PI * u2;
    cached_ = r * std::sin(th);
    has_cached_ = true;
    return r * std::cos(th);
}

void PathRng::skip_normals(std::uint64_t count) {
    for (std::uint64_t k = 0; k < count; ++k) (void)normal();
}

PathEnsemble sample_ensemble(const TimeGrid& grid, int paths, int dim,
                             std::uint64_t seed) {
    if (paths < 1) throw ValidationError("ensemble: need at least one path");
    if (dim < 1) throw ValidationError("ensemble: Wiener dimension must be >= 1");
    return PathEnsemble{grid, paths, dim, seed};
}

void path_increments(const PathEnsemble& ens, int path, std::vector<double>& dw) {
    const int N = ens.grid.steps();
    dw.resize(static_cast<std::size_t>(N) * ens.dim);
    PathRng rng(ens.seed, static_cast<std::uint64_t>(path));
    for (int i = 0; i < N; ++i) {
        const double sd = std::sqrt(ens.grid.dt[i]);
        for (int j = 0; j < ens.dim; ++j)
            dw[static_cast<std::size_t>(i) * ens.dim + j] = sd * rng.normal();
    }
}

void dump_increments_csv(const PathEnsemble& ens, std::ostream& os) {
    os << "path_id,i,t";
    for (int j = 0; j < ens.dim; ++j) os << ",dw" << j;
    os << "\n";
    std::vector<double> dw;
    char buf[32];
    for (int p = 0; p < ens.paths; ++p) {
        path_increments(ens, p, dw);
        for (int i = 0; i < ens.grid.steps(); ++i) {
            os << p << ',' << i << ',';
            std::snprintf(buf, sizeof buf, "%.17g", ens.grid.t[i]);
            os << buf;
            for (int j = 0; j < ens.dim; ++j) {
                std::snprintf(buf, sizeof buf, "%.17g",
                              dw[static_cast<std::size_t>(i) * ens.dim + j]);
                os << ',' << buf;
            }
            os << '\n';
        }
    }
}

GbmMarket make_market(double S0, double sigma) {
    if (!(S0 > 0.0)) throw ValidationError("market.S0: must be positive");
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw ValidationError("market.sigma: must be positive and finite");
    return GbmMarket{S0, sigma};
}

std::vector<double> simulate_gbm_path(const GbmMarket& mkt, const PathEnsemble& ens,
                                      int path) {
    if (!(mkt.S0 > 0.0) || !(mkt.sigma > 0.0))
        throw ValidationError("gbm: S0 and sigma must be positive");
    const int N = ens.grid.steps();
    std::vector<double> dw;
    path_increments(ens, path, dw);
    std::vector<double> S(N + 1);
    S[0] = mkt.S0;
    for (int i = 0; i < N; ++i) {
        const double d = dw[static_cast<std::size_t>(i) * ens.dim];
        S[i + 1] = S[i] * std::exp(mkt.sigma * d -
                                   0.5 * mkt.sigma * mkt.sigma * ens.grid.dt[i]);
    }
    return S;
}

}  // namespace tcrep
