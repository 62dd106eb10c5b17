#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "tcrep/mathcore.hpp"
#include "tcrep/weights.hpp"

namespace tcrep {

/// Time grid on [0,T] with power grading toward T: t_i = T (1 - (1 - i/N)^gamma).
/// tau_i = T - t_i is stored from the grading formula directly, so distances to
/// the horizon have full precision near T.
struct TimeGrid {
    double T = 0.0;
    double grading = 1.0;
    std::vector<double> t;    // size N+1, t[0]=0, t[N]=T exactly
    std::vector<double> tau;  // tau[i] = T - t[i], tau[N]=0 exactly
    std::vector<double> dt;   // size N

    int steps() const { return static_cast<int>(dt.size()); }
};

TimeGrid build_grid(int steps, double T, double grading = 1.0);

/// Grading that equalizes \int g^{-1} dt per step for a power weight.
inline double default_grading(const PenaltyWeight& w) { return 1.0 / (1.0 - w.alpha()); }

/// Counter-based generator: splitmix64 stream keyed by (seed, path). Output
/// depends only on the key and the draw index, never on scheduling order.
class PathRng {
  public:
    PathRng(std::uint64_t seed, std::uint64_t path);

    double normal();                 // standard Gaussian, Box-Muller pair cache
    void skip_normals(std::uint64_t count);

  private:
    std::uint64_t raw();
    double uniform();                // in (0,1)
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

/// Lazily generated Wiener-increment ensemble; increments are produced per path
/// from its own substream so results are independent of worker count.
struct PathEnsemble {
    TimeGrid grid;
    int paths = 0;
    int dim = 0;
    std::uint64_t seed = 0;
};

PathEnsemble sample_ensemble(const TimeGrid& grid, int paths, int dim,
                             std::uint64_t seed);

/// Fill dw (steps x dim, row-major) with one path's increments, N(0, dt_i).
void path_increments(const PathEnsemble& ens, int path, std::vector<double>& dw);

/// One row per (path, step): path_id, i, t_i, dw components.
void dump_increments_csv(const PathEnsemble& ens, std::ostream& os);

/// Driftless constant-volatility market under the pricing measure.
struct GbmMarket {
    double S0 = 1.0;
    double sigma = 0.2;
};

GbmMarket make_market(double S0, double sigma);

/// Log-exact driftless GBM along the grid: S_{i+1} = S_i exp(sigma dw - sigma^2 dt / 2).
/// Returns node values S_0..S_N (positive by construction). First Wiener component drives S.
std::vector<double> simulate_gbm_path(const GbmMarket& mkt, const PathEnsemble& ens,
                                      int path);

}  // namespace tcrep
