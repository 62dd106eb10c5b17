#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "tcrep/kernels.hpp"
#include "tcrep/weights.hpp"

namespace tcrep {

/// The controlled plant dx/dt = A x + b u on [0,T], x(0) = a.
struct SystemSpec {
    int n = 1;
    int d = 1;
    Matrix A, b;
    Vector a;
    double T = 1.0;

    static SystemSpec make(int n, int d, const Matrix& A, const Matrix& b,
                           const Vector& a, double T);
};

/// Riccati-type weights of the dual problem:
///   Q(t) = e^{A(T-t)} b Gamma(t)^{-1} b' e^{A'(T-t)},  R(s) = \int_s^T Q(t) dt.
/// R is cached at grid nodes (R at the last node is exactly zero) with Cholesky
/// factors for the per-step dual updates; R_tau evaluates between nodes on demand.
struct RiccatiWeights {
    SystemSpec sys;
    PenaltyWeight weight;
    TimeGrid grid;
    QuadratureSpec quad;
    std::vector<Matrix> R;                  // nodes 0..N
    std::vector<Eigen::LLT<Matrix>> R_llt;  // nodes 0..N-1

    Matrix Q_tau(double tau) const;
    Matrix R_tau(double tau) const;
};

RiccatiWeights riccati_build(const SystemSpec& sys, const PenaltyWeight& weight,
                             const TimeGrid& grid, QuadratureSpec quad = {});

/// mu_bar solving R(0) mu = E f - e^{AT} a.
Vector dual_init(const RiccatiWeights& ric, const Payoff& payoff, const SystemSpec& sys);

/// How the state integrator treats a step [t_i, t_{i+1}):
///  - HoldDual freezes the dual mu at the left node and integrates the
///    deterministic gain factors exactly through the R cache,
///  - HoldControl freezes the whole control vector at its left-node value.
enum class StepScheme { HoldDual, HoldControl };

enum class ExecMode { Serial, Parallel };

struct StepPlan {
    double t = 0, tau = 0, dt = 0, sqrt_dt = 0, g = 0;
    Matrix E;      // e^{A dt}
    Matrix D;      // e^{-A tau_{i+1}} (R_i - R_{i+1})
    Matrix PhiB;   // (\int_0^dt e^{As} ds) b
    Matrix EAt;    // e^{A' tau_i}
    Matrix K;      // Gamma^{-1} b' e^{A' tau_i}
    Matrix BtE;    // b' e^{A' tau_i}
    Matrix dR;     // R_i - R_{i+1}
    Matrix Gamma;  // g(t_i) G
};

struct ReplicationPlan {
    SystemSpec sys;
    PenaltyWeight weight;
    TimeGrid grid;
    RiccatiWeights ric;
    std::shared_ptr<const Payoff> payoff;
    StepScheme scheme = StepScheme::HoldDual;
    Vector eATa;    // e^{AT} a
    Vector mu_bar;  // dual mean
    std::vector<StepPlan> steps;
    std::vector<int> mark_nodes;
};

ReplicationPlan build_plan(const SystemSpec& sys, const PenaltyWeight& weight,
                           const TimeGrid& grid, std::shared_ptr<const Payoff> payoff,
                           StepScheme scheme = StepScheme::HoldDual,
                           QuadratureSpec quad = {});

struct RunOptions {
    int paths = 1;
    std::uint64_t seed = 1;
    int retained = 32;  // full trajectories kept for this many leading paths
    ExecMode mode = ExecMode::Parallel;
    bool node_stats = true;
    std::uint64_t rng_skip_normals = 0;  // continue a stream across horizons
    std::vector<Matrix> probes;          // deterministic n x N control directions
};

struct Trajectory {
    int path_id = 0;
    Matrix mu;  // (N+1) x n
    Matrix x;   // (N+1) x n
    Matrix u;   // N x n
};

struct RunResult {
    int paths = 0, steps = 0, n = 0;
    std::vector<double> cost;      // realized cost, consistent with the step scheme
    std::vector<double> cost_lr;   // left-Riemann sum u' Gamma u dt
    std::vector<double> cost_g;    // sum g |u|^2 dt
    std::vector<double> absint;    // sum |u| dt
    std::vector<double> resid_sq;  // |x(T) - f|^2
    Matrix f, xT, muT;             // paths x n
    Matrix probe_lin;              // paths x probes: sum v' Gamma u dt
    Matrix mu_sum, mu_sumsq;       // (N+1) x n node statistics
    std::vector<Trajectory> retained;
};

/// Simulates the dual martingale, synthesizes the control, integrates the state
/// and accumulates costs path by path. Parallel mode distributes fixed chunks of
/// paths over OpenMP workers; per-path substreams and an ordered chunk reduction
/// make the result bitwise identical to the serial reference for any thread count.
RunResult run_ensemble(const ReplicationPlan& plan, const RunOptions& opts);

Vector control_at(const ReplicationPlan& plan, const Vector& mu, int i);
Vector adjoint_at(const ReplicationPlan& plan, const Vector& mu, int i);

struct MeanSe {
    double mean = 0, se = 0;
};
MeanSe mean_se(const std::vector<double>& xs);
MeanSe mc_cost(const RunResult& run);
double residual_rmse(const RunResult& run);

struct NodeDeviation {
    double max_z = 0;       // max |mean - mu_bar| / se over nodes and components
    int node = -1;
    double max_abs = 0;
};
NodeDeviation mu_node_deviation(const RunResult& run, const Vector& mu_bar);

struct MinCost {
    double value = 0;
    double se = 0;           // zero for closed-form families
    bool mc_fallback = false;
};

/// J* = (Ef - e^{AT}a)' R(0)^{-1} (Ef - e^{AT}a) + E \int_0^T k_f' R^{-1} k_f dt.
/// Families without a closed kernel second moment fall back to a Monte Carlo
/// estimate of the time integral with a reported standard error.
MinCost min_cost_closed_form(const ReplicationPlan& plan, int fallback_paths = 20000,
                             std::uint64_t fallback_seed = 9001);

struct LagrangianStats {
    double L = 0, se = 0;
    double half_cost = 0;
    double constraint = 0, constraint_se = 0;  // E mu'(f - x(T))
};
LagrangianStats lagrangian(const RunResult& run);  // with the run's own terminal mu
LagrangianStats lagrangian_with(const RunResult& run, const Matrix& mu_sample);

struct AdmissibilityReport {
    MeanSe weighted_energy;   // E int g |u|^2 dt
    MeanSe abs_integral_sq;   // E (int |u| dt)^2
};
AdmissibilityReport admissibility_report(const RunResult& run);

/// Deterministic profiles v with sum_i e^{A tau_i} b v_i dt_i = 0, normalized to
/// unit left-Riemann Gamma-cost. Adding eps*v preserves terminal replication.
std::vector<Matrix> zero_replicating_profiles(const ReplicationPlan& plan, int count,
                                              std::uint64_t seed);
double profile_cost(const ReplicationPlan& plan, const Matrix& v);

struct PerturbationStats {
    double mean_delta = 0, se_delta = 0;
};
/// Cost change of u + eps v in the left-Riemann metric, from the probe accumulators.
PerturbationStats perturbation_delta(const RunResult& run, int probe, double eps,
                                     double v_cost);

}  // namespace tcrep
