#include "tcrep/replicator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tcrep {

namespace {

// Fixed chunk width: the path-to-chunk map never depends on the worker count,
// so chunk partials and the ordered reduction are reproducible by construction.
constexpr int kPathChunk = 256;

void symmetrize(Matrix& m) { m = 0.5 * (m + m.transpose()).eval(); }

}  // namespace

SystemSpec SystemSpec::make(int n, int d, const Matrix& A, const Matrix& b,
                            const Vector& a, double T) {
    if (n < 1) throw ValidationError("system.n: must be >= 1");
    if (d < 1) throw ValidationError("system.d: must be >= 1");
    if (A.rows() != n || A.cols() != n)
        throw ValidationError("system.A: expected n x n matrix");
    if (b.rows() != n || b.cols() != n)
        throw ValidationError("system.b: expected n x n matrix");
    if (a.size() != n) throw ValidationError("system.a: expected length-n vector");
    if (!(T > 0.0) || !std::isfinite(T))
        throw ValidationError("system.T: must be positive and finite");
    if (!A.allFinite() || !b.allFinite() || !a.allFinite())
        throw ValidationError("system: entries must be finite");

    Eigen::JacobiSVD<Matrix> svd(b);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (!(smin > 0.0) || smax / smin > 1e12)
        throw ValidationError("system.b: must be invertible (condition below 1e12)");
    return SystemSpec{n, d, A, b, a, T};
}

Matrix RiccatiWeights::Q_tau(double tau) const {
    const Matrix E = mat_exp(sys.A, tau);
    return E * sys.b * weight.gamma_inv_tau(tau) * sys.b.transpose() * E.transpose();
}

Matrix RiccatiWeights::R_tau(double tau) const {
    if (tau < 0.0 || tau > grid.T * (1.0 + 1e-12))
        throw ValidationError("riccati: tau outside [0,T]");
    // grid.tau is strictly decreasing; find the first cached node at or below tau
    int j = 0;
    while (j <= grid.steps() && grid.tau[j] > tau) ++j;
    const auto fn = [this](double, double tt) { return Q_tau(tt); };
    Matrix r = R[j] + integrate_singular_tau(fn, grid.tau[j], tau, grid.T, quad);
    symmetrize(r);
    return r;
}

RiccatiWeights riccati_build(const SystemSpec& sys, const PenaltyWeight& weight,
                             const TimeGrid& grid, QuadratureSpec quad) {
    if (std::abs(weight.horizon() - sys.T) > 1e-12 * std::max(1.0, sys.T))
        throw ValidationError("riccati: weight horizon differs from system T");
    if (std::abs(grid.T - sys.T) > 1e-12 * std::max(1.0, sys.T))
        throw ValidationError("riccati: grid terminal differs from system T");
    if (weight.dim() != sys.n)
        throw ValidationError("riccati: weight dimension differs from system n");
    quad.alpha = weight.alpha();

    RiccatiWeights ric;
    ric.sys = sys;
    ric.weight = weight;
    ric.grid = grid;
    ric.quad = quad;

    const int N = grid.steps();
    std::vector<Matrix> panel(N);
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < N; ++i) {
        try {
            const auto fn = [&ric](double, double tt) { return ric.Q_tau(tt); };
            panel[i] = integrate_singular_tau(fn, grid.tau[i + 1], grid.tau[i], grid.T,
                                              quad);
        } catch (...) {
#pragma omp critical
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);

    ric.R.assign(N + 1, Matrix::Zero(sys.n, sys.n));
    for (int i = N - 1; i >= 0; --i) {
        ric.R[i] = ric.R[i + 1] + panel[i];
        symmetrize(ric.R[i]);
    }
    ric.R_llt.resize(N);
    for (int i = 0; i < N; ++i) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(ric.R[i], Eigen::EigenvaluesOnly);
        if (!(es.eigenvalues().minCoeff() > 0.0)) {
            std::ostringstream os;
            os << "riccati: R not positive definite at node " << i
               << " (t=" << grid.t[i] << ")";
            throw NumericError(os.str());
        }
        ric.R_llt[i] = Eigen::LLT<Matrix>(ric.R[i]);
    }
    return ric;
}

Vector dual_init(const RiccatiWeights& ric, const Payoff& payoff, const SystemSpec& sys) {
    const Vector gap = payoff.mean() - mat_exp(sys.A, sys.T) * sys.a;
    return solve_spd(ric.R[0], gap, 0.0);
}

ReplicationPlan build_plan(const SystemSpec& sys, const PenaltyWeight& weight,
                           const TimeGrid& grid, std::shared_ptr<const Payoff> payoff,
                           StepScheme scheme, QuadratureSpec quad) {
    if (!payoff) throw ValidationError("plan: payoff required");
    if (payoff->n() != sys.n)
        throw ValidationError("payoff: target dimension differs from system n");
    if (payoff->d() != sys.d)
        throw ValidationError("payoff: Wiener dimension differs from system d");

    ReplicationPlan plan;
    plan.sys = sys;
    plan.weight = weight;
    plan.grid = grid;
    plan.ric = riccati_build(sys, weight, grid, quad);
    plan.payoff = std::move(payoff);
    plan.scheme = scheme;
    plan.eATa = mat_exp(sys.A, sys.T) * sys.a;
    plan.mu_bar = dual_init(plan.ric, *plan.payoff, sys);

    const int N = grid.steps();
    plan.steps.resize(N);
    for (int i = 0; i < N; ++i) {
        StepPlan& sp = plan.steps[i];
        sp.t = grid.t[i];
        sp.tau = grid.tau[i];
        sp.dt = grid.dt[i];
        sp.sqrt_dt = std::sqrt(grid.dt[i]);
        sp.g = weight.g_tau(sp.tau);
        sp.EAt = mat_exp(sys.A.transpose(), sp.tau);
        sp.BtE = sys.b.transpose() * sp.EAt;
        sp.K = weight.gamma_inv_tau(sp.tau) * sp.BtE;
        sp.Gamma = sp.g * weight.G();
        sp.dR = plan.ric.R[i] - plan.ric.R[i + 1];
        symmetrize(sp.dR);
        auto [E, Phi] = mat_exp_with_integral(sys.A, sp.dt);
        sp.E = std::move(E);
        sp.PhiB = Phi * sys.b;
        sp.D = mat_exp(sys.A, -grid.tau[i + 1]) * sp.dR;
    }

    for (double tm : plan.payoff->mark_times()) {
        int node = -1;
        for (int i = 0; i <= N; ++i)
            if (std::abs(grid.t[i] - tm) <= 1e-12 * std::max(1.0, grid.T)) {
                node = i;
                break;
            }
        if (node < 0) {
            std::ostringstream os;
            os << "payoff: mark time " << tm << " is not a grid node";
            throw ValidationError(os.str());
        }
        plan.mark_nodes.push_back(node);
    }
    return plan;
}

namespace {

struct PathScratch {
    PathState st;
    Vector mu, x, u, gu, kdw, dw, tmp;
    Matrix k;
};

void run_one_path(const ReplicationPlan& plan, const RunOptions& opts, int p,
                  RunResult& out, Matrix* mu_sum, Matrix* mu_sumsq, PathScratch& ws) {
    const int N = plan.grid.steps();
    const int n = plan.sys.n;
    const int d = plan.sys.d;
    const bool stoch = plan.payoff->stochastic();
    const GbmMarket* mkt = plan.payoff->market();
    const bool hold_dual = plan.scheme == StepScheme::HoldDual;
    const int nprobes = static_cast<int>(opts.probes.size());

    PathRng rng(opts.seed, static_cast<std::uint64_t>(p));
    if (opts.rng_skip_normals) rng.skip_normals(opts.rng_skip_normals);

    PathState& st = ws.st;
    st.t = 0.0;
    st.tau = plan.grid.T;
    st.w.setZero(d);
    st.w_mark[0].setZero(d);
    st.w_mark[1].setZero(d);
    st.S = mkt ? mkt->S0 : 0.0;
    st.asian_sum = 0.0;

    ws.mu = plan.mu_bar;
    ws.x = plan.sys.a;
    double cost = 0, cost_lr = 0, cost_g = 0, absint = 0;

    Trajectory* traj = nullptr;
    if (p < opts.retained) {
        traj = &out.retained[p];
        traj->path_id = p;
        traj->mu.resize(N + 1, n);
        traj->x.resize(N + 1, n);
        traj->u.resize(N, n);
    }

    for (int i = 0; i < N; ++i) {
        const StepPlan& sp = plan.steps[i];
        st.t = sp.t;
        st.tau = sp.tau;
        for (std::size_t m = 0; m < plan.mark_nodes.size(); ++m)
            if (plan.mark_nodes[m] == i) st.w_mark[m] = st.w;

        if (mu_sum) {
            mu_sum->row(i) += ws.mu.transpose();
            mu_sumsq->row(i) += ws.mu.array().square().matrix().transpose();
        }

        ws.u.noalias() = sp.K * ws.mu;
        ws.gu.noalias() = sp.Gamma * ws.u;
        const double ugu = ws.u.dot(ws.gu);
        cost_lr += ugu * sp.dt;
        cost_g += sp.g * ws.u.squaredNorm() * sp.dt;
        absint += ws.u.norm() * sp.dt;
        for (int j = 0; j < nprobes; ++j)
            out.probe_lin(p, j) += opts.probes[j].col(i).dot(ws.gu) * sp.dt;

        if (traj) {
            traj->mu.row(i) = ws.mu.transpose();
            traj->x.row(i) = ws.x.transpose();
            traj->u.row(i) = ws.u.transpose();
        }

        if (hold_dual) {
            ws.tmp.noalias() = sp.dR * ws.mu;
            cost += ws.mu.dot(ws.tmp);
            ws.tmp.noalias() = sp.E * ws.x;
            ws.tmp.noalias() += sp.D * ws.mu;
            ws.x.swap(ws.tmp);
        } else {
            cost += ugu * sp.dt;
            ws.tmp.noalias() = sp.E * ws.x;
            ws.tmp.noalias() += sp.PhiB * ws.u;
            ws.x.swap(ws.tmp);
        }

        for (int j = 0; j < d; ++j) ws.dw(j) = sp.sqrt_dt * rng.normal();
        if (stoch) {
            ws.k = plan.payoff->kernel(st);
            ws.kdw.noalias() = ws.k * ws.dw;
            ws.mu += plan.ric.R_llt[i].solve(ws.kdw);
        }
        if (mkt) {
            st.asian_sum += st.S * sp.dt;
            st.S *= std::exp(mkt->sigma * ws.dw(0) -
                             0.5 * mkt->sigma * mkt->sigma * sp.dt);
        }
        st.w += ws.dw;
    }

    st.t = plan.grid.t[N];
    st.tau = 0.0;
    for (std::size_t m = 0; m < plan.mark_nodes.size(); ++m)
        if (plan.mark_nodes[m] == N) st.w_mark[m] = st.w;
    if (mu_sum) {
        mu_sum->row(N) += ws.mu.transpose();
        mu_sumsq->row(N) += ws.mu.array().square().matrix().transpose();
    }
    if (traj) {
        traj->mu.row(N) = ws.mu.transpose();
        traj->x.row(N) = ws.x.transpose();
    }

    const Vector fv = plan.payoff->terminal(st);
    out.cost[p] = cost;
    out.cost_lr[p] = cost_lr;
    out.cost_g[p] = cost_g;
    out.absint[p] = absint;
    out.resid_sq[p] = (ws.x - fv).squaredNorm();
    out.f.row(p) = fv.transpose();
    out.xT.row(p) = ws.x.transpose();
    out.muT.row(p) = ws.mu.transpose();
}

}  // namespace

RunResult run_ensemble(const ReplicationPlan& plan, const RunOptions& opts) {
    if (opts.paths < 1) throw ValidationError("run: need at least one path");
    for (const auto& v : opts.probes)
        if (v.rows() != plan.sys.n || v.cols() != plan.grid.steps())
            throw ValidationError("run: probe profile must be n x steps");

    const int N = plan.grid.steps();
    const int n = plan.sys.n;
    const int M = opts.paths;

    RunResult out;
    out.paths = M;
    out.steps = N;
    out.n = n;
    out.cost.assign(M, 0.0);
    out.cost_lr.assign(M, 0.0);
    out.cost_g.assign(M, 0.0);
    out.absint.assign(M, 0.0);
    out.resid_sq.assign(M, 0.0);
    out.f.setZero(M, n);
    out.xT.setZero(M, n);
    out.muT.setZero(M, n);
    out.probe_lin.setZero(M, static_cast<int>(opts.probes.size()));
    out.retained.resize(std::min(opts.retained, M));

    const int nchunks = (M + kPathChunk - 1) / kPathChunk;
    std::vector<Matrix> sum_parts, sq_parts;
    if (opts.node_stats) {
        sum_parts.resize(nchunks);
        sq_parts.resize(nchunks);
    }

    std::exception_ptr err;
    const auto body = [&](int c) {
        try {
            Matrix local_sum, local_sq;
            Matrix* ps = nullptr;
            Matrix* pq = nullptr;
            if (opts.node_stats) {
                local_sum = Matrix::Zero(N + 1, n);
                local_sq = Matrix::Zero(N + 1, n);
                ps = &local_sum;
                pq = &local_sq;
            }
            PathScratch ws;
            ws.u.resize(n);
            ws.gu.resize(n);
            ws.kdw.resize(n);
            ws.tmp.resize(n);
            ws.dw.resize(plan.sys.d);
            const int lo = c * kPathChunk;
            const int hi = std::min(M, lo + kPathChunk);
            for (int p = lo; p < hi; ++p) run_one_path(plan, opts, p, out, ps, pq, ws);
            if (opts.node_stats) {
                sum_parts[c] = std::move(local_sum);
                sq_parts[c] = std::move(local_sq);
            }
        } catch (...) {
#pragma omp critical
            if (!err) err = std::current_exception();
        }
    };

    if (opts.mode == ExecMode::Parallel) {
#pragma omp parallel for schedule(dynamic)
        for (int c = 0; c < nchunks; ++c) body(c);
    } else {
        for (int c = 0; c < nchunks; ++c) body(c);
    }
    if (err) std::rethrow_exception(err);

    if (opts.node_stats) {
        out.mu_sum.setZero(N + 1, n);
        out.mu_sumsq.setZero(N + 1, n);
        for (int c = 0; c < nchunks; ++c) {
            out.mu_sum += sum_parts[c];
            out.mu_sumsq += sq_parts[c];
        }
    }
    return out;
}

Vector control_at(const ReplicationPlan& plan, const Vector& mu, int i) {
    if (i < 0 || i >= plan.grid.steps())
        throw ValidationError("control: node must satisfy t < T");
    return plan.steps[i].K * mu;
}

Vector adjoint_at(const ReplicationPlan& plan, const Vector& mu, int i) {
    if (i < 0 || i >= plan.grid.steps())
        throw ValidationError("adjoint: node must satisfy t < T");
    return plan.steps[i].EAt * mu;
}

MeanSe mean_se(const std::vector<double>& xs) {
    const double m = static_cast<double>(xs.size());
    if (xs.empty()) return {};
    double s = 0;
    for (double v : xs) s += v;
    const double mean = s / m;
    double ss = 0;
    for (double v : xs) ss += (v - mean) * (v - mean);
    const double var = xs.size() > 1 ? ss / (m - 1.0) : 0.0;
    return {mean, std::sqrt(var / m)};
}

MeanSe mc_cost(const RunResult& run) { return mean_se(run.cost); }

double residual_rmse(const RunResult& run) {
    double s = 0;
    for (double v : run.resid_sq) s += v;
    return std::sqrt(s / static_cast<double>(run.paths));
}

NodeDeviation mu_node_deviation(const RunResult& run, const Vector& mu_bar) {
    NodeDeviation nd;
    const double M = run.paths;
    for (int i = 0; i < run.mu_sum.rows(); ++i) {
        for (int c = 0; c < run.n; ++c) {
            const double mean = run.mu_sum(i, c) / M;
            const double var =
                M > 1 ? std::max(0.0, (run.mu_sumsq(i, c) - M * mean * mean) / (M - 1))
                      : 0.0;
            const double se = std::sqrt(var / M);
            const double dev = std::abs(mean - mu_bar(c));
            const double z = se > 0 ? dev / se : (dev <= 1e-12 ? 0.0 : 1e30);
            if (z > nd.max_z) {
                nd.max_z = z;
                nd.node = i;
            }
            nd.max_abs = std::max(nd.max_abs, dev);
        }
    }
    return nd;
}

MinCost min_cost_closed_form(const ReplicationPlan& plan, int fallback_paths,
                             std::uint64_t fallback_seed) {
    const Vector gap = plan.payoff->mean() - plan.eATa;
    MinCost out;
    out.value = gap.dot(plan.ric.R_llt[0].solve(gap));

    const double T = plan.grid.T;
    bool closed = plan.payoff->kernel_second_moment(0.0, T).has_value();
    if (closed) {
        const auto fn = [&](double t, double tau) -> Matrix {
            const Matrix kf2 = *plan.payoff->kernel_second_moment(t, tau);
            const Matrix r = plan.ric.R_tau(tau);
            return Matrix::Constant(1, 1, solve_spd(r, kf2, t).trace());
        };
        // split at payoff mark times so panel doubling never straddles a jump
        std::vector<double> cuts{0.0, T};
        for (double tm : plan.payoff->mark_times())
            if (tm > 0.0 && tm < T) cuts.push_back(tm);
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
            out.value += integrate_singular(fn, cuts[k], cuts[k + 1], T, plan.ric.quad)(0, 0);
        return out;
    }

    // Monte Carlo fallback over the plan's grid for families like the call,
    // whose kernel second moment has no convenient closed form.
    out.mc_fallback = true;
    const int N = plan.grid.steps();
    const int d = plan.sys.d;
    const GbmMarket* mkt = plan.payoff->market();
    std::vector<double> per_path(fallback_paths, 0.0);
#pragma omp parallel for schedule(dynamic)
    for (int p = 0; p < fallback_paths; ++p) {
        PathRng rng(fallback_seed, static_cast<std::uint64_t>(p));
        PathState st;
        st.w = Vector::Zero(d);
        st.w_mark[0] = Vector::Zero(d);
        st.w_mark[1] = Vector::Zero(d);
        st.S = mkt ? mkt->S0 : 0.0;
        std::vector<double> dwl(static_cast<std::size_t>(N) * d);
        for (int i = 0; i < N; ++i) {
            const double sd = plan.steps[i].sqrt_dt;
            for (int j = 0; j < d; ++j)
                dwl[static_cast<std::size_t>(i) * d + j] = sd * rng.normal();
        }
        double acc = 0;
        for (int i = 0; i < N; ++i) {
            const StepPlan& sp = plan.steps[i];
            st.t = sp.t;
            st.tau = sp.tau;
            for (std::size_t m = 0; m < plan.mark_nodes.size(); ++m)
                if (plan.mark_nodes[m] == i) st.w_mark[m] = st.w;
            const Matrix k = plan.payoff->kernel(st);
            acc += (k.transpose() * plan.ric.R_llt[i].solve(k)).trace() * sp.dt;
            if (mkt) {
                st.asian_sum += st.S * sp.dt;
                st.S *= std::exp(mkt->sigma * dwl[static_cast<std::size_t>(i) * d] -
                                 0.5 * mkt->sigma * mkt->sigma * sp.dt);
            }
            for (int j = 0; j < d; ++j)
                st.w(j) += dwl[static_cast<std::size_t>(i) * d + j];
        }
        per_path[p] = acc;
    }
    const MeanSe ms = mean_se(per_path);
    out.value += ms.mean;
    out.se = ms.se;
    return out;
}

LagrangianStats lagrangian_with(const RunResult& run, const Matrix& mu_sample) {
    if (mu_sample.rows() != run.paths || mu_sample.cols() != run.n)
        throw ValidationError("lagrangian: mu sample must match the run ensemble");
    std::vector<double> ell(run.paths), con(run.paths);
    for (int p = 0; p < run.paths; ++p) {
        const double c = mu_sample.row(p).dot(run.f.row(p) - run.xT.row(p));
        con[p] = c;
        ell[p] = 0.5 * run.cost[p] + c;
    }
    const MeanSe l = mean_se(ell);
    const MeanSe ct = mean_se(con);
    LagrangianStats st;
    st.L = l.mean;
    st.se = l.se;
    st.half_cost = 0.5 * mean_se(run.cost).mean;
    st.constraint = ct.mean;
    st.constraint_se = ct.se;
    return st;
}

LagrangianStats lagrangian(const RunResult& run) { return lagrangian_with(run, run.muT); }

AdmissibilityReport admissibility_report(const RunResult& run) {
    AdmissibilityReport rep;
    rep.weighted_energy = mean_se(run.cost_g);
    std::vector<double> sq(run.paths);
    for (int p = 0; p < run.paths; ++p) sq[p] = run.absint[p] * run.absint[p];
    rep.abs_integral_sq = mean_se(sq);
    return rep;
}

std::vector<Matrix> zero_replicating_profiles(const ReplicationPlan& plan, int count,
                                              std::uint64_t seed) {
    const int N = plan.grid.steps();
    const int n = plan.sys.n;
    // replication weights W_i = e^{A tau_i} b dt_i in the left-Riemann metric
    std::vector<Matrix> W(N);
    Matrix gram = Matrix::Zero(n, n);
    for (int i = 0; i < N; ++i) {
        W[i] = plan.steps[i].EAt.transpose() * plan.sys.b * plan.grid.dt[i];
        gram += W[i] * W[i].transpose();
    }
    Eigen::LLT<Matrix> gram_llt(gram);

    std::vector<Matrix> out;
    out.reserve(count);
    for (int j = 0; j < count; ++j) {
        PathRng rng(seed, 0x5f0feed5ull + static_cast<std::uint64_t>(j));
        Matrix v(n, N);
        for (int i = 0; i < N; ++i)
            for (int c = 0; c < n; ++c) v(c, i) = rng.normal();
        Vector s = Vector::Zero(n);
        for (int i = 0; i < N; ++i) s += W[i] * v.col(i);
        const Vector y = gram_llt.solve(s);
        for (int i = 0; i < N; ++i) v.col(i) -= W[i].transpose() * y;
        const double c = profile_cost(plan, v);
        if (!(c > 0)) throw NumericError("perturbation profile degenerated to zero");
        v /= std::sqrt(c);
        out.push_back(std::move(v));
    }
    return out;
}

double profile_cost(const ReplicationPlan& plan, const Matrix& v) {
    double c = 0;
    for (int i = 0; i < plan.grid.steps(); ++i)
        c += v.col(i).dot(plan.steps[i].Gamma * v.col(i)) * plan.grid.dt[i];
    return c;
}

PerturbationStats perturbation_delta(const RunResult& run, int probe, double eps,
                                     double v_cost) {
    if (probe < 0 || probe >= run.probe_lin.cols())
        throw ValidationError("perturbation: probe index out of range");
    std::vector<double> s(run.paths);
    for (int p = 0; p < run.paths; ++p) s[p] = run.probe_lin(p, probe);
    const MeanSe ms = mean_se(s);
    return {2.0 * eps * ms.mean + eps * eps * v_cost, 2.0 * std::abs(eps) * ms.se};
}

}  // namespace tcrep
