#include "tcrep/mathcore.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace tcrep {

namespace {

// Higham's 1-norm threshold for the Pade(13,13) approximant.
constexpr double kTheta13 = 5.371920351148152;

constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0,  129060195264000.0,   10559470521600.0,
    670442572800.0,      33522128640.0,       1323241920.0,
    40840800.0,          960960.0,            16380.0,
    182.0,               1.0};

double one_norm(const Matrix& m) { return m.cwiseAbs().colwise().sum().maxCoeff(); }

struct Gl16 {
    std::array<double, 16> x{};
    std::array<double, 16> w{};
};

// Nodes and weights of 16-point Gauss-Legendre on [-1,1], Newton on P_16.
const Gl16& gl16() {
    static const Gl16 table = [] {
        Gl16 g{};
        const int n = 16;
        for (int k = 0; k < n / 2; ++k) {
            double xi = std::cos(M_PI * (k + 0.75) / (n + 0.5));
            double p1 = 0.0, dp = 0.0;
            for (int it = 0; it < 64; ++it) {
                double pm = 1.0, pc = xi;
                for (int j = 2; j <= n; ++j) {
                    const double pn = ((2 * j - 1) * xi * pc - (j - 1) * pm) / j;
                    pm = pc;
                    pc = pn;
                }
                p1 = pc;
                dp = n * (xi * pc - pm) / (xi * xi - 1.0);
                const double dx = p1 / dp;
                xi -= dx;
                if (std::abs(dx) < 1e-16) break;
            }
            const double wk = 2.0 / ((1.0 - xi * xi) * dp * dp);
            g.x[k] = -xi;
            g.x[n - 1 - k] = xi;
            g.w[k] = wk;
            g.w[n - 1 - k] = wk;
        }
        return g;
    }();
    return table;
}

}  // namespace

Matrix mat_exp(const Matrix& A, double t) {
    if (A.rows() != A.cols()) throw ValidationError("mat_exp: matrix must be square");
    if (!std::isfinite(t)) throw ValidationError("mat_exp: non-finite time");
    const Eigen::Index n = A.rows();
    Matrix M = A * t;
    if (!M.allFinite()) throw NumericError("mat_exp: non-finite input A*t");

    int squarings = 0;
    const double nrm = one_norm(M);
    if (nrm > kTheta13) {
        squarings = static_cast<int>(std::ceil(std::log2(nrm / kTheta13)));
        M /= std::ldexp(1.0, squarings);
    }

    const Matrix I = Matrix::Identity(n, n);
    const Matrix M2 = M * M;
    const Matrix M4 = M2 * M2;
    const Matrix M6 = M4 * M2;
    const auto& b = kPade13;
    const Matrix U =
        M * (M6 * (b[13] * M6 + b[11] * M4 + b[9] * M2) + b[7] * M6 + b[5] * M4 +
             b[3] * M2 + b[1] * I);
    const Matrix V = M6 * (b[12] * M6 + b[10] * M4 + b[8] * M2) + b[6] * M6 +
                     b[4] * M4 + b[2] * M2 + b[0] * I;
    Matrix F = (V - U).partialPivLu().solve(V + U);
    for (int k = 0; k < squarings; ++k) F = F * F;
    if (!F.allFinite())
        throw NumericError("mat_exp: overflow, |A t| too large (1-norm " +
                           std::to_string(nrm) + ")");
    return F;
}

std::pair<Matrix, Matrix> mat_exp_with_integral(const Matrix& A, double dt) {
    if (A.rows() != A.cols()) throw ValidationError("mat_exp_with_integral: matrix must be square");
    const Eigen::Index n = A.rows();
    // Van Loan block trick: exp([[A,I],[0,0]] dt) = [[e^{A dt}, \int_0^dt e^{As} ds],[0,I]].
    Matrix aug = Matrix::Zero(2 * n, 2 * n);
    aug.topLeftCorner(n, n) = A;
    aug.topRightCorner(n, n) = Matrix::Identity(n, n);
    const Matrix E = mat_exp(aug, dt);
    return {E.topLeftCorner(n, n), E.topRightCorner(n, n)};
}

Matrix solve_spd(const Matrix& M, const Matrix& B, std::optional<double> at_time) {
    if (M.rows() != M.cols()) throw ValidationError("solve_spd: matrix must be square");
    if (M.rows() != B.rows()) throw ValidationError("solve_spd: dimension mismatch");
    const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw ValidationError("solve_spd: matrix not symmetric within 1e-12");

    Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    const auto where = [&]() -> std::string {
        if (!at_time) return "";
        std::ostringstream os;
        os << " at s=" << *at_time;
        return os.str();
    };
    if (!(lo > 0.0))
        throw SingularMatrixError("solve_spd: matrix not positive definite" + where(),
                                  at_time);
    if (hi / lo > 1e14)
        throw SingularMatrixError("solve_spd: condition estimate above 1e14" + where(),
                                  at_time);

    Eigen::LLT<Matrix> llt(M);
    Matrix X = llt.solve(B);
    X += llt.solve(B - M * X);  // one refinement pass
    return X;
}

Matrix integrate_singular(const MatrixIntegrand& fn, double a, double b,
                          double horizon, const QuadratureSpec& spec) {
    if (b < a) throw ValidationError("integrate_singular: b < a");
    if (b > horizon + 1e-15 * std::max(1.0, std::abs(horizon)))
        throw ValidationError("integrate_singular: interval exceeds the horizon");
    return integrate_singular_tau(fn, std::max(horizon - b, 0.0), horizon - a, horizon,
                                  spec);
}

Matrix integrate_singular_tau(const MatrixIntegrand& fn, double tau_lo, double tau_hi,
                              double horizon, const QuadratureSpec& spec) {
    if (!(spec.alpha > 0.5 && spec.alpha < 1.0))
        throw ValidationError("integrate_singular: alpha must lie in (0.5,1)");
    if (!(spec.rel_tol > 0.0))
        throw ValidationError("integrate_singular: tolerance must be positive");
    if (tau_hi < tau_lo) throw ValidationError("integrate_singular: inverted interval");
    if (tau_lo < 0.0) throw ValidationError("integrate_singular: negative horizon gap");

    const Matrix probe = fn(horizon - tau_hi, tau_hi);
    if (tau_lo == tau_hi) return Matrix::Zero(probe.rows(), probe.cols());

    const double p = 1.0 - spec.alpha;
    const double v_lo = std::pow(tau_lo, p);
    const double v_hi = std::pow(tau_hi, p);
    const double wexp = spec.alpha / p;  // v^(alpha/(1-alpha)) carries dt/dv

    const auto& gl = gl16();
    const auto eval_panels = [&](int panels) {
        Matrix acc = Matrix::Zero(probe.rows(), probe.cols());
        const double h = (v_hi - v_lo) / panels;
        for (int k = 0; k < panels; ++k) {
            const double c = v_lo + (k + 0.5) * h;
            for (int q = 0; q < 16; ++q) {
                const double v = c + 0.5 * h * gl.x[q];
                const double tau = std::pow(v, 1.0 / p);
                acc += (0.5 * h * gl.w[q] * std::pow(v, wexp) / p) *
                       fn(horizon - tau, tau);
            }
        }
        return acc;
    };

    Matrix prev = eval_panels(1);
    for (int panels = 2; panels <= spec.max_panels; panels *= 2) {
        Matrix cur = eval_panels(panels);
        const double scale = cur.cwiseAbs().maxCoeff();
        const Matrix floor_m =
            cur.cwiseAbs().cwiseMax(Matrix::Constant(cur.rows(), cur.cols(), 1e-14 * scale));
        if (((cur - prev).cwiseAbs().array() <= spec.rel_tol * floor_m.array()).all())
            return cur;
        prev.swap(cur);
    }
    throw NumericError("integrate_singular: tolerance not reached within max panel count");
}

}  // namespace tcrep
