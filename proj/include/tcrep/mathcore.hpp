#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace tcrep {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Bad user input (dimensions, parameter ranges, config fields). CLI exit code 1.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numeric breakdown (overflow, quadrature, rank loss). CLI exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// SPD solve rejected: indefinite or condition estimate above 1e14.
struct SingularMatrixError : NumericError {
    explicit SingularMatrixError(const std::string& msg,
                                 std::optional<double> at_time = std::nullopt)
        : NumericError(msg), time(at_time) {}
    std::optional<double> time;
};

/// e^{A t} by scaling-and-squaring with a Pade(13,13) core.
Matrix mat_exp(const Matrix& A, double t = 1.0);

/// Returns (e^{A dt}, \int_0^dt e^{A s} ds) from one augmented exponential.
std::pair<Matrix, Matrix> mat_exp_with_integral(const Matrix& A, double dt);

/// Solve M X = B for symmetric positive-definite M.
/// Throws SingularMatrixError when M is indefinite or the eigenvalue condition
/// estimate exceeds 1e14; `at_time` labels the failure in the message.
Matrix solve_spd(const Matrix& M, const Matrix& B,
                 std::optional<double> at_time = std::nullopt);

struct QuadratureSpec {
    double rel_tol = 1e-10;
    int max_panels = 1 << 16;
    double alpha = 0.75;  // endpoint exponent in (0.5,1), drives the substitution
};

// Integrands receive t and tau = horizon - t separately; tau is computed in the
// substituted variable, so weights like tau^(-alpha) stay exact near the horizon.
using MatrixIntegrand = std::function<Matrix(double t, double tau)>;

/// \int_a^b fn(t) dt for fn bounded by C (horizon-t)^(-alpha) near `horizon`.
/// Substitutes v = (horizon-t)^(1-alpha) and applies fixed-order Gauss-Legendre
/// panels in v, doubling the panel count until the entrywise relative change
/// is below spec.rel_tol.
Matrix integrate_singular(const MatrixIntegrand& fn, double a, double b,
                          double horizon, const QuadratureSpec& spec);

/// Same integral with the limits given as distances to the horizon
/// (tau_lo = horizon - b, tau_hi = horizon - a), exact arbitrarily close to it.
Matrix integrate_singular_tau(const MatrixIntegrand& fn, double tau_lo, double tau_hi,
                              double horizon, const QuadratureSpec& spec);

}  // namespace tcrep
