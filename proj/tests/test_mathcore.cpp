#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tcrep/mathcore.hpp"
#include "tcrep/sde.hpp"

using namespace tcrep;

TEST_CASE("mat_exp basics") {
    Matrix Z = Matrix::Zero(3, 3);
    CHECK((mat_exp(Z, 1.0) - Matrix::Identity(3, 3)).norm() == doctest::Approx(0.0));

    Matrix Nil(2, 2);
    Nil << 0, 1, 0, 0;
    Matrix E = mat_exp(Nil, 1.0);
    CHECK(E(0, 0) == doctest::Approx(1.0));
    CHECK(E(0, 1) == doctest::Approx(1.0));
    CHECK(E(1, 0) == doctest::Approx(0.0));
    CHECK(E(1, 1) == doctest::Approx(1.0));

    Matrix S(1, 1);
    S << 0.1;
    CHECK(mat_exp(S, 2.0)(0, 0) == doctest::Approx(1.2214027581601699).epsilon(1e-14));
}

TEST_CASE("mat_exp matches scalar exponential up to |At|=50") {
    for (double at : {-50.0, -30.0, -3.0, 0.5, 12.0, 50.0}) {
        Matrix A = Matrix::Constant(1, 1, at);
        const double got = mat_exp(A, 1.0)(0, 0);
        CHECK(std::abs(got - std::exp(at)) <= 1e-12 * std::exp(at) + 1e-300);
    }
}

TEST_CASE("mat_exp semigroup and transpose properties") {
    PathRng rng(2024, 0);
    for (int trial = 0; trial < 120; ++trial) {
        const int n = 1 + trial % 5;
        Matrix A(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) A(i, j) = rng.normal();
        if (A.norm() > 2.0) A *= 2.0 / A.norm();
        const double s = 0.3 + 0.01 * (trial % 7), t = 0.9 - 0.05 * (trial % 5);

        Matrix lhs = mat_exp(A, s + t);
        Matrix rhs = mat_exp(A, s) * mat_exp(A, t);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);

        Matrix tr = mat_exp(A.transpose(), t) - mat_exp(A, t).transpose();
        CHECK(tr.cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("mat_exp rejects non-square input") {
    CHECK_THROWS_AS(mat_exp(Matrix::Zero(2, 3), 1.0), ValidationError);
}

TEST_CASE("mat_exp_with_integral reproduces the flow and its integral") {
    Matrix A(2, 2);
    A << 0.3, 1.0, -0.2, 0.1;
    const double dt = 0.7;
    auto [E, Phi] = mat_exp_with_integral(A, dt);
    CHECK((E - mat_exp(A, dt)).cwiseAbs().maxCoeff() < 1e-13);
    // d/ds of int_0^s e^{At} dt at s=dt is e^{A dt}; check against fine Simpson
    const int m = 2000;
    Matrix acc = Matrix::Zero(2, 2);
    const double h = dt / m;
    for (int i = 0; i < m; ++i) {
        acc += (h / 6.0) * (mat_exp(A, i * h) + 4.0 * mat_exp(A, (i + 0.5) * h) +
                            mat_exp(A, (i + 1) * h));
    }
    CHECK((Phi - acc).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("solve_spd examples") {
    Matrix I = Matrix::Identity(3, 3);
    Matrix B(3, 2);
    B << 1, 2, 3, 4, 5, 6;
    CHECK((solve_spd(I, B) - B).norm() == doctest::Approx(0.0));

    Matrix M1(1, 1);
    M1 << 4.0;
    CHECK(solve_spd(M1, Matrix::Identity(1, 1))(0, 0) == doctest::Approx(0.25));

    Matrix M2(2, 2);
    M2 << 2, 1, 1, 2;
    Matrix b2(2, 1);
    b2 << 1, 1;
    Matrix x = solve_spd(M2, b2);
    CHECK(x(0, 0) == doctest::Approx(1.0 / 3));
    CHECK(x(1, 0) == doctest::Approx(1.0 / 3));
}

TEST_CASE("solve_spd residual bound on random SPD systems") {
    PathRng rng(7, 1);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + trial % 6;
        Matrix G(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) G(i, j) = rng.normal();
        Matrix M = G * G.transpose() + 0.1 * Matrix::Identity(n, n);
        Matrix B(n, 2);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 2; ++j) B(i, j) = rng.normal();
        Matrix X = solve_spd(M, B);
        CHECK((M * X - B).norm() <= 1e-10 * B.norm());
        CHECK((M * X - B).norm() <= 1e-9 * B.norm());  // multiply-back recovery
    }
}

TEST_CASE("solve_spd rejects indefinite and near-singular input") {
    Matrix Ind(2, 2);
    Ind << 1, 0, 0, -1;
    CHECK_THROWS_AS(solve_spd(Ind, Matrix::Identity(2, 2)), SingularMatrixError);

    Matrix Sing(2, 2);
    Sing << 1, 0, 0, 1e-15;
    try {
        solve_spd(Sing, Matrix::Identity(2, 2), 0.875);
        CHECK(false);
    } catch (const SingularMatrixError& e) {
        CHECK(std::string(e.what()).find("0.875") != std::string::npos);
        CHECK(e.time.has_value());
    }

    Matrix Asym(2, 2);
    Asym << 1, 0.5, 0, 1;
    CHECK_THROWS_AS(solve_spd(Asym, Matrix::Identity(2, 2)), ValidationError);
}

namespace {

// brute-force reference: trapezoid in the substituted variable v = (1-t)^(1-alpha).
// Takes the bounded factor h(tau) = f(tau) tau^alpha, so the substituted integrand
// is h(v^(1/(1-alpha)))/(1-alpha) with no singular products at v = 0.
double trapezoid_in_v(const std::function<double(double)>& bounded_factor, double alpha,
                      long panels) {
    const double p = 1.0 - alpha;
    double acc = 0.0;
    const double h = 1.0 / panels;  // v in [0,1] for the unit interval
    auto g = [&](double v) { return bounded_factor(std::pow(v, 1.0 / p)) / p; };
    for (long i = 0; i < panels; ++i) acc += 0.5 * h * (g(i * h) + g((i + 1) * h));
    return acc;
}

}  // namespace

TEST_CASE("integrate_singular handles the pure power weight") {
    QuadratureSpec spec;
    spec.alpha = 0.75;
    auto fn = [](double, double tau) {
        return Matrix::Constant(1, 1, std::pow(tau, -0.75));
    };
    Matrix r = integrate_singular(fn, 0.0, 1.0, 1.0, spec);
    CHECK(r(0, 0) == doctest::Approx(4.0).epsilon(1e-10));

    auto zero = [](double, double) { return Matrix::Zero(2, 2); };
    CHECK(integrate_singular(zero, 0.2, 0.9, 1.0, spec).norm() == 0.0);
}

TEST_CASE("integrate_singular against a 1e6-panel trapezoid reference") {
    QuadratureSpec spec;
    spec.alpha = 0.75;
    auto fn = [](double, double tau) {
        return Matrix::Constant(1, 1, std::exp(0.1 * tau) * std::pow(tau, -0.75));
    };
    const Matrix got = integrate_singular(fn, 0.0, 1.0, 1.0, spec);
    const double ref =
        trapezoid_in_v([](double tau) { return std::exp(0.1 * tau); }, 0.75, 1000000L);
    CHECK(std::abs(got(0, 0) - ref) < 1e-8);
}

TEST_CASE("integrate_singular is additive over subintervals") {
    QuadratureSpec spec;
    spec.alpha = 0.6;
    auto fn = [](double t, double tau) {
        return Matrix::Constant(1, 1, (1.0 + t) * std::pow(tau, -0.6));
    };
    const double whole = integrate_singular(fn, 0.0, 2.0, 2.0, spec)(0, 0);
    const double left = integrate_singular(fn, 0.0, 1.3, 2.0, spec)(0, 0);
    const double right = integrate_singular(fn, 1.3, 2.0, 2.0, spec)(0, 0);
    CHECK(std::abs(whole - (left + right)) <= 2.0 * spec.rel_tol * std::abs(whole));
}

TEST_CASE("integrate_singular reports unreachable tolerance") {
    QuadratureSpec spec;
    spec.alpha = 0.75;
    spec.rel_tol = 1e-15;
    spec.max_panels = 2;
    auto wiggly = [](double t, double tau) {
        return Matrix::Constant(1, 1, std::cos(200.0 * t) * std::pow(tau, -0.75));
    };
    CHECK_THROWS_AS(integrate_singular(wiggly, 0.0, 1.0, 1.0, spec), NumericError);
}
