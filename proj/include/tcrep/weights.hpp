#pragma once

#include "tcrep/mathcore.hpp"

namespace tcrep {

enum class WeightKind { PurePower, PlateauPower };

/// Control penalty Gamma(t) = g(t) G with g vanishing like (T-t)^alpha at the
/// horizon. Two built-in shapes: pure power g(t) = (T-t)^alpha, and a plateau
/// g(t) = 1 for t < T-T1 followed by the same power tail. Immutable once made.
class PenaltyWeight {
  public:
    PenaltyWeight() = default;  // unusable until assigned from make()
    static PenaltyWeight make(WeightKind kind, double alpha, double T1, double T,
                              const Matrix& G);

    // g and Gamma^{-1} parameterised by tau = T - t; tau-based evaluation avoids
    // cancellation when callers know the distance to the horizon exactly.
    double g_tau(double tau) const;
    double g_inv_tau(double tau) const { return 1.0 / g_tau(tau); }
    Matrix gamma_inv_tau(double tau) const { return g_inv_tau(tau) * g_inv_; }

    double g(double t) const;
    Matrix gamma(double t) const;      // g(t) * G, t in [0,T)
    Matrix gamma_inv(double t) const;  // g(t)^{-1} * G^{-1}, t in [0,T)

    WeightKind kind() const { return kind_; }
    double alpha() const { return alpha_; }
    double plateau_T1() const { return T1_; }
    double horizon() const { return T_; }
    /// Constant certifying g(t) <= c (T-t)^alpha and 1/g(t) <= c (1 + (T-t)^-alpha).
    double certificate_c() const { return c_; }
    const Matrix& G() const { return G_; }
    const Matrix& G_inv() const { return g_inv_; }
    int dim() const { return static_cast<int>(G_.rows()); }

  private:
    WeightKind kind_{};
    double alpha_ = 0.0, T1_ = 0.0, T_ = 0.0, c_ = 0.0;
    Matrix G_, g_inv_;
};

}  // namespace tcrep
