#include "tcrep/weights.hpp"

#include <cmath>
#include <sstream>

namespace tcrep {

PenaltyWeight PenaltyWeight::make(WeightKind kind, double alpha, double T1, double T,
                                  const Matrix& G) {
    if (!(alpha > 0.5 && alpha < 1.0)) {
        std::ostringstream os;
        os << "weight.alpha: must lie strictly in (0.5,1), got " << alpha;
        throw ValidationError(os.str());
    }
    if (!(T > 0.0) || !std::isfinite(T))
        throw ValidationError("weight.T: horizon must be positive and finite");
    if (kind == WeightKind::PurePower) T1 = T;
    if (!(T1 > 0.0) || T1 > T)
        throw ValidationError("weight.T1: plateau cutoff must lie in (0,T]");
    if (G.rows() != G.cols() || G.rows() < 1)
        throw ValidationError("weight.G: must be a square matrix");
    if (!G.allFinite()) throw ValidationError("weight.G: entries must be finite");
    const double gscale = std::max(1.0, G.cwiseAbs().maxCoeff());
    if ((G - G.transpose()).cwiseAbs().maxCoeff() > 1e-12 * gscale)
        throw ValidationError("weight.G: not symmetric within 1e-12");
    Eigen::SelfAdjointEigenSolver<Matrix> es(G);
    if (!(es.eigenvalues().minCoeff() > 0.0))
        throw ValidationError("weight.G: not positive definite");

    PenaltyWeight w;
    w.kind_ = kind;
    w.alpha_ = alpha;
    w.T1_ = T1;
    w.T_ = T;
    w.G_ = 0.5 * (G + G.transpose());
    w.g_inv_ = Eigen::LLT<Matrix>(w.G_).solve(Matrix::Identity(G.rows(), G.cols()));
    // On the plateau g = 1 while (T-t)^alpha >= T1^alpha, so c = max(1, T1^-alpha)
    // certifies both bounds; on the power tail both hold with c = 1.
    w.c_ = std::max(1.0, std::pow(T1, -alpha));
    return w;
}

double PenaltyWeight::g_tau(double tau) const {
    if (!(tau > 0.0) || tau > T_ + 1e-12 * T_)
        throw ValidationError("weight: g undefined outside [0,T)");
    return tau >= T1_ ? 1.0 : std::pow(tau, alpha_);
}

double PenaltyWeight::g(double t) const { return g_tau(T_ - t); }

Matrix PenaltyWeight::gamma(double t) const { return g_tau(T_ - t) * G_; }

Matrix PenaltyWeight::gamma_inv(double t) const { return gamma_inv_tau(T_ - t); }

}  // namespace tcrep
