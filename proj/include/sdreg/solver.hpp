#pragma once

#include "sdreg/risk.hpp"
#include "sdreg/spectral.hpp"
#include "sdreg/types.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace sdreg {

/// Linear system tying the k-step estimator to a target per-direction
/// scaling: row j reads sum_i xibar_i (1 - a_j^i) = 1 - (lambda + s_j^2) ts_j
/// with a_j = s_j^2 / (lambda + s_j^2).
template <typename Scalar>
struct AchievabilitySystemT {
    MatX<Scalar> a_matrix;   // r x k
    VecX<Scalar> alpha;      // r
    Scalar lambda{};
    Scalar condition_number{};
};

using AchievabilitySystem = AchievabilitySystemT<double>;

template <typename Scalar>
struct SolveReportT {
    XiBarT<Scalar> xibar;
    bool feasible = false;
    Scalar residual{};           // ||A xibar - alpha|| / max(1, ||alpha||)
    Scalar condition_number{};
    Scalar risk{};               // closed-form excess risk at the solution
    Scalar risk_gap{};           // risk - lower bound (absolute)
    std::string note;
};

using SolveReport = SolveReportT<double>;

template <typename Scalar>
AchievabilitySystemT<Scalar> build_system(const ProblemInstanceT<Scalar>& instance,
                                          Scalar lambda, Eigen::Index k,
                                          const VecX<Scalar>& target_scaling) {
    if (!(lambda > Scalar(0))) throw input_error("build_system: lambda must be > 0");
    if (k < 1) throw input_error("build_system: k must be >= 1");
    const Eigen::Index r = instance.rank();
    if (target_scaling.size() < r)
        throw input_error("build_system: target scaling shorter than the rank");
    const auto& s = instance.spectrum.singular_values;

    AchievabilitySystemT<Scalar> sys;
    sys.lambda = lambda;
    sys.a_matrix.resize(r, k);
    sys.alpha.resize(r);
    for (Eigen::Index j = 0; j < r; ++j) {
        const Scalar s2 = s(j) * s(j);
        const Scalar a = s2 / (lambda + s2);
        Scalar apow = Scalar(1);
        for (Eigen::Index i = 0; i < k; ++i) {
            apow *= a;
            sys.a_matrix(j, i) = Scalar(1) - apow;
        }
        sys.alpha(j) = Scalar(1) - (lambda + s2) * target_scaling(j);
    }
    Eigen::JacobiSVD<MatX<Scalar>> svd(sys.a_matrix);
    const auto& sv = svd.singularValues();
    sys.condition_number = sv(sv.size() - 1) > Scalar(0)
        ? sv(0) / sv(sv.size() - 1)
        : std::numeric_limits<Scalar>::infinity();
    return sys;
}

template <typename Scalar>
AchievabilitySystemT<Scalar> build_system(const ProblemInstanceT<Scalar>& instance,
                                          Scalar lambda, Eigen::Index k) {
    return build_system(instance, lambda, k, optimal_preconditioner(instance));
}

/// Solve A xibar = alpha for the exact (square, k = r) or overdetermined
/// case. One step of iterative refinement sharpens the QR solution; the
/// report flags infeasibility on large residual or a numerically singular
/// system rather than throwing.
template <typename Scalar>
SolveReportT<Scalar> solve_xibar_exact(const ProblemInstanceT<Scalar>& instance,
                                       const AchievabilitySystemT<Scalar>& sys) {
    SolveReportT<Scalar> rep;
    rep.condition_number = sys.condition_number;

    Eigen::ColPivHouseholderQR<MatX<Scalar>> qr(sys.a_matrix);
    VecX<Scalar> z = qr.solve(sys.alpha);
    VecX<Scalar> resid = sys.alpha - sys.a_matrix * z;
    z += qr.solve(resid);

    const Scalar denom = std::max(Scalar(1), Scalar(sys.alpha.norm()));
    rep.residual = (sys.alpha - sys.a_matrix * z).norm() / denom;
    rep.xibar = XiBarT<Scalar>{z};

    if (!z.allFinite() || sys.condition_number > Scalar(1e12)) {
        rep.feasible = false;
        rep.note = "system numerically singular";
        return rep;
    }
    if (rep.residual > Scalar(1e-6)) {
        rep.feasible = false;
        rep.note = "residual above feasibility threshold";
        return rep;
    }
    rep.feasible = true;

    const auto risk = excess_risk_closed(instance, sys.lambda, rep.xibar);
    rep.risk = risk.excess_risk;
    rep.risk_gap = rep.risk - lower_bound(instance);
    return rep;
}

/// Minimizer of the risk quadratic: xibar = -M^+ m via the eigendecomposition
/// of the diagonally equilibrated M, cross-checked against a direct LDLT
/// solve; whichever candidate evaluates to the lower risk wins. The rank
/// cutoff scales with the scalar's epsilon so the usable condition-number
/// range grows with the working precision; for singular M the tie-break is
/// minimum norm in the equilibrated coordinates.
template <typename Scalar>
XiBarT<Scalar> solve_xibar_argmin(const QuadraticRiskT<Scalar>& q) {
    const Eigen::Index k = q.k();
    if (k == 0) return XiBarT<Scalar>{VecX<Scalar>::Zero(0)};
    // The diagonal of M spans many orders of magnitude at extreme lambda
    // (entries scale like powers of s^2/(lambda+s^2)); without equilibration
    // the cutoff below would discard directions that carry real curvature.
    VecX<Scalar> d(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const Scalar mii = q.m_matrix(i, i);
        d(i) = mii > Scalar(0) ? Scalar(1) / std::sqrt(mii) : Scalar(1);
    }
    const MatX<Scalar> ms = d.asDiagonal() * q.m_matrix * d.asDiagonal();
    const VecX<Scalar> rhs = -(d.asDiagonal() * q.m_vector);
    Eigen::SelfAdjointEigenSolver<MatX<Scalar>> eig(ms);
    const VecX<Scalar>& ev = eig.eigenvalues();
    const Scalar eps = std::numeric_limits<Scalar>::epsilon();
    const Scalar evmax = std::max(ev.cwiseAbs().maxCoeff(), Scalar(0));
    const Scalar cutoff = Scalar(4096) * eps * evmax;
    const auto pinv_apply = [&](const VecX<Scalar>& v) {
        VecX<Scalar> p = eig.eigenvectors().transpose() * v;
        for (Eigen::Index i = 0; i < k; ++i)
            p(i) = ev(i) > cutoff ? p(i) / ev(i) : Scalar(0);
        return VecX<Scalar>(eig.eigenvectors() * p);
    };
    VecX<Scalar> z = pinv_apply(rhs);
    z += pinv_apply(rhs - ms * z);  // one refinement step
    XiBarT<Scalar> best{VecX<Scalar>(d.asDiagonal() * z)};
    Scalar best_risk = excess_risk_closed(q, best).excess_risk;

    // A PD system whose smallest eigenvalue straddles the cutoff loses a real
    // curvature direction to the truncation; a refined direct solve recovers
    // it. The residual gate keeps the candidate only when the solve is
    // backward stable, which also bounds the error of evaluating its risk.
    Eigen::LDLT<MatX<Scalar>> ldlt(ms);
    if (ldlt.info() == Eigen::Success) {
        VecX<Scalar> zl = ldlt.solve(rhs);
        zl += ldlt.solve(rhs - ms * zl);
        if (zl.allFinite()) {
            const Scalar resid = (ms * zl - rhs).norm();
            const Scalar gate = Scalar(64) * Scalar(k) * eps *
                                (evmax * zl.norm() + rhs.norm());
            if (resid <= gate) {
                const XiBarT<Scalar> cand{VecX<Scalar>(d.asDiagonal() * zl)};
                const Scalar cand_risk = excess_risk_closed(q, cand).excess_risk;
                if (std::isfinite(cand_risk) && cand_risk < best_risk &&
                    cand_risk >= -gate * zl.norm()) {
                    best = cand;
                    best_risk = cand_risk;
                }
            }
        }
    }
    return best;
}

template <typename Scalar>
XiBarT<Scalar> solve_xibar_argmin(const ProblemInstanceT<Scalar>& instance, Scalar lambda,
                                  Eigen::Index k) {
    return solve_xibar_argmin(quadratic_coefficients(instance, lambda, k));
}

template <typename Scalar>
struct LambdaSearchReportT {
    bool success = false;
    Scalar lambda{};
    SolveReportT<Scalar> solve;
    Scalar best_residual{};      // smallest residual seen across the grid
    Scalar relative_risk_gap{};  // (risk - LB) / LB at the returned lambda
    int lambdas_tried = 0;
};

using LambdaSearchReport = LambdaSearchReportT<double>;

/// Scan a lambda grid with k = rank steps, solving the achievability system
/// at each point and keeping, among the lambdas whose solution meets the
/// bound (relative risk gap <= gap_tolerance), the one with the smallest
/// residual; clustered response nodes make some grid regions ill
/// conditioned, so picking by residual rather than grid order lands on a
/// trustworthy system. A local refinement pass around the winner tightens
/// the residual further. On failure the report carries the best residual
/// seen.
template <typename Scalar>
LambdaSearchReportT<Scalar>
search_lambda_achieving_bound(const ProblemInstanceT<Scalar>& instance,
                              const std::vector<Scalar>& lambda_grid,
                              Scalar gap_tolerance = Scalar(1e-8)) {
    if (lambda_grid.empty())
        throw input_error("search_lambda_achieving_bound: empty lambda grid");
    const Eigen::Index r = instance.rank();
    if (r == 0) throw input_error("search_lambda_achieving_bound: zero-rank instance");
    const Scalar lb = lower_bound(instance);

    LambdaSearchReportT<Scalar> out;
    out.best_residual = std::numeric_limits<Scalar>::infinity();

    auto attempt = [&](Scalar lam) -> SolveReportT<Scalar> {
        auto sys = build_system(instance, lam, r);
        auto rep = solve_xibar_exact(instance, sys);
        ++out.lambdas_tried;
        if (rep.residual < out.best_residual) out.best_residual = rep.residual;
        return rep;
    };
    const auto accepts = [&](const SolveReportT<Scalar>& rep) {
        if (!rep.feasible) return false;
        const Scalar rel_gap = lb > Scalar(0) ? rep.risk_gap / lb : rep.risk_gap;
        return std::abs(rel_gap) <= gap_tolerance;
    };

    bool found = false;
    Scalar best_lam{};
    SolveReportT<Scalar> best;
    for (Scalar lam : lambda_grid) {
        auto rep = attempt(lam);
        if (accepts(rep) && (!found || rep.residual < best.residual)) {
            found = true;
            best = rep;
            best_lam = lam;
        }
    }
    if (!found) {
        out.success = false;
        return out;
    }
    for (Scalar f : {Scalar(0.5), Scalar(0.75), Scalar(1.25), Scalar(2)}) {
        const Scalar lam = best_lam * f;
        auto rep = attempt(lam);
        if (accepts(rep) && rep.residual < best.residual) {
            best = rep;
            best_lam = lam;
        }
    }
    out.success = true;
    out.lambda = best_lam;
    out.solve = best;
    out.relative_risk_gap = lb > Scalar(0) ? best.risk_gap / lb : best.risk_gap;
    return out;
}

}  // namespace sdreg
