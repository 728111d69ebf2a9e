#pragma once

#include "sdreg/estimators.hpp"
#include "sdreg/spectral.hpp"
#include "sdreg/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace sdreg {

/// Excess risk of the k-step estimator as a function of xibar:
///   risk(xibar) = xibar^T M xibar + 2 xibar^T m + c,
/// with the bias (B, b) and variance (V, v) parts kept separately
/// (M = B + V, m = b + v, c = c_bias + c_var). rho_j = lambda / s_j^2 and
/// c_coeffs(j, i) = 1 - (1 + rho_j)^{-i} for the j-th nonzero direction.
template <typename Scalar>
struct QuadraticRiskT {
    MatX<Scalar> m_matrix;   // k x k, PSD, rank <= r
    VecX<Scalar> m_vector;   // k
    Scalar c_scalar{};       // ridge excess risk at this lambda
    Scalar lambda{};
    VecX<Scalar> rho;           // r
    MatX<Scalar> c_coeffs;      // r x k
    VecX<Scalar> bias_weights;  // r: s_j^2 comp_j a_j^2 / n
    VecX<Scalar> var_weights;   // r: gamma^2 a_j^2 / n

    MatX<Scalar> bias_matrix;
    VecX<Scalar> bias_vector;
    Scalar bias_c{};
    MatX<Scalar> var_matrix;
    VecX<Scalar> var_vector;
    Scalar var_c{};

    Eigen::Index k() const { return m_vector.size(); }
};

using QuadraticRisk = QuadraticRiskT<double>;

template <typename Scalar>
struct RiskReportT {
    Scalar excess_risk{};
    Scalar bias_part{};
    Scalar variance_part{};
    std::string method;
    Scalar std_error{};      // 0 for closed-form methods
    std::uint64_t trials = 0;
};

using RiskReport = RiskReportT<double>;

/// Exact quadratic coefficients of the excess risk in xibar space, from the
/// spectral data alone: nonzero singular values s_j and the squared target
/// components theta_j^2 along the corresponding left singular directions.
template <typename Scalar>
QuadraticRiskT<Scalar> quadratic_coefficients(const VecX<Scalar>& singular_values,
                                              const VecX<Scalar>& components,
                                              Scalar gamma2, Eigen::Index n_samples,
                                              Scalar lambda, Eigen::Index k) {
    if (!(lambda > Scalar(0))) throw input_error("quadratic_coefficients: lambda must be > 0");
    if (k < 0) throw input_error("quadratic_coefficients: k must be >= 0");
    if (components.size() < singular_values.size())
        throw input_error("quadratic_coefficients: need one component per singular value");
    if (n_samples <= 0) throw input_error("quadratic_coefficients: n_samples must be > 0");

    const Eigen::Index r = singular_values.size();
    const auto& s = singular_values;
    const auto& comp = components;
    const Scalar n = Scalar(n_samples);
    const Scalar g2 = gamma2;

    QuadraticRiskT<Scalar> q;
    q.lambda = lambda;
    q.rho.resize(r);
    q.c_coeffs.resize(r, k);
    q.bias_weights.resize(r);
    q.var_weights.resize(r);
    q.bias_matrix = MatX<Scalar>::Zero(k, k);
    q.var_matrix = MatX<Scalar>::Zero(k, k);
    q.bias_vector = VecX<Scalar>::Zero(k);
    q.var_vector = VecX<Scalar>::Zero(k);
    q.bias_c = Scalar(0);
    q.var_c = Scalar(0);

    for (Eigen::Index j = 0; j < r; ++j) {
        const Scalar s2 = s(j) * s(j);
        const Scalar rho = lambda / s2;
        const Scalar a = Scalar(1) / (Scalar(1) + rho);  // s^2 / (lambda + s^2)
        q.rho(j) = rho;

        VecX<Scalar> cj(k);
        Scalar apow = Scalar(1);
        for (Eigen::Index i = 0; i < k; ++i) {
            apow *= a;
            cj(i) = Scalar(1) - apow;
        }
        q.c_coeffs.row(j) = cj.transpose();

        const Scalar a2 = a * a;
        const Scalar wb = s2 * comp(j) * a2 / n;  // bias weight on C_j C_j^T
        const Scalar wv = g2 * a2 / n;            // variance weight
        q.bias_weights(j) = wb;
        q.var_weights(j) = wv;
        if (k > 0) {
            q.bias_matrix.noalias() += wb * (cj * cj.transpose());
            q.var_matrix.noalias() += wv * (cj * cj.transpose());
            q.bias_vector.noalias() += (wb * rho) * cj;
            q.var_vector.noalias() += (-wv) * cj;
        }
        q.bias_c += wb * rho * rho;
        q.var_c += wv;
    }

    q.m_matrix = q.bias_matrix + q.var_matrix;
    q.m_vector = q.bias_vector + q.var_vector;
    q.c_scalar = q.bias_c + q.var_c;
    return q;
}

template <typename Scalar>
QuadraticRiskT<Scalar> quadratic_coefficients(const ProblemInstanceT<Scalar>& instance,
                                              Scalar lambda, Eigen::Index k) {
    const Eigen::Index r = instance.rank();
    const VecX<Scalar> s = instance.spectrum.singular_values.head(r);
    const VecX<Scalar> comp = theta_components(instance).components.head(r);
    return quadratic_coefficients<Scalar>(s, comp, instance.gamma2, instance.n(), lambda, k);
}

/// Evaluate the quadratic (bias and variance carried through separately).
/// When the per-direction factorization is available the sum-of-squares form
///   sum_j wb_j (h_j + rho_j)^2 + wv_j (1 - h_j)^2,  h = C xibar,
/// is used: it is exact for the same quadratic, cannot go negative, and its
/// roundoff grows only linearly in ||xibar|| where the expanded form grows
/// quadratically.
template <typename Scalar>
RiskReportT<Scalar> excess_risk_closed(const QuadraticRiskT<Scalar>& q,
                                       const XiBarT<Scalar>& xibar) {
    if (xibar.k() != q.k())
        throw input_error("excess_risk_closed: xibar length must match the coefficients");
    const auto& z = xibar.value;
    RiskReportT<Scalar> rep;
    const Eigen::Index r = q.c_coeffs.rows();
    if (r > 0 && q.c_coeffs.cols() == q.k() && q.bias_weights.size() == r &&
        q.var_weights.size() == r) {
        const VecX<Scalar> h = q.c_coeffs * z;
        rep.bias_part = Scalar(0);
        rep.variance_part = Scalar(0);
        for (Eigen::Index j = 0; j < r; ++j) {
            const Scalar hb = h(j) + q.rho(j);
            const Scalar hv = Scalar(1) - h(j);
            rep.bias_part += q.bias_weights(j) * hb * hb;
            rep.variance_part += q.var_weights(j) * hv * hv;
        }
    } else {
        rep.bias_part = z.dot(q.bias_matrix * z) + 2 * z.dot(q.bias_vector) + q.bias_c;
        rep.variance_part = z.dot(q.var_matrix * z) + 2 * z.dot(q.var_vector) + q.var_c;
    }
    rep.excess_risk = rep.bias_part + rep.variance_part;
    rep.method = "closed_form";
    return rep;
}

template <typename Scalar>
RiskReportT<Scalar> excess_risk_closed(const ProblemInstanceT<Scalar>& instance,
                                       Scalar lambda, const XiBarT<Scalar>& xibar) {
    return excess_risk_closed(quadratic_coefficients(instance, lambda, xibar.k()), xibar);
}

/// Ridge excess risk: (1/n) sum_j (lambda^2 comp_j + gamma^2 s_j^2) s_j^2 / (lambda + s_j^2)^2.
template <typename Scalar>
RiskReportT<Scalar> ridge_risk(const ProblemInstanceT<Scalar>& instance, Scalar lambda) {
    if (!(lambda > Scalar(0))) throw input_error("ridge_risk: lambda must be > 0");
    const Eigen::Index r = instance.rank();
    const auto& s = instance.spectrum.singular_values;
    const VecX<Scalar> comp = theta_components(instance).components;
    const Scalar n = Scalar(instance.n());

    RiskReportT<Scalar> rep;
    rep.method = "ridge_closed_form";
    for (Eigen::Index j = 0; j < r; ++j) {
        const Scalar s2 = s(j) * s(j);
        const Scalar denom = (lambda + s2) * (lambda + s2);
        rep.bias_part += lambda * lambda * comp(j) * s2 / denom / n;
        rep.variance_part += instance.gamma2 * s2 * s2 / denom / n;
    }
    rep.excess_risk = rep.bias_part + rep.variance_part;
    return rep;
}

template <typename Scalar>
struct LambdaStarResultT {
    Scalar lambda{};
    Scalar risk{};
    Scalar fixed_point_residual{};  // |lambda - rhs(lambda)| / lambda
    bool at_boundary = false;       // no interior minimum found in range
};

using LambdaStarResult = LambdaStarResultT<double>;

namespace detail {

// Right-hand side of the stationarity fixed point
//   lambda = gamma^2 * (sum s^4/(lambda+s^2)^3) / (sum comp s^4/(lambda+s^2)^3).
template <typename Scalar>
Scalar lambda_fixed_point_rhs(const ProblemInstanceT<Scalar>& instance, Scalar lambda) {
    const Eigen::Index r = instance.rank();
    const auto& s = instance.spectrum.singular_values;
    const VecX<Scalar> comp = theta_components(instance).components;
    Scalar num = 0, den = 0;
    for (Eigen::Index j = 0; j < r; ++j) {
        const Scalar s2 = s(j) * s(j);
        const Scalar w = s2 * s2 / std::pow(lambda + s2, Scalar(3));
        num += w;
        den += comp(j) * w;
    }
    if (den == Scalar(0)) return std::numeric_limits<Scalar>::infinity();
    return instance.gamma2 * num / den;
}

template <typename Scalar, typename F>
Scalar golden_section_min(F f, Scalar lo, Scalar hi, int iters) {
    const Scalar phi = Scalar(0.5) * (std::sqrt(Scalar(5)) - Scalar(1));
    Scalar a = lo, b = hi;
    Scalar x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    Scalar f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < iters; ++it) {
        if (f1 < f2) {
            b = x2; x2 = x1; f2 = f1;
            x1 = b - phi * (b - a); f1 = f(x1);
        } else {
            a = x1; x1 = x2; f1 = f2;
            x2 = a + phi * (b - a); f2 = f(x2);
        }
    }
    return f1 < f2 ? x1 : x2;
}

}  // namespace detail

/// Minimize the ridge risk over lambda in [range_lo, range_hi]: log-grid
/// bracketing of every local minimum, golden-section refinement, global
/// winner returned. The fixed-point equation may admit several solutions;
/// the report carries the residual instead of claiming uniqueness.
template <typename Scalar>
LambdaStarResultT<Scalar> ridge_lambda_star(const ProblemInstanceT<Scalar>& instance,
                                            Scalar range_lo = Scalar(1e-6),
                                            Scalar range_hi = Scalar(1e6)) {
    if (!(range_lo > Scalar(0)) || !(range_hi > range_lo))
        throw input_error("ridge_lambda_star: need 0 < range_lo < range_hi");

    auto risk_at = [&](Scalar lam) { return ridge_risk(instance, lam).excess_risk; };
    auto risk_at_log = [&](Scalar t) { return risk_at(std::exp(t)); };

    const int per_decade = 8;
    const Scalar tlo = std::log(range_lo), thi = std::log(range_hi);
    const int cells = std::max(2, int((thi - tlo) / std::log(Scalar(10)) * per_decade));
    std::vector<Scalar> ts(cells + 1), fs(cells + 1);
    for (int i = 0; i <= cells; ++i) {
        ts[i] = tlo + (thi - tlo) * Scalar(i) / Scalar(cells);
        fs[i] = risk_at_log(ts[i]);
    }

    Scalar best_t = ts[0];
    Scalar best_f = fs[0];
    bool interior = false;
    for (int i = 1; i < cells; ++i) {
        if (fs[i] <= fs[i - 1] && fs[i] <= fs[i + 1]) {
            Scalar t = detail::golden_section_min<Scalar>(risk_at_log, ts[i - 1], ts[i + 1], 120);
            Scalar f = risk_at_log(t);
            if (f < best_f) { best_f = f; best_t = t; }
            interior = true;
        }
    }
    if (fs[cells] < best_f) { best_f = fs[cells]; best_t = ts[cells]; interior = false; }
    if (fs[0] < best_f) { best_f = fs[0]; best_t = ts[0]; interior = false; }

    LambdaStarResultT<Scalar> res;
    res.lambda = std::exp(best_t);
    res.risk = best_f;
    res.at_boundary = !interior;
    const Scalar rhs = detail::lambda_fixed_point_rhs(instance, res.lambda);
    res.fixed_point_residual = std::abs(res.lambda - rhs) / res.lambda;

    // Value comparisons locate a flat minimum only to about sqrt(eps)
    // relative in lambda; the stationarity residual still has slope there,
    // so a short fixed-point polish sharpens the location. A candidate is
    // kept only if it stays near the bracket and does not worsen the risk,
    // which guards against iterates escaping to another stationary point.
    if (interior) {
        Scalar lam = res.lambda;
        Scalar cand = res.lambda;
        Scalar cand_residual = res.fixed_point_residual;
        for (int it = 0; it < 48 && cand_residual > Scalar(0); ++it) {
            lam = detail::lambda_fixed_point_rhs(instance, lam);
            if (!std::isfinite(lam) || !(lam > Scalar(0))) break;
            if (std::abs(std::log(lam / res.lambda)) > Scalar(0.5)) break;
            const Scalar next_rhs = detail::lambda_fixed_point_rhs(instance, lam);
            const Scalar resid = std::abs(lam - next_rhs) / lam;
            if (resid < cand_residual) {
                cand_residual = resid;
                cand = lam;
            }
        }
        if (cand != res.lambda) {
            const Scalar cand_risk = risk_at(cand);
            if (cand_risk <= res.risk * (Scalar(1) + Scalar(1e-9))) {
                res.lambda = cand;
                res.risk = cand_risk;
                res.fixed_point_residual = cand_residual;
            }
        }
    }
    return res;
}

/// Fundamental lower bound over the diagonal-in-the-singular-basis linear
/// family: (gamma^2/n) sum_j comp_j / (comp_j + gamma^2 / s_j^2).
template <typename Scalar>
Scalar lower_bound(const ProblemInstanceT<Scalar>& instance) {
    const Eigen::Index r = instance.rank();
    const auto& s = instance.spectrum.singular_values;
    const VecX<Scalar> comp = theta_components(instance).components;
    const Scalar g2 = instance.gamma2;
    Scalar sum = 0;
    for (Eigen::Index j = 0; j < r; ++j) {
        const Scalar denom = comp(j) + g2 / (s(j) * s(j));
        if (denom > Scalar(0)) sum += comp(j) / denom;
    }
    return g2 / Scalar(instance.n()) * sum;
}

/// Per-direction scaling that attains the lower bound:
/// ts_j = comp_j / (comp_j s_j^2 + gamma^2) for j <= r, 0 beyond the rank.
template <typename Scalar>
VecX<Scalar> optimal_preconditioner(const ProblemInstanceT<Scalar>& instance) {
    const Eigen::Index r = instance.rank();
    const auto& s = instance.spectrum.singular_values;
    const VecX<Scalar> comp = theta_components(instance).components;
    VecX<Scalar> ts = VecX<Scalar>::Zero(instance.d());
    for (Eigen::Index j = 0; j < r; ++j) {
        const Scalar denom = comp(j) * s(j) * s(j) + instance.gamma2;
        ts(j) = denom > Scalar(0) ? comp(j) / denom : Scalar(0);
    }
    return ts;
}

/// Exact minimum excess risk of the k-step family (minimum over both the
/// parameters and the penalty), available once k reaches the number of
/// distinct singular values: the per-direction responses are then free,
/// except that directions sharing a singular value share one response. Each
/// group's optimal response is a one-dimensional quadratic minimum, so the
/// value is immune to the conditioning of the parameter-space solve.
/// Throws when k is too small for the closed form.
template <typename Scalar>
Scalar k_step_min_risk_exact(const ProblemInstanceT<Scalar>& instance, Eigen::Index k,
                             Scalar tie_tolerance = Scalar(1e-9)) {
    const Eigen::Index r = instance.rank();
    if (r == 0) return Scalar(0);
    const auto& s = instance.spectrum.singular_values;
    const VecX<Scalar> comp = theta_components(instance).components;
    const Scalar g2 = instance.gamma2;

    // Singular values arrive nonincreasing; group near-ties.
    Scalar sum = 0;
    Eigen::Index groups = 0;
    Eigen::Index j = 0;
    while (j < r) {
        Eigen::Index end = j + 1;
        while (end < r && s(j) - s(end) <= tie_tolerance * s(0)) ++end;
        Scalar w = 0;  // sum of comp * s^2 over the group
        for (Eigen::Index l = j; l < end; ++l) w += comp(l) * s(l) * s(l);
        const Scalar m = Scalar(end - j) * g2;
        if (w + m > Scalar(0)) sum += w * m / (w + m);
        ++groups;
        j = end;
    }
    if (k < groups)
        throw input_error(
            "k_step_min_risk_exact: k below the number of distinct singular values");
    return sum / Scalar(instance.n());
}

enum class DegenerateCase { EqualSingularValues, EqualComponents };

/// Closed-form optimal-ridge risk for the two degenerate families.
/// Equal singular values s (any common value): r gamma^2 / n / (1 + r gamma^2 / (Q s^2)),
/// Q = sum of components, attained at lambda = r gamma^2 / Q.
/// Equal components z over the rank: (gamma^2/n) sum_j 1 / (1 + gamma^2/(z s_j^2)),
/// attained at lambda = gamma^2 / z.
template <typename Scalar>
Scalar degenerate_case_bounds(const ProblemInstanceT<Scalar>& instance, DegenerateCase which,
                              Scalar check_tolerance = Scalar(1e-9)) {
    const Eigen::Index r = instance.rank();
    if (r == 0) throw input_error("degenerate_case_bounds: zero-rank instance");
    const auto& s = instance.spectrum.singular_values;
    const VecX<Scalar> comp = theta_components(instance).components;
    const Scalar n = Scalar(instance.n());
    const Scalar g2 = instance.gamma2;

    if (which == DegenerateCase::EqualSingularValues) {
        const Scalar s1 = s(0);
        for (Eigen::Index j = 0; j < r; ++j)
            if (std::abs(s(j) - s1) > check_tolerance * s1)
                throw input_error("degenerate_case_bounds: singular values are not all equal");
        const Scalar q = comp.head(r).sum();
        if (q == Scalar(0)) return Scalar(0);
        return (r * g2 / n) / (Scalar(1) + r * g2 / (q * s1 * s1));
    }

    // EqualComponents
    const Scalar z = comp.head(r).mean();
    for (Eigen::Index j = 0; j < r; ++j)
        if (std::abs(comp(j) - z) > check_tolerance * std::max(z, Scalar(1)))
            throw input_error("degenerate_case_bounds: components are not all equal");
    if (z == Scalar(0)) return Scalar(0);
    Scalar sum = 0;
    for (Eigen::Index j = 0; j < r; ++j)
        sum += Scalar(1) / (Scalar(1) + g2 / (z * s(j) * s(j)));
    return g2 / n * sum;
}

template <typename Scalar>
struct DominanceResultT {
    bool strict = false;
    Scalar diagnostic_sum{};
    Scalar lambda_star{};
};

using DominanceResult = DominanceResultT<double>;

/// Pairwise-imbalance test: one distillation step strictly improves on the
/// optimal ridge when
///   sum_{k<j pairs} s_j^4 s_k^4 (s_j^2 - s_k^2)(comp_k - comp_j)
///                 / ((l* + s_j^2)^4 (l* + s_k^2)^4)  <  0
/// evaluated at the optimal ridge penalty l*. Vanishes when all singular
/// values or all components coincide.
template <typename Scalar>
DominanceResultT<Scalar> strict_dominance_condition(const ProblemInstanceT<Scalar>& instance) {
    const auto ls = ridge_lambda_star(instance);
    const Eigen::Index r = instance.rank();
    const auto& s = instance.spectrum.singular_values;
    const VecX<Scalar> comp = theta_components(instance).components;

    Scalar sum = 0;
    for (Eigen::Index kk = 0; kk < r; ++kk) {
        for (Eigen::Index j = 0; j < kk; ++j) {
            const Scalar sj2 = s(j) * s(j), sk2 = s(kk) * s(kk);
            const Scalar num = sj2 * sj2 * sk2 * sk2 * (sj2 - sk2) * (comp(kk) - comp(j));
            const Scalar den = std::pow(ls.lambda + sj2, Scalar(4)) *
                               std::pow(ls.lambda + sk2, Scalar(4));
            sum += num / den;
        }
    }
    DominanceResultT<Scalar> res;
    res.diagnostic_sum = sum;
    res.lambda_star = ls.lambda;
    res.strict = sum < Scalar(0);
    return res;
}

namespace detail {

// Deterministic per-batch seeds derived from the master seed by counter
// (splitmix64 finalizer), so the estimate does not depend on batch size.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t counter) {
    std::uint64_t z = master + counter * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// theta_hat = K * Y for the k-step estimator; K is built by the training
// recursion on matrix columns (Cholesky solves only, no SVD), keeping the
// Monte-Carlo path independent of the spectral formulas it cross-checks.
template <typename Scalar>
MatX<Scalar> estimator_matrix_xibar(const MatX<Scalar>& x, Scalar lambda,
                                    const VecX<Scalar>& xibar) {
    MatX<Scalar> gram = x * x.transpose();
    MatX<Scalar> omega = gram;
    omega.diagonal().array() += lambda;
    Eigen::LLT<MatX<Scalar>> llt(omega);
    MatX<Scalar> w = llt.solve(x);                       // Omega^{-1} X
    MatX<Scalar> kmat = (Scalar(1) - xibar.sum()) * w;   // (1 - sum xibar) I term
    MatX<Scalar> power = w;
    for (Eigen::Index i = 0; i < xibar.size(); ++i) {
        power = llt.solve(gram * power);                 // (Omega^{-1} X X^T)^{i+1} Omega^{-1} X
        kmat.noalias() += xibar(i) * power;
    }
    return kmat;
}

template <typename Scalar>
MatX<Scalar> estimator_matrix_xi(const MatX<Scalar>& x, Scalar lambda,
                                 const VecX<Scalar>& xi) {
    MatX<Scalar> gram = x * x.transpose();
    MatX<Scalar> omega = gram;
    omega.diagonal().array() += lambda;
    Eigen::LLT<MatX<Scalar>> llt(omega);
    MatX<Scalar> ridge = llt.solve(x);
    MatX<Scalar> kmat = ridge;
    for (Eigen::Index i = 0; i < xi.size(); ++i)
        kmat = (Scalar(1) - xi(i)) * ridge + xi(i) * llt.solve(gram * kmat);
    return kmat;
}

template <typename Scalar>
std::vector<RiskReportT<Scalar>>
monte_carlo_impl(const ProblemInstanceT<Scalar>& instance, Scalar lambda,
                 const std::vector<MatX<Scalar>>& kmats, std::uint64_t trials,
                 std::uint64_t seed, const char* method) {
    const Eigen::Index n = instance.n();
    const MatX<Scalar>& x = instance.x_matrix;
    const Scalar gamma = std::sqrt(instance.gamma2);
    const VecX<Scalar> y0 = x.transpose() * instance.theta_star;
    const std::size_t points = kmats.size();

    // Noiseless part of X^T (theta_hat - theta_star), fixed per point.
    std::vector<VecX<Scalar>> base(points);
    for (std::size_t p = 0; p < points; ++p)
        base[p] = x.transpose() * (kmats[p] * y0 - instance.theta_star);

    std::vector<Scalar> sum(points, Scalar(0)), sumsq(points, Scalar(0));
    const std::uint64_t batch_size = 1024;
    std::uint64_t done = 0, batch_idx = 0;
    MatX<Scalar> noise(n, static_cast<Eigen::Index>(batch_size));
    while (done < trials) {
        const auto b = static_cast<Eigen::Index>(std::min(batch_size, trials - done));
        std::mt19937_64 rng(mix_seed(seed, batch_idx++));
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (Eigen::Index t = 0; t < b; ++t)
            for (Eigen::Index i = 0; i < n; ++i)
                noise(i, t) = gamma * Scalar(gauss(rng));
        for (std::size_t p = 0; p < points; ++p) {
            MatX<Scalar> pred = x.transpose() * (kmats[p] * noise.leftCols(b));
            pred.colwise() += base[p];
            for (Eigen::Index t = 0; t < b; ++t) {
                const Scalar v = pred.col(t).squaredNorm() / Scalar(n);
                sum[p] += v;
                sumsq[p] += v * v;
            }
        }
        done += static_cast<std::uint64_t>(b);
    }

    std::vector<RiskReportT<Scalar>> out(points);
    for (std::size_t p = 0; p < points; ++p) {
        const Scalar mean = sum[p] / Scalar(trials);
        Scalar se = 0;
        if (trials > 1) {
            const Scalar var = std::max(Scalar(0),
                (sumsq[p] - Scalar(trials) * mean * mean) / Scalar(trials - 1));
            se = std::sqrt(var / Scalar(trials));
        }
        out[p].excess_risk = mean;
        out[p].std_error = se;
        out[p].trials = trials;
        out[p].method = method;
        out[p].bias_part = std::numeric_limits<Scalar>::quiet_NaN();
        out[p].variance_part = std::numeric_limits<Scalar>::quiet_NaN();
    }
    (void)lambda;
    return out;
}

}  // namespace detail

/// Monte-Carlo excess risk of the k-step estimator with parameters xi:
/// seeded Gaussian label noise, exact resampling of the defining
/// expectation. Deterministic given (trials, seed).
template <typename Scalar>
RiskReportT<Scalar> excess_risk_monte_carlo(const ProblemInstanceT<Scalar>& instance,
                                            Scalar lambda, const VecX<Scalar>& xi,
                                            std::uint64_t trials, std::uint64_t seed) {
    if (trials < 1) throw input_error("excess_risk_monte_carlo: trials must be >= 1");
    if (!(lambda > Scalar(0))) throw input_error("excess_risk_monte_carlo: lambda must be > 0");
    std::vector<MatX<Scalar>> kmats{
        detail::estimator_matrix_xi(instance.x_matrix, lambda, xi)};
    return detail::monte_carlo_impl(instance, lambda, kmats, trials, seed,
                                    "monte_carlo")[0];
}

template <typename Scalar>
RiskReportT<Scalar> excess_risk_monte_carlo(const ProblemInstanceT<Scalar>& instance,
                                            Scalar lambda, const XiBarT<Scalar>& xibar,
                                            std::uint64_t trials, std::uint64_t seed) {
    if (trials < 1) throw input_error("excess_risk_monte_carlo: trials must be >= 1");
    if (!(lambda > Scalar(0))) throw input_error("excess_risk_monte_carlo: lambda must be > 0");
    std::vector<MatX<Scalar>> kmats{
        detail::estimator_matrix_xibar(instance.x_matrix, lambda, xibar.value)};
    return detail::monte_carlo_impl(instance, lambda, kmats, trials, seed,
                                    "monte_carlo")[0];
}

/// Batched variant: evaluates every xibar point against one shared noise
/// stream (identical to calling the single-point version with the same seed
/// at each point, but drawing the noise once).
template <typename Scalar>
std::vector<RiskReportT<Scalar>>
excess_risk_monte_carlo_multi(const ProblemInstanceT<Scalar>& instance, Scalar lambda,
                              const std::vector<XiBarT<Scalar>>& points,
                              std::uint64_t trials, std::uint64_t seed) {
    if (trials < 1) throw input_error("excess_risk_monte_carlo: trials must be >= 1");
    if (!(lambda > Scalar(0))) throw input_error("excess_risk_monte_carlo: lambda must be > 0");
    std::vector<MatX<Scalar>> kmats;
    kmats.reserve(points.size());
    for (const auto& p : points)
        kmats.push_back(detail::estimator_matrix_xibar(instance.x_matrix, lambda, p.value));
    return detail::monte_carlo_impl(instance, lambda, kmats, trials, seed, "monte_carlo");
}

}  // namespace sdreg
