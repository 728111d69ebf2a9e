#pragma once

#include "sdreg/estimators.hpp"
#include "sdreg/spectral.hpp"
#include "sdreg/types.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace sdreg {

/// Quadratic surrogate of the validation loss in xibar space:
/// f(z) = z^T A z + 2 b^T z + c.
template <typename Scalar>
struct QuadraticModelT {
    MatX<Scalar> a_matrix;
    VecX<Scalar> b_vector;
    Scalar c_scalar{};
    Scalar r_squared{};  // fit quality on the supplied evaluations

    Scalar operator()(const VecX<Scalar>& z) const {
        return z.dot(a_matrix * z) + 2 * b_vector.dot(z) + c_scalar;
    }
};

using QuadraticModel = QuadraticModelT<double>;

namespace detail {

// Monomial features of z for the quadratic above, ordered
// [1, 2 z_1 .. 2 z_k, z_1^2 .. z_k^2, 2 z_i z_j (i < j)], so the coefficient
// vector is exactly (c, b, diag A, upper A).
template <typename Scalar>
VecX<Scalar> quadratic_monomials(const VecX<Scalar>& z) {
    const Eigen::Index k = z.size();
    VecX<Scalar> row(k * (k + 3) / 2 + 1);
    Eigen::Index pos = 0;
    row(pos++) = Scalar(1);
    for (Eigen::Index i = 0; i < k; ++i) row(pos++) = 2 * z(i);
    for (Eigen::Index i = 0; i < k; ++i) row(pos++) = z(i) * z(i);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = i + 1; j < k; ++j) row(pos++) = 2 * z(i) * z(j);
    return row;
}

}  // namespace detail

constexpr Eigen::Index quadratic_monomial_count(Eigen::Index k) {
    return k * (k + 3) / 2 + 1;
}

/// Probe set whose xibar images identify the quadratic exactly: as many
/// probes as monomials, with a well-conditioned monomial design.
template <typename Scalar>
struct ProbeDesignT {
    std::vector<VecX<Scalar>> xi_probes;
    std::vector<VecX<Scalar>> xibar_probes;
    MatX<Scalar> monomials;      // one row per probe
    Scalar condition_number{};
};

using ProbeDesign = ProbeDesignT<double>;

/// Fixed designs for k = 1 and k = 2; for larger k, greedy volume
/// maximization over the (deduplicated) xibar images of {-1, 0, 1}^k.
template <typename Scalar>
ProbeDesignT<Scalar> make_probe_design(Eigen::Index k) {
    if (k < 1) throw input_error("make_probe_design: k must be >= 1");
    const Eigen::Index m = quadratic_monomial_count(k);

    ProbeDesignT<Scalar> design;
    auto push = [&](std::initializer_list<double> vals) {
        VecX<Scalar> xi(k);
        Eigen::Index i = 0;
        for (double v : vals) xi(i++) = Scalar(v);
        design.xi_probes.push_back(xi);
    };

    if (k == 1) {
        push({-1.0});
        push({0.0});
        push({1.0});
    } else if (k == 2) {
        push({0.0, 0.0});
        push({0.0, 1.0});
        push({0.0, -1.0});
        push({1.0, 1.0});
        push({1.0, -1.0});
        push({0.5, 1.0});
    } else {
        // Candidate pool: every xi in {-1, 0, 1}^k. The xi -> xibar map is
        // not injective, so selection happens in monomial space, where
        // duplicates have zero residual volume and are skipped naturally.
        const Eigen::Index pool_size = Eigen::Index(std::pow(3.0, double(k)));
        std::vector<VecX<Scalar>> pool_xi;
        pool_xi.reserve(pool_size);
        for (Eigen::Index code = 0; code < pool_size; ++code) {
            VecX<Scalar> xi(k);
            Eigen::Index c = code;
            for (Eigen::Index i = 0; i < k; ++i) {
                xi(i) = Scalar(c % 3 - 1);
                c /= 3;
            }
            pool_xi.push_back(xi);
        }
        MatX<Scalar> pool_rows(pool_size, m);
        for (Eigen::Index p = 0; p < pool_size; ++p)
            pool_rows.row(p) =
                detail::quadratic_monomials<Scalar>(xi_to_xibar<Scalar>(pool_xi[p]).value)
                    .transpose();

        // Greedy max-volume: repeatedly take the row with the largest
        // component orthogonal to the span of the rows chosen so far.
        MatX<Scalar> basis(m, m);
        std::vector<Eigen::Index> chosen;
        MatX<Scalar> residual = pool_rows;
        for (Eigen::Index pick = 0; pick < m; ++pick) {
            Eigen::Index best = 0;
            Scalar best_norm = -1;
            for (Eigen::Index p = 0; p < pool_size; ++p) {
                const Scalar nrm = residual.row(p).norm();
                if (nrm > best_norm) { best_norm = nrm; best = p; }
            }
            if (best_norm <= Scalar(1e-12))
                throw input_error("make_probe_design: probe pool does not span the monomials");
            basis.row(pick) = residual.row(best) / best_norm;
            chosen.push_back(best);
            residual.noalias() -= (residual * basis.row(pick).transpose()) * basis.row(pick);
        }
        for (Eigen::Index idx : chosen) design.xi_probes.push_back(pool_xi[idx]);
    }

    design.monomials.resize(static_cast<Eigen::Index>(design.xi_probes.size()), m);
    for (std::size_t p = 0; p < design.xi_probes.size(); ++p) {
        design.xibar_probes.push_back(xi_to_xibar<Scalar>(design.xi_probes[p]).value);
        design.monomials.row(static_cast<Eigen::Index>(p)) =
            detail::quadratic_monomials<Scalar>(design.xibar_probes[p]).transpose();
    }
    Eigen::JacobiSVD<MatX<Scalar>> svd(design.monomials);
    const auto& sv = svd.singularValues();
    design.condition_number = sv(sv.size() - 1) > Scalar(0)
        ? sv(0) / sv(sv.size() - 1)
        : std::numeric_limits<Scalar>::infinity();
    if (design.condition_number > Scalar(1e6))
        throw input_error("make_probe_design: monomial design is ill conditioned");
    return design;
}

template <typename Scalar>
struct ProbeEvalT {
    VecX<Scalar> xibar;
    Scalar value{};
};

/// Recover the quadratic from point evaluations: exact solve when the
/// number of evals equals the monomial count, least squares otherwise.
template <typename Scalar>
QuadraticModelT<Scalar> fit_quadratic_from_evals(const std::vector<ProbeEvalT<Scalar>>& evals,
                                                 Eigen::Index k) {
    const Eigen::Index m = quadratic_monomial_count(k);
    const auto rows = static_cast<Eigen::Index>(evals.size());
    if (rows < m) throw input_error("fit_quadratic_from_evals: not enough evaluations");

    MatX<Scalar> design(rows, m);
    VecX<Scalar> values(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (evals[static_cast<std::size_t>(i)].xibar.size() != k)
            throw input_error("fit_quadratic_from_evals: eval dimension mismatch");
        design.row(i) =
            detail::quadratic_monomials<Scalar>(evals[static_cast<std::size_t>(i)].xibar)
                .transpose();
        values(i) = evals[static_cast<std::size_t>(i)].value;
    }
    VecX<Scalar> coeffs = design.colPivHouseholderQr().solve(values);

    QuadraticModelT<Scalar> model;
    model.c_scalar = coeffs(0);
    model.b_vector = coeffs.segment(1, k);
    model.a_matrix.resize(k, k);
    for (Eigen::Index i = 0; i < k; ++i) model.a_matrix(i, i) = coeffs(1 + k + i);
    Eigen::Index pos = 1 + 2 * k;
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = i + 1; j < k; ++j) {
            model.a_matrix(i, j) = coeffs(pos);
            model.a_matrix(j, i) = coeffs(pos);
            ++pos;
        }

    const Scalar mean = values.mean();
    const Scalar ss_tot = (values.array() - mean).square().sum();
    const Scalar ss_res = (design * coeffs - values).squaredNorm();
    model.r_squared = ss_tot > Scalar(0) ? Scalar(1) - ss_res / ss_tot : Scalar(1);
    return model;
}

/// Minimum-norm stationary point of the quadratic (pseudo-inverse step with
/// relative eigenvalue cutoff). The validation loss is convex in xibar, so
/// this is its minimizer.
template <typename Scalar>
VecX<Scalar> quadratic_argmin(const QuadraticModelT<Scalar>& model) {
    const Eigen::Index k = model.b_vector.size();
    Eigen::SelfAdjointEigenSolver<MatX<Scalar>> eig(model.a_matrix);
    const VecX<Scalar>& ev = eig.eigenvalues();
    const Scalar cutoff = Scalar(1e-12) * std::max(ev.cwiseAbs().maxCoeff(), Scalar(0));
    VecX<Scalar> proj = eig.eigenvectors().transpose() * model.b_vector;
    for (Eigen::Index i = 0; i < k; ++i)
        proj(i) = ev(i) > cutoff ? -proj(i) / ev(i) : Scalar(0);
    return eig.eigenvectors() * proj;
}

template <typename Scalar>
struct TuneTraceRowT {
    Scalar lambda{};
    VecX<Scalar> xibar;
    std::optional<VecX<Scalar>> xi;  // absent when the argmin is degenerate in xi
    Scalar predicted_mse{};
    Scalar actual_mse{};
    QuadraticModelT<Scalar> model;
    std::string note;
};

template <typename Scalar>
struct TuneResultT {
    Scalar lambda{};
    XiBarT<Scalar> xibar;
    std::optional<VecX<Scalar>> xi;
    Scalar val_mse{};
    Eigen::Index k{};
    std::vector<TuneTraceRowT<Scalar>> trace;
};

using TuneTraceRow = TuneTraceRowT<double>;
using TuneResult = TuneResultT<double>;

namespace detail {

template <typename Scalar>
Scalar validation_mse(const MatX<Scalar>& x_val, const VecX<Scalar>& y_val,
                      const VecX<Scalar>& theta) {
    return (x_val.transpose() * theta - y_val).squaredNorm() / Scalar(y_val.size());
}

}  // namespace detail

/// Grid-tune (lambda, xibar) on a validation split. Per lambda: evaluate the
/// probe estimators, fit the exact quadratic surrogate, jump to its argmin,
/// and score that point directly. Selection is by measured validation MSE
/// with ties resolved toward the larger lambda. k = 0 tunes plain ridge.
template <typename Scalar>
TuneResultT<Scalar> tune(const MatX<Scalar>& x_train, const VecX<Scalar>& y_train,
                         const MatX<Scalar>& x_val, const VecX<Scalar>& y_val,
                         Eigen::Index k, std::vector<Scalar> lambda_grid) {
    if (lambda_grid.empty()) throw input_error("tune: empty lambda grid");
    if (x_train.cols() != y_train.size() || x_val.cols() != y_val.size())
        throw input_error("tune: sample count mismatch");
    if (x_train.rows() != x_val.rows()) throw input_error("tune: feature dimension mismatch");
    for (Scalar lam : lambda_grid)
        if (!(lam > Scalar(0))) throw input_error("tune: lambda grid entries must be > 0");
    std::sort(lambda_grid.begin(), lambda_grid.end());

    const SpectrumT<Scalar> spectrum = decompose(x_train);
    std::optional<ProbeDesignT<Scalar>> design;
    if (k > 0) design = make_probe_design<Scalar>(k);

    TuneResultT<Scalar> result;
    result.k = k;
    result.val_mse = std::numeric_limits<Scalar>::infinity();

    for (Scalar lam : lambda_grid) {
        TuneTraceRowT<Scalar> row;
        row.lambda = lam;

        if (k == 0) {
            const XiBarT<Scalar> empty{VecX<Scalar>::Zero(0)};
            const auto w = fit_sd_preconditioner(spectrum, y_train, lam, empty);
            row.xibar = empty.value;
            row.xi = VecX<Scalar>::Zero(0);
            row.actual_mse = detail::validation_mse(x_val, y_val, w.theta_hat);
            row.predicted_mse = row.actual_mse;
            row.model.r_squared = Scalar(1);
        } else {
            std::vector<ProbeEvalT<Scalar>> evals;
            evals.reserve(design->xibar_probes.size());
            for (const auto& z : design->xibar_probes) {
                const auto w = fit_sd_preconditioner(spectrum, y_train, lam, XiBarT<Scalar>{z});
                evals.push_back({z, detail::validation_mse(x_val, y_val, w.theta_hat)});
            }
            row.model = fit_quadratic_from_evals(evals, k);
            row.xibar = quadratic_argmin(row.model);
            row.predicted_mse = row.model(row.xibar);
            const auto w =
                fit_sd_preconditioner(spectrum, y_train, lam, XiBarT<Scalar>{row.xibar});
            row.actual_mse = detail::validation_mse(x_val, y_val, w.theta_hat);
            try {
                row.xi = xibar_to_xi(XiBarT<Scalar>{row.xibar});
            } catch (const degenerate_parametrization_error&) {
                row.note = "argmin has no recursive-form parameters; kept in xibar form";
            }
        }

        if (row.actual_mse <= result.val_mse) {
            result.val_mse = row.actual_mse;
            result.lambda = lam;
            result.xibar = XiBarT<Scalar>{row.xibar};
            result.xi = row.xi;
        }
        result.trace.push_back(std::move(row));
    }
    return result;
}

}  // namespace sdreg
