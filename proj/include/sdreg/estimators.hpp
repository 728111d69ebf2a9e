#pragma once

#include "sdreg/spectral.hpp"
#include "sdreg/types.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <vector>

namespace sdreg {

inline constexpr int kDefaultMaxSteps = 64;

namespace detail {

template <typename Scalar>
void check_fit_inputs(const MatX<Scalar>& x, const VecX<Scalar>& y, Scalar lambda) {
    if (y.size() != x.cols())
        throw input_error("fit: y length must equal the number of columns of x");
    if (!(lambda > Scalar(0))) throw input_error("fit: lambda must be > 0");
}

}  // namespace detail

/// theta_hat = (X X^T + lambda I)^{-1} X Y
template <typename Scalar>
EstimatorWeightsT<Scalar> fit_ridge(const MatX<Scalar>& x_matrix, const VecX<Scalar>& y,
                                    Scalar lambda) {
    detail::check_fit_inputs(x_matrix, y, lambda);
    MatX<Scalar> omega = x_matrix * x_matrix.transpose();
    omega.diagonal().array() += lambda;
    Eigen::LLT<MatX<Scalar>> llt(omega);
    EstimatorWeightsT<Scalar> w;
    w.theta_hat = llt.solve(x_matrix * y);
    w.provenance = {lambda, std::nullopt, std::nullopt, 0, "ridge", std::nullopt};
    return w;
}

/// Multi-step distillation in its training-loop form. Step i trains on the
/// mixture (1 - xi_i) * labels + xi_i * previous model's predictions:
///   theta_i = (1 - xi_i) Omega^{-1} X Y + xi_i Omega^{-1} X X^T theta_{i-1},
/// starting from the ridge solution. Returns every intermediate estimator;
/// entry 0 is ridge, entry i the i-step model.
template <typename Scalar>
std::vector<EstimatorWeightsT<Scalar>>
fit_sd_recursive_path(const MatX<Scalar>& x_matrix, const VecX<Scalar>& y, Scalar lambda,
                      const VecX<Scalar>& xi, int max_steps = kDefaultMaxSteps) {
    detail::check_fit_inputs(x_matrix, y, lambda);
    if (!xi.allFinite()) throw input_error("fit_sd_recursive: xi has non-finite entries");
    if (xi.size() > max_steps)
        throw input_error("fit_sd_recursive: step count exceeds the configured cap");

    MatX<Scalar> gram = x_matrix * x_matrix.transpose();
    MatX<Scalar> omega = gram;
    omega.diagonal().array() += lambda;
    Eigen::LLT<MatX<Scalar>> llt(omega);

    const VecX<Scalar> ridge = llt.solve(x_matrix * y);

    std::vector<EstimatorWeightsT<Scalar>> path;
    path.reserve(static_cast<std::size_t>(xi.size()) + 1);
    EstimatorWeightsT<Scalar> w0;
    w0.theta_hat = ridge;
    w0.provenance = {lambda, std::nullopt, std::nullopt, 0, "sd_recursive", std::nullopt};
    path.push_back(std::move(w0));

    VecX<Scalar> theta = ridge;
    for (Eigen::Index i = 0; i < xi.size(); ++i) {
        theta = (Scalar(1) - xi(i)) * ridge + xi(i) * llt.solve(gram * theta);
        EstimatorWeightsT<Scalar> w;
        w.theta_hat = theta;
        w.provenance = {lambda, VecX<Scalar>(xi.head(i + 1)), std::nullopt,
                        static_cast<int>(i + 1), "sd_recursive", std::nullopt};
        path.push_back(std::move(w));
    }
    return path;
}

template <typename Scalar>
EstimatorWeightsT<Scalar> fit_sd_recursive(const MatX<Scalar>& x_matrix,
                                           const VecX<Scalar>& y, Scalar lambda,
                                           const VecX<Scalar>& xi,
                                           int max_steps = kDefaultMaxSteps) {
    auto path = fit_sd_recursive_path(x_matrix, y, lambda, xi, max_steps);
    return std::move(path.back());
}

/// xibar_i = (1 - xi_{k-i}) * prod_{l=k-i+1..k} xi_l, with xi_0 = 0.
/// Total map; the estimator is linear in each xibar_i.
template <typename Scalar>
XiBarT<Scalar> xi_to_xibar(const VecX<Scalar>& xi) {
    const Eigen::Index k = xi.size();
    VecX<Scalar> xibar(k);
    Scalar suffix = Scalar(1);  // prod_{l=k-i+1..k} xi_l, built from i = 1 upward
    for (Eigen::Index i = 1; i <= k; ++i) {
        suffix *= xi(k - i);
        const Scalar leading = (i == k) ? Scalar(0) : xi(k - i - 1);
        xibar(i - 1) = (Scalar(1) - leading) * suffix;
    }
    return XiBarT<Scalar>{xibar};
}

/// Inverse of xi_to_xibar. Uses the identity that the suffix sums
/// T_i = sum_{j>=i} xibar_j equal the suffix products of xi, giving
/// xi_m = T_{k-m+1} / T_{k-m} with T_0 = 1. Throws when a divisor
/// suffix sum is zero: the map has no inverse there.
template <typename Scalar>
VecX<Scalar> xibar_to_xi(const XiBarT<Scalar>& xibar) {
    const Eigen::Index k = xibar.k();
    VecX<Scalar> t(k + 1);  // t(i) = T_i for i in [1, k]; t(0) = T_0 = 1
    t(0) = Scalar(1);
    Scalar acc = Scalar(0);
    for (Eigen::Index i = k; i >= 1; --i) {
        acc += xibar.value(i - 1);
        t(i) = acc;
    }
    VecX<Scalar> xi(k);
    for (Eigen::Index m = 1; m <= k; ++m) {
        const Scalar denom = t(k - m);
        if (denom == Scalar(0))
            throw degenerate_parametrization_error(
                "xibar_to_xi: zero partial sum, parametrization not invertible");
        xi(m - 1) = t(k - m + 1) / denom;
    }
    return xi;
}

/// Spectral coefficients a_j = s_j^2 / (lambda + s_j^2) of the
/// preconditioner factor Omega^{-1} X X^T; all lie in [0, 1) for lambda > 0.
template <typename Scalar>
VecX<Scalar> preconditioner_eigenvalues(const SpectrumT<Scalar>& spectrum, Scalar lambda) {
    if (!(lambda > Scalar(0))) throw input_error("preconditioner_eigenvalues: lambda must be > 0");
    const auto& s = spectrum.singular_values;
    return (s.array().square() / (s.array().square() + lambda)).matrix();
}

/// Closed-form k-step estimator in the spectral basis. The coefficient on
/// u_j is (1 - sum_i xibar_i (1 - a_j^i)) * s_j / (lambda + s_j^2) * <Y, v_j>.
template <typename Scalar>
EstimatorWeightsT<Scalar> fit_sd_preconditioner(const SpectrumT<Scalar>& spectrum,
                                                const VecX<Scalar>& y, Scalar lambda,
                                                const XiBarT<Scalar>& xibar) {
    if (!(lambda > Scalar(0))) throw input_error("fit: lambda must be > 0");
    if (y.size() != spectrum.right_vectors.rows())
        throw input_error("fit: y length must equal the number of samples");

    const Eigen::Index m = spectrum.singular_values.size();
    const Eigen::Index k = xibar.k();
    const auto& s = spectrum.singular_values;

    VecX<Scalar> yv = spectrum.right_vectors.transpose() * y;  // <Y, v_j>
    VecX<Scalar> coef(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const Scalar a = s(j) * s(j) / (lambda + s(j) * s(j));
        Scalar g = Scalar(1);
        Scalar apow = Scalar(1);
        for (Eigen::Index i = 1; i <= k; ++i) {
            apow *= a;
            g -= xibar.value(i - 1) * (Scalar(1) - apow);
        }
        coef(j) = g * s(j) / (lambda + s(j) * s(j)) * yv(j);
    }

    EstimatorWeightsT<Scalar> w;
    w.theta_hat = spectrum.left_vectors.leftCols(m) * coef;
    w.provenance = {lambda, std::nullopt, xibar.value, static_cast<int>(k),
                    "sd_preconditioner", std::nullopt};
    return w;
}

template <typename Scalar>
EstimatorWeightsT<Scalar> fit_sd_preconditioner(const MatX<Scalar>& x_matrix,
                                                const VecX<Scalar>& y, Scalar lambda,
                                                const XiBarT<Scalar>& xibar) {
    return fit_sd_preconditioner(decompose(x_matrix), y, lambda, xibar);
}

/// Two-step distillation where the last student also imitates the teacher
/// directly (weights xi_tilde = [xi1, xi2a, xi2b] on the three edges) is
/// representationally no richer than the plain repeated form: it equals the
/// length-2 xibar returned here.
template <typename Scalar>
XiBarT<Scalar> full_two_step_equivalent(const VecX<Scalar>& xi_tilde) {
    if (xi_tilde.size() != 3)
        throw input_error("full_two_step_equivalent: expected exactly 3 parameters");
    const Scalar x1 = xi_tilde(0), x2a = xi_tilde(1), x2b = xi_tilde(2);
    VecX<Scalar> xibar(2);
    xibar(0) = x2a + x2b - x1 * x2b;
    xibar(1) = x1 * x2b;
    return XiBarT<Scalar>{xibar};
}

}  // namespace sdreg
