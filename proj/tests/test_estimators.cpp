#include "sdreg/estimators.hpp"

#include <doctest.h>

#include <Eigen/LU>

#include <cmath>
#include <random>

using namespace sdreg;

namespace {

// Shared random fixture: a well-conditioned 4x7 design.
ProblemInstance random_instance() {
    VecXd s(4);
    s << 1.3, 0.9, 0.55, 0.2;
    ThetaSpec spec;
    spec.kind = ThetaSpec::Kind::Coefficients;
    spec.coefficients = VecXd(4);
    spec.coefficients << 1.0, -0.4, 0.3, 0.9;
    return make_synthetic<double>(4, 4, s, spec, 0.3, 7, 21);
}

VecXd random_labels(const ProblemInstance& inst, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    VecXd eps(inst.n());
    for (Eigen::Index i = 0; i < inst.n(); ++i) eps(i) = gauss(rng);
    return inst.x_matrix.transpose() * inst.theta_star + std::sqrt(inst.gamma2) * eps;
}

}  // namespace

TEST_CASE("fit_ridge: near-interpolation and hand-solved 2x2") {
    const MatXd x = MatXd::Identity(2, 2);
    VecXd y(2);
    y << 1.0, 2.0;

    const auto tiny = fit_ridge<double>(x, y, 1e-12);
    CHECK(tiny.theta_hat(0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(tiny.theta_hat(1) == doctest::Approx(2.0).epsilon(1e-10));

    const auto unit = fit_ridge<double>(x, y, 1.0);
    CHECK(unit.theta_hat(0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(unit.theta_hat(1) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("fit_ridge: matches dense inverse and spectral closed form") {
    const auto inst = random_instance();
    const VecXd y = random_labels(inst, 3);
    const double lambda = 0.07;

    const auto w = fit_ridge(inst.x_matrix, y, lambda);

    MatXd omega = inst.x_matrix * inst.x_matrix.transpose();
    omega.diagonal().array() += lambda;
    const VecXd dense = omega.fullPivLu().solve(inst.x_matrix * y);
    CHECK((w.theta_hat - dense).cwiseAbs().maxCoeff() < 1e-12);

    // U diag(s_j/(lambda+s_j^2)) V^T Y, summed over the spectrum.
    const auto& sp = inst.spectrum;
    const VecXd yv = sp.right_vectors.transpose() * y;
    VecXd spectral = VecXd::Zero(inst.d());
    for (Eigen::Index j = 0; j < sp.singular_values.size(); ++j) {
        const double sj = sp.singular_values(j);
        spectral += sj / (lambda + sj * sj) * yv(j) * sp.left_vectors.col(j);
    }
    CHECK((w.theta_hat - spectral).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fit_sd_recursive: xi = 0 recovers ridge exactly") {
    const auto inst = random_instance();
    const VecXd y = random_labels(inst, 4);
    const double lambda = 0.2;
    const auto ridge = fit_ridge(inst.x_matrix, y, lambda);
    VecXd xi(1);
    xi << 0.0;
    const auto sd = fit_sd_recursive(inst.x_matrix, y, lambda, xi);
    CHECK((sd.theta_hat - ridge.theta_hat).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("fit_sd_recursive: xi = 1 applies the preconditioner factor once") {
    const auto inst = random_instance();
    const VecXd y = random_labels(inst, 5);
    const double lambda = 0.35;
    const auto ridge = fit_ridge(inst.x_matrix, y, lambda);

    MatXd omega = inst.x_matrix * inst.x_matrix.transpose();
    omega.diagonal().array() += lambda;
    const MatXd p = omega.fullPivLu().solve(inst.x_matrix * inst.x_matrix.transpose());

    VecXd xi(1);
    xi << 1.0;
    const auto sd = fit_sd_recursive(inst.x_matrix, y, lambda, xi);
    CHECK((sd.theta_hat - p * ridge.theta_hat).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fit_sd_recursive: two steps match the quadratic coefficient form") {
    const auto inst = random_instance();
    const VecXd y = random_labels(inst, 6);
    const double lambda = 0.15;
    const double xi1 = -0.8, xi2 = 1.7;

    MatXd omega = inst.x_matrix * inst.x_matrix.transpose();
    omega.diagonal().array() += lambda;
    const MatXd p = omega.fullPivLu().solve(inst.x_matrix * inst.x_matrix.transpose());
    const VecXd ridge = fit_ridge(inst.x_matrix, y, lambda).theta_hat;

    // {(1 - xi2) I + (xi2 - xi1 xi2) P + xi1 xi2 P^2} ridge
    const VecXd expected = (1.0 - xi2) * ridge + (xi2 - xi1 * xi2) * (p * ridge) +
                           xi1 * xi2 * (p * (p * ridge));

    VecXd xi(2);
    xi << xi1, xi2;
    const auto sd = fit_sd_recursive(inst.x_matrix, y, lambda, xi);
    CHECK((sd.theta_hat - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fit_sd_recursive_path: entry zero is ridge, one entry per step") {
    const auto inst = random_instance();
    const VecXd y = random_labels(inst, 7);
    VecXd xi(3);
    xi << 0.5, -1.0, 2.0;
    const auto path = fit_sd_recursive_path(inst.x_matrix, y, 0.1, xi);
    REQUIRE(path.size() == 4);
    const auto ridge = fit_ridge(inst.x_matrix, y, 0.1);
    CHECK((path[0].theta_hat - ridge.theta_hat).cwiseAbs().maxCoeff() == 0.0);
    CHECK(path[3].provenance.k == 3);
}

TEST_CASE("fit_sd_recursive: input validation") {
    const auto inst = random_instance();
    const VecXd y = random_labels(inst, 8);
    VecXd xi(1);
    xi << std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(fit_sd_recursive(inst.x_matrix, y, 0.1, xi), input_error);
    VecXd ok(1);
    ok << 0.5;
    CHECK_THROWS_AS(fit_sd_recursive(inst.x_matrix, y, 0.0, ok), input_error);
    CHECK_THROWS_AS(fit_sd_recursive(inst.x_matrix, y, 0.1, ok, 0), input_error);
}

TEST_CASE("xi_to_xibar: base case, two-step form, and telescoping example") {
    VecXd one(1);
    one << 0.7;
    CHECK(xi_to_xibar(one).value(0) == doctest::Approx(0.7));

    VecXd two(2);
    two << 0.3, -1.2;
    const auto xb = xi_to_xibar(two);
    CHECK(xb.value(0) == doctest::Approx(-1.2 * (1.0 - 0.3)).epsilon(1e-14));
    CHECK(xb.value(1) == doctest::Approx(-1.2 * 0.3).epsilon(1e-14));

    VecXd ones(3);
    ones << 1.0, 1.0, 1.0;
    const auto xb3 = xi_to_xibar(ones);
    CHECK(std::abs(xb3.value(0)) < 1e-15);
    CHECK(std::abs(xb3.value(1)) < 1e-15);
    CHECK(xb3.value(2) == doctest::Approx(1.0));
}

TEST_CASE("xibar_to_xi: two-step closed form") {
    VecXd xb(2);
    xb << 0.6, 1.8;  // xi1 = 1 - xb1/(xb1+xb2), xi2 = xb1+xb2
    const XiBar xibar{xb};
    const VecXd xi = xibar_to_xi(xibar);
    CHECK(xi(0) == doctest::Approx(1.0 - 0.6 / 2.4).epsilon(1e-14));
    CHECK(xi(1) == doctest::Approx(2.4).epsilon(1e-14));
}

TEST_CASE("xibar_to_xi: three-step worked example (1, 2, 3)") {
    VecXd xb(3);
    xb << 1.0, 2.0, 3.0;
    const VecXd xi = xibar_to_xi(XiBar{xb});
    CHECK(xi(0) == doctest::Approx(1.0 - 2.0 / 5.0).epsilon(1e-14));  // 3/5
    CHECK(xi(1) == doctest::Approx(1.0 - 1.0 / 6.0).epsilon(1e-14));  // 5/6
    CHECK(xi(2) == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("xibar_to_xi: zero suffix sum is degenerate") {
    VecXd xb(2);
    xb << 1.0, -1.0;  // T_1 = 0
    CHECK_THROWS_AS(xibar_to_xi(XiBar{xb}), degenerate_parametrization_error);
}

TEST_CASE("reparametrization roundtrip: xi -> xibar -> xi") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Index k = 1 + Eigen::Index(rng() % 6);
        VecXd xi(k);
        for (Eigen::Index i = 0; i < k; ++i) {
            double v = unif(rng);
            while (std::abs(v) < 0.05) v = unif(rng);  // keep away from degeneracy
            xi(i) = v;
        }
        const VecXd back = xibar_to_xi(xi_to_xibar(xi));
        CHECK((back - xi).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("fit_sd_preconditioner: empty xibar is ridge") {
    const auto inst = random_instance();
    const VecXd y = random_labels(inst, 9);
    const double lambda = 0.4;
    const auto ridge = fit_ridge(inst.x_matrix, y, lambda);
    const auto w = fit_sd_preconditioner(inst.x_matrix, y, lambda, XiBar{VecXd::Zero(0)});
    CHECK((w.theta_hat - ridge.theta_hat).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fit_sd_preconditioner equals fit_sd_recursive across k") {
    const auto inst = random_instance();
    const VecXd y = random_labels(inst, 10);
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> unif(-1.5, 1.5);
    for (double lambda : {0.05, 0.3, 2.0}) {
        for (Eigen::Index k = 1; k <= 5; ++k) {
            VecXd xi(k);
            for (Eigen::Index i = 0; i < k; ++i) xi(i) = unif(rng);
            const auto rec = fit_sd_recursive(inst.x_matrix, y, lambda, xi);
            const auto pre =
                fit_sd_preconditioner(inst.x_matrix, y, lambda, xi_to_xibar<double>(xi));
            CHECK((rec.theta_hat - pre.theta_hat).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
}

TEST_CASE("fit_sd_preconditioner matches a dense matrix-polynomial oracle") {
    const auto inst = random_instance();
    const VecXd y = random_labels(inst, 11);
    const double lambda = 0.12;
    VecXd xb(3);
    xb << 0.4, -0.9, 0.25;

    MatXd omega = inst.x_matrix * inst.x_matrix.transpose();
    omega.diagonal().array() += lambda;
    const Eigen::FullPivLU<MatXd> lu(omega);
    const MatXd p = lu.solve(inst.x_matrix * inst.x_matrix.transpose());
    const VecXd ridge = lu.solve(inst.x_matrix * y);

    VecXd expected = (1.0 - xb.sum()) * ridge;
    MatXd ppow = MatXd::Identity(inst.d(), inst.d());
    for (Eigen::Index i = 0; i < 3; ++i) {
        ppow = ppow * p;
        expected += xb(i) * (ppow * ridge);
    }

    const auto w = fit_sd_preconditioner(inst.x_matrix, y, lambda, XiBar{xb});
    CHECK((w.theta_hat - expected).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("preconditioner_eigenvalues: in [0, 1) and increasing in s") {
    const auto inst = random_instance();
    const VecXd a = preconditioner_eigenvalues(inst.spectrum, 0.5);
    for (Eigen::Index j = 0; j < a.size(); ++j) {
        CHECK(a(j) >= 0.0);
        CHECK(a(j) < 1.0);
        if (j > 0) CHECK(a(j) <= a(j - 1));
        const double s2 = inst.spectrum.singular_values(j) * inst.spectrum.singular_values(j);
        CHECK(a(j) == doctest::Approx(s2 / (0.5 + s2)).epsilon(1e-14));
    }
}

TEST_CASE("full_two_step_equivalent: dropping the skip edge is the repeated form") {
    VecXd tilde(3);
    tilde << 0.8, 0.0, -1.1;
    const auto mapped = full_two_step_equivalent<double>(tilde);
    VecXd xi(2);
    xi << 0.8, -1.1;
    const auto direct = xi_to_xibar<double>(xi);
    CHECK((mapped.value - direct.value).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("full_two_step_equivalent: estimator matches the defining recursion") {
    const auto inst = random_instance();
    const VecXd y = random_labels(inst, 12);
    const double lambda = 0.25;

    MatXd omega = inst.x_matrix * inst.x_matrix.transpose();
    omega.diagonal().array() += lambda;
    const Eigen::FullPivLU<MatXd> lu(omega);
    const MatXd xt = inst.x_matrix.transpose();

    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int trial = 0; trial < 25; ++trial) {
        const double x1 = unif(rng), x2a = unif(rng), x2b = unif(rng);
        const VecXd t0 = lu.solve(inst.x_matrix * y);
        const VecXd t1 = lu.solve(inst.x_matrix * (x1 * (xt * t0) + (1.0 - x1) * y));
        const VecXd t2 = lu.solve(inst.x_matrix *
                                  (x2a * (xt * t0) + x2b * (xt * t1) +
                                   (1.0 - x2a - x2b) * y));

        VecXd tilde(3);
        tilde << x1, x2a, x2b;
        const auto xb = full_two_step_equivalent<double>(tilde);
        const auto w = fit_sd_preconditioner(inst.x_matrix, y, lambda, xb);
        CHECK((w.theta_hat - t2).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("full_two_step_equivalent: pure skip edge is one step at xi = 1") {
    const auto inst = random_instance();
    const VecXd y = random_labels(inst, 13);
    const double lambda = 0.6;
    VecXd tilde(3);
    tilde << 0.0, 1.0, 0.0;
    const auto w = fit_sd_preconditioner(inst.x_matrix, y, lambda,
                                         full_two_step_equivalent<double>(tilde));
    VecXd xi(1);
    xi << 1.0;
    const auto one_step = fit_sd_recursive(inst.x_matrix, y, lambda, xi);
    CHECK((w.theta_hat - one_step.theta_hat).cwiseAbs().maxCoeff() < 1e-12);

    VecXd wrong(2);
    wrong << 1.0, 1.0;
    CHECK_THROWS_AS(full_two_step_equivalent<double>(wrong), input_error);
}
