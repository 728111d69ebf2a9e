#pragma once

#include "sdreg/types.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

namespace sdreg {

/// Singular value decomposition of a d x n data matrix.
///
/// singular_values: nonincreasing, length min(d, n).
/// left_vectors:    d x d orthonormal (full U).
/// right_vectors:   n x min(d, n) with orthonormal columns (thin V).
/// rank:            number of singular values above rank_tolerance * s_1.
template <typename Scalar>
struct SpectrumT {
    VecX<Scalar> singular_values;
    MatX<Scalar> left_vectors;
    MatX<Scalar> right_vectors;
    Eigen::Index rank = 0;
    Scalar rank_tolerance = Scalar(1e-9);
};

using Spectrum = SpectrumT<double>;

inline constexpr double kDefaultRankTolerance = 1e-9;

/// Decompose a data matrix; rank counts singular values above
/// rank_tolerance * s_1 (rank 0 for the all-zero matrix).
template <typename Derived>
SpectrumT<typename Derived::Scalar>
decompose(const Eigen::MatrixBase<Derived>& x_matrix,
          typename Derived::Scalar rank_tolerance =
              typename Derived::Scalar(kDefaultRankTolerance)) {
    using Scalar = typename Derived::Scalar;
    if (!x_matrix.allFinite())
        throw input_error("decompose: matrix has non-finite entries");
    if (!(rank_tolerance > Scalar(0)) || !(rank_tolerance < Scalar(1)))
        throw input_error("decompose: rank_tolerance must be in (0, 1)");

    MatX<Scalar> x = x_matrix;
    Eigen::BDCSVD<MatX<Scalar>> svd(x, Eigen::ComputeFullU | Eigen::ComputeThinV);

    SpectrumT<Scalar> spec;
    spec.singular_values = svd.singularValues();
    spec.left_vectors = svd.matrixU();
    spec.right_vectors = svd.matrixV();
    spec.rank_tolerance = rank_tolerance;

    const Scalar s1 = spec.singular_values.size() > 0 ? spec.singular_values(0) : Scalar(0);
    spec.rank = 0;
    for (Eigen::Index j = 0; j < spec.singular_values.size(); ++j)
        if (spec.singular_values(j) > rank_tolerance * s1) ++spec.rank;
    if (s1 == Scalar(0)) spec.rank = 0;
    return spec;
}

/// Fixed-design problem instance: covariates as columns of x_matrix,
/// true parameter theta_star, label-noise variance gamma2. The spectrum
/// of x_matrix is cached at construction; immutable afterwards.
template <typename Scalar>
struct ProblemInstanceT {
    MatX<Scalar> x_matrix;
    VecX<Scalar> theta_star;
    Scalar gamma2{};
    Eigen::Index n_samples = 0;
    SpectrumT<Scalar> spectrum;
    std::optional<std::uint64_t> seed;

    Eigen::Index d() const { return x_matrix.rows(); }
    Eigen::Index n() const { return n_samples; }
    Eigen::Index rank() const { return spectrum.rank; }
};

using ProblemInstance = ProblemInstanceT<double>;

template <typename Scalar>
ProblemInstanceT<Scalar> make_instance(MatX<Scalar> x_matrix, VecX<Scalar> theta_star,
                                       Scalar gamma2,
                                       Scalar rank_tolerance = Scalar(kDefaultRankTolerance)) {
    if (gamma2 < Scalar(0)) throw input_error("make_instance: gamma2 must be >= 0");
    if (theta_star.size() != x_matrix.rows())
        throw input_error("make_instance: theta_star length must equal rows of x_matrix");
    ProblemInstanceT<Scalar> inst;
    inst.n_samples = x_matrix.cols();
    inst.spectrum = decompose(x_matrix, rank_tolerance);
    inst.x_matrix = std::move(x_matrix);
    inst.theta_star = std::move(theta_star);
    inst.gamma2 = gamma2;
    return inst;
}

/// Squared projections of theta_star onto the left singular vectors.
template <typename Scalar>
struct ThetaComponentsT {
    VecX<Scalar> components;  // entry j = <theta_star, u_j>^2
};

using ThetaComponents = ThetaComponentsT<double>;

template <typename Scalar>
ThetaComponentsT<Scalar> theta_components(const ProblemInstanceT<Scalar>& instance) {
    VecX<Scalar> proj = instance.spectrum.left_vectors.transpose() * instance.theta_star;
    return ThetaComponentsT<Scalar>{proj.array().square().matrix()};
}

/// Recipe for placing theta_star relative to the generated left basis.
template <typename Scalar>
struct ThetaSpecT {
    enum class Kind { U1, EqualFirstR, Coefficients };
    Kind kind = Kind::U1;
    Scalar norm = Scalar(1);     // used by U1 and EqualFirstR
    VecX<Scalar> coefficients;   // used by Coefficients: theta = sum_j coeff_j u_j
};

using ThetaSpec = ThetaSpecT<double>;

enum class BasisKind { RandomOrthonormal, Identity };

namespace detail {

// Orthonormal factor of a seeded Gaussian matrix, sign-fixed so that the
// R diagonal is nonnegative (makes Q unique given the draw).
template <typename Scalar>
MatX<Scalar> random_orthonormal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    MatX<Scalar> g(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) g(i, j) = Scalar(gauss(rng));
    Eigen::HouseholderQR<MatX<Scalar>> qr(g);
    MatX<Scalar> q = qr.householderQ() * MatX<Scalar>::Identity(rows, cols);
    MatX<Scalar> r = qr.matrixQR().template triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < cols; ++j)
        if (r(j, j) < Scalar(0)) q.col(j) = -q.col(j);
    return q;
}

}  // namespace detail

/// Build a synthetic instance with the requested nonzero singular values.
/// Bases are orthonormal factors of seeded Gaussian matrices (or identity),
/// so equal seeds yield bit-identical instances.
template <typename Scalar>
ProblemInstanceT<Scalar>
make_synthetic(Eigen::Index d, Eigen::Index r, const VecX<Scalar>& singular_values,
               const ThetaSpecT<Scalar>& theta_spec, Scalar gamma, Eigen::Index n,
               std::uint64_t seed, BasisKind basis = BasisKind::RandomOrthonormal,
               Scalar rank_tolerance = Scalar(kDefaultRankTolerance)) {
    if (r > std::min(d, n)) throw input_error("make_synthetic: r must be <= min(d, n)");
    if (singular_values.size() != r)
        throw input_error("make_synthetic: need exactly r singular values");
    if ((singular_values.array() <= Scalar(0)).any())
        throw input_error("make_synthetic: singular values must be strictly positive");
    if (gamma < Scalar(0)) throw input_error("make_synthetic: gamma must be >= 0");

    std::mt19937_64 rng(seed);
    MatX<Scalar> u, v;
    if (basis == BasisKind::RandomOrthonormal) {
        u = detail::random_orthonormal<Scalar>(d, d, rng);
        v = detail::random_orthonormal<Scalar>(n, r, rng);
    } else {
        u = MatX<Scalar>::Identity(d, d);
        v = MatX<Scalar>::Identity(n, r);
    }

    MatX<Scalar> x = u.leftCols(r) * singular_values.asDiagonal() * v.transpose();

    VecX<Scalar> theta;
    using Kind = typename ThetaSpecT<Scalar>::Kind;
    switch (theta_spec.kind) {
        case Kind::U1:
            theta = theta_spec.norm * u.col(0);
            break;
        case Kind::EqualFirstR:
            theta = (theta_spec.norm / std::sqrt(Scalar(r))) *
                    u.leftCols(r).rowwise().sum();
            break;
        case Kind::Coefficients: {
            if (theta_spec.coefficients.size() > d)
                throw input_error("make_synthetic: more theta coefficients than dimensions");
            theta = VecX<Scalar>::Zero(d);
            for (Eigen::Index j = 0; j < theta_spec.coefficients.size(); ++j)
                theta += theta_spec.coefficients(j) * u.col(j);
            break;
        }
    }

    auto inst = make_instance<Scalar>(std::move(x), std::move(theta), gamma * gamma,
                                      rank_tolerance);
    inst.seed = seed;
    return inst;
}

}  // namespace sdreg
