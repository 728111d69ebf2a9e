#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>

namespace sdreg {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatXd = MatX<double>;
using VecXd = VecX<double>;

/// Invalid argument to an operation (dimension mismatch, bad range, ...).
struct input_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// The xi <-> xibar map is not invertible at the requested point.
struct degenerate_parametrization_error : std::domain_error {
    using std::domain_error::domain_error;
};

/// Problems with reading or interpreting a dataset (file, schema, parse).
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Reparametrized imitation parameters. Strong type so that call sites
/// cannot confuse xi-space and xibar-space vectors.
template <typename Scalar>
struct XiBarT {
    VecX<Scalar> value;

    XiBarT() = default;
    explicit XiBarT(VecX<Scalar> v) : value(std::move(v)) {}

    Eigen::Index k() const { return value.size(); }
};

using XiBar = XiBarT<double>;

/// Ridge penalty plus imitation vector; k = 0 means plain ridge.
template <typename Scalar>
struct SdParamsT {
    Scalar lambda{};
    VecX<Scalar> xi;

    Eigen::Index k() const { return xi.size(); }
};

using SdParams = SdParamsT<double>;

/// Where an estimator came from: enough to reproduce the fit.
template <typename Scalar>
struct ProvenanceT {
    Scalar lambda{};
    std::optional<VecX<Scalar>> xi;
    std::optional<VecX<Scalar>> xibar;
    int k = 0;
    std::string method;
    std::optional<std::uint64_t> seed;
};

using Provenance = ProvenanceT<double>;

template <typename Scalar>
struct EstimatorWeightsT {
    VecX<Scalar> theta_hat;
    ProvenanceT<Scalar> provenance;
};

using EstimatorWeights = EstimatorWeightsT<double>;

}  // namespace sdreg
