#pragma once

#include <Eigen/Dense>

#include <functional>

namespace pcwqd::lsq {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Fills residuals r(p); fills the Jacobian dr/dp when `jac` is non-null.
using ResidualFn = std::function<void(const Vector& p, Vector& r, Matrix* jac)>;

/// Returns false for parameter vectors outside the model's domain; such trial steps are rejected.
using DomainFn = std::function<bool(const Vector& p)>;

struct Options {
    int max_iterations = 300;
    double x_tol = 1e-12;
    double f_tol = 1e-15;
    double g_tol = 1e-14;
    double initial_damping = 1e-3;
    double max_damping = 1e16;
    /// Singular-value ratio below which the normal equations count as singular.
    double rcond_limit = 1e-13;
};

enum class Status { Converged, MaxIterations, IllConditioned };

struct Result {
    Vector params;
    Vector residuals;
    Matrix jacobian;
    /// (J^T J)^{-1} at the solution; scale by the residual variance for parameter covariance.
    Matrix unscaled_covariance;
    double cost = 0.0; // sum of squared residuals
    int iterations = 0;
    Status status = Status::MaxIterations;

    bool converged() const { return status == Status::Converged; }
    /// Residual variance RSS / (n - p), or 0 when there are no degrees of freedom.
    double residual_variance() const;
    /// Parameter covariance s^2 (J^T J)^{-1}.
    Matrix covariance() const { return residual_variance() * unscaled_covariance; }
};

/// Levenberg-Marquardt with Marquardt (diagonal) scaling of the damping term.
Result minimize(const ResidualFn& fn, Vector p0, Eigen::Index n_residuals, const Options& opts = {},
                const DomainFn& in_domain = {});

/// Central-difference Jacobian of a residual-only function.
Matrix numeric_jacobian(const std::function<void(const Vector&, Vector&)>& residuals, const Vector& p,
                        Eigen::Index n_residuals, const Vector& rel_step);

/// Wraps a residual-only function with a central-difference Jacobian.
ResidualFn with_numeric_jacobian(std::function<void(const Vector&, Vector&)> residuals, Vector rel_step);

} // namespace pcwqd::lsq
