#include "pcwqd/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pcwqd::lsq {

double Result::residual_variance() const {
    const auto dof = residuals.size() - params.size();
    return dof > 0 ? cost / double(dof) : 0.0;
}

Matrix numeric_jacobian(const std::function<void(const Vector&, Vector&)>& residuals, const Vector& p,
                        Eigen::Index n_residuals, const Vector& rel_step) {
    Matrix jac(n_residuals, p.size());
    Vector rp(n_residuals), rm(n_residuals);
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        const double h = rel_step[k] * std::max(std::abs(p[k]), 1.0);
        Vector q = p;
        q[k] = p[k] + h;
        residuals(q, rp);
        q[k] = p[k] - h;
        residuals(q, rm);
        jac.col(k) = (rp - rm) / (2.0 * h);
    }
    return jac;
}

ResidualFn with_numeric_jacobian(std::function<void(const Vector&, Vector&)> residuals, Vector rel_step) {
    return [residuals = std::move(residuals), rel_step = std::move(rel_step)](const Vector& p, Vector& r,
                                                                               Matrix* jac) {
        residuals(p, r);
        if (jac) *jac = numeric_jacobian(residuals, p, r.size(), rel_step);
    };
}

namespace {

// Pseudo-inverse of J^T J via the SVD of J; reports the singular-value ratio.
Matrix normal_inverse(const Matrix& jac, double& rcond) {
    Eigen::JacobiSVD<Matrix> svd(jac, Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double smax = s.size() ? s[0] : 0.0;
    rcond = (smax > 0.0 && s.size()) ? s[s.size() - 1] / smax : 0.0;
    Vector inv_s2 = Vector::Zero(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s[i] > smax * 1e-15) inv_s2[i] = 1.0 / (s[i] * s[i]);
    }
    return svd.matrixV() * inv_s2.asDiagonal() * svd.matrixV().transpose();
}

} // namespace

Result minimize(const ResidualFn& fn, Vector p0, Eigen::Index n_residuals, const Options& opts,
                const DomainFn& in_domain) {
    const Eigen::Index np = p0.size();
    Result res;
    res.params = std::move(p0);
    res.residuals.resize(n_residuals);
    res.jacobian.resize(n_residuals, np);

    fn(res.params, res.residuals, &res.jacobian);
    res.cost = res.residuals.squaredNorm();

    double damping = opts.initial_damping;
    bool done = false;
    Vector trial_r(n_residuals);
    Matrix trial_j(n_residuals, np);

    for (res.iterations = 0; res.iterations < opts.max_iterations && !done; ++res.iterations) {
        const Matrix jtj = res.jacobian.transpose() * res.jacobian;
        const Vector grad = res.jacobian.transpose() * res.residuals;
        if (grad.lpNorm<Eigen::Infinity>() <= opts.g_tol * std::max(res.cost, 1e-300)) {
            done = true;
            break;
        }
        Vector scale = jtj.diagonal().cwiseMax(1e-300);

        bool accepted = false;
        while (!accepted && damping <= opts.max_damping) {
            Matrix a = jtj;
            a.diagonal() += damping * scale;
            Eigen::LDLT<Matrix> ldlt(a);
            Vector step = ldlt.solve(-grad);
            if (ldlt.info() != Eigen::Success || !step.allFinite()) {
                damping *= 10.0;
                continue;
            }
            Vector trial = res.params + step;
            if (in_domain && !in_domain(trial)) {
                damping *= 10.0;
                continue;
            }
            fn(trial, trial_r, nullptr);
            const double trial_cost = trial_r.allFinite() ? trial_r.squaredNorm()
                                                          : std::numeric_limits<double>::infinity();
            if (trial_cost < res.cost) {
                const double rel_drop = (res.cost - trial_cost) / std::max(res.cost, 1e-300);
                const bool small_step = step.norm() <= opts.x_tol * (res.params.norm() + opts.x_tol);
                res.params = std::move(trial);
                fn(res.params, res.residuals, &res.jacobian);
                res.cost = res.residuals.squaredNorm();
                damping = std::max(damping / 10.0, 1e-12);
                accepted = true;
                if (small_step || rel_drop <= opts.f_tol) done = true;
            } else {
                // No descent even for a tiny step: we sit at a minimum to working precision.
                if (step.norm() <= opts.x_tol * (res.params.norm() + opts.x_tol)) {
                    done = true;
                    break;
                }
                damping *= 10.0;
            }
        }
        if (!accepted && !done) {
            // Damping exhausted without descent: treat as converged to working precision.
            done = true;
        }
    }

    double rcond = 0.0;
    res.unscaled_covariance = normal_inverse(res.jacobian, rcond);
    if (rcond < opts.rcond_limit) {
        res.status = Status::IllConditioned;
    } else {
        res.status = done ? Status::Converged : Status::MaxIterations;
    }
    return res;
}

} // namespace pcwqd::lsq
