#include "barrier_lab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace barrier_lab {

Polynomial characteristic_polynomial(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw InvalidParameter("characteristic polynomial needs a square matrix");
    }
    const auto n = a.rows();
    Polynomial coeffs(static_cast<std::size_t>(n) + 1, 0.0);
    coeffs[0] = 1.0;
    Matrix mk = Matrix::Zero(n, n);
    const Matrix id = Matrix::Identity(n, n);
    for (Eigen::Index k = 1; k <= n; ++k) {
        mk = a * mk + coeffs[static_cast<std::size_t>(k - 1)] * id;
        coeffs[static_cast<std::size_t>(k)] = -(a * mk).trace() / static_cast<double>(k);
    }
    return coeffs;
}

Complex evaluate_polynomial(std::span<const double> coeffs, Complex z) {
    Complex acc = 0.0;
    for (double c : coeffs) {
        acc = acc * z + c;
    }
    return acc;
}

namespace {

// Rounding-level bound on |p(z)| for Horner evaluation.
double horner_bound(std::span<const double> coeffs, double abs_z) {
    double acc = 0.0;
    for (double c : coeffs) {
        acc = acc * abs_z + std::abs(c);
    }
    return 16.0 * std::numeric_limits<double>::epsilon() * acc;
}

bool complex_less(const Complex& a, const Complex& b) {
    if (a.real() != b.real()) {
        return a.real() < b.real();
    }
    return a.imag() < b.imag();
}

}  // namespace

std::vector<Complex> polynomial_roots(std::span<const double> coeffs_in) {
    if (coeffs_in.empty() || coeffs_in[0] == 0.0) {
        throw InvalidParameter("polynomial needs a nonzero leading coefficient");
    }
    for (double c : coeffs_in) {
        if (!std::isfinite(c)) {
            throw InvalidParameter("polynomial coefficient is not finite");
        }
    }
    std::vector<double> coeffs(coeffs_in.begin(), coeffs_in.end());
    for (double& c : coeffs) {
        c /= coeffs_in[0];
    }
    const std::size_t degree = coeffs.size() - 1;
    if (degree == 0) {
        return {};
    }
    if (degree == 1) {
        return {Complex(-coeffs[1], 0.0)};
    }

    double radius = 0.0;
    for (std::size_t i = 1; i <= degree; ++i) {
        radius = std::max(radius, std::pow(std::abs(coeffs[i]), 1.0 / static_cast<double>(i)));
    }
    if (radius == 0.0) {
        return std::vector<Complex>(degree, Complex(0.0, 0.0));
    }

    std::vector<Complex> z(degree);
    for (std::size_t k = 0; k < degree; ++k) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(degree) + 0.4;
        z[k] = std::polar(radius, angle);
    }

    // p and p' by Horner.
    auto eval = [&](Complex x, Complex& p, Complex& dp) {
        p = 0.0;
        dp = 0.0;
        for (double c : coeffs) {
            dp = dp * x + p;
            p = p * x + c;
        }
    };

    bool settled = false;
    for (int iter = 0; iter < 200 && !settled; ++iter) {
        settled = true;
        for (std::size_t k = 0; k < degree; ++k) {
            Complex p;
            Complex dp;
            eval(z[k], p, dp);
            if (std::abs(p) <= horner_bound(coeffs, std::abs(z[k]))) {
                continue;
            }
            Complex repulsion = 0.0;
            for (std::size_t j = 0; j < degree; ++j) {
                if (j != k) {
                    repulsion += 1.0 / (z[k] - z[j]);
                }
            }
            Complex corr;
            if (dp == Complex(0.0, 0.0)) {
                corr = Complex(1e-8 * (1.0 + std::abs(z[k])), 1e-8);
            } else {
                const Complex ratio = p / dp;
                corr = ratio / (1.0 - ratio * repulsion);
            }
            z[k] -= corr;
            if (std::abs(corr) > 1e-12 * (1.0 + std::abs(z[k]))) {
                settled = false;
            }
        }
    }
    if (!settled) {
        std::ostringstream os;
        os << "Aberth-Ehrlich did not converge in 200 iterations; residuals:";
        for (const Complex& r : z) {
            os << " " << std::abs(evaluate_polynomial(coeffs, r));
        }
        throw NumericError(os.str());
    }
    for (Complex& r : z) {
        if (std::abs(r.imag()) <= 1e-12 * (1.0 + std::abs(r))) {
            r = Complex(r.real(), 0.0);
        }
    }
    std::sort(z.begin(), z.end(), complex_less);
    return z;
}

LinearDivision divide_by_linear(std::span<const double> coeffs, double root) {
    LinearDivision out;
    if (coeffs.empty()) {
        return out;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
        acc = acc * root + coeffs[i];
        if (i + 1 < coeffs.size()) {
            out.quotient.push_back(acc);
        }
    }
    out.remainder = acc;
    return out;
}

Stability classify_eigenvalues(std::span<const Complex> eigenvalues) {
    constexpr double margin = 1e-8;
    bool any_positive = false;
    bool any_negative = false;
    bool any_marginal = false;
    for (const Complex& e : eigenvalues) {
        if (e.real() > margin) {
            any_positive = true;
        } else if (e.real() < -margin) {
            any_negative = true;
        } else {
            any_marginal = true;
        }
    }
    if (any_positive && any_negative) {
        return Stability::saddle;
    }
    if (any_marginal || eigenvalues.empty()) {
        return Stability::inconclusive;
    }
    return any_positive ? Stability::unstable : Stability::asymptotically_stable;
}

SpectralResult eigen_and_classify(const Matrix& jacobian, std::optional<double> alpha_prime0) {
    if (jacobian.rows() > 8) {
        throw InvalidParameter("eigen_and_classify supports n <= 8");
    }
    SpectralResult out;
    out.jacobian = jacobian;
    out.char_poly = characteristic_polynomial(jacobian);
    out.eigenvalues = polynomial_roots(out.char_poly);
    out.stability = classify_eigenvalues(out.eigenvalues);
    if (alpha_prime0) {
        out.known_factor_root = -*alpha_prime0;
        const LinearDivision div = divide_by_linear(out.char_poly, -*alpha_prime0);
        out.reduced_poly = div.quotient;
        out.division_remainder = div.remainder;
    }
    return out;
}

Matrix fd_jacobian(const VectorField& field, const Vector& x, double step) {
    return fd_matrix(field, x, step);
}

void require_constant_input_metric(const SystemModel& model, const MatrixField& weight, const Vector& x_star,
                                   const ConstancyOptions& options) {
    const Matrix d0 = input_metric(model, weight, x_star);
    const Vector lower = options.lower.value_or((x_star.array() - 10.0).matrix());
    const Vector upper = options.upper.value_or((x_star.array() + 10.0).matrix());
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0.0;
    for (int s = 0; s < options.samples; ++s) {
        Vector x(x_star.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            x(i) = lower(i) + unit(rng) * (upper(i) - lower(i));
        }
        worst = std::max(worst, (input_metric(model, weight, x) - d0).cwiseAbs().maxCoeff());
    }
    if (!(worst < options.tolerance)) {
        throw AssumptionViolation("D = g G^-1 g^T is not constant (max deviation " + std::to_string(worst) +
                                  "); closed-form boundary Jacobians need constant D");
    }
}

Matrix jacobian_clf_cbf_boundary(const SystemModel& model, const BarrierPair& cbf, const LyapunovPair& clf,
                                 const MatrixField& weight, double p, const Vector& x_star,
                                 const ConstancyOptions& options) {
    const BoundaryMultipliers mult = multipliers_on_boundary(model, cbf, clf, weight, p, x_star);
    if (!(mult.lambda1 > 1e-8 && mult.lambda2 > 1e-8)) {
        throw PreconditionError("boundary Jacobian needs strict complementarity (lambda1 = " +
                                std::to_string(mult.lambda1) + ", lambda2 = " + std::to_string(mult.lambda2) + ")");
    }
    require_constant_input_metric(model, weight, x_star, options);

    const auto n = x_star.size();
    const Matrix id = Matrix::Identity(n, n);
    const Matrix d = input_metric(model, weight, x_star);
    const Matrix jf = model.drift_jacobian(x_star);
    const Vector grad_v = clf.grad_v(x_star);
    const Vector grad_h = cbf.grad_h(x_star);
    const Matrix hess_v = clf.hess_v(x_star);
    const Matrix hess_h = cbf.hess_h(x_star);
    const double alpha_prime = cbf.alpha.derivative(0.0);
    const double beta_prime = clf.beta.derivative(clf.v(x_star));
    const double det = mult.det;
    const auto& delta = mult.delta;

    const Vector d_grad_v = d * grad_v;
    const Vector d_grad_h = d * grad_h;
    const Vector box1 = delta(1, 1) * d_grad_v + delta(1, 0) * d_grad_h;
    const Vector box2 = delta(0, 1) * d_grad_v + delta(0, 0) * d_grad_h;
    const double l1 = mult.lambda1;
    const double l2 = mult.lambda2;

    const Matrix cbf_row = grad_h.transpose() * jf + alpha_prime * grad_h.transpose();
    const Matrix clf_row = grad_v.transpose() * jf + beta_prime * grad_v.transpose() -
                           l1 * grad_v.transpose() * d * hess_v;

    Matrix j = jf;
    j -= box2 / det * cbf_row;
    j -= (id - box2 / det * grad_h.transpose()) * l1 * d * hess_v;
    j -= box1 / det * clf_row;
    j += (id - box2 / det * grad_h.transpose() - box1 / det * grad_v.transpose()) * l2 * d * hess_h;
    return j;
}

Matrix jacobian_safety_filter_boundary(const SystemModel& model, const BarrierPair& cbf, const MatrixField& weight,
                                       const Vector& x_star, const ConstancyOptions& options) {
    const double h = cbf.h(x_star);
    if (!(std::abs(h) < 1e-9)) {
        throw NotOnBoundaryError("safety-filter boundary Jacobian: |h(x*)| = " + std::to_string(std::abs(h)));
    }
    const double delta_sf = collinearity_factor(model, cbf, weight, x_star);
    if (!(delta_sf < -1e-8)) {
        throw PreconditionError("safety-filter boundary Jacobian needs delta_sf < 0 (got " +
                                std::to_string(delta_sf) + ")");
    }
    require_constant_input_metric(model, weight, x_star, options);

    const auto n = x_star.size();
    const Matrix id = Matrix::Identity(n, n);
    const Matrix d = input_metric(model, weight, x_star);
    const Matrix jf = model.drift_jacobian(x_star);
    const Vector drift = model.drift(x_star);
    const Vector grad_h = cbf.grad_h(x_star);
    const Matrix hess_h = cbf.hess_h(x_star);
    const double alpha_prime = cbf.alpha.derivative(0.0);
    const double c = grad_h.dot(d * grad_h);

    Matrix j = jf;
    j -= d * grad_h * grad_h.transpose() * (jf + alpha_prime * id) / c;
    j -= d * (grad_h.dot(drift) * id - grad_h * drift.transpose()) * hess_h / c;
    return j;
}

InvarianceVerdict spectral_invariance_check(const Matrix& j1, double alpha1_prime0, const Matrix& j2,
                                            double alpha2_prime0, double tol) {
    InvarianceVerdict verdict;
    const LinearDivision d1 = divide_by_linear(characteristic_polynomial(j1), -alpha1_prime0);
    const LinearDivision d2 = divide_by_linear(characteristic_polynomial(j2), -alpha2_prime0);
    verdict.reduced1 = d1.quotient;
    verdict.reduced2 = d2.quotient;
    verdict.remainder1 = d1.remainder;
    verdict.remainder2 = d2.remainder;
    if (std::abs(d1.remainder) > 1e-6 || std::abs(d2.remainder) > 1e-6) {
        verdict.outcome = InvarianceOutcome::factorization_failure;
        return verdict;
    }
    if (d1.quotient.size() != d2.quotient.size()) {
        verdict.max_coefficient_difference = std::numeric_limits<double>::infinity();
        verdict.outcome = InvarianceOutcome::fail;
        return verdict;
    }
    for (std::size_t i = 0; i < d1.quotient.size(); ++i) {
        verdict.max_coefficient_difference =
            std::max(verdict.max_coefficient_difference, std::abs(d1.quotient[i] - d2.quotient[i]));
    }
    verdict.outcome = verdict.max_coefficient_difference < tol ? InvarianceOutcome::pass : InvarianceOutcome::fail;
    return verdict;
}

std::optional<SpectralResult> attach_spectrum(EquilibriumReport& report, const ControllerSpec& spec,
                                              const ConstancyOptions& options) {
    std::optional<SpectralResult> result;
    if (report.kind == EquilibriumKind::interior) {
        Matrix j;
        if (spec.kind == ControllerKind::safety_filter) {
            j = spec.model.drift_jacobian(report.x_star);
        } else {
            j = fd_jacobian([&spec](const Vector& y) { return closed_loop_field(spec, y, false); }, report.x_star);
        }
        result = eigen_and_classify(j, std::nullopt);
    } else if (report.desirability == Desirability::undesirable) {
        const BarrierPair& pair = spec.cbfs.at(static_cast<std::size_t>(report.cbf_index));
        Matrix j;
        if (spec.kind == ControllerKind::clf_cbf_qp) {
            j = jacobian_clf_cbf_boundary(spec.model, pair, *spec.clf, spec.weight, spec.p, report.x_star, options);
        } else {
            j = jacobian_safety_filter_boundary(spec.model, pair, spec.weight, report.x_star, options);
        }
        result = eigen_and_classify(j, pair.alpha.derivative(0.0));
    } else {
        report.stability = Stability::inconclusive;
        return std::nullopt;
    }
    report.jacobian = result->jacobian;
    report.eigenvalues = result->eigenvalues;
    report.stability = result->stability;
    return result;
}

std::string to_string(InvarianceOutcome o) {
    switch (o) {
        case InvarianceOutcome::pass: return "pass";
        case InvarianceOutcome::fail: return "fail";
        case InvarianceOutcome::factorization_failure: return "factorization-failure";
    }
    return "fail";
}

}  // namespace barrier_lab
