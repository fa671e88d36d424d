#pragma once

#include "barrier_lab/equilibria.hpp"

#include <optional>
#include <span>
#include <vector>

namespace barrier_lab {

/// Monic polynomial coefficients, highest degree first: {1, c_{n-1}, ..., c_0}.
using Polynomial = std::vector<double>;

/// det(sI - A) by Faddeev-LeVerrier.
Polynomial characteristic_polynomial(const Matrix& a);

Complex evaluate_polynomial(std::span<const double> coeffs, Complex z);

/// All roots by Aberth-Ehrlich (tol 1e-12, at most 200 sweeps); throws
/// NumericError with the residuals when the iteration does not settle.
std::vector<Complex> polynomial_roots(std::span<const double> coeffs);

struct LinearDivision {
    Polynomial quotient;
    double remainder = 0.0;
};

/// Synthetic division of p(s) by (s - root).
LinearDivision divide_by_linear(std::span<const double> coeffs, double root);

Stability classify_eigenvalues(std::span<const Complex> eigenvalues);

struct SpectralResult {
    Matrix jacobian;
    Polynomial char_poly;
    std::vector<Complex> eigenvalues;
    std::optional<double> known_factor_root;  ///< -alpha'(0)
    Polynomial reduced_poly;                  ///< char_poly / (s + alpha'(0))
    double division_remainder = 0.0;
    Stability stability = Stability::inconclusive;
};

/// Eigen-decomposition through the characteristic polynomial (n <= 8). With
/// alpha_prime0 the known factor (s + alpha'(0)) is divided out.
SpectralResult eigen_and_classify(const Matrix& jacobian, std::optional<double> alpha_prime0);

/// Central differences column by column with step `step * (1 + |x_i|)`.
Matrix fd_jacobian(const VectorField& field, const Vector& x, double step = 1e-5);

struct ConstancyOptions {
    int samples = 16;
    double tolerance = 1e-10;
    std::optional<Vector> lower;  ///< sampling box; defaults to x_star -/+ 10
    std::optional<Vector> upper;
    unsigned long long seed = 0x5eedULL;
};

/// Throws AssumptionViolation when D = g G^{-1} g^T varies over the box.
void require_constant_input_metric(const SystemModel& model, const MatrixField& weight, const Vector& x_star,
                                   const ConstancyOptions& options = {});

Matrix jacobian_clf_cbf_boundary(const SystemModel& model, const BarrierPair& cbf, const LyapunovPair& clf,
                                 const MatrixField& weight, double p, const Vector& x_star,
                                 const ConstancyOptions& options = {});

Matrix jacobian_safety_filter_boundary(const SystemModel& model, const BarrierPair& cbf, const MatrixField& weight,
                                       const Vector& x_star, const ConstancyOptions& options = {});

enum class InvarianceOutcome { pass, fail, factorization_failure };

struct InvarianceVerdict {
    InvarianceOutcome outcome = InvarianceOutcome::fail;
    Polynomial reduced1;
    Polynomial reduced2;
    double remainder1 = 0.0;
    double remainder2 = 0.0;
    double max_coefficient_difference = 0.0;

    bool passed() const { return outcome == InvarianceOutcome::pass; }
};

InvarianceVerdict spectral_invariance_check(const Matrix& j1, double alpha1_prime0, const Matrix& j2,
                                            double alpha2_prime0, double tol = 1e-7);

/// Fills jacobian, eigenvalues and stability of a report. Undesirable
/// boundary points use the closed-form Jacobians; interior points use the
/// Jacobian of the unfiltered loop. Returns the spectral result when computed.
std::optional<SpectralResult> attach_spectrum(EquilibriumReport& report, const ControllerSpec& spec,
                                              const ConstancyOptions& options = {});

std::string to_string(InvarianceOutcome o);

}  // namespace barrier_lab
