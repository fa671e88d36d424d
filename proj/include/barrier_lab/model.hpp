#pragma once

#include "barrier_lab/common.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace barrier_lab {

/// Scalar function with first derivative. Used for the extended class-K
/// functions alpha (CBF) and beta (CLF).
struct ClassKFunction {
    RealFunction value;
    RealFunction derivative;
    std::string description;

    double operator()(double s) const { return value(s); }

    static ClassKFunction linear(double slope);
};

/// Scalar map with first and second derivatives (the gamma of a CBF transform).
struct ScalarMap {
    RealFunction value;
    RealFunction d1;
    RealFunction d2;
    std::string description;

    static ScalarMap linear(double slope);
    /// c1*s + c2*s^2
    static ScalarMap quadratic(double c1, double c2);
};

/// State function with gradient and Hessian (the eta of a CBF transform).
struct StateFunction {
    ScalarField value;
    VectorField gradient;
    MatrixField hessian;
    std::string description;

    static StateFunction constant(int n, double c);
    /// ||x - center||^2 + offset
    static StateFunction shifted_quadratic(const Vector& center, double offset);
};

/// Control-affine plant x' = f(x) + g(x) u with an optional nominal controller.
struct SystemModel {
    int n = 0;
    int m = 0;
    VectorField f;
    MatrixField g;
    MatrixField jf;
    std::optional<VectorField> k;
    std::optional<MatrixField> jk;
    // When false, the drift Jacobian adds the d(g)/dx * k term by central
    // differences of g; the catalog models all have constant g.
    bool constant_input_matrix = true;

    /// f + g k (just f without a nominal controller).
    Vector drift(const Vector& x) const;
    /// Jacobian of drift().
    Matrix drift_jacobian(const Vector& x) const;

    static SystemModel single_integrator_2d();
    static SystemModel linear(const Matrix& a, const Matrix& b);
    /// Copy of this model with the nominal controller k(x) = K x attached.
    SystemModel with_nominal_gain(const Matrix& gain) const;
};

/// Geometry of the safe set S = {h >= 0}.
class SafeSetGeometry {
public:
    enum class Kind { ball_complement_2d, implicit };

    static SafeSetGeometry ball(const Vector& center, double radius);
    static SafeSetGeometry implicit(ScalarField h, VectorField grad_h);

    Kind kind() const { return kind_; }
    const Vector& center() const { return center_; }
    double radius() const { return radius_; }

    /// Closest boundary point for balls; damped Newton along grad h otherwise.
    Vector project(const Vector& x) const;

    /// N points uniform in angle on the circle (ball geometry only).
    std::vector<Vector> boundary_samples(std::size_t count) const;
    /// Angle-parameterized boundary point (ball geometry only).
    Vector boundary_point(double theta) const;

private:
    Kind kind_ = Kind::implicit;
    Vector center_;
    double radius_ = 0.0;
    ScalarField h_;
    VectorField grad_h_;
};

struct BarrierPair {
    ScalarField h;
    VectorField grad_h;
    MatrixField hess_h;
    ClassKFunction alpha;
    std::optional<SafeSetGeometry> geometry;
    std::string label;
};

struct LyapunovPair {
    ScalarField v;
    VectorField grad_v;
    MatrixField hess_v;
    ClassKFunction beta;
    Vector xstar;
    std::string label;

    /// V(x) = 1/2 (x - xstar)^T Q (x - xstar); Q symmetrized.
    static LyapunovPair quadratic(const Matrix& q, const Vector& xstar, ClassKFunction beta);
};

enum class BallForm {
    full,  ///< ||x - c||^2 - r^2
    half   ///< 1/2 ||x - c||^2 - 1/2 r^2
};

BarrierPair make_ball_cbf(const Vector& center, double radius, BallForm form, double alpha_slope);

/// Parameters of the transform h -> a*gamma(h) + b*eta(x)*h.
struct TransformStep {
    double a = 1.0;
    double b = 0.0;
    ScalarMap gamma = ScalarMap::linear(1.0);
    std::optional<StateFunction> eta;
    ClassKFunction alpha = ClassKFunction::linear(1.0);
};

/// Applies the transform. eta positivity is validated on `boundary_samples`,
/// or on 64 ball samples when the base carries ball geometry.
BarrierPair transform_cbf(const BarrierPair& base, const TransformStep& step,
                          std::span<const Vector> boundary_samples = {});

struct ValidationCheck {
    std::string subject;
    std::string name;
    double max_residual = 0.0;
    double threshold = 0.0;
    bool passed = true;
};

struct ValidationReport {
    std::vector<ValidationCheck> checks;
    bool passed = true;

    /// Names of failed checks as "subject.name".
    std::vector<std::string> failures() const;
};

inline constexpr double kValidationTolerance = 1e-4;

/// Numerical check of dimensions, derivative consistency, class-K
/// monotonicity and CLF positivity. Throws StructuralError on dimension
/// mismatch; every other problem is a failed check in the report.
ValidationReport validate_model(const SystemModel& model, std::span<const BarrierPair> barriers,
                                std::span<const LyapunovPair> lyapunovs,
                                std::span<const Vector> samples);

}  // namespace barrier_lab
