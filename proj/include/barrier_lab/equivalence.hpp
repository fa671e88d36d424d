#pragma once

#include "barrier_lab/model.hpp"

#include <span>
#include <string>
#include <vector>

namespace barrier_lab {

enum class EquivalenceVerdict { equivalent_within_tol, gradient_relation_only, rejected };

std::string to_string(EquivalenceVerdict v);

struct EquivalenceReport {
    std::vector<Vector> samples;
    std::vector<double> zeta;
    std::vector<Vector> zeta_tilde;         ///< empty for gradient-only reports
    std::vector<double> gradient_residual;
    std::vector<double> hessian_residual;   ///< empty for gradient-only reports
    EquivalenceVerdict verdict = EquivalenceVerdict::rejected;

    double max_gradient_residual() const;
    double max_hessian_residual() const;
    double min_zeta() const;
};

struct GradientRatio {
    std::vector<double> zeta;
    std::vector<double> residual;

    /// max residual < 1e-8 and min zeta > 1e-10.
    bool holds() const;
};

inline constexpr double kBoundaryTolerance = 1e-9;
inline constexpr double kGradientRelationTolerance = 1e-8;
inline constexpr double kMinZeta = 1e-10;

/// zeta = grad h2 . grad h1 / |grad h1|^2 and the relative parallelism defect
/// |grad h2 - zeta grad h1| / |grad h2| at every sample. Throws
/// PreconditionError when a sample is off either zero level set or grad h1
/// vanishes.
GradientRatio gradient_ratio(const BarrierPair& h1, const BarrierPair& h2, std::span<const Vector> samples);

/// Gradient relation only; the verdict is gradient_relation_only or rejected.
EquivalenceReport gradient_report(const BarrierPair& h1, const BarrierPair& h2, std::span<const Vector> samples);

/// Full H-equivalence test. zeta_tilde comes from the closed-form projection
/// of A = H2 - zeta H1 onto {g t^T + t g^T}; the verdict is
/// equivalent_within_tol when every Hessian residual (max-abs entry) is below
/// tol and the gradient relation holds, otherwise rejected.
EquivalenceReport hessian_equivalence(const BarrierPair& h1, const BarrierPair& h2, std::span<const Vector> samples,
                                      double tol = 1e-8);

/// 256 (or `count`) boundary samples of a ball geometry; throws
/// InvalidParameter for implicit geometries, which need caller samples.
std::vector<Vector> default_boundary_samples(const BarrierPair& pair, std::size_t count = 256);

/// Left fold of transform_cbf over the steps.
BarrierPair compose_transforms(const BarrierPair& base, std::span<const TransformStep> steps);

}  // namespace barrier_lab
