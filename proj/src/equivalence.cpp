#include "barrier_lab/equivalence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace barrier_lab {

std::string to_string(EquivalenceVerdict v) {
    switch (v) {
        case EquivalenceVerdict::equivalent_within_tol: return "equivalent-within-tol";
        case EquivalenceVerdict::gradient_relation_only: return "gradient-relation-only";
        case EquivalenceVerdict::rejected: return "rejected";
    }
    return "rejected";
}

namespace {

double max_of(const std::vector<double>& v) {
    double out = 0.0;
    for (double x : v) {
        out = std::max(out, x);
    }
    return out;
}

}  // namespace

double EquivalenceReport::max_gradient_residual() const { return max_of(gradient_residual); }

double EquivalenceReport::max_hessian_residual() const { return max_of(hessian_residual); }

double EquivalenceReport::min_zeta() const {
    if (zeta.empty()) {
        return 0.0;
    }
    return *std::min_element(zeta.begin(), zeta.end());
}

bool GradientRatio::holds() const {
    if (zeta.empty()) {
        return false;
    }
    return max_of(residual) < kGradientRelationTolerance &&
           *std::min_element(zeta.begin(), zeta.end()) > kMinZeta;
}

GradientRatio gradient_ratio(const BarrierPair& h1, const BarrierPair& h2, std::span<const Vector> samples) {
    GradientRatio out;
    out.zeta.resize(samples.size());
    out.residual.resize(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Vector& x = samples[i];
        const double v1 = h1.h(x);
        const double v2 = h2.h(x);
        if (!(std::abs(v1) < kBoundaryTolerance) || !(std::abs(v2) < kBoundaryTolerance)) {
            throw PreconditionError("sample " + std::to_string(i) + " is off the zero level set (|h1| = " +
                                    std::to_string(std::abs(v1)) + ", |h2| = " + std::to_string(std::abs(v2)) + ")");
        }
        const Vector g1 = h1.grad_h(x);
        const Vector g2 = h2.grad_h(x);
        const double n1 = g1.squaredNorm();
        if (!(n1 > 0.0)) {
            throw PreconditionError("grad h1 vanishes at sample " + std::to_string(i));
        }
        const double z = g2.dot(g1) / n1;
        const double n2 = g2.norm();
        out.zeta[i] = z;
        out.residual[i] = n2 > 0.0 ? (g2 - z * g1).norm() / n2 : std::numeric_limits<double>::infinity();
    }
    return out;
}

EquivalenceReport gradient_report(const BarrierPair& h1, const BarrierPair& h2, std::span<const Vector> samples) {
    const GradientRatio ratio = gradient_ratio(h1, h2, samples);
    EquivalenceReport report;
    report.samples.assign(samples.begin(), samples.end());
    report.zeta = ratio.zeta;
    report.gradient_residual = ratio.residual;
    report.verdict = ratio.holds() ? EquivalenceVerdict::gradient_relation_only : EquivalenceVerdict::rejected;
    return report;
}

EquivalenceReport hessian_equivalence(const BarrierPair& h1, const BarrierPair& h2, std::span<const Vector> samples,
                                      double tol) {
    EquivalenceReport report = gradient_report(h1, h2, samples);
    const bool gradient_ok = report.verdict == EquivalenceVerdict::gradient_relation_only;
    report.zeta_tilde.resize(samples.size());
    report.hessian_residual.resize(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
        const Vector& x = samples[i];
        const Vector g = h1.grad_h(x);
        const Matrix a = h2.hess_h(x) - report.zeta[i] * h1.hess_h(x);
        const double gg = g.squaredNorm();
        const Vector zt = a * g / gg - g * (g.dot(a * g)) / (2.0 * gg * gg);
        report.zeta_tilde[i] = zt;
        report.hessian_residual[i] = (a - g * zt.transpose() - zt * g.transpose()).cwiseAbs().maxCoeff();
    });
    const bool hessian_ok = !samples.empty() && report.max_hessian_residual() < tol;
    report.verdict = gradient_ok && hessian_ok ? EquivalenceVerdict::equivalent_within_tol
                                               : EquivalenceVerdict::rejected;
    return report;
}

std::vector<Vector> default_boundary_samples(const BarrierPair& pair, std::size_t count) {
    if (!pair.geometry || pair.geometry->kind() != SafeSetGeometry::Kind::ball_complement_2d) {
        throw InvalidParameter("default boundary samples need ball geometry; supply samples for '" + pair.label + "'");
    }
    return pair.geometry->boundary_samples(count);
}

BarrierPair compose_transforms(const BarrierPair& base, std::span<const TransformStep> steps) {
    BarrierPair current = base;
    for (const TransformStep& step : steps) {
        current = transform_cbf(current, step);
    }
    return current;
}

}  // namespace barrier_lab
