#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "barrier_lab/equivalence.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace barrier_lab;
using fixture::v2;

namespace {

BarrierPair obstacle() { return make_ball_cbf(v2(2, 0), 1.0, BallForm::full, 1.0); }

struct RandomStep {
    TransformStep step;
    double gamma2 = 0.0;  // second derivative of gamma at 0
    Vector eta_center;
};

RandomStep random_step(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> coef(0.0, 2.0);
    std::uniform_real_distribution<double> slope(0.5, 2.0);
    std::uniform_real_distribution<double> curve(-0.5, 0.5);
    std::uniform_real_distribution<double> place(-3.0, 3.0);
    RandomStep r;
    r.step.a = coef(rng);
    r.step.b = coef(rng);
    if (r.step.a + r.step.b < 0.1) {
        r.step.a += 0.5;
    }
    const double c1 = slope(rng);
    const double c2 = curve(rng);
    r.step.gamma = ScalarMap::quadratic(c1, c2);
    r.gamma2 = 2.0 * c2;
    r.eta_center = v2(place(rng), place(rng));
    r.step.eta = StateFunction::shifted_quadratic(r.eta_center, slope(rng));
    r.step.alpha = ClassKFunction::linear(slope(rng));
    return r;
}

}  // namespace

TEST_CASE("transform at (3,0) gives zeta 6 and zeta tilde (-4,-2)") {
    const BarrierPair h1 = obstacle();
    const BarrierPair h2 = transform_cbf(h1, fixture::eta_transform(1.0));
    const std::vector<Vector> at = {v2(3, 0)};
    const EquivalenceReport r = hessian_equivalence(h1, h2, at);
    CHECK(std::abs(r.zeta[0] - 6.0) < 1e-10);
    CHECK((r.zeta_tilde[0] - v2(-4, -2)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(r.verdict == EquivalenceVerdict::equivalent_within_tol);
}

TEST_CASE("transformed pair is equivalent on the whole boundary") {
    const BarrierPair h1 = obstacle();
    const auto samples = default_boundary_samples(h1);
    REQUIRE(samples.size() == 256);
    for (double slope : {1.0, 10.0}) {
        const EquivalenceReport r = hessian_equivalence(h1, transform_cbf(h1, fixture::eta_transform(slope)), samples);
        CHECK(r.verdict == EquivalenceVerdict::equivalent_within_tol);
        CHECK(r.max_hessian_residual() < 1e-8);
        CHECK(r.max_gradient_residual() < 1e-8);
        CHECK(r.min_zeta() > 0.0);
    }
}

TEST_CASE("zeta tilde recovers the transform parameters") {
    std::mt19937_64 rng(99);
    const BarrierPair h1 = obstacle();
    const auto samples = default_boundary_samples(h1, 64);
    for (int trial = 0; trial < 20; ++trial) {
        const RandomStep r = random_step(rng);
        const EquivalenceReport rep = hessian_equivalence(h1, transform_cbf(h1, r.step), samples);
        CHECK(rep.verdict == EquivalenceVerdict::equivalent_within_tol);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const Vector& x = samples[i];
            const Vector g = h1.grad_h(x);
            const double eta = (x - r.eta_center).squaredNorm() + r.step.eta->value(r.eta_center);
            const Vector expected = 0.5 * r.step.a * r.gamma2 * g + r.step.b * 2.0 * (x - r.eta_center);
            CHECK((rep.zeta_tilde[i] - expected).cwiseAbs().maxCoeff() < 1e-9 * (1.0 + expected.norm()));
            CHECK(std::abs(rep.zeta[i] - (r.step.a * r.step.gamma.d1(0.0) + r.step.b * eta)) < 1e-10 * (1.0 + eta));
        }
    }
}

TEST_CASE("equivalence is reflexive") {
    const BarrierPair h1 = obstacle();
    const auto samples = default_boundary_samples(h1);
    const EquivalenceReport r = hessian_equivalence(h1, h1, samples);
    CHECK(r.verdict == EquivalenceVerdict::equivalent_within_tol);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(r.zeta[i] == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(r.zeta_tilde[i].norm() < 1e-12);
    }
}

TEST_CASE("equivalence is symmetric with reciprocal ratios") {
    std::mt19937_64 rng(5);
    const BarrierPair h1 = obstacle();
    const auto samples = default_boundary_samples(h1, 128);
    for (int trial = 0; trial < 50; ++trial) {
        const BarrierPair h2 = transform_cbf(h1, random_step(rng).step);
        const EquivalenceReport fwd = hessian_equivalence(h1, h2, samples);
        const EquivalenceReport back = hessian_equivalence(h2, h1, samples);
        CHECK(fwd.verdict == EquivalenceVerdict::equivalent_within_tol);
        CHECK(back.verdict == EquivalenceVerdict::equivalent_within_tol);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            CHECK(std::abs(fwd.zeta[i] * back.zeta[i] - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("equivalence is transitive along random transform chains") {
    std::mt19937_64 rng(31);
    const BarrierPair h1 = obstacle();
    const auto samples = default_boundary_samples(h1, 128);
    for (int trial = 0; trial < 50; ++trial) {
        const RandomStep s1 = random_step(rng);
        const RandomStep s2 = random_step(rng);
        const BarrierPair h2 = transform_cbf(h1, s1.step);
        const TransformStep steps[] = {s1.step, s2.step};
        const BarrierPair h3 = compose_transforms(h1, steps);
        REQUIRE(hessian_equivalence(h1, h2, samples).verdict == EquivalenceVerdict::equivalent_within_tol);
        REQUIRE(hessian_equivalence(h2, h3, samples).verdict == EquivalenceVerdict::equivalent_within_tol);
        const EquivalenceReport r13 = hessian_equivalence(h1, h3, samples);
        CHECK(r13.verdict == EquivalenceVerdict::equivalent_within_tol);
        // ratios multiply along the chain
        const GradientRatio r12 = gradient_ratio(h1, h2, samples);
        const GradientRatio r23 = gradient_ratio(h2, h3, samples);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            CHECK(std::abs(r13.zeta[i] - r12.zeta[i] * r23.zeta[i]) < 1e-10 * r13.zeta[i]);
        }
    }
}

TEST_CASE("tangential Hessian fault is rejected") {
    const BarrierPair h1 = obstacle();
    BarrierPair faulty = transform_cbf(h1, fixture::eta_transform(1.0));
    const MatrixField hess = faulty.hess_h;
    faulty.hess_h = [hess](const Vector& x) {
        const Vector tangent = v2(-x(1), x(0) - 2.0);
        return Matrix(hess(x) + 1e-6 * tangent * tangent.transpose());
    };
    const auto samples = default_boundary_samples(h1);
    const EquivalenceReport r = hessian_equivalence(h1, faulty, samples);
    CHECK(r.verdict == EquivalenceVerdict::rejected);
    CHECK(r.max_gradient_residual() < 1e-8);
    CHECK(gradient_report(h1, faulty, samples).verdict == EquivalenceVerdict::gradient_relation_only);
}

TEST_CASE("different sets are rejected or refused") {
    const BarrierPair h1 = obstacle();
    const BarrierPair bigger = make_ball_cbf(v2(2, 0), 1.5, BallForm::full, 1.0);
    const auto samples = default_boundary_samples(h1);
    CHECK_THROWS_AS(hessian_equivalence(h1, bigger, samples), PreconditionError);
    CHECK_THROWS_AS(gradient_ratio(h1, bigger, samples), PreconditionError);

    // same zero set, opposite orientation: zeta < 0
    BarrierPair negated = h1;
    negated.h = [h = h1.h](const Vector& x) { return -h(x); };
    negated.grad_h = [g = h1.grad_h](const Vector& x) { return Vector(-g(x)); };
    negated.hess_h = [hh = h1.hess_h](const Vector& x) { return Matrix(-hh(x)); };
    CHECK(gradient_report(h1, negated, samples).verdict == EquivalenceVerdict::rejected);
    CHECK(hessian_equivalence(h1, negated, samples).verdict == EquivalenceVerdict::rejected);
}

TEST_CASE("default samples need ball geometry") {
    BarrierPair implicit = obstacle();
    implicit.geometry.reset();
    CHECK_THROWS_AS(default_boundary_samples(implicit), InvalidParameter);
}

TEST_CASE("composition examples") {
    const BarrierPair h1 = obstacle();
    CHECK(compose_transforms(h1, {}).h(v2(0.5, 0.5)) == h1.h(v2(0.5, 0.5)));
    TransformStep scale;
    scale.a = 10.0;
    const TransformStep steps[] = {fixture::eta_transform(1.0), scale};
    const BarrierPair composed = compose_transforms(h1, steps);
    const BarrierPair nested = transform_cbf(transform_cbf(h1, steps[0]), steps[1]);
    for (const Vector& x : {v2(0, 0), v2(3, 1), v2(-1, 2)}) {
        CHECK(composed.h(x) == doctest::Approx(nested.h(x)));
        CHECK((composed.grad_h(x) - nested.grad_h(x)).norm() < 1e-12);
    }
    CHECK(composed.h(v2(0, 0)) == doctest::Approx(10.0 * 27.0 * 3.0));
}
