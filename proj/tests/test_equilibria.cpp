#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "barrier_lab/equilibria.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace barrier_lab;
using fixture::v2;

namespace {

InteriorSearchOptions box(const Vector& lo, const Vector& hi) {
    InteriorSearchOptions o;
    o.lower = lo;
    o.upper = hi;
    o.grid = {7, 7};
    return o;
}

InteriorSearchOptions filter_box() { return box(v2(-4, -4), v2(8, 4)); }
InteriorSearchOptions clf_box() { return box(v2(-4, -2), v2(4, 8)); }

std::vector<Vector> points_of(const std::vector<EquilibriumReport>& reports, EquilibriumKind kind) {
    std::vector<Vector> out;
    for (const EquilibriumReport& r : reports) {
        if (r.kind == kind) {
            out.push_back(r.x_star);
        }
    }
    return out;
}

// Same size and every golden point matched per coordinate.
bool same_set(const std::vector<Vector>& found, const std::vector<Vector>& golden, double tol) {
    if (found.size() != golden.size()) {
        return false;
    }
    for (const Vector& g : golden) {
        bool hit = false;
        for (const Vector& f : found) {
            hit = hit || (f - g).cwiseAbs().maxCoeff() < tol;
        }
        if (!hit) {
            return false;
        }
    }
    return true;
}

const std::vector<Vector> kFilterGolden = {v2(2.5, std::sqrt(3.0) / 2.0), v2(2.5, -std::sqrt(3.0) / 2.0), v2(3, 0)};
const std::vector<Vector> kClfGolden = {v2(std::sqrt(1.89), 3.6), v2(-std::sqrt(1.89), 3.6), v2(0, 4.5)};

}  // namespace

TEST_CASE("safety filter boundary equilibria for every obstacle pair") {
    for (int variant = 0; variant < 4; ++variant) {
        INFO("variant " << variant);
        const ControllerSpec spec = fixture::filter_spec(variant);
        const EquilibriumSearch found = find_boundary_equilibria(spec, 0);
        CHECK(found.errors.empty());
        CHECK(same_set(points_of(found.equilibria, EquilibriumKind::boundary), kFilterGolden, 1e-6));
        for (const EquilibriumReport& r : found.equilibria) {
            CHECK(r.desirability == Desirability::undesirable);
            CHECK(r.residual < 1e-9);
            CHECK(std::abs(r.h_value) < 1e-9);
            REQUIRE(r.delta_sf.has_value());
            CHECK(*r.delta_sf < -1e-8);
        }
    }
}

TEST_CASE("collinearity factor at (3,0)") {
    const ControllerSpec spec = fixture::filter_spec(0);
    CHECK(collinearity_factor(spec.model, spec.cbfs[0], spec.weight, v2(3, 0)) == doctest::Approx(-1.5));
    const ControllerSpec h2 = fixture::filter_spec(1);
    // grad h2 = 6 grad h1 there
    CHECK(collinearity_factor(h2.model, h2.cbfs[0], h2.weight, v2(3, 0)) == doctest::Approx(-0.25));
}

TEST_CASE("safety filter full search adds the origin as desirable") {
    const EquilibriumSearch found = find_equilibria(fixture::filter_spec(0), {}, filter_box());
    const auto interior = points_of(found.equilibria, EquilibriumKind::interior);
    REQUIRE(interior.size() == 1);
    CHECK(interior[0].norm() < 1e-9);
    for (const EquilibriumReport& r : found.equilibria) {
        CHECK((r.kind == EquilibriumKind::interior) == (r.desirability == Desirability::desirable));
    }
    // lexicographic order
    for (std::size_t i = 1; i < found.equilibria.size(); ++i) {
        const Vector& a = found.equilibria[i - 1].x_star;
        const Vector& b = found.equilibria[i].x_star;
        CHECK(std::lexicographical_compare(a.data(), a.data() + 2, b.data(), b.data() + 2));
    }
}

TEST_CASE("clf-cbf boundary equilibria for both pairs") {
    for (int variant = 0; variant < 2; ++variant) {
        INFO("variant " << variant);
        const ControllerSpec spec = fixture::clf_spec(variant);
        const EquilibriumSearch found = find_boundary_equilibria(spec, 0);
        CHECK(found.errors.empty());
        CHECK(same_set(points_of(found.equilibria, EquilibriumKind::boundary), kClfGolden, 1e-6));
        for (const EquilibriumReport& r : found.equilibria) {
            CHECK(r.desirability == Desirability::undesirable);
            REQUIRE(r.lambda1.has_value());
            REQUIRE(r.lambda2.has_value());
            CHECK(*r.lambda1 > 1e-10);
            CHECK(*r.lambda2 > 1e-8);
        }
    }
}

TEST_CASE("clf-cbf interior search finds only the origin") {
    const EquilibriumSearch found = find_interior_equilibria(fixture::clf_spec(0), clf_box());
    REQUIRE(found.equilibria.size() == 1);
    CHECK(found.equilibria[0].x_star.norm() < 1e-4);
    CHECK(found.equilibria[0].desirability == Desirability::desirable);
}

TEST_CASE("boundary multipliers at (0,4.5)") {
    const ControllerSpec spec = fixture::clf_spec(0);
    const BoundaryMultipliers m =
        multipliers_on_boundary(spec.model, spec.cbfs[0], *spec.clf, spec.weight, spec.p, v2(0, 4.5));
    CHECK(m.lambda1 == doctest::Approx(10.125).epsilon(1e-13));
    CHECK(m.lambda2 == doctest::Approx(30.375).epsilon(1e-13));
    CHECK(m.delta(0, 0) == doctest::Approx(21.25));
    CHECK(m.delta(0, 1) == doctest::Approx(-6.75));
    CHECK(m.delta(1, 1) == doctest::Approx(2.25));
    CHECK(m.det == doctest::Approx(2.25 * 21.25 - 6.75 * 6.75));
}

TEST_CASE("boundary multipliers at the near pole (0,1.5)") {
    const ControllerSpec spec = fixture::clf_spec(0);
    const BoundaryMultipliers m =
        multipliers_on_boundary(spec.model, spec.cbfs[0], *spec.clf, spec.weight, spec.p, v2(0, 1.5));
    CHECK(m.lambda1 == doctest::Approx(1.125).epsilon(1e-13));
    CHECK(m.lambda2 == doctest::Approx(-1.125).epsilon(1e-13));
    CHECK(m.det == doctest::Approx(2.25));
}

TEST_CASE("lambda1 equals p beta(V) where grad V is tangent to the boundary") {
    // Point on the circle x1^2 + (x2-3)^2 = 2.25 with 6 x1^2 + x2 (x2-3) = 0.
    const double x2 = (33.0 - std::sqrt(279.0)) / 10.0;
    const double x1 = std::sqrt((3.0 * x2 - x2 * x2) / 6.0);
    const Vector x0 = v2(x1, x2);
    for (double p : {1.0, 2.5}) {
        ControllerSpec spec = fixture::clf_spec(0, p);
        const LyapunovPair& v = *spec.clf;
        REQUIRE(std::abs(spec.cbfs[0].h(x0)) < 1e-12);
        REQUIRE(std::abs(v.grad_v(x0).dot(spec.cbfs[0].grad_h(x0))) < 1e-12);
        const Vector drift = p * v.beta(v.v(x0)) * v.grad_v(x0);
        spec.model.f = [drift](const Vector&) { return drift; };
        const BoundaryMultipliers m = multipliers_on_boundary(spec.model, spec.cbfs[0], v, spec.weight, p, x0);
        CHECK(m.lambda1 == doctest::Approx(p * v.beta(v.v(x0))).epsilon(1e-12));
        CHECK(std::abs(m.lambda2) < 1e-12);
    }
}

TEST_CASE("multipliers reproduce the drift at clf-cbf equilibria") {
    for (int variant = 0; variant < 2; ++variant) {
        const ControllerSpec spec = fixture::clf_spec(variant);
        const EquilibriumSearch found = find_boundary_equilibria(spec, 0);
        for (const EquilibriumReport& r : found.equilibria) {
            const Vector& x = r.x_star;
            const Matrix d = input_metric(spec.model, spec.weight, x);
            const Vector res = spec.model.drift(x) - *r.lambda1 * d * spec.clf->grad_v(x) +
                               *r.lambda2 * d * spec.cbfs[0].grad_h(x);
            CHECK(res.norm() < 1e-8);
        }
    }
}

TEST_CASE("interior equilibria are equilibria of the unfiltered loop") {
    for (const ControllerSpec& spec : {fixture::filter_spec(0), fixture::filter_spec(3)}) {
        const EquilibriumSearch found = find_interior_equilibria(spec, filter_box());
        REQUIRE_FALSE(found.equilibria.empty());
        for (const EquilibriumReport& r : found.equilibria) {
            CHECK(closed_loop_field(spec, r.x_star, false).norm() < 1e-9);
            const auto near = oracle::random_states(200, r.x_star.array() - 1e-2, r.x_star.array() + 1e-2, 9,
                                                    [&](const Vector& y) { return (y - r.x_star).norm() <= 1e-2; });
            for (const Vector& y : near) {
                CHECK((closed_loop_field(spec, y, true) - closed_loop_field(spec, y, false)).norm() < 1e-9);
            }
        }
    }
}

TEST_CASE("no interior equilibrium when the root sits inside the obstacle") {
    ControllerSpec spec = fixture::filter_spec(0);
    spec.model = SystemModel::single_integrator_2d();
    spec.model.f = [](const Vector& x) { return Vector(v2(2, 0) - x); };
    spec.model.jf = [](const Vector&) { return Matrix(-Matrix::Identity(2, 2)); };
    const EquilibriumSearch found = find_interior_equilibria(spec, filter_box());
    CHECK(found.equilibria.empty());
}

TEST_CASE("desirability classification examples") {
    const ControllerSpec spec = fixture::filter_spec(0);
    EquilibriumReport r;
    r.x_star = v2(3, 0);
    r.kind = EquilibriumKind::boundary;
    r.cbf_index = 0;
    r.delta_sf = -1.5;
    CHECK(classify_desirability(r, spec) == Desirability::undesirable);
    EquilibriumReport origin;
    origin.x_star = v2(0, 0);
    origin.kind = EquilibriumKind::interior;
    CHECK(classify_desirability(origin, spec) == Desirability::desirable);
    CHECK(classify_desirability(origin, fixture::clf_spec(0)) == Desirability::desirable);
}

TEST_CASE("equilibrium sets agree across obstacle pairs") {
    std::vector<std::vector<Vector>> sets;
    for (int variant = 0; variant < 4; ++variant) {
        sets.push_back(points_of(find_boundary_equilibria(fixture::filter_spec(variant), 0).equilibria,
                                 EquilibriumKind::boundary));
    }
    for (std::size_t i = 1; i < sets.size(); ++i) {
        CHECK(same_set(sets[i], sets[0], 1e-6));
    }
}

TEST_CASE("a distant second obstacle leaves the boundary equilibria unchanged") {
    ControllerSpec spec = fixture::filter_spec(0);
    spec.cbfs.push_back(make_ball_cbf(v2(5, 2.5), 0.5, BallForm::full, 1.0));
    const EquilibriumSearch found = find_boundary_equilibria(spec, 0);
    CHECK(same_set(points_of(found.equilibria, EquilibriumKind::boundary), kFilterGolden, 1e-6));
    for (const EquilibriumReport& r : found.equilibria) {
        CHECK(spec.cbfs[1].h(r.x_star) > 0.0);
    }
}
