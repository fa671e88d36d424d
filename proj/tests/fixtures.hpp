#pragma once

// The two planar test setups built directly from library primitives.

#include "barrier_lab/qp.hpp"

namespace fixture {

using namespace barrier_lab;

inline Vector v2(double a, double b) { return Eigen::Vector2d(a, b); }

inline TransformStep eta_transform(double alpha_slope) {
    TransformStep s;
    s.a = 0.0;
    s.b = 1.0;
    s.eta = StateFunction::shifted_quadratic(v2(5.0, 1.0), 1.0);
    s.alpha = ClassKFunction::linear(alpha_slope);
    return s;
}

// Obstacle at (2,0) radius 1, nominal k = diag(-1,-5) x, safety filter.
// Variants: 0 = (h1, 1s), 1 = (h2, 1s), 2 = (h1, 10s), 3 = (h2, 10s).
inline std::vector<BarrierPair> obstacle_pairs() {
    const BarrierPair h1 = make_ball_cbf(v2(2, 0), 1.0, BallForm::full, 1.0);
    return {h1, transform_cbf(h1, eta_transform(1.0)), make_ball_cbf(v2(2, 0), 1.0, BallForm::full, 10.0),
            transform_cbf(h1, eta_transform(10.0))};
}

inline ControllerSpec filter_spec(int variant) {
    ControllerSpec spec;
    spec.kind = ControllerKind::safety_filter;
    spec.model = SystemModel::single_integrator_2d().with_nominal_gain(Eigen::Matrix2d{{-1, 0}, {0, -5}});
    spec.cbfs = {obstacle_pairs().at(static_cast<std::size_t>(variant))};
    spec.weight = identity_weight(2);
    return spec;
}

inline LyapunovPair ellipse_clf() {
    return LyapunovPair::quadratic(Eigen::Matrix2d{{6, 0}, {0, 1}}, Vector::Zero(2), ClassKFunction::linear(1.0));
}

// Obstacle at (0,3) radius 1.5 (half form), CLF V = 1/2 x^T diag(6,1) x, p = 1.
// Variants: 0 = (h1, 1s), 1 = (h2, 10s).
inline std::vector<BarrierPair> clf_pairs() {
    const BarrierPair h1 = make_ball_cbf(v2(0, 3), 1.5, BallForm::half, 1.0);
    return {h1, transform_cbf(h1, eta_transform(10.0))};
}

inline ControllerSpec clf_spec(int variant, double p = 1.0) {
    ControllerSpec spec;
    spec.kind = ControllerKind::clf_cbf_qp;
    spec.model = SystemModel::single_integrator_2d();
    spec.cbfs = {clf_pairs().at(static_cast<std::size_t>(variant))};
    spec.clf = ellipse_clf();
    spec.weight = identity_weight(2);
    spec.p = p;
    return spec;
}

}  // namespace fixture
