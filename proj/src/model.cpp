#include "barrier_lab/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace barrier_lab {

namespace {

std::string fmt_num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

void require_shape(const std::string& who, const Matrix& value, Eigen::Index rows, Eigen::Index cols) {
    if (value.rows() != rows || value.cols() != cols) {
        std::ostringstream os;
        os << "dimension mismatch in " << who << ": expected " << rows << "x" << cols << ", got "
           << value.rows() << "x" << value.cols();
        throw StructuralError(os.str());
    }
}

}  // namespace

ClassKFunction ClassKFunction::linear(double slope) {
    return {[slope](double s) { return slope * s; }, [slope](double) { return slope; },
            "linear(" + fmt_num(slope) + ")"};
}

ScalarMap ScalarMap::linear(double slope) {
    return {[slope](double s) { return slope * s; }, [slope](double) { return slope; },
            [](double) { return 0.0; }, "linear(" + fmt_num(slope) + ")"};
}

ScalarMap ScalarMap::quadratic(double c1, double c2) {
    return {[c1, c2](double s) { return c1 * s + c2 * s * s; },
            [c1, c2](double s) { return c1 + 2.0 * c2 * s; }, [c2](double) { return 2.0 * c2; },
            "quadratic(" + fmt_num(c1) + "," + fmt_num(c2) + ")"};
}

StateFunction StateFunction::constant(int n, double c) {
    return {[c](const Vector&) { return c; }, [n](const Vector&) { return Vector::Zero(n).eval(); },
            [n](const Vector&) { return Matrix::Zero(n, n).eval(); }, "constant(" + fmt_num(c) + ")"};
}

StateFunction StateFunction::shifted_quadratic(const Vector& center, double offset) {
    const auto n = center.size();
    return {[center, offset](const Vector& x) { return (x - center).squaredNorm() + offset; },
            [center](const Vector& x) { return (2.0 * (x - center)).eval(); },
            [n](const Vector&) { return (2.0 * Matrix::Identity(n, n)).eval(); },
            "shifted_quadratic(offset=" + fmt_num(offset) + ")"};
}

Vector SystemModel::drift(const Vector& x) const {
    if (!k) {
        return f(x);
    }
    return f(x) + g(x).lazyProduct((*k)(x));
}

Matrix SystemModel::drift_jacobian(const Vector& x) const {
    Matrix j = jf(x);
    if (!k) {
        return j;
    }
    if (!jk) {
        throw StructuralError("nominal controller k has no Jacobian evaluator jk");
    }
    const Vector k_at = (*k)(x);
    j += g(x) * (*jk)(x);
    if (!constant_input_matrix) {
        j += fd_matrix([this, &k_at](const Vector& y) { return (g(y) * k_at).eval(); }, x, 1e-6);
    }
    return j;
}

SystemModel SystemModel::single_integrator_2d() {
    return linear(Matrix::Zero(2, 2), Matrix::Identity(2, 2));
}

SystemModel SystemModel::linear(const Matrix& a, const Matrix& b) {
    if (a.rows() != a.cols() || b.rows() != a.rows() || b.cols() < 1) {
        throw InvalidParameter("linear system needs square A (n x n) and B (n x m)");
    }
    SystemModel model;
    model.n = static_cast<int>(a.rows());
    model.m = static_cast<int>(b.cols());
    model.f = [a](const Vector& x) { return a.lazyProduct(x).eval(); };
    model.g = [b](const Vector&) { return b; };
    model.jf = [a](const Vector&) { return a; };
    return model;
}

SystemModel SystemModel::with_nominal_gain(const Matrix& gain) const {
    if (gain.rows() != m || gain.cols() != n) {
        throw InvalidParameter("nominal gain K must be m x n");
    }
    SystemModel out = *this;
    out.k = [gain](const Vector& x) { return gain.lazyProduct(x).eval(); };
    out.jk = [gain](const Vector&) { return gain; };
    return out;
}

SafeSetGeometry SafeSetGeometry::ball(const Vector& center, double radius) {
    if (!(radius > 0.0)) {
        throw InvalidParameter("ball radius must be positive, got " + fmt_num(radius));
    }
    if (center.size() != 2) {
        throw InvalidParameter("ball geometry needs a 2-vector center");
    }
    SafeSetGeometry geo;
    geo.kind_ = Kind::ball_complement_2d;
    geo.center_ = center;
    geo.radius_ = radius;
    return geo;
}

SafeSetGeometry SafeSetGeometry::implicit(ScalarField h, VectorField grad_h) {
    SafeSetGeometry geo;
    geo.kind_ = Kind::implicit;
    geo.h_ = std::move(h);
    geo.grad_h_ = std::move(grad_h);
    return geo;
}

Vector SafeSetGeometry::project(const Vector& x) const {
    if (kind_ == Kind::ball_complement_2d) {
        const Vector d = x - center_;
        const double norm = d.norm();
        if (norm == 0.0) {
            return boundary_point(0.0);
        }
        return center_ + radius_ * d / norm;
    }
    // x <- x - h grad/|grad|^2, halving the step while |h| does not decrease.
    Vector y = x;
    double hy = h_(y);
    for (int it = 0; it < 50 && std::abs(hy) >= 1e-12; ++it) {
        const Vector grad = grad_h_(y);
        const double gg = grad.squaredNorm();
        if (gg < 1e-300) {
            throw NumericError("boundary projection hit a critical point of h");
        }
        const Vector step = hy * grad / gg;
        double t = 1.0;
        Vector trial = y - step;
        double ht = h_(trial);
        while (std::abs(ht) >= std::abs(hy) && t > 1e-6) {
            t *= 0.5;
            trial = y - t * step;
            ht = h_(trial);
        }
        y = trial;
        hy = ht;
    }
    if (std::abs(hy) >= 1e-10) {
        throw NumericError("boundary projection did not converge (|h| = " + fmt_num(std::abs(hy)) + ")");
    }
    return y;
}

Vector SafeSetGeometry::boundary_point(double theta) const {
    if (kind_ != Kind::ball_complement_2d) {
        throw PreconditionError("angle parameterization needs ball geometry");
    }
    Vector p(2);
    p << center_(0) + radius_ * std::cos(theta), center_(1) + radius_ * std::sin(theta);
    return p;
}

std::vector<Vector> SafeSetGeometry::boundary_samples(std::size_t count) const {
    if (kind_ != Kind::ball_complement_2d) {
        throw PreconditionError("implicit geometries need user-supplied boundary samples");
    }
    std::vector<Vector> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(boundary_point(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count)));
    }
    return out;
}

LyapunovPair LyapunovPair::quadratic(const Matrix& q, const Vector& xstar, ClassKFunction beta) {
    if (q.rows() != q.cols() || q.rows() != xstar.size()) {
        throw InvalidParameter("quadratic CLF needs Q (n x n) matching xstar");
    }
    const Matrix qs = 0.5 * (q + q.transpose());
    LyapunovPair pair;
    pair.v = [qs, xstar](const Vector& x) {
        const Vector d = x - xstar;
        return 0.5 * d.dot(qs.lazyProduct(d));
    };
    pair.grad_v = [qs, xstar](const Vector& x) { return qs.lazyProduct(x - xstar).eval(); };
    pair.hess_v = [qs](const Vector&) { return qs; };
    pair.beta = std::move(beta);
    pair.xstar = xstar;
    pair.label = "quadratic";
    return pair;
}

BarrierPair make_ball_cbf(const Vector& center, double radius, BallForm form, double alpha_slope) {
    if (!(radius > 0.0)) {
        throw InvalidParameter("ball CBF radius must be positive, got " + fmt_num(radius));
    }
    if (!(alpha_slope > 0.0)) {
        throw InvalidParameter("alpha slope must be positive, got " + fmt_num(alpha_slope));
    }
    if (center.size() != 2) {
        throw InvalidParameter("ball CBF center must be a 2-vector");
    }
    const double scale = form == BallForm::full ? 1.0 : 0.5;
    const double r2 = radius * radius;
    BarrierPair pair;
    pair.h = [center, scale, r2](const Vector& x) { return scale * ((x - center).squaredNorm() - r2); };
    pair.grad_h = [center, scale](const Vector& x) { return (2.0 * scale * (x - center)).eval(); };
    pair.hess_h = [scale](const Vector& x) {
        return (2.0 * scale * Matrix::Identity(x.size(), x.size())).eval();
    };
    pair.alpha = ClassKFunction::linear(alpha_slope);
    pair.geometry = SafeSetGeometry::ball(center, radius);
    pair.label = std::string(form == BallForm::full ? "ball-full" : "ball-half");
    return pair;
}

BarrierPair transform_cbf(const BarrierPair& base, const TransformStep& step,
                          std::span<const Vector> boundary_samples) {
    if (step.a < 0.0 || step.b < 0.0 || !(step.a + step.b > 0.0)) {
        throw InvalidParameter("transform needs a >= 0, b >= 0 and a + b > 0");
    }
    if (step.b > 0.0 && !step.eta) {
        throw InvalidParameter("transform with b > 0 needs an eta function");
    }
    if (std::abs(step.gamma.value(0.0)) > 1e-12) {
        throw InvalidParameter("transform gamma must vanish at 0");
    }

    std::vector<Vector> owned;
    if (boundary_samples.empty() && base.geometry &&
        base.geometry->kind() == SafeSetGeometry::Kind::ball_complement_2d) {
        owned = base.geometry->boundary_samples(64);
        boundary_samples = owned;
    }
    if (step.b > 0.0) {
        for (const Vector& x : boundary_samples) {
            const double eta = step.eta->value(x);
            if (!(eta > 0.0)) {
                throw InvalidParameter("transform eta must be positive on the boundary, got " + fmt_num(eta));
            }
        }
    }

    const double a = step.a;
    const double b = step.b;
    const ScalarMap gamma = step.gamma;
    const StateFunction eta = step.eta.value_or(StateFunction::constant(0, 0.0));
    const bool use_eta = b > 0.0;

    BarrierPair out;
    out.h = [base, a, b, gamma, eta, use_eta](const Vector& x) {
        const double h = base.h(x);
        double value = a > 0.0 ? a * gamma.value(h) : 0.0;
        if (use_eta) {
            value += b * eta.value(x) * h;
        }
        return value;
    };
    out.grad_h = [base, a, b, gamma, eta, use_eta](const Vector& x) {
        const double h = base.h(x);
        const Vector gh = base.grad_h(x);
        Vector grad = Vector::Zero(x.size());
        if (a > 0.0) {
            grad += a * gamma.d1(h) * gh;
        }
        if (use_eta) {
            grad += b * (h * eta.gradient(x) + eta.value(x) * gh);
        }
        return grad;
    };
    out.hess_h = [base, a, b, gamma, eta, use_eta](const Vector& x) {
        const double h = base.h(x);
        const Vector gh = base.grad_h(x);
        const Matrix hh = base.hess_h(x);
        Matrix hess = Matrix::Zero(x.size(), x.size());
        if (a > 0.0) {
            hess += a * (gamma.d2(h) * gh * gh.transpose() + gamma.d1(h) * hh);
        }
        if (use_eta) {
            const Vector ge = eta.gradient(x);
            hess += b * (h * eta.hessian(x) + ge * gh.transpose() + gh * ge.transpose() + eta.value(x) * hh);
        }
        return hess;
    };
    out.alpha = step.alpha;
    out.geometry = base.geometry;
    if (out.geometry && out.geometry->kind() == SafeSetGeometry::Kind::implicit) {
        out.geometry = SafeSetGeometry::implicit(out.h, out.grad_h);
    }
    std::ostringstream label;
    label << "transform(" << base.label << "; a=" << a << ", b=" << b;
    if (a > 0.0) {
        label << ", gamma=" << gamma.description;
    }
    if (use_eta) {
        label << ", eta=" << eta.description;
    }
    label << ")";
    out.label = label.str();
    return out;
}

std::vector<std::string> ValidationReport::failures() const {
    std::vector<std::string> out;
    for (const auto& c : checks) {
        if (!c.passed) {
            out.push_back(c.subject + "." + c.name);
        }
    }
    return out;
}

namespace {

class ReportBuilder {
public:
    void add(const std::string& subject, const std::string& name, double residual, double threshold,
             bool passed) {
        report_.checks.push_back({subject, name, residual, threshold, passed});
        report_.passed = report_.passed && passed;
    }
    // Passes iff residual < threshold.
    void below(const std::string& subject, const std::string& name, double residual,
               double threshold = kValidationTolerance) {
        add(subject, name, residual, threshold, residual < threshold);
    }
    ValidationReport take() { return std::move(report_); }

private:
    ValidationReport report_;
};

std::vector<double> class_k_grid() {
    std::vector<double> grid(101);
    for (int i = 0; i <= 100; ++i) {
        grid[static_cast<std::size_t>(i)] = -10.0 + 0.2 * i;
    }
    return grid;
}

void check_class_k(ReportBuilder& out, const std::string& subject, const std::string& name,
                   const ClassKFunction& fn) {
    out.add(subject, name + "(0)", std::abs(fn(0.0)), 0.0, fn(0.0) == 0.0);
    const auto grid = class_k_grid();
    double worst = 0.0;  // largest non-increase, 0 when strictly increasing
    bool strictly = true;
    double deriv_residual = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (i > 0) {
            const double diff = fn(grid[i]) - fn(grid[i - 1]);
            if (!(diff > 0.0)) {
                strictly = false;
                worst = std::max(worst, -diff);
            }
        }
        const double s = grid[i];
        const double step = 1e-5 * (1.0 + std::abs(s));
        const double fd = (fn(s + step) - fn(s - step)) / (2.0 * step);
        deriv_residual = std::max(deriv_residual, std::abs(fd - fn.derivative(s)));
    }
    out.add(subject, name + "_increasing", worst, 0.0, strictly);
    out.below(subject, name + "_prime", deriv_residual);
}

}  // namespace

ValidationReport validate_model(const SystemModel& model, std::span<const BarrierPair> barriers,
                                std::span<const LyapunovPair> lyapunovs,
                                std::span<const Vector> samples) {
    if (samples.empty()) {
        throw PreconditionError("validate_model needs at least one sample state");
    }
    const int n = model.n;
    const int m = model.m;
    for (const Vector& x : samples) {
        if (x.size() != n) {
            throw StructuralError("sample state has dimension " + std::to_string(x.size()) + ", model n = " +
                                  std::to_string(n));
        }
    }

    ReportBuilder out;

    // System evaluators.
    double jf_res = 0.0;
    double jk_res = 0.0;
    for (const Vector& x : samples) {
        require_shape("f", model.f(x), n, 1);
        require_shape("g", model.g(x), n, m);
        const Matrix jf = model.jf(x);
        require_shape("jf", jf, n, n);
        jf_res = std::max(jf_res, max_abs(jf - fd_matrix(model.f, x)));
        if (model.k) {
            require_shape("k", (*model.k)(x), m, 1);
            if (!model.jk) {
                throw StructuralError("nominal controller k has no Jacobian evaluator jk");
            }
            const Matrix jk = (*model.jk)(x);
            require_shape("jk", jk, m, n);
            jk_res = std::max(jk_res, max_abs(jk - fd_matrix(*model.k, x)));
        }
    }
    out.below("system", "jf", jf_res);
    if (model.k) {
        out.below("system", "jk", jk_res);
    }

    for (std::size_t bi = 0; bi < barriers.size(); ++bi) {
        const BarrierPair& pair = barriers[bi];
        const std::string subject = "cbf[" + std::to_string(bi) + "]";
        double grad_res = 0.0;
        double hess_res = 0.0;
        double asym = 0.0;
        for (const Vector& x : samples) {
            const Vector grad = pair.grad_h(x);
            require_shape(subject + ".grad_h", grad, n, 1);
            const Matrix hess = pair.hess_h(x);
            require_shape(subject + ".hess_h", hess, n, n);
            grad_res = std::max(grad_res, max_abs(grad - fd_gradient(pair.h, x)));
            hess_res = std::max(hess_res, max_abs(hess - fd_matrix(pair.grad_h, x)));
            asym = std::max(asym, max_abs(hess - hess.transpose()));
        }
        out.below(subject, "grad_h", grad_res);
        out.below(subject, "hess_h", hess_res);
        out.below(subject, "hess_h_symmetric", asym, 1e-12);
        check_class_k(out, subject, "alpha", pair.alpha);

        double min_grad = std::numeric_limits<double>::infinity();
        bool any_boundary = false;
        for (const Vector& x : samples) {
            Vector y = x;
            if (pair.geometry) {
                y = pair.geometry->project(x);
            } else if (std::abs(pair.h(x)) > 1e-6) {
                continue;
            }
            any_boundary = true;
            min_grad = std::min(min_grad, pair.grad_h(y).norm());
        }
        if (any_boundary) {
            out.add(subject, "grad_h_nonzero_on_boundary", min_grad, 1e-10, min_grad > 1e-10);
        }
    }

    for (std::size_t li = 0; li < lyapunovs.size(); ++li) {
        const LyapunovPair& pair = lyapunovs[li];
        const std::string subject = "clf[" + std::to_string(li) + "]";
        if (pair.xstar.size() != n) {
            throw StructuralError(subject + ".xstar has wrong dimension");
        }
        double grad_res = 0.0;
        double hess_res = 0.0;
        double worst_positive = 0.0;
        bool positive = true;
        for (const Vector& x : samples) {
            const Vector grad = pair.grad_v(x);
            require_shape(subject + ".grad_v", grad, n, 1);
            const Matrix hess = pair.hess_v(x);
            require_shape(subject + ".hess_v", hess, n, n);
            grad_res = std::max(grad_res, max_abs(grad - fd_gradient(pair.v, x)));
            hess_res = std::max(hess_res, max_abs(hess - fd_matrix(pair.grad_v, x)));
            if ((x - pair.xstar).norm() > 1e-9) {
                const double v = pair.v(x);
                if (!(v > 0.0)) {
                    positive = false;
                    worst_positive = std::max(worst_positive, -v);
                }
            }
        }
        out.below(subject, "grad_v", grad_res);
        out.below(subject, "hess_v", hess_res);
        const double v_star = std::abs(pair.v(pair.xstar));
        out.add(subject, "v(xstar)", v_star, 1e-12, v_star < 1e-12);
        out.add(subject, "v_positive", worst_positive, 0.0, positive);
        check_class_k(out, subject, "beta", pair.beta);
    }
    return out.take();
}

}  // namespace barrier_lab
