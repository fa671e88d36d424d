#include "barrier_lab/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace barrier_lab {

namespace {

// Relative slack accepted when certifying a candidate.
constexpr double kCertifyTol = 1e-12;

double sense(RowKind kind) { return kind == RowKind::cbf ? -1.0 : 1.0; }

std::size_t variable_count(const QpInstance& in) {
    return static_cast<std::size_t>(in.weight.rows()) + (in.penalty ? 1 : 0);
}

// Signed row normal over z = [u; delta].
Vector signed_normal(const QpInstance& in, std::size_t row) {
    const auto m = in.weight.rows();
    Vector a(static_cast<Eigen::Index>(variable_count(in)));
    a.head(m) = in.normals.row(static_cast<Eigen::Index>(row)).transpose();
    if (in.penalty) {
        a(m) = in.relax(static_cast<Eigen::Index>(row));
    }
    return sense(in.kinds[row]) * a;
}

double row_tolerance(const QpInstance& in, std::size_t row, const Vector& z) {
    const auto r = static_cast<Eigen::Index>(row);
    return kCertifyTol * (1.0 + std::abs(in.offsets(r)) + in.normals.row(r).norm() * z.norm());
}

struct Candidate {
    Vector z;
    Vector lambda;
};

// Equality-constrained solve on `active`; nullopt if the reduced system is singular.
std::optional<Candidate> solve_equality(const QpInstance& in, const Matrix& hinv,
                                        const std::vector<std::size_t>& active) {
    const auto nz = static_cast<Eigen::Index>(variable_count(in));
    Candidate c;
    if (active.empty()) {
        c.z = Vector::Zero(nz);
        c.lambda = Vector(0);
        return c;
    }
    const auto k = static_cast<Eigen::Index>(active.size());
    Matrix normals(nz, k);
    Vector rhs(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        const std::size_t row = active[static_cast<std::size_t>(j)];
        normals.col(j) = signed_normal(in, row);
        rhs(j) = sense(in.kinds[row]) * in.offsets(static_cast<Eigen::Index>(row));
    }
    const Matrix schur = normals.transpose() * hinv * normals;
    Eigen::FullPivLU<Matrix> lu(schur);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) {
        return std::nullopt;
    }
    c.lambda = lu.solve(rhs);
    c.z = -hinv * normals * c.lambda;
    return c;
}

KktPoint to_kkt(const QpInstance& in, const Vector& z, const std::vector<std::size_t>& active,
                const Vector& lambda) {
    const auto m = in.weight.rows();
    KktPoint out;
    out.u = z.head(m);
    out.delta = in.penalty ? z(m) : 0.0;
    out.multipliers.assign(in.kinds.size(), 0.0);
    for (std::size_t j = 0; j < active.size(); ++j) {
        out.multipliers[active[j]] = std::max(0.0, lambda(static_cast<Eigen::Index>(j)));
        out.active_set.push_back(static_cast<int>(active[j]));
    }
    out.stationarity_residual = certify(in, out).stationarity;
    return out;
}

// Block diagonal (G, p).
Matrix objective_hessian_inverse(const QpInstance& in) {
    const Matrix ginv = checked_weight_inverse(in.weight);
    const auto m = in.weight.rows();
    const auto nz = static_cast<Eigen::Index>(variable_count(in));
    Matrix hinv = Matrix::Zero(nz, nz);
    hinv.topLeftCorner(m, m) = ginv;
    if (in.penalty) {
        hinv(m, m) = 1.0 / *in.penalty;
    }
    return hinv;
}

struct DNorms {
    Matrix ginv;
    Vector gt_grad_h;
    Vector ginv_gt_grad_h;
    double hh = 0.0;  // |g^T grad h|^2_{G^{-1}}
};

DNorms barrier_terms(const SystemModel& model, const MatrixField& weight, const Vector& grad_h,
                     const Vector& x) {
    DNorms d;
    d.ginv = checked_weight_inverse(weight(x));
    d.gt_grad_h = model.g(x).transpose().lazyProduct(grad_h);
    d.ginv_gt_grad_h = d.ginv.lazyProduct(d.gt_grad_h);
    d.hh = d.gt_grad_h.dot(d.ginv_gt_grad_h);
    return d;
}

void require_strict_feasibility(double gain_sq, const char* who) {
    if (!(std::sqrt(gain_sq) > 1e-12)) {
        throw StrictFeasibilityError(std::string(who) +
                                     ": CBF row must be enforced but |g^T grad h|_{G^-1} vanishes");
    }
}

bool feasible(double violation, double offset, double scale) {
    return violation <= kCertifyTol * (1.0 + std::abs(offset) + scale);
}

}  // namespace

unsigned KktPoint::active_code() const {
    unsigned code = 0;
    for (int i : active_set) {
        code |= 1u << static_cast<unsigned>(i);
    }
    return code;
}

bool KktCertificate::passed(double tol) const {
    return stationarity < tol && primal_violation < tol && min_multiplier >= -1e-12 &&
           inactive_multiplier < 1e-10 && complementarity < tol;
}

QpInstance instantiate(const QpProblem& problem, const Vector& x) {
    if (problem.rows.size() > kMaxQpRows) {
        throw InvalidParameter("small QP supports at most 12 rows");
    }
    if (problem.penalty && !(*problem.penalty > 0.0)) {
        throw InvalidParameter("relaxation penalty p must be positive");
    }
    QpInstance in;
    in.weight = problem.weight(x);
    in.penalty = problem.penalty;
    const auto m = in.weight.rows();
    const auto rows = static_cast<Eigen::Index>(problem.rows.size());
    in.normals.resize(rows, m);
    in.relax.resize(rows);
    in.offsets.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const ConstraintRow& row = problem.rows[static_cast<std::size_t>(i)];
        const Vector a = row.normal(x);
        if (a.size() != m) {
            throw StructuralError("row '" + row.label + "' normal has wrong length");
        }
        in.kinds.push_back(row.kind);
        in.normals.row(i) = a.transpose();
        in.relax(i) = row.relax_coeff;
        in.offsets(i) = row.offset(x);
    }
    return in;
}

double row_violation(const QpInstance& in, std::size_t row, const Vector& u, double delta) {
    const auto r = static_cast<Eigen::Index>(row);
    double value = in.normals.row(r).dot(u) + in.offsets(r);
    if (in.penalty) {
        value += in.relax(r) * delta;
    }
    return sense(in.kinds[row]) * value;
}

KktCertificate certify(const QpInstance& in, const KktPoint& point) {
    KktCertificate cert;
    const auto m = in.weight.rows();
    Vector z(static_cast<Eigen::Index>(variable_count(in)));
    z.head(m) = point.u;
    if (in.penalty) {
        z(m) = point.delta;
    }
    Vector grad = Vector::Zero(z.size());
    grad.head(m) = in.weight * point.u;
    if (in.penalty) {
        grad(m) = *in.penalty * point.delta;
    }
    cert.min_multiplier = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < in.kinds.size(); ++i) {
        const double lambda = point.multipliers[i];
        grad += lambda * signed_normal(in, i);
        const double v = row_violation(in, i, point.u, point.delta);
        cert.primal_violation = std::max(cert.primal_violation, v);
        cert.min_multiplier = std::min(cert.min_multiplier, lambda);
        cert.complementarity = std::max(cert.complementarity, std::abs(lambda * v));
        const bool active = std::find(point.active_set.begin(), point.active_set.end(), static_cast<int>(i)) !=
                            point.active_set.end();
        if (!active) {
            cert.inactive_multiplier = std::max(cert.inactive_multiplier, std::abs(lambda));
        }
    }
    if (in.kinds.empty()) {
        cert.min_multiplier = 0.0;
    }
    cert.stationarity = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
    return cert;
}

KktPoint solve_small_qp(const QpInstance& in) {
    const std::size_t q = in.kinds.size();
    if (q > kMaxQpRows) {
        throw InvalidParameter("small QP supports at most 12 rows");
    }
    const Matrix hinv = objective_hessian_inverse(in);

    std::vector<std::size_t> active;
    for (std::size_t card = 0; card <= q; ++card) {
        // Lexicographic k-subsets of {0..q-1}.
        active.resize(card);
        for (std::size_t j = 0; j < card; ++j) {
            active[j] = j;
        }
        while (true) {
            if (auto cand = solve_equality(in, hinv, active)) {
                const double lambda_scale = cand->lambda.size() ? cand->lambda.cwiseAbs().maxCoeff() : 0.0;
                bool ok = true;
                for (Eigen::Index j = 0; j < cand->lambda.size() && ok; ++j) {
                    ok = cand->lambda(j) >= -kCertifyTol * (1.0 + lambda_scale);
                }
                const auto m = in.weight.rows();
                const Vector u = cand->z.head(m);
                const double delta = in.penalty ? cand->z(m) : 0.0;
                for (std::size_t i = 0; i < q && ok; ++i) {
                    ok = row_violation(in, i, u, delta) <= row_tolerance(in, i, cand->z);
                }
                if (ok) {
                    return to_kkt(in, cand->z, active, cand->lambda);
                }
            }
            // Advance to the next subset of this cardinality.
            std::size_t pos = card;
            while (pos > 0 && active[pos - 1] == q - card + pos - 1) {
                --pos;
            }
            if (pos == 0) {
                break;
            }
            ++active[pos - 1];
            for (std::size_t j = pos; j < card; ++j) {
                active[j] = active[j - 1] + 1;
            }
        }
    }

    int worst = -1;
    double worst_violation = -std::numeric_limits<double>::infinity();
    const Vector u0 = Vector::Zero(in.weight.rows());
    for (std::size_t i = 0; i < q; ++i) {
        const double v = row_violation(in, i, u0, 0.0);
        if (v > worst_violation) {
            worst_violation = v;
            worst = static_cast<int>(i);
        }
    }
    std::ostringstream os;
    os << "QP infeasible: no active set yields a KKT point (most violated row " << worst << ")";
    throw InfeasibleError(os.str(), worst);
}

KktPoint solve_small_qp(const QpProblem& problem, const Vector& x) {
    return solve_small_qp(instantiate(problem, x));
}

Matrix checked_weight_inverse(const Matrix& weight) {
    if (weight.rows() != weight.cols()) {
        throw DefinitenessError("weight G must be square");
    }
    if (weight.size() && (weight - weight.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw DefinitenessError("weight G is not symmetric");
    }
    // the common G = I case skips the factorization
    if (weight.isIdentity(0.0)) {
        return weight;
    }
    Eigen::LLT<Matrix> llt(weight);
    if (llt.info() != Eigen::Success) {
        throw DefinitenessError("weight G is not positive definite (Cholesky failed)");
    }
    return llt.solve(Matrix::Identity(weight.rows(), weight.cols()));
}

MatrixField identity_weight(int m) {
    return [m](const Vector&) { return Matrix::Identity(m, m).eval(); };
}

SafetyFilterOutput safety_filter(const SystemModel& model, const BarrierPair& pair, const MatrixField& weight,
                                 const Vector& x) {
    SafetyFilterOutput out;
    const Vector grad_h = pair.grad_h(x);
    out.eta = grad_h.dot(model.drift(x)) + pair.alpha(pair.h(x));
    if (out.eta >= 0.0) {
        out.u = Vector::Zero(model.m);
        checked_weight_inverse(weight(x));
        return out;
    }
    const DNorms d = barrier_terms(model, weight, grad_h, x);
    require_strict_feasibility(d.hh, "safety filter");
    out.multiplier = -out.eta / d.hh;
    out.u = out.multiplier * d.ginv_gt_grad_h;
    out.active = true;
    return out;
}

KktPoint clf_cbf_qp(const SystemModel& model, const BarrierPair& cbf, const LyapunovPair& clf,
                    const MatrixField& weight, double p, const Vector& x) {
    if (!(p > 0.0)) {
        throw InvalidParameter("relaxation penalty p must be positive");
    }
    const Vector drift = model.drift(x);
    const Vector grad_v = clf.grad_v(x);
    const Vector grad_h = cbf.grad_h(x);
    const double fv = grad_v.dot(drift) + clf.beta(clf.v(x));
    const double fh = grad_h.dot(drift) + cbf.alpha(cbf.h(x));

    const Matrix ginv = checked_weight_inverse(weight(x));
    const Matrix g = model.g(x);
    const Vector gv = g.transpose().lazyProduct(grad_v);
    const Vector gh = g.transpose().lazyProduct(grad_h);
    const Vector ginv_gv = ginv.lazyProduct(gv);
    const Vector ginv_gh = ginv.lazyProduct(gh);
    const double vv = gv.dot(ginv_gv);  // |grad V|_D^2
    const double vh = gv.dot(ginv_gh);  // grad V^T D grad h
    const double hh = gh.dot(ginv_gh);  // |grad h|_D^2
    const double gv_norm = gv.norm();
    const double gh_norm = gh.norm();

    KktPoint out;
    out.multipliers = {0.0, 0.0};
    auto finish = [&](double l1, double l2) {
        out.u = l2 * ginv_gh - l1 * ginv_gv;
        out.delta = l1 / p;
        out.multipliers = {l1, l2};
    };

    // Empty active set. Exact sign tests here: the one-row formulas are
    // continuous across the switch, and a tolerance would flatten the field
    // into a plateau of spurious roots where F_V vanishes to high order.
    if (fv <= 0.0 && fh >= 0.0) {
        out.u = Vector::Zero(model.m);
        out.delta = 0.0;
        return out;
    }
    const double lambda_tol = kCertifyTol;
    // {clf}
    {
        const double l1 = fv / (vv + 1.0 / p);
        const Vector u = -l1 * ginv_gv;
        const double cbf_row = fh + gh.dot(u);
        if (l1 >= -lambda_tol * (1.0 + std::abs(l1)) &&
            feasible(-cbf_row, fh, gh_norm * std::hypot(u.norm(), l1 / p))) {
            finish(std::max(0.0, l1), 0.0);
            out.active_set = {0};
            return out;
        }
    }
    // {cbf}
    if (hh > 0.0) {
        const double l2 = -fh / hh;
        const Vector u = l2 * ginv_gh;
        const double clf_row = fv + gv.dot(u);
        if (l2 >= -lambda_tol * (1.0 + std::abs(l2)) && feasible(clf_row, fv, gv_norm * u.norm())) {
            require_strict_feasibility(hh, "CLF-CBF QP");
            finish(0.0, std::max(0.0, l2));
            out.active_set = {1};
            return out;
        }
    }
    // {clf, cbf}
    require_strict_feasibility(hh, "CLF-CBF QP");
    const double det = (vv + 1.0 / p) * hh - vh * vh;
    const double l1 = (fv * hh - fh * vh) / det;
    const double l2 = (fv * vh - fh * (vv + 1.0 / p)) / det;
    const double scale = 1.0 + std::max(std::abs(l1), std::abs(l2));
    if (l1 < -lambda_tol * scale || l2 < -lambda_tol * scale) {
        throw InfeasibleError("CLF-CBF QP: no active set certifies", 1);
    }
    finish(std::max(0.0, l1), std::max(0.0, l2));
    out.active_set = {0, 1};
    return out;
}

KktPoint unfiltered_control(const SystemModel& model, const LyapunovPair& clf, const MatrixField& weight,
                            double p, const Vector& x) {
    if (!(p > 0.0)) {
        throw InvalidParameter("relaxation penalty p must be positive");
    }
    const Vector grad_v = clf.grad_v(x);
    const double fv = grad_v.dot(model.drift(x)) + clf.beta(clf.v(x));
    const Matrix ginv = checked_weight_inverse(weight(x));
    const Vector gv = model.g(x).transpose().lazyProduct(grad_v);
    const Vector ginv_gv = ginv.lazyProduct(gv);
    const double vv = gv.dot(ginv_gv);
    KktPoint out;
    if (fv <= 0.0) {
        out.u = Vector::Zero(model.m);
        out.multipliers = {0.0};
        return out;
    }
    const double l1 = fv / (vv + 1.0 / p);
    out.u = -l1 * ginv_gv;
    out.delta = l1 / p;
    out.multipliers = {l1};
    out.active_set = {0};
    return out;
}

ControllerSpec ControllerSpec::with_cbf(const BarrierPair& pair) const {
    ControllerSpec out = *this;
    out.cbfs = {pair};
    return out;
}

QpProblem build_problem(const ControllerSpec& spec, bool filtered) {
    QpProblem problem;
    problem.weight = spec.weight;
    const SystemModel& model = spec.model;
    if (spec.kind == ControllerKind::clf_cbf_qp) {
        if (!spec.clf) {
            throw StructuralError("CLF-CBF controller needs a CLF");
        }
        problem.penalty = spec.p;
        const LyapunovPair clf = *spec.clf;
        ConstraintRow row;
        row.kind = RowKind::clf_relaxed;
        row.normal = [model, clf](const Vector& x) { return (model.g(x).transpose() * clf.grad_v(x)).eval(); };
        row.offset = [model, clf](const Vector& x) {
            return clf.grad_v(x).dot(model.drift(x)) + clf.beta(clf.v(x));
        };
        row.relax_coeff = -1.0;
        row.label = "clf";
        problem.rows.push_back(std::move(row));
    }
    if (filtered) {
        for (std::size_t i = 0; i < spec.cbfs.size(); ++i) {
            const BarrierPair pair = spec.cbfs[i];
            ConstraintRow row;
            row.kind = RowKind::cbf;
            row.normal = [model, pair](const Vector& x) { return (model.g(x).transpose() * pair.grad_h(x)).eval(); };
            row.offset = [model, pair](const Vector& x) {
                return pair.grad_h(x).dot(model.drift(x)) + pair.alpha(pair.h(x));
            };
            row.label = "cbf" + std::to_string(i);
            problem.rows.push_back(std::move(row));
        }
    }
    return problem;
}

KktPoint evaluate_controller(const ControllerSpec& spec, const Vector& x, bool filtered) {
    const std::size_t cbf_count = filtered ? spec.cbfs.size() : 0;
    if (spec.kind == ControllerKind::safety_filter) {
        if (cbf_count == 0) {
            checked_weight_inverse(spec.weight(x));
            KktPoint out;
            out.u = Vector::Zero(spec.model.m);
            return out;
        }
        if (cbf_count == 1) {
            const SafetyFilterOutput sf = safety_filter(spec.model, spec.cbfs.front(), spec.weight, x);
            KktPoint out;
            out.u = sf.u;
            out.multipliers = {sf.multiplier};
            if (sf.active) {
                out.active_set = {0};
            }
            return out;
        }
    } else {
        if (!spec.clf) {
            throw StructuralError("CLF-CBF controller needs a CLF");
        }
        if (cbf_count == 0) {
            return unfiltered_control(spec.model, *spec.clf, spec.weight, spec.p, x);
        }
        if (cbf_count == 1) {
            return clf_cbf_qp(spec.model, spec.cbfs.front(), *spec.clf, spec.weight, spec.p, x);
        }
    }
    return solve_small_qp(build_problem(spec, filtered), x);
}

Vector closed_loop_field(const ControllerSpec& spec, const Vector& x, bool filtered) {
    const KktPoint point = evaluate_controller(spec, x, filtered);
    return spec.model.drift(x) + spec.model.g(x).lazyProduct(point.u);
}

StrictFeasibilityReport check_strict_feasibility(const SystemModel& model, const BarrierPair& pair,
                                                 std::span<const Vector> samples) {
    if (samples.empty()) {
        throw PreconditionError("strict feasibility check needs samples");
    }
    StrictFeasibilityReport report;
    report.samples = samples.size();
    for (const Vector& x : samples) {
        const Vector grad_h = pair.grad_h(x);
        const double condition = grad_h.dot(model.drift(x)) + pair.alpha(pair.h(x));
        if (std::abs(condition) >= 1e-8) {
            continue;
        }
        ++report.in_condition_set;
        const double gain = (model.g(x).transpose() * grad_h).norm();
        if (!(gain > 1e-8)) {
            report.violations.push_back({x, condition, gain});
        }
    }
    return report;
}

}  // namespace barrier_lab
