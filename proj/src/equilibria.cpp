#include "barrier_lab/equilibria.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace barrier_lab {

std::string to_string(EquilibriumKind kind) {
    return kind == EquilibriumKind::interior ? "interior" : "boundary";
}

std::string to_string(Desirability d) {
    switch (d) {
        case Desirability::desirable: return "desirable";
        case Desirability::undesirable: return "undesirable";
        case Desirability::inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

std::string to_string(Stability s) {
    switch (s) {
        case Stability::asymptotically_stable: return "asymptotically-stable";
        case Stability::unstable: return "unstable";
        case Stability::saddle: return "saddle";
        case Stability::inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

std::string to_string(ControllerKind k) {
    return k == ControllerKind::safety_filter ? "safety-filter" : "clf-cbf-qp";
}

namespace {

std::string describe(const Vector& x) {
    std::ostringstream os;
    os.precision(10);
    os << "(";
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        os << (i ? ", " : "") << x(i);
    }
    os << ")";
    return os.str();
}

bool lex_less(const Vector& a, const Vector& b) {
    for (Eigen::Index i = 0; i < std::min(a.size(), b.size()); ++i) {
        if (a(i) != b(i)) {
            return a(i) < b(i);
        }
    }
    return a.size() < b.size();
}

// Residual of the boundary system [field; h].
Vector boundary_system(const ControllerSpec& spec, const BarrierPair& pair, const Vector& x) {
    const Vector field = closed_loop_field(spec, x);
    Vector out(field.size() + 1);
    out.head(field.size()) = field;
    out(field.size()) = pair.h(x);
    return out;
}

struct PolishResult {
    Vector x;
    double residual = 0.0;
    bool converged = false;
    std::string failure;
};

// Damped Gauss-Newton on [field; h] = 0, field Jacobian by central differences.
PolishResult polish_boundary(const ControllerSpec& spec, const BarrierPair& pair, Vector x,
                             const BoundarySearchOptions& options) {
    PolishResult out;
    try {
        Vector r = boundary_system(spec, pair, x);
        double norm = r.norm();
        for (int it = 0; it < options.max_iterations && norm >= options.polish_tolerance; ++it) {
            const auto n = x.size();
            Matrix jac(n + 1, n);
            jac.topRows(n) = fd_matrix([&](const Vector& y) { return closed_loop_field(spec, y); }, x, 1e-7);
            jac.row(n) = pair.grad_h(x).transpose();
            const Vector step = jac.colPivHouseholderQr().solve(-r);
            double t = 1.0;
            Vector trial = x + step;
            Vector rt = boundary_system(spec, pair, trial);
            while (!(rt.norm() < norm) && t > 1e-4) {
                t *= 0.5;
                trial = x + t * step;
                rt = boundary_system(spec, pair, trial);
            }
            if (!(rt.norm() < norm)) {
                break;
            }
            x = trial;
            r = rt;
            norm = r.norm();
        }
        out.x = x;
        out.residual = norm;
        out.converged = norm < options.polish_tolerance;
        if (!out.converged) {
            out.failure = "Gauss-Newton did not reach residual " + std::to_string(options.polish_tolerance) +
                          " (got " + std::to_string(norm) + ")";
        }
    } catch (const Error& e) {
        out.x = x;
        out.failure = e.what();
    }
    return out;
}

void dedup_push(std::vector<EquilibriumReport>& list, EquilibriumReport report, double radius) {
    for (const auto& existing : list) {
        if ((existing.x_star - report.x_star).norm() < radius) {
            return;
        }
    }
    list.push_back(std::move(report));
}

double cbf_row_value(const ControllerSpec& spec, const BarrierPair& pair, const Vector& x, const Vector& u) {
    return pair.grad_h(x).dot(spec.model.drift(x) + spec.model.g(x) * u) + pair.alpha(pair.h(x));
}

}  // namespace

Matrix input_metric(const SystemModel& model, const MatrixField& weight, const Vector& x) {
    const Matrix g = model.g(x);
    return g * checked_weight_inverse(weight(x)) * g.transpose();
}

BoundaryMultipliers multipliers_on_boundary(const SystemModel& model, const BarrierPair& cbf,
                                            const LyapunovPair& clf, const MatrixField& weight, double p,
                                            const Vector& x) {
    if (!(p > 0.0)) {
        throw InvalidParameter("relaxation penalty p must be positive");
    }
    const double h = cbf.h(x);
    if (!(std::abs(h) < 1e-9)) {
        throw NotOnBoundaryError("multipliers_on_boundary: |h(x)| = " + std::to_string(std::abs(h)) +
                                 " is not below 1e-9 at " + describe(x));
    }
    const Vector grad_h = cbf.grad_h(x);
    if (!((model.g(x).transpose() * grad_h).norm() > 1e-10)) {
        throw StrictFeasibilityError("multipliers_on_boundary: g^T grad h vanishes at " + describe(x));
    }
    const Matrix d = input_metric(model, weight, x);
    const Vector grad_v = clf.grad_v(x);
    const Vector drift = model.drift(x);
    const double fv = grad_v.dot(drift) + clf.beta(clf.v(x));
    const double fh = grad_h.dot(drift) + cbf.alpha(h);
    const double vv = grad_v.dot(d * grad_v);
    const double vh = grad_v.dot(d * grad_h);
    const double hh = grad_h.dot(d * grad_h);

    BoundaryMultipliers out;
    out.delta << vv + 1.0 / p, -vh, -vh, hh;
    out.det = (1.0 / p + vv) * hh - vh * vh;
    out.lambda1 = (fv * hh - fh * vh) / out.det;
    out.lambda2 = (fv * vh - fh * (vv + 1.0 / p)) / out.det;
    return out;
}

double collinearity_factor(const SystemModel& model, const BarrierPair& cbf, const MatrixField& weight,
                           const Vector& x) {
    const Vector d_grad = input_metric(model, weight, x) * cbf.grad_h(x);
    const double nn = d_grad.squaredNorm();
    if (!(nn > 0.0)) {
        throw StrictFeasibilityError("collinearity factor undefined: D grad h vanishes at " + describe(x));
    }
    return d_grad.dot(model.drift(x)) / nn;
}

Desirability classify_desirability(const EquilibriumReport& report, const ControllerSpec& spec) {
    if (report.kind == EquilibriumKind::interior) {
        return Desirability::desirable;
    }
    if (report.controller == ControllerKind::clf_cbf_qp) {
        if (report.lambda1 && report.lambda2 && *report.lambda1 > 1e-8 && *report.lambda2 > 1e-8) {
            return Desirability::undesirable;
        }
    } else if (report.delta_sf && *report.delta_sf < -1e-8) {
        return Desirability::undesirable;
    }
    try {
        if (closed_loop_field(spec, report.x_star, false).norm() < 1e-8) {
            return Desirability::desirable;
        }
    } catch (const Error&) {
    }
    return Desirability::inconclusive;
}

EquilibriumSearch find_boundary_equilibria(const ControllerSpec& spec, std::size_t cbf_index,
                                           const BoundarySearchOptions& options) {
    if (cbf_index >= spec.cbfs.size()) {
        throw InvalidParameter("cbf index out of range");
    }
    const BarrierPair& pair = spec.cbfs[cbf_index];
    EquilibriumSearch search;

    std::vector<Vector> candidates;
    const bool ball = pair.geometry && pair.geometry->kind() == SafeSetGeometry::Kind::ball_complement_2d;
    if (ball) {
        const SafeSetGeometry& geo = *pair.geometry;
        const std::size_t count = options.sweep;
        std::vector<double> norm(count, std::numeric_limits<double>::infinity());
        std::vector<double> tangential(count, 0.0);
        std::vector<double> normal(count, std::numeric_limits<double>::infinity());
        std::vector<double> theta(count);
        parallel_for(count, [&](std::size_t i) {
            theta[i] = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count);
            const Vector x = geo.boundary_point(theta[i]);
            try {
                const Vector field = closed_loop_field(spec, x);
                Vector tangent(2);
                tangent << -std::sin(theta[i]), std::cos(theta[i]);
                norm[i] = field.norm();
                tangential[i] = field.dot(tangent);
                normal[i] = std::abs(field.dot(pair.grad_h(x).normalized()));
            } catch (const Error&) {
            }
        });
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t prev = (i + count - 1) % count;
            const std::size_t next = (i + 1) % count;
            if (norm[i] < options.detect_threshold && norm[i] <= norm[prev] && norm[i] <= norm[next]) {
                candidates.push_back(geo.boundary_point(theta[i]));
            }
            // A tangential sign change where the field is tangent to the circle
            // brackets an equilibrium even when no sample lands within the threshold.
            const double tol_i = 1e-6 * (1.0 + norm[i]);
            const double tol_n = 1e-6 * (1.0 + norm[next]);
            if (normal[i] < tol_i && normal[next] < tol_n && tangential[i] * tangential[next] <= 0.0) {
                const double a = tangential[i];
                const double b = tangential[next];
                const double frac = (a == b) ? 0.5 : a / (a - b);
                const double t_next = next == 0 ? 2.0 * std::numbers::pi : theta[next];
                candidates.push_back(geo.boundary_point(theta[i] + frac * (t_next - theta[i])));
            }
        }
    } else {
        if (options.seeds.empty()) {
            throw PreconditionError("boundary search on implicit geometry needs user seeds");
        }
        for (const Vector& seed : options.seeds) {
            try {
                candidates.push_back(pair.geometry ? pair.geometry->project(seed) : seed);
            } catch (const Error& e) {
                search.warnings.push_back("seed " + describe(seed) + " dropped: " + e.what());
            }
        }
    }

    std::vector<PolishResult> polished(candidates.size());
    parallel_for(candidates.size(),
                 [&](std::size_t i) { polished[i] = polish_boundary(spec, pair, candidates[i], options); });

    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const PolishResult& res = polished[i];
        if (!res.converged) {
            search.warnings.push_back("candidate " + describe(candidates[i]) + " dropped: " + res.failure);
            continue;
        }
        EquilibriumReport report;
        report.x_star = res.x;
        report.kind = EquilibriumKind::boundary;
        report.controller = spec.kind;
        report.cbf_index = static_cast<int>(cbf_index);
        report.h_value = pair.h(res.x);
        try {
            const KktPoint point = evaluate_controller(spec, res.x);
            report.residual = (spec.model.drift(res.x) + spec.model.g(res.x) * point.u).norm();
            bool others_slack = true;
            for (std::size_t j = 0; j < spec.cbfs.size(); ++j) {
                if (j != cbf_index && !(cbf_row_value(spec, spec.cbfs[j], res.x, point.u) > 1e-6)) {
                    others_slack = false;
                }
            }
            if (!others_slack) {
                search.warnings.push_back("candidate " + describe(res.x) +
                                          " dropped: another CBF row is not slack there");
                continue;
            }
            if (spec.kind == ControllerKind::clf_cbf_qp) {
                const BoundaryMultipliers mult =
                    multipliers_on_boundary(spec.model, pair, *spec.clf, spec.weight, spec.p, res.x);
                report.lambda1 = mult.lambda1;
                report.lambda2 = mult.lambda2;
            } else {
                report.delta_sf = collinearity_factor(spec.model, pair, spec.weight, res.x);
            }
        } catch (const StrictFeasibilityError& e) {
            search.errors.push_back("candidate " + describe(res.x) + ": " + e.what());
            continue;
        } catch (const Error& e) {
            search.warnings.push_back("candidate " + describe(res.x) + " dropped: " + e.what());
            continue;
        }
        report.desirability = classify_desirability(report, spec);
        dedup_push(search.equilibria, std::move(report), options.dedup_radius);
    }
    canonicalize(search.equilibria);
    return search;
}

EquilibriumSearch find_interior_equilibria(const ControllerSpec& spec, const InteriorSearchOptions& options) {
    const auto n = static_cast<Eigen::Index>(spec.model.n);
    if (options.lower.size() != n || options.upper.size() != n ||
        options.grid.size() != static_cast<std::size_t>(n)) {
        throw InvalidParameter("interior search box and grid must match the state dimension");
    }
    std::size_t total = 1;
    for (int c : options.grid) {
        if (c < 1) {
            throw InvalidParameter("interior seed grid must be nonempty");
        }
        total *= static_cast<std::size_t>(c);
    }

    auto min_h = [&](const Vector& x) {
        double h = std::numeric_limits<double>::infinity();
        for (const auto& pair : spec.cbfs) {
            h = std::min(h, pair.h(x));
        }
        return h;
    };
    auto field = [&](const Vector& x) { return closed_loop_field(spec, x); };

    std::vector<std::optional<Vector>> roots(total);
    parallel_for(total, [&](std::size_t idx) {
        Vector x(n);
        std::size_t rem = idx;
        for (Eigen::Index d = 0; d < n; ++d) {
            const int c = options.grid[static_cast<std::size_t>(d)];
            const std::size_t k = rem % static_cast<std::size_t>(c);
            rem /= static_cast<std::size_t>(c);
            const double t = c == 1 ? 0.5 : static_cast<double>(k) / static_cast<double>(c - 1);
            x(d) = options.lower(d) + t * (options.upper(d) - options.lower(d));
        }
        if (!(min_h(x) > 0.0)) {
            return;
        }
        try {
            Vector r = field(x);
            for (int it = 0; it < options.max_iterations && r.norm() > 0.0; ++it) {
                // Step scaled with |x| so fields vanishing to high order at a root
                // keep an accurate difference quotient.
                const double scale = std::max(x.norm(), 1e-12);
                Matrix jac(n, n);
                Vector probe = x;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double s = 1e-7 * scale;
                    probe(i) = x(i) + s;
                    const Vector up = field(probe);
                    probe(i) = x(i) - s;
                    const Vector down = field(probe);
                    probe(i) = x(i);
                    jac.col(i) = (up - down) / (2.0 * s);
                }
                const Vector step = jac.colPivHouseholderQr().solve(-r);
                if (!step.allFinite()) {
                    return;
                }
                double t = 1.0;
                Vector trial = x + step;
                Vector rt = field(trial);
                while (!(rt.norm() < r.norm()) && t > 1e-4) {
                    t *= 0.5;
                    trial = x + t * step;
                    rt = field(trial);
                }
                if (!(rt.norm() < r.norm())) {
                    break;
                }
                const double moved = (trial - x).norm();
                x = trial;
                r = rt;
                if (moved < 1e-14 * (1.0 + x.norm())) {
                    break;
                }
            }
            if (r.norm() < 1e-9 && min_h(x) > 1e-6) {
                roots[idx] = x;
            }
        } catch (const Error&) {
        }
    });

    EquilibriumSearch search;
    for (const auto& root : roots) {
        if (!root) {
            continue;
        }
        EquilibriumReport report;
        report.x_star = *root;
        report.kind = EquilibriumKind::interior;
        report.controller = spec.kind;
        report.residual = field(*root).norm();
        report.h_value = min_h(*root);
        report.desirability = classify_desirability(report, spec);
        dedup_push(search.equilibria, std::move(report), options.dedup_radius);
    }
    canonicalize(search.equilibria);
    return search;
}

EquilibriumSearch find_equilibria(const ControllerSpec& spec, const BoundarySearchOptions& boundary,
                                  const InteriorSearchOptions& interior) {
    EquilibriumSearch all = find_interior_equilibria(spec, interior);
    for (std::size_t i = 0; i < spec.cbfs.size(); ++i) {
        EquilibriumSearch part = find_boundary_equilibria(spec, i, boundary);
        for (auto& r : part.equilibria) {
            dedup_push(all.equilibria, std::move(r), boundary.dedup_radius);
        }
        all.warnings.insert(all.warnings.end(), part.warnings.begin(), part.warnings.end());
        all.errors.insert(all.errors.end(), part.errors.begin(), part.errors.end());
    }
    canonicalize(all.equilibria);
    return all;
}

void canonicalize(std::vector<EquilibriumReport>& reports) {
    std::sort(reports.begin(), reports.end(),
              [](const EquilibriumReport& a, const EquilibriumReport& b) { return lex_less(a.x_star, b.x_star); });
}

}  // namespace barrier_lab
