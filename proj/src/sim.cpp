#include "barrier_lab/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace barrier_lab {

std::string format_number(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string TerminalLabel::to_string() const {
    switch (kind) {
        case TerminalKind::converged_to: {
            std::string out = "converged-to(";
            for (Eigen::Index i = 0; i < target.size(); ++i) {
                if (i > 0) {
                    out += ';';
                }
                // Targets come from a golden list; 6 decimals keep labels readable.
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.6f", target(i) == 0.0 ? 0.0 : target(i));
                out += buf;
            }
            return out + ")";
        }
        case TerminalKind::left_domain: return "left-domain";
        case TerminalKind::max_time: return "max-time";
        case TerminalKind::error: return "error";
    }
    return "error";
}

namespace {

struct StageResult {
    Vector velocity;
    KktPoint point;
};

StageResult stage(const ControllerSpec& spec, const Vector& x, bool filtered) {
    StageResult out;
    out.point = evaluate_controller(spec, x, filtered);
    out.velocity = spec.model.drift(x) + spec.model.g(x).lazyProduct(out.point.u);
    return out;
}

Vector applied_input(const ControllerSpec& spec, const Vector& x, const Vector& u) {
    if (spec.model.k) {
        return (*spec.model.k)(x) + u;
    }
    return u;
}

std::vector<double> barrier_values(const ControllerSpec& spec, const Vector& x) {
    std::vector<double> out;
    out.reserve(spec.cbfs.size());
    for (const BarrierPair& pair : spec.cbfs) {
        out.push_back(pair.h(x));
    }
    return out;
}

bool outside_box(const Vector& x, const IntegrateOptions& options) {
    if (!x.allFinite()) {
        return true;
    }
    if (options.domain_lower && (x.array() < options.domain_lower->array()).any()) {
        return true;
    }
    if (options.domain_upper && (x.array() > options.domain_upper->array()).any()) {
        return true;
    }
    return false;
}

}  // namespace

Trajectory integrate(const ControllerSpec& spec, const Vector& x0, const IntegrateOptions& options) {
    if (!(options.dt > 0.0)) {
        throw InvalidParameter("dt must be positive");
    }
    if (!(options.horizon >= options.dt)) {
        throw InvalidParameter("horizon must be at least dt");
    }
    if (x0.size() != spec.model.n) {
        throw InvalidParameter("initial state has the wrong dimension");
    }
    if (options.filtered) {
        for (const BarrierPair& pair : spec.cbfs) {
            if (pair.h(x0) < 0.0) {
                throw PreconditionError("initial state lies outside the safe set of '" + pair.label + "'");
            }
        }
    }

    Trajectory traj;
    traj.min_h.assign(spec.cbfs.size(), std::numeric_limits<double>::infinity());
    const auto steps = static_cast<std::size_t>(std::llround(options.horizon / options.dt));
    const std::size_t stride = std::max<std::size_t>(options.record_stride, 1);
    const double dt = options.dt;

    Vector x = x0;
    int held = 0;
    int held_target = -1;

    auto track = [&](const std::vector<double>& hv) {
        for (std::size_t i = 0; i < hv.size(); ++i) {
            traj.min_h[i] = std::min(traj.min_h[i], hv[i]);
        }
    };
    auto record = [&](double t, const Vector& state, const std::vector<double>& hv, const KktPoint* point) {
        traj.times.push_back(t);
        traj.states.push_back(state);
        traj.h_values.push_back(hv);
        if (point) {
            traj.inputs.push_back(applied_input(spec, state, point->u));
            traj.multiplier_trace.push_back(point->multipliers);
        } else {
            traj.inputs.push_back(Vector::Constant(spec.model.m, std::numeric_limits<double>::quiet_NaN()));
            traj.multiplier_trace.emplace_back();
        }
    };

    for (std::size_t step = 0;; ++step) {
        const double t = static_cast<double>(step) * dt;
        const std::vector<double> hv = barrier_values(spec, x);
        track(hv);

        StageResult k1;
        try {
            k1 = stage(spec, x, options.filtered);
        } catch (const Error& e) {
            record(t, x, hv, nullptr);
            traj.terminal.kind = TerminalKind::error;
            traj.terminal.message = e.what();
            traj.error_time = t;
            return traj;
        }

        // Convergence bookkeeping on the current state.
        int nearest = -1;
        for (std::size_t a = 0; a < options.attractors.size(); ++a) {
            if ((x - options.attractors[a]).norm() < options.convergence_radius) {
                nearest = static_cast<int>(a);
                break;
            }
        }
        if (nearest >= 0 && nearest == held_target) {
            ++held;
        } else {
            held = nearest >= 0 ? 1 : 0;
            held_target = nearest;
        }
        const bool converged = held_target >= 0 && held >= options.hold_steps;
        const bool last = step == steps || (converged && options.stop_on_convergence);

        if (step % stride == 0 || last) {
            record(t, x, hv, &k1.point);
        }
        if (last) {
            if (converged) {
                traj.terminal.kind = TerminalKind::converged_to;
                traj.terminal.target = options.attractors[static_cast<std::size_t>(held_target)];
                traj.terminal.target_index = held_target;
            } else {
                traj.terminal.kind = TerminalKind::max_time;
            }
            return traj;
        }

        try {
            const Vector k2 = stage(spec, x + 0.5 * dt * k1.velocity, options.filtered).velocity;
            const Vector k3 = stage(spec, x + 0.5 * dt * k2, options.filtered).velocity;
            const Vector k4 = stage(spec, x + dt * k3, options.filtered).velocity;
            x = x + dt / 6.0 * (k1.velocity + 2.0 * k2 + 2.0 * k3 + k4);
        } catch (const Error& e) {
            traj.terminal.kind = TerminalKind::error;
            traj.terminal.message = e.what();
            traj.error_time = t;
            return traj;
        }

        if (outside_box(x, options)) {
            const double t_next = static_cast<double>(step + 1) * dt;
            const std::vector<double> hv_next = barrier_values(spec, x);
            track(hv_next);
            record(t_next, x, hv_next, nullptr);
            traj.terminal.kind = TerminalKind::left_domain;
            return traj;
        }
    }
}

InvarianceAudit invariance_audit(const Trajectory& trajectory, const BarrierPair& pair, double tol) {
    InvarianceAudit out;
    out.min_h = std::numeric_limits<double>::infinity();
    for (const Vector& x : trajectory.states) {
        out.min_h = std::min(out.min_h, pair.h(x));
    }
    out.passed = out.min_h >= -tol;
    return out;
}

namespace {

void check_grid(const GridSpec& grid) {
    if (grid.lower.size() != 2 || grid.upper.size() != 2) {
        throw InvalidParameter("grids are two-dimensional");
    }
    if (grid.nx < 1 || grid.ny < 1) {
        throw InvalidParameter("grid resolution must be positive");
    }
    if (!(grid.upper.array() >= grid.lower.array()).all()) {
        throw InvalidParameter("grid upper bound below lower bound");
    }
}

}  // namespace

std::vector<Vector> grid_nodes(const GridSpec& grid) {
    check_grid(grid);
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(grid.nx) * static_cast<std::size_t>(grid.ny));
    const double hx = grid.nx > 1 ? (grid.upper(0) - grid.lower(0)) / (grid.nx - 1) : 0.0;
    const double hy = grid.ny > 1 ? (grid.upper(1) - grid.lower(1)) / (grid.ny - 1) : 0.0;
    for (int j = 0; j < grid.ny; ++j) {
        for (int i = 0; i < grid.nx; ++i) {
            out.push_back(Eigen::Vector2d(grid.lower(0) + i * hx, grid.lower(1) + j * hy));
        }
    }
    return out;
}

std::vector<Vector> grid_cell_centers(const GridSpec& grid) {
    check_grid(grid);
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(grid.nx) * static_cast<std::size_t>(grid.ny));
    const double hx = (grid.upper(0) - grid.lower(0)) / grid.nx;
    const double hy = (grid.upper(1) - grid.lower(1)) / grid.ny;
    for (int j = 0; j < grid.ny; ++j) {
        for (int i = 0; i < grid.nx; ++i) {
            out.push_back(Eigen::Vector2d(grid.lower(0) + (i + 0.5) * hx, grid.lower(1) + (j + 0.5) * hy));
        }
    }
    return out;
}

std::vector<RoaCell> roa_grid(const ControllerSpec& spec, const GridSpec& grid, const std::vector<Vector>& attractors,
                              double horizon, double dt, bool filtered) {
    const std::vector<Vector> centers = grid_cell_centers(grid);
    std::vector<RoaCell> cells(centers.size());
    IntegrateOptions options;
    options.horizon = horizon;
    options.dt = dt;
    options.filtered = filtered;
    options.attractors = attractors;
    options.stop_on_convergence = true;
    options.record_stride = std::numeric_limits<std::size_t>::max();
    parallel_for(centers.size(), [&](std::size_t i) {
        cells[i].x = centers[i];
        try {
            cells[i].label = integrate(spec, centers[i], options).terminal.to_string();
        } catch (const PreconditionError&) {
            cells[i].label = "unsafe-start";
        } catch (const Error&) {
            cells[i].label = "error";
        }
    });
    return cells;
}

std::vector<FieldSample> field_grid(const ControllerSpec& spec, const GridSpec& grid, bool filtered) {
    const std::vector<Vector> nodes = grid_nodes(grid);
    std::vector<FieldSample> out(nodes.size());
    parallel_for(nodes.size(), [&](std::size_t i) {
        FieldSample& s = out[i];
        s.x = nodes[i];
        s.h = std::numeric_limits<double>::infinity();
        for (const BarrierPair& pair : spec.cbfs) {
            s.h = std::min(s.h, pair.h(s.x));
        }
        if (spec.cbfs.empty()) {
            s.h = std::numeric_limits<double>::quiet_NaN();
        }
        s.masked = s.h < 0.0;
        try {
            const KktPoint point = evaluate_controller(spec, s.x, filtered);
            s.velocity = spec.model.drift(s.x) + spec.model.g(s.x) * point.u;
            s.active_code = point.active_code();
        } catch (const Error&) {
            s.velocity = Vector::Constant(spec.model.n, std::numeric_limits<double>::quiet_NaN());
            s.masked = true;
        }
    });
    return out;
}

void write_field_csv(std::ostream& os, const std::vector<FieldSample>& samples) {
    os << "x1,x2,v1,v2,h,active_code,masked\n";
    for (const FieldSample& s : samples) {
        os << format_number(s.x(0)) << ',' << format_number(s.x(1)) << ',' << format_number(s.velocity(0)) << ','
           << format_number(s.velocity(1)) << ',' << format_number(s.h) << ',' << s.active_code << ','
           << (s.masked ? 1 : 0) << '\n';
    }
}

void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory) {
    const Eigen::Index n = trajectory.states.empty() ? 0 : trajectory.states.front().size();
    const Eigen::Index m = trajectory.inputs.empty() ? 0 : trajectory.inputs.front().size();
    os << 't';
    for (Eigen::Index i = 0; i < n; ++i) {
        os << ",x" << i + 1;
    }
    for (Eigen::Index i = 0; i < m; ++i) {
        os << ",u" << i + 1;
    }
    os << ",h\n";
    for (std::size_t k = 0; k < trajectory.times.size(); ++k) {
        os << format_number(trajectory.times[k]);
        for (Eigen::Index i = 0; i < n; ++i) {
            os << ',' << format_number(trajectory.states[k](i));
        }
        for (Eigen::Index i = 0; i < m; ++i) {
            os << ',' << format_number(trajectory.inputs[k](i));
        }
        const auto& hv = trajectory.h_values[k];
        const double h = hv.empty() ? std::numeric_limits<double>::quiet_NaN() : *std::min_element(hv.begin(), hv.end());
        os << ',' << format_number(h) << '\n';
    }
}

void write_roa_csv(std::ostream& os, const std::vector<RoaCell>& cells) {
    os << "x1,x2,label\n";
    for (const RoaCell& c : cells) {
        os << format_number(c.x(0)) << ',' << format_number(c.x(1)) << ',' << c.label << '\n';
    }
}

}  // namespace barrier_lab
