#pragma once

#include "barrier_lab/qp.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace barrier_lab {

enum class TerminalKind { converged_to, left_domain, max_time, error };

struct TerminalLabel {
    TerminalKind kind = TerminalKind::max_time;
    Vector target;            ///< converged_to only
    int target_index = -1;    ///< index into the attractor list
    std::string message;      ///< error only

    /// "converged-to(x1;x2)", "left-domain", "max-time" or "error".
    std::string to_string() const;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Vector> states;
    std::vector<std::vector<double>> h_values;       ///< per time, one entry per CBF of the spec
    std::vector<Vector> inputs;                      ///< applied input k + u
    std::vector<std::vector<double>> multiplier_trace;
    std::vector<double> min_h;                       ///< per CBF, over every step (recorded or not)
    TerminalLabel terminal;
    std::optional<double> error_time;
};

struct IntegrateOptions {
    double horizon = 20.0;
    double dt = 1e-3;
    bool filtered = true;
    std::vector<Vector> attractors;       ///< known equilibria for convergence labels
    double convergence_radius = 1e-6;
    int hold_steps = 10;
    bool stop_on_convergence = false;
    std::optional<Vector> domain_lower;   ///< leaving this box ends the run
    std::optional<Vector> domain_upper;
    std::size_t record_stride = 1;        ///< keep every k-th step (the last step is always kept)
};

/// Fixed-step RK4 of the closed loop. A filtered run must start in S (every
/// h >= 0), otherwise PreconditionError. Controller failures at a stage point
/// end the run with an error label instead of throwing.
Trajectory integrate(const ControllerSpec& spec, const Vector& x0, const IntegrateOptions& options = {});

struct InvarianceAudit {
    double min_h = 0.0;
    bool passed = false;
};

InvarianceAudit invariance_audit(const Trajectory& trajectory, const BarrierPair& pair, double tol = 1e-6);

/// Axis-aligned 2D grid. Field grids use nodes including both ends; ROA grids
/// use cell centers.
struct GridSpec {
    Vector lower;
    Vector upper;
    int nx = 0;
    int ny = 0;
};

std::vector<Vector> grid_nodes(const GridSpec& grid);
std::vector<Vector> grid_cell_centers(const GridSpec& grid);

struct RoaCell {
    Vector x;
    std::string label;
};

/// Row-major (x2 outer, x1 inner) labels of integrate() from each cell center.
/// Cells starting outside S are labelled "unsafe-start".
std::vector<RoaCell> roa_grid(const ControllerSpec& spec, const GridSpec& grid, const std::vector<Vector>& attractors,
                              double horizon, double dt, bool filtered = true);

struct FieldSample {
    Vector x;
    Vector velocity;
    double h = 0.0;             ///< min over the spec's CBFs
    unsigned active_code = 0;
    bool masked = false;        ///< node outside S
};

std::vector<FieldSample> field_grid(const ControllerSpec& spec, const GridSpec& grid, bool filtered = true);

/// Shortest round-trip decimal.
std::string format_number(double v);

void write_field_csv(std::ostream& os, const std::vector<FieldSample>& samples);
void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory);
void write_roa_csv(std::ostream& os, const std::vector<RoaCell>& cells);

}  // namespace barrier_lab
