#pragma once

#include "barrier_lab/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace barrier_lab {

// ---------------------------------------------------------------------------
// Generic small QP
//
//   min_{u, delta}  1/2 u^T G(x) u + 1/2 p delta^2
//   s.t.            cbf rows:          a_i(x)^T u + c_i delta + b_i(x) >= 0
//                   clf/custom rows:   a_i(x)^T u + c_i delta + b_i(x) <= 0
//
// delta exists iff the problem has a penalty p.
// ---------------------------------------------------------------------------

enum class RowKind { clf_relaxed, cbf, custom };

struct ConstraintRow {
    RowKind kind = RowKind::custom;
    VectorField normal;       ///< coefficient of u, length m
    ScalarField offset;       ///< constant term b(x)
    double relax_coeff = 0.0; ///< coefficient of delta
    std::string label;
};

struct QpProblem {
    MatrixField weight;
    std::optional<double> penalty;
    std::vector<ConstraintRow> rows;
};

/// QpProblem evaluated at one state.
struct QpInstance {
    Matrix weight;
    std::optional<double> penalty;
    std::vector<RowKind> kinds;
    Matrix normals;  ///< rows x m
    Vector relax;    ///< per-row delta coefficient
    Vector offsets;  ///< per-row b
};

struct KktPoint {
    Vector u;
    double delta = 0.0;
    std::vector<double> multipliers;  ///< one per row, >= 0
    std::vector<int> active_set;      ///< ascending row indices
    double stationarity_residual = 0.0;

    /// Bit i set iff row i is active.
    unsigned active_code() const;
};

struct KktCertificate {
    double stationarity = 0.0;
    double primal_violation = 0.0;
    double min_multiplier = 0.0;
    double inactive_multiplier = 0.0;
    double complementarity = 0.0;

    bool passed(double tol = 1e-9) const;
};

inline constexpr std::size_t kMaxQpRows = 12;

QpInstance instantiate(const QpProblem& problem, const Vector& x);

/// Active-set enumeration by increasing cardinality (lexicographic inside a
/// cardinality); the first subset whose equality solve is primal feasible
/// with nonnegative multipliers is returned.
KktPoint solve_small_qp(const QpInstance& instance);
KktPoint solve_small_qp(const QpProblem& problem, const Vector& x);

KktCertificate certify(const QpInstance& instance, const KktPoint& point);

/// Row value s_i (a_i^T u + c_i delta + b_i), <= 0 when satisfied.
double row_violation(const QpInstance& instance, std::size_t row, const Vector& u, double delta);

// ---------------------------------------------------------------------------
// Controllers
// ---------------------------------------------------------------------------

/// Checks symmetry (1e-12) and Cholesky of G, returning G^{-1}.
Matrix checked_weight_inverse(const Matrix& weight);

MatrixField identity_weight(int m);

struct SafetyFilterOutput {
    Vector u;           ///< correction added to the nominal input
    double eta = 0.0;   ///< grad h^T (f + g k) + alpha(h)
    double multiplier = 0.0;
    bool active = false;
};

/// Closed-form safety filter: 0 if eta >= 0, otherwise
/// -eta G^{-1} g^T grad h / |g^T grad h|^2_{G^{-1}}.
SafetyFilterOutput safety_filter(const SystemModel& model, const BarrierPair& pair, const MatrixField& weight,
                                 const Vector& x);

/// Closed-form four-case CLF-CBF QP. Row 0 is the relaxed CLF row, row 1 the CBF.
KktPoint clf_cbf_qp(const SystemModel& model, const BarrierPair& cbf, const LyapunovPair& clf,
                    const MatrixField& weight, double p, const Vector& x);

/// Closed-form CLF QP without the CBF row.
KktPoint unfiltered_control(const SystemModel& model, const LyapunovPair& clf, const MatrixField& weight,
                            double p, const Vector& x);

enum class ControllerKind { safety_filter, clf_cbf_qp };

/// Full controller description. The applied input is k(x) + u where u solves
/// the QP on the drift f + g k.
struct ControllerSpec {
    ControllerKind kind = ControllerKind::safety_filter;
    SystemModel model;
    std::vector<BarrierPair> cbfs;
    std::optional<LyapunovPair> clf;
    MatrixField weight;
    double p = 1.0;

    /// Same controller with a single CBF in place of the current list.
    ControllerSpec with_cbf(const BarrierPair& pair) const;
};

/// QP of the controller; `filtered == false` drops every CBF row.
QpProblem build_problem(const ControllerSpec& spec, bool filtered = true);

/// Controller output at x. Uses the closed forms when at most one CBF is
/// present, the generic solver otherwise.
KktPoint evaluate_controller(const ControllerSpec& spec, const Vector& x, bool filtered = true);

/// f + g k + g u at x.
Vector closed_loop_field(const ControllerSpec& spec, const Vector& x, bool filtered = true);

struct FeasibilityViolation {
    Vector x;
    double condition = 0.0;   ///< grad h^T f~ + alpha(h)
    double input_gain = 0.0;  ///< |g^T grad h|
};

struct StrictFeasibilityReport {
    std::size_t samples = 0;
    std::size_t in_condition_set = 0;
    std::vector<FeasibilityViolation> violations;

    bool passed() const { return violations.empty(); }
};

StrictFeasibilityReport check_strict_feasibility(const SystemModel& model, const BarrierPair& pair,
                                                 std::span<const Vector> samples);

}  // namespace barrier_lab
