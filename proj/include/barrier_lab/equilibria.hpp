#pragma once

#include "barrier_lab/qp.hpp"

#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace barrier_lab {

using Complex = std::complex<double>;

enum class EquilibriumKind { interior, boundary };
enum class Desirability { desirable, undesirable, inconclusive };
enum class Stability { asymptotically_stable, unstable, saddle, inconclusive };

std::string to_string(EquilibriumKind kind);
std::string to_string(Desirability d);
std::string to_string(Stability s);
std::string to_string(ControllerKind k);

struct EquilibriumReport {
    Vector x_star;
    EquilibriumKind kind = EquilibriumKind::interior;
    Desirability desirability = Desirability::inconclusive;
    ControllerKind controller = ControllerKind::safety_filter;
    int cbf_index = -1;               ///< CBF whose boundary holds x_star (boundary kind)
    std::optional<double> lambda1;    ///< CLF-CBF multipliers
    std::optional<double> lambda2;
    std::optional<double> delta_sf;   ///< safety filter collinearity factor
    double residual = 0.0;            ///< |closed-loop field| at x_star
    double h_value = 0.0;
    // Filled by attach_spectrum().
    std::optional<Matrix> jacobian;
    std::vector<Complex> eigenvalues;
    std::optional<Stability> stability;
};

/// Closed-form multipliers at a boundary point of a CLF-CBF QP.
struct BoundaryMultipliers {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    Eigen::Matrix2d delta;  ///< [[|dV|_D^2 + 1/p, -dV^T D dh], [-dh^T D dV, |dh|_D^2]]
    double det = 0.0;
};

/// D(x) = g G^{-1} g^T.
Matrix input_metric(const SystemModel& model, const MatrixField& weight, const Vector& x);

BoundaryMultipliers multipliers_on_boundary(const SystemModel& model, const BarrierPair& cbf,
                                            const LyapunovPair& clf, const MatrixField& weight, double p,
                                            const Vector& x);

/// delta with f~ = delta D grad h in the least-squares sense (negative at
/// undesirable safety-filter equilibria).
double collinearity_factor(const SystemModel& model, const BarrierPair& cbf, const MatrixField& weight,
                           const Vector& x);

struct BoundarySearchOptions {
    std::size_t sweep = 2048;        ///< samples on a 2D circle
    double detect_threshold = 1e-3;  ///< field-norm threshold for local minima
    double polish_tolerance = 1e-10;
    int max_iterations = 100;
    double dedup_radius = 1e-7;
    std::vector<Vector> seeds;       ///< required for implicit geometries
};

struct InteriorSearchOptions {
    Vector lower;
    Vector upper;
    std::vector<int> grid;           ///< seeds per dimension
    int max_iterations = 200;
    double dedup_radius = 1e-7;
};

struct EquilibriumSearch {
    std::vector<EquilibriumReport> equilibria;
    std::vector<std::string> warnings;
    std::vector<std::string> errors;
};

/// Boundary equilibria on the zero level set of spec.cbfs[cbf_index]; any other
/// CBF rows must be slack at accepted points.
EquilibriumSearch find_boundary_equilibria(const ControllerSpec& spec, std::size_t cbf_index,
                                           const BoundarySearchOptions& options = {});

EquilibriumSearch find_interior_equilibria(const ControllerSpec& spec, const InteriorSearchOptions& options);

Desirability classify_desirability(const EquilibriumReport& report, const ControllerSpec& spec);

/// Interior plus boundary equilibria of every CBF, sorted lexicographically.
EquilibriumSearch find_equilibria(const ControllerSpec& spec, const BoundarySearchOptions& boundary,
                                  const InteriorSearchOptions& interior);

/// Lexicographic ordering by coordinates.
void canonicalize(std::vector<EquilibriumReport>& reports);

}  // namespace barrier_lab
