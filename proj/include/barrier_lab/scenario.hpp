#pragma once

#include "barrier_lab/equilibria.hpp"
#include "barrier_lab/equivalence.hpp"
#include "barrier_lab/model.hpp"
#include "barrier_lab/qp.hpp"
#include "barrier_lab/sim.hpp"
#include "barrier_lab/spectral.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace barrier_lab {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// Parse or validation failure of a scenario config. `field` is the JSON path
/// of the offending entry ("cbfs[1].radius"); `line` is 1-based, 0 if unknown.
class ConfigError : public Error {
public:
    ConfigError(const std::string& message, std::string field, int line);
    const std::string& field() const { return field_; }
    int line() const { return line_; }

private:
    std::string field_;
    int line_;
};

struct LinearFunctionDesc {
    double slope = 1.0;
};

struct GammaDesc {
    enum class Type { linear, quadratic } type = Type::linear;
    double c1 = 1.0;  ///< slope for linear
    double c2 = 0.0;
};

struct EtaDesc {
    enum class Type { constant, shifted_quadratic } type = Type::constant;
    double value = 1.0;  ///< constant
    Vector center;       ///< shifted_quadratic
    double offset = 0.0;
};

struct CbfDesc {
    enum class Type { ball, transform } type = Type::ball;
    // ball
    Vector center;
    double radius = 1.0;
    BallForm form = BallForm::full;
    // transform
    int base = 0;
    double a = 1.0;
    double b = 0.0;
    GammaDesc gamma;
    std::optional<EtaDesc> eta;

    LinearFunctionDesc alpha;
    std::string label;
};

struct ClfDesc {
    Matrix q;
    LinearFunctionDesc beta;
    Vector xstar;
};

struct SystemDesc {
    std::optional<std::string> builtin;  ///< "single_integrator_2d"
    std::optional<Matrix> a;             ///< linear system
    std::optional<Matrix> b;
};

struct ControllerDesc {
    ControllerKind type = ControllerKind::safety_filter;
    std::optional<Matrix> g;  ///< nullopt means identity
    double p = 1.0;
    std::vector<int> cbfs{0};
};

struct EquilibriaTask {
    Vector lower;
    Vector upper;
    std::vector<int> grid;
    std::size_t boundary_sweep = 2048;
};

struct JacobiansTask {};

struct EquivalenceTask {
    std::vector<std::pair<int, int>> pairs;
    std::size_t samples = 256;
    double tol = 1e-8;
};

struct FieldTask {
    GridSpec grid;
    bool filtered = true;
    std::string file = "field.csv";
};

struct RandomStates {
    std::size_t count = 0;
    Vector lower;
    Vector upper;
};

struct SimulateTask {
    std::vector<Vector> initial_states;
    std::optional<RandomStates> random_initial_states;  ///< safe states drawn with the config seed
    double horizon = 20.0;
    double dt = 1e-3;
    bool filtered = true;
    std::size_t record_stride = 10;
    std::string file_prefix = "trajectory";
};

struct RoaTask {
    GridSpec grid;
    double horizon = 20.0;
    double dt = 1e-2;
    bool filtered = true;
    std::string file = "roa.csv";
};

using TaskDesc = std::variant<EquilibriaTask, JacobiansTask, EquivalenceTask, FieldTask, SimulateTask, RoaTask>;

struct ScenarioConfig {
    int schema_version = kSchemaVersion;
    std::string name;
    SystemDesc system;
    std::optional<Matrix> nominal_gain;
    std::vector<CbfDesc> cbfs;
    std::optional<ClfDesc> clf;
    ControllerDesc controller;
    std::vector<TaskDesc> tasks;
    std::string output_dir = "out";
    std::uint64_t seed = 0;
    std::vector<std::string> notes;  ///< disclosed defaults and assumptions
};

/// Parses and validates; throws ConfigError.
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig load_config(const std::filesystem::path& path);

Json to_json(const ScenarioConfig& config);
std::string dump_config(const ScenarioConfig& config);

std::vector<std::string> builtin_names();
/// Throws InvalidParameter listing the valid names.
ScenarioConfig builtin_scenario(const std::string& name);

/// Every CBF of the config, in order (transforms resolved against earlier entries).
std::vector<BarrierPair> build_cbfs(const ScenarioConfig& config);
SystemModel build_model(const ScenarioConfig& config);
/// Controller using the CBFs listed in controller.cbfs.
ControllerSpec build_controller(const ScenarioConfig& config);
/// Same controller with only the given CBF.
ControllerSpec build_controller_for(const ScenarioConfig& config, std::size_t cbf_index);

struct RunResult {
    int exit_code = 0;
    std::vector<std::string> errors;
    std::string summary;
};

/// Executes the tasks in order, writing artifacts into out_dir. Stops at the
/// first failing task (exit code 1) and keeps what was written.
RunResult run_scenario(const ScenarioConfig& config, const std::filesystem::path& out_dir);

struct CompareResult {
    Json report;
    bool passed = false;
};

/// Cross-pair invariance report over every CBF of the config; writes
/// invariance_report.json. Throws PreconditionError when the CBFs do not share
/// their zero level set.
CompareResult compare_pairs(const ScenarioConfig& config, const std::filesystem::path& out_dir);

/// JSON forms of the analysis results.
Json to_json(const EquilibriumReport& report);
Json to_json(const SpectralResult& result);
Json to_json(const EquivalenceReport& report);

}  // namespace barrier_lab
