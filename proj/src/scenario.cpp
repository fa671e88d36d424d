#include "barrier_lab/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace barrier_lab {

ConfigError::ConfigError(const std::string& message, std::string field, int line)
    : Error(message), field_(std::move(field)), line_(line) {}

namespace {

// ---------------------------------------------------------------------------
// Source positions. nlohmann::json keeps no locations, so a structural pass
// over the (already validated) text maps each value path to its line.
// ---------------------------------------------------------------------------

using LineMap = std::map<std::string, int>;

LineMap map_lines(const std::string& text) {
    struct Frame {
        bool array = false;
        std::size_t index = 0;
        std::string key;
        bool expecting_key = true;
    };
    LineMap lines;
    std::vector<Frame> stack;
    int line = 1;

    auto current_path = [&stack]() {
        std::string out;
        for (const Frame& f : stack) {
            if (f.array) {
                out += "[" + std::to_string(f.index) + "]";
            } else {
                out += (out.empty() ? "" : ".") + f.key;
            }
        }
        return out;
    };
    auto mark_value = [&]() {
        if (!stack.empty()) {
            lines.emplace(current_path(), line);
        }
    };

    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (c == '\n') {
            ++line;
            ++i;
        } else if (c == '"') {
            std::string s;
            ++i;
            while (i < text.size() && text[i] != '"') {
                if (text[i] == '\\' && i + 1 < text.size()) {
                    s += text[i + 1];
                    i += 2;
                } else {
                    s += text[i++];
                }
            }
            ++i;
            if (!stack.empty() && !stack.back().array && stack.back().expecting_key) {
                stack.back().key = s;
                stack.back().expecting_key = false;
            } else {
                mark_value();
            }
        } else if (c == '{' || c == '[') {
            mark_value();
            stack.push_back(Frame{c == '[', 0, {}, true});
            ++i;
        } else if (c == '}' || c == ']') {
            if (!stack.empty()) {
                stack.pop_back();
            }
            ++i;
        } else if (c == ',') {
            if (!stack.empty()) {
                if (stack.back().array) {
                    ++stack.back().index;
                } else {
                    stack.back().expecting_key = true;
                }
            }
            ++i;
        } else if (c == ':' || std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else {
            mark_value();
            while (i < text.size() && text[i] != ',' && text[i] != '}' && text[i] != ']' &&
                   !std::isspace(static_cast<unsigned char>(text[i]))) {
                ++i;
            }
        }
    }
    return lines;
}

int line_of(const LineMap& lines, std::string path) {
    while (true) {
        const auto it = lines.find(path);
        if (it != lines.end()) {
            return it->second;
        }
        const auto cut = path.find_last_of(".[");
        if (cut == std::string::npos || path.empty()) {
            return 1;
        }
        path.erase(cut);
    }
}

class Node {
public:
    Node(const Json& value, std::string path, const LineMap& lines)
        : value_(value), path_(std::move(path)), lines_(lines) {}

    const Json& json() const { return value_; }
    const std::string& path() const { return path_; }

    [[noreturn]] void fail(const std::string& message) const { fail_at(path_, message); }

    [[noreturn]] void fail_at(const std::string& path, const std::string& message) const {
        const int line = line_of(lines_, path);
        throw ConfigError("config line " + std::to_string(line) + ": field '" + (path.empty() ? "<root>" : path) +
                              "': " + message,
                          path, line);
    }

    std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void require_object() const {
        if (!value_.is_object()) {
            fail("expected an object");
        }
    }

    void allow_keys(std::initializer_list<const char*> keys) const {
        require_object();
        for (const auto& item : value_.items()) {
            const bool known = std::any_of(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; });
            if (!known) {
                fail_at(child_path(item.key()), "unknown field");
            }
        }
    }

    bool has(const std::string& key) const { return value_.is_object() && value_.contains(key); }

    Node at(const std::string& key) const {
        require_object();
        if (!value_.contains(key)) {
            fail_at(child_path(key), "required field is missing");
        }
        return Node(value_.at(key), child_path(key), lines_);
    }

    std::optional<Node> find(const std::string& key) const {
        if (!has(key)) {
            return std::nullopt;
        }
        return Node(value_.at(key), child_path(key), lines_);
    }

    std::size_t size() const {
        if (!value_.is_array()) {
            fail("expected an array");
        }
        return value_.size();
    }

    Node operator[](std::size_t i) const {
        return Node(value_.at(i), path_ + "[" + std::to_string(i) + "]", lines_);
    }

    double number() const {
        if (!value_.is_number()) {
            fail("expected a number");
        }
        const double v = value_.get<double>();
        if (!std::isfinite(v)) {
            fail("expected a finite number");
        }
        return v;
    }

    double positive() const {
        const double v = number();
        if (!(v > 0.0)) {
            fail("must be positive");
        }
        return v;
    }

    long long integer() const {
        if (!value_.is_number_integer()) {
            fail("expected an integer");
        }
        return value_.get<long long>();
    }

    std::size_t count(long long min_value = 0) const {
        const long long v = integer();
        if (v < min_value) {
            fail("must be at least " + std::to_string(min_value));
        }
        return static_cast<std::size_t>(v);
    }

    bool boolean() const {
        if (!value_.is_boolean()) {
            fail("expected true or false");
        }
        return value_.get<bool>();
    }

    std::string string() const {
        if (!value_.is_string()) {
            fail("expected a string");
        }
        return value_.get<std::string>();
    }

    Vector vector(std::optional<Eigen::Index> dim = std::nullopt) const {
        const std::size_t n = size();
        if (dim && static_cast<Eigen::Index>(n) != *dim) {
            fail("expected " + std::to_string(*dim) + " entries, got " + std::to_string(n));
        }
        Vector out(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            out(static_cast<Eigen::Index>(i)) = (*this)[i].number();
        }
        return out;
    }

    Matrix matrix(std::optional<Eigen::Index> rows = std::nullopt, std::optional<Eigen::Index> cols = std::nullopt) const {
        const std::size_t r = size();
        if (r == 0) {
            fail("matrix needs at least one row");
        }
        const std::size_t c = (*this)[0].size();
        if (rows && static_cast<Eigen::Index>(r) != *rows) {
            fail("expected " + std::to_string(*rows) + " rows, got " + std::to_string(r));
        }
        if (cols && static_cast<Eigen::Index>(c) != *cols) {
            fail("expected " + std::to_string(*cols) + " columns, got " + std::to_string(c));
        }
        Matrix out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        for (std::size_t i = 0; i < r; ++i) {
            const Vector row = (*this)[i].vector(static_cast<Eigen::Index>(c));
            out.row(static_cast<Eigen::Index>(i)) = row.transpose();
        }
        return out;
    }

private:
    const Json& value_;
    std::string path_;
    const LineMap& lines_;
};

LinearFunctionDesc parse_linear_function(const Node& node) {
    node.allow_keys({"type", "slope"});
    const std::string type = node.at("type").string();
    if (type != "linear") {
        node.at("type").fail("unknown function type '" + type + "' (valid: linear)");
    }
    return LinearFunctionDesc{node.at("slope").positive()};
}

GammaDesc parse_gamma(const Node& node) {
    node.allow_keys({"type", "slope", "c1", "c2"});
    GammaDesc out;
    const std::string type = node.at("type").string();
    if (type == "linear") {
        out.type = GammaDesc::Type::linear;
        out.c1 = node.at("slope").number();
    } else if (type == "quadratic") {
        out.type = GammaDesc::Type::quadratic;
        out.c1 = node.at("c1").number();
        out.c2 = node.at("c2").number();
    } else {
        node.at("type").fail("unknown gamma type '" + type + "' (valid: linear, quadratic)");
    }
    if (!(out.c1 > 0.0)) {
        node.fail("gamma must be strictly increasing at 0 (slope / c1 > 0)");
    }
    return out;
}

EtaDesc parse_eta(const Node& node, Eigen::Index n) {
    node.allow_keys({"type", "value", "center", "offset"});
    EtaDesc out;
    const std::string type = node.at("type").string();
    if (type == "constant") {
        out.type = EtaDesc::Type::constant;
        out.value = node.at("value").positive();
    } else if (type == "shifted_quadratic") {
        out.type = EtaDesc::Type::shifted_quadratic;
        out.center = node.at("center").vector(n);
        out.offset = node.at("offset").positive();
    } else {
        node.at("type").fail("unknown eta type '" + type + "' (valid: constant, shifted_quadratic)");
    }
    return out;
}

CbfDesc parse_cbf(const Node& node, std::size_t index, Eigen::Index n) {
    CbfDesc out;
    node.require_object();
    const std::string type = node.at("type").string();
    if (type == "ball") {
        node.allow_keys({"type", "center", "radius", "form", "alpha", "label"});
        if (n != 2) {
            node.fail("ball CBFs need a two-dimensional state");
        }
        out.type = CbfDesc::Type::ball;
        out.center = node.at("center").vector(2);
        out.radius = node.at("radius").positive();
        const std::string form = node.at("form").string();
        if (form == "full") {
            out.form = BallForm::full;
        } else if (form == "half") {
            out.form = BallForm::half;
        } else {
            node.at("form").fail("unknown ball form '" + form + "' (valid: full, half)");
        }
    } else if (type == "transform") {
        node.allow_keys({"type", "base", "a", "b", "gamma", "eta", "alpha", "label"});
        out.type = CbfDesc::Type::transform;
        const long long base = node.at("base").integer();
        if (base < 0 || static_cast<std::size_t>(base) >= index) {
            node.at("base").fail("must reference an earlier CBF (0.." + std::to_string(index) + ")");
        }
        out.base = static_cast<int>(base);
        out.a = node.has("a") ? node.at("a").number() : 0.0;
        out.b = node.has("b") ? node.at("b").number() : 0.0;
        if (out.a < 0.0) {
            node.at("a").fail("must be nonnegative");
        }
        if (out.b < 0.0) {
            node.at("b").fail("must be nonnegative");
        }
        if (!(out.a + out.b > 0.0)) {
            node.fail("a + b must be positive");
        }
        if (auto g = node.find("gamma")) {
            out.gamma = parse_gamma(*g);
        }
        if (auto e = node.find("eta")) {
            out.eta = parse_eta(*e, n);
        }
        if (out.b > 0.0 && !out.eta) {
            node.fail("b > 0 needs an eta descriptor");
        }
    } else {
        node.at("type").fail("unknown CBF type '" + type + "' (valid: ball, transform)");
    }
    out.alpha = parse_linear_function(node.at("alpha"));
    out.label = node.has("label") ? node.at("label").string() : "cbf" + std::to_string(index);
    return out;
}

GridSpec parse_grid(const Node& node) {
    GridSpec grid;
    grid.lower = node.at("lower").vector(2);
    grid.upper = node.at("upper").vector(2);
    if (!(grid.upper.array() > grid.lower.array()).all()) {
        node.at("upper").fail("must exceed lower in every coordinate");
    }
    grid.nx = static_cast<int>(node.at("nx").count(1));
    grid.ny = static_cast<int>(node.at("ny").count(1));
    return grid;
}

void check_file_name(const Node& node, const std::string& name) {
    if (name.empty() || name.find('/') != std::string::npos || name.find("..") != std::string::npos) {
        node.fail("must be a plain file name");
    }
}

TaskDesc parse_task(const Node& node, Eigen::Index n, std::size_t cbf_count) {
    node.require_object();
    const std::string type = node.at("type").string();
    if (type == "equilibria") {
        node.allow_keys({"type", "interior", "boundary_sweep"});
        EquilibriaTask t;
        const Node interior = node.at("interior");
        interior.allow_keys({"lower", "upper", "grid"});
        t.lower = interior.at("lower").vector(n);
        t.upper = interior.at("upper").vector(n);
        if (!(t.upper.array() > t.lower.array()).all()) {
            interior.at("upper").fail("must exceed lower in every coordinate");
        }
        const Node grid = interior.at("grid");
        if (grid.size() != static_cast<std::size_t>(n)) {
            grid.fail("expected " + std::to_string(n) + " entries");
        }
        for (std::size_t i = 0; i < grid.size(); ++i) {
            t.grid.push_back(static_cast<int>(grid[i].count(1)));
        }
        if (auto s = node.find("boundary_sweep")) {
            t.boundary_sweep = s->count(8);
        }
        return t;
    }
    if (type == "jacobians") {
        node.allow_keys({"type"});
        return JacobiansTask{};
    }
    if (type == "equivalence") {
        node.allow_keys({"type", "pairs", "samples", "tol"});
        EquivalenceTask t;
        const Node pairs = node.at("pairs");
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const Node pr = pairs[i];
            if (pr.size() != 2) {
                pr.fail("expected [i, j]");
            }
            int ij[2];
            for (std::size_t k = 0; k < 2; ++k) {
                const long long v = pr[k].integer();
                if (v < 0 || static_cast<std::size_t>(v) >= cbf_count) {
                    pr[k].fail("CBF index out of range");
                }
                ij[k] = static_cast<int>(v);
            }
            t.pairs.emplace_back(ij[0], ij[1]);
        }
        if (auto s = node.find("samples")) {
            t.samples = s->count(1);
        }
        if (auto s = node.find("tol")) {
            t.tol = s->positive();
        }
        return t;
    }
    if (type == "field") {
        node.allow_keys({"type", "lower", "upper", "nx", "ny", "filtered", "file"});
        if (n != 2) {
            node.fail("field grids need a two-dimensional state");
        }
        FieldTask t;
        t.grid = parse_grid(node);
        if (auto f = node.find("filtered")) {
            t.filtered = f->boolean();
        }
        if (auto f = node.find("file")) {
            t.file = f->string();
            check_file_name(*f, t.file);
        }
        return t;
    }
    if (type == "simulate") {
        node.allow_keys({"type", "initial_states", "random_initial_states", "horizon", "dt", "filtered",
                         "record_stride", "file_prefix"});
        SimulateTask t;
        if (auto s = node.find("initial_states")) {
            for (std::size_t i = 0; i < s->size(); ++i) {
                t.initial_states.push_back((*s)[i].vector(n));
            }
        }
        if (auto r = node.find("random_initial_states")) {
            r->allow_keys({"count", "lower", "upper"});
            RandomStates rs;
            rs.count = r->at("count").count(1);
            rs.lower = r->at("lower").vector(n);
            rs.upper = r->at("upper").vector(n);
            if (!(rs.upper.array() > rs.lower.array()).all()) {
                r->at("upper").fail("must exceed lower in every coordinate");
            }
            t.random_initial_states = rs;
        }
        if (t.initial_states.empty() && !t.random_initial_states) {
            node.fail("needs initial_states or random_initial_states");
        }
        if (auto s = node.find("horizon")) {
            t.horizon = s->positive();
        }
        if (auto s = node.find("dt")) {
            t.dt = s->positive();
        }
        if (t.horizon < t.dt) {
            node.at("horizon").fail("must be at least dt");
        }
        if (auto s = node.find("filtered")) {
            t.filtered = s->boolean();
        }
        if (auto s = node.find("record_stride")) {
            t.record_stride = s->count(1);
        }
        if (auto s = node.find("file_prefix")) {
            t.file_prefix = s->string();
            check_file_name(*s, t.file_prefix);
        }
        return t;
    }
    if (type == "roa") {
        node.allow_keys({"type", "lower", "upper", "nx", "ny", "horizon", "dt", "filtered", "file"});
        if (n != 2) {
            node.fail("ROA grids need a two-dimensional state");
        }
        RoaTask t;
        t.grid = parse_grid(node);
        if (auto s = node.find("horizon")) {
            t.horizon = s->positive();
        }
        if (auto s = node.find("dt")) {
            t.dt = s->positive();
        }
        if (t.horizon < t.dt) {
            node.at("horizon").fail("must be at least dt");
        }
        if (auto s = node.find("filtered")) {
            t.filtered = s->boolean();
        }
        if (auto f = node.find("file")) {
            t.file = f->string();
            check_file_name(*f, t.file);
        }
        return t;
    }
    node.at("type").fail("unknown task type '" + type +
                         "' (valid: equilibria, jacobians, equivalence, field, simulate, roa)");
}

bool symmetric_positive_definite(const Matrix& m) {
    if (m.rows() != m.cols() || (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        return false;
    }
    return Eigen::LLT<Matrix>(m).info() == Eigen::Success;
}

}  // namespace

ScenarioConfig parse_config(const std::string& text) {
    Json root;
    try {
        root = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
        const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n'));
        throw ConfigError("config line " + std::to_string(line) + ": JSON syntax error: " + e.what(), "", line);
    }
    const LineMap lines = map_lines(text);
    const Node node(root, "", lines);
    node.allow_keys({"schema_version", "name", "system", "nominal_gain", "cbfs", "clf", "controller", "tasks",
                     "output_dir", "seed", "notes"});

    ScenarioConfig cfg;
    cfg.schema_version = static_cast<int>(node.at("schema_version").integer());
    if (cfg.schema_version != kSchemaVersion) {
        node.at("schema_version").fail("unsupported schema version " + std::to_string(cfg.schema_version) +
                                       " (expected " + std::to_string(kSchemaVersion) + ")");
    }
    cfg.name = node.has("name") ? node.at("name").string() : "scenario";

    // System.
    const Node system = node.at("system");
    system.allow_keys({"builtin", "linear"});
    if (system.has("builtin") == system.has("linear")) {
        system.fail("exactly one of 'builtin' or 'linear' is required");
    }
    Eigen::Index n = 0;
    Eigen::Index m = 0;
    if (auto b = system.find("builtin")) {
        const std::string name = b->string();
        if (name != "single_integrator_2d") {
            b->fail("unknown builtin system '" + name + "' (valid: single_integrator_2d)");
        }
        cfg.system.builtin = name;
        n = 2;
        m = 2;
    } else {
        const Node lin = system.at("linear");
        lin.allow_keys({"A", "B"});
        cfg.system.a = lin.at("A").matrix();
        n = cfg.system.a->rows();
        if (cfg.system.a->cols() != n) {
            lin.at("A").fail("must be square");
        }
        cfg.system.b = lin.at("B").matrix(n);
        m = cfg.system.b->cols();
    }
    if (auto k = node.find("nominal_gain")) {
        cfg.nominal_gain = k->matrix(m, n);
    }

    // CBFs.
    const Node cbfs = node.at("cbfs");
    if (cbfs.size() == 0) {
        cbfs.fail("at least one CBF is required");
    }
    for (std::size_t i = 0; i < cbfs.size(); ++i) {
        cfg.cbfs.push_back(parse_cbf(cbfs[i], i, n));
    }

    // CLF.
    if (auto c = node.find("clf")) {
        c->allow_keys({"Q", "beta", "xstar"});
        ClfDesc clf;
        clf.q = c->at("Q").matrix(n, n);
        if (!symmetric_positive_definite(clf.q)) {
            c->at("Q").fail("must be symmetric positive definite");
        }
        clf.beta = parse_linear_function(c->at("beta"));
        clf.xstar = c->has("xstar") ? c->at("xstar").vector(n) : Vector(Vector::Zero(n));
        cfg.clf = clf;
    }

    // Controller.
    const Node ctrl = node.at("controller");
    ctrl.allow_keys({"type", "G", "p", "cbfs"});
    const std::string ctype = ctrl.at("type").string();
    if (ctype == "safety_filter") {
        cfg.controller.type = ControllerKind::safety_filter;
    } else if (ctype == "clf_cbf_qp") {
        cfg.controller.type = ControllerKind::clf_cbf_qp;
        if (!cfg.clf) {
            ctrl.at("type").fail("clf_cbf_qp needs a 'clf' section");
        }
    } else {
        ctrl.at("type").fail("unknown controller type '" + ctype + "' (valid: safety_filter, clf_cbf_qp)");
    }
    if (auto g = ctrl.find("G")) {
        g->allow_keys({"type", "value"});
        const std::string gtype = g->at("type").string();
        if (gtype == "matrix") {
            cfg.controller.g = g->at("value").matrix(m, m);
            if (!symmetric_positive_definite(*cfg.controller.g)) {
                g->at("value").fail("must be symmetric positive definite");
            }
        } else if (gtype != "identity") {
            g->at("type").fail("unknown G type '" + gtype + "' (valid: identity, matrix)");
        }
    }
    if (auto p = ctrl.find("p")) {
        cfg.controller.p = p->positive();
    }
    if (auto idx = ctrl.find("cbfs")) {
        cfg.controller.cbfs.clear();
        for (std::size_t i = 0; i < idx->size(); ++i) {
            const long long v = (*idx)[i].integer();
            if (v < 0 || static_cast<std::size_t>(v) >= cfg.cbfs.size()) {
                (*idx)[i].fail("CBF index out of range");
            }
            cfg.controller.cbfs.push_back(static_cast<int>(v));
        }
        if (cfg.controller.cbfs.empty()) {
            idx->fail("at least one active CBF is required");
        }
    }

    // Tasks.
    const Node tasks = node.at("tasks");
    if (tasks.size() == 0) {
        tasks.fail("at least one task is required");
    }
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        cfg.tasks.push_back(parse_task(tasks[i], n, cfg.cbfs.size()));
    }

    if (auto o = node.find("output_dir")) {
        cfg.output_dir = o->string();
    }
    if (auto s = node.find("seed")) {
        const long long seed = s->integer();
        if (seed < 0) {
            s->fail("must be nonnegative");
        }
        cfg.seed = static_cast<std::uint64_t>(seed);
    }
    if (auto notes = node.find("notes")) {
        for (std::size_t i = 0; i < notes->size(); ++i) {
            cfg.notes.push_back((*notes)[i].string());
        }
    }

    // Transform eta positivity and the like are checked by the constructors.
    try {
        (void)build_cbfs(cfg);
    } catch (const InvalidParameter& e) {
        node.fail_at("cbfs", e.what());
    }
    return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path.string() + "'", "", 0);
    }
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config(os.str());
}

namespace {

Json vec_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out.push_back(v(i));
    }
    return out;
}

Json mat_json(const Matrix& m) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out.push_back(vec_json(m.row(i).transpose()));
    }
    return out;
}

Json linear_json(const LinearFunctionDesc& f) { return Json{{"type", "linear"}, {"slope", f.slope}}; }

Json grid_fields(Json out, const GridSpec& g) {
    out["lower"] = vec_json(g.lower);
    out["upper"] = vec_json(g.upper);
    out["nx"] = g.nx;
    out["ny"] = g.ny;
    return out;
}

struct TaskToJson {
    Json operator()(const EquilibriaTask& t) const {
        Json grid = Json::array();
        for (int g : t.grid) {
            grid.push_back(g);
        }
        return Json{{"type", "equilibria"},
                    {"interior", Json{{"lower", vec_json(t.lower)}, {"upper", vec_json(t.upper)}, {"grid", grid}}},
                    {"boundary_sweep", t.boundary_sweep}};
    }
    Json operator()(const JacobiansTask&) const { return Json{{"type", "jacobians"}}; }
    Json operator()(const EquivalenceTask& t) const {
        Json pairs = Json::array();
        for (const auto& [i, j] : t.pairs) {
            pairs.push_back(Json::array({i, j}));
        }
        return Json{{"type", "equivalence"}, {"pairs", pairs}, {"samples", t.samples}, {"tol", t.tol}};
    }
    Json operator()(const FieldTask& t) const {
        Json out = grid_fields(Json{{"type", "field"}}, t.grid);
        out["filtered"] = t.filtered;
        out["file"] = t.file;
        return out;
    }
    Json operator()(const SimulateTask& t) const {
        Json out{{"type", "simulate"}};
        if (!t.initial_states.empty()) {
            Json states = Json::array();
            for (const Vector& x : t.initial_states) {
                states.push_back(vec_json(x));
            }
            out["initial_states"] = states;
        }
        if (t.random_initial_states) {
            out["random_initial_states"] = Json{{"count", t.random_initial_states->count},
                                                {"lower", vec_json(t.random_initial_states->lower)},
                                                {"upper", vec_json(t.random_initial_states->upper)}};
        }
        out["horizon"] = t.horizon;
        out["dt"] = t.dt;
        out["filtered"] = t.filtered;
        out["record_stride"] = t.record_stride;
        out["file_prefix"] = t.file_prefix;
        return out;
    }
    Json operator()(const RoaTask& t) const {
        Json out = grid_fields(Json{{"type", "roa"}}, t.grid);
        out["horizon"] = t.horizon;
        out["dt"] = t.dt;
        out["filtered"] = t.filtered;
        out["file"] = t.file;
        return out;
    }
};

}  // namespace

Json to_json(const ScenarioConfig& cfg) {
    Json out;
    out["schema_version"] = cfg.schema_version;
    out["name"] = cfg.name;
    if (cfg.system.builtin) {
        out["system"] = Json{{"builtin", *cfg.system.builtin}};
    } else {
        out["system"] = Json{{"linear", Json{{"A", mat_json(*cfg.system.a)}, {"B", mat_json(*cfg.system.b)}}}};
    }
    if (cfg.nominal_gain) {
        out["nominal_gain"] = mat_json(*cfg.nominal_gain);
    }
    Json cbfs = Json::array();
    for (const CbfDesc& c : cfg.cbfs) {
        Json j;
        if (c.type == CbfDesc::Type::ball) {
            j["type"] = "ball";
            j["center"] = vec_json(c.center);
            j["radius"] = c.radius;
            j["form"] = c.form == BallForm::full ? "full" : "half";
        } else {
            j["type"] = "transform";
            j["base"] = c.base;
            j["a"] = c.a;
            j["b"] = c.b;
            if (c.gamma.type == GammaDesc::Type::linear) {
                j["gamma"] = Json{{"type", "linear"}, {"slope", c.gamma.c1}};
            } else {
                j["gamma"] = Json{{"type", "quadratic"}, {"c1", c.gamma.c1}, {"c2", c.gamma.c2}};
            }
            if (c.eta) {
                if (c.eta->type == EtaDesc::Type::constant) {
                    j["eta"] = Json{{"type", "constant"}, {"value", c.eta->value}};
                } else {
                    j["eta"] = Json{{"type", "shifted_quadratic"},
                                    {"center", vec_json(c.eta->center)},
                                    {"offset", c.eta->offset}};
                }
            }
        }
        j["alpha"] = linear_json(c.alpha);
        j["label"] = c.label;
        cbfs.push_back(j);
    }
    out["cbfs"] = cbfs;
    if (cfg.clf) {
        out["clf"] = Json{{"Q", mat_json(cfg.clf->q)}, {"beta", linear_json(cfg.clf->beta)}, {"xstar", vec_json(cfg.clf->xstar)}};
    }
    Json ctrl;
    ctrl["type"] = cfg.controller.type == ControllerKind::safety_filter ? "safety_filter" : "clf_cbf_qp";
    if (cfg.controller.g) {
        ctrl["G"] = Json{{"type", "matrix"}, {"value", mat_json(*cfg.controller.g)}};
    } else {
        ctrl["G"] = Json{{"type", "identity"}};
    }
    ctrl["p"] = cfg.controller.p;
    ctrl["cbfs"] = cfg.controller.cbfs;
    out["controller"] = ctrl;
    Json tasks = Json::array();
    for (const TaskDesc& t : cfg.tasks) {
        tasks.push_back(std::visit(TaskToJson{}, t));
    }
    out["tasks"] = tasks;
    out["output_dir"] = cfg.output_dir;
    out["seed"] = cfg.seed;
    if (!cfg.notes.empty()) {
        out["notes"] = cfg.notes;
    }
    return out;
}

std::string dump_config(const ScenarioConfig& config) { return to_json(config).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

std::vector<std::string> builtin_names() {
    return {"fig2", "fig2-h2a2", "fig3", "fig3-h2a1", "fig3-h1a2", "fig3-h2a2"};
}

namespace {

CbfDesc ball_desc(double cx, double cy, double r, BallForm form, double slope, std::string label) {
    CbfDesc c;
    c.type = CbfDesc::Type::ball;
    c.center = Eigen::Vector2d(cx, cy);
    c.radius = r;
    c.form = form;
    c.alpha.slope = slope;
    c.label = std::move(label);
    return c;
}

// (||x - (5,1)||^2 + 1) * h_base
CbfDesc eta_transform_desc(int base, double slope, std::string label) {
    CbfDesc c;
    c.type = CbfDesc::Type::transform;
    c.base = base;
    c.a = 0.0;
    c.b = 1.0;
    EtaDesc eta;
    eta.type = EtaDesc::Type::shifted_quadratic;
    eta.center = Eigen::Vector2d(5.0, 1.0);
    eta.offset = 1.0;
    c.eta = eta;
    c.alpha.slope = slope;
    c.label = std::move(label);
    return c;
}

GridSpec make_grid(double x0, double y0, double x1, double y1, int nx, int ny) {
    return GridSpec{Eigen::Vector2d(x0, y0), Eigen::Vector2d(x1, y1), nx, ny};
}

ScenarioConfig fig3_base() {
    ScenarioConfig cfg;
    cfg.name = "fig3";
    cfg.system.builtin = "single_integrator_2d";
    cfg.nominal_gain = Eigen::Matrix2d{{-1.0, 0.0}, {0.0, -5.0}};
    cfg.cbfs = {ball_desc(2.0, 0.0, 1.0, BallForm::full, 1.0, "h1a1"), eta_transform_desc(0, 1.0, "h2a1"),
                ball_desc(2.0, 0.0, 1.0, BallForm::full, 10.0, "h1a2"), eta_transform_desc(0, 10.0, "h2a2")};
    cfg.controller.type = ControllerKind::safety_filter;
    cfg.controller.cbfs = {0};

    EquilibriaTask eq;
    eq.lower = Eigen::Vector2d(-4.0, -4.0);
    eq.upper = Eigen::Vector2d(8.0, 4.0);
    eq.grid = {7, 7};
    SimulateTask sim;
    sim.initial_states = {Eigen::Vector2d(5.0, 0.2)};
    RoaTask roa;
    roa.grid = make_grid(-1.0, -3.0, 6.0, 3.0, 28, 24);
    cfg.tasks = {eq, JacobiansTask{}, EquivalenceTask{{{0, 1}, {2, 3}}, 256, 1e-8},
                 FieldTask{make_grid(0.0, -2.0, 4.0, 2.0, 81, 81), true, "field.csv"}, sim, roa};
    cfg.seed = 7;
    cfg.notes = {"Weight G = I with input matrix g = I."};
    return cfg;
}

ScenarioConfig fig2_base() {
    ScenarioConfig cfg;
    cfg.name = "fig2";
    cfg.system.builtin = "single_integrator_2d";
    cfg.nominal_gain = Matrix::Zero(2, 2);
    cfg.cbfs = {ball_desc(0.0, 3.0, 1.5, BallForm::half, 1.0, "h1a1"), eta_transform_desc(0, 10.0, "h2a2")};
    ClfDesc clf;
    clf.q = Eigen::Matrix2d{{6.0, 0.0}, {0.0, 1.0}};
    clf.beta.slope = 1.0;
    clf.xstar = Vector::Zero(2);
    cfg.clf = clf;
    cfg.controller.type = ControllerKind::clf_cbf_qp;
    cfg.controller.p = 1.0;
    cfg.controller.cbfs = {0};

    EquilibriaTask eq;
    eq.lower = Eigen::Vector2d(-4.0, -2.0);
    eq.upper = Eigen::Vector2d(4.0, 8.0);
    eq.grid = {7, 7};
    SimulateTask sim;
    sim.initial_states = {Eigen::Vector2d(0.3, 7.0)};
    RoaTask roa;
    roa.grid = make_grid(-4.0, -1.0, 4.0, 8.0, 24, 27);
    cfg.tasks = {eq, JacobiansTask{}, EquivalenceTask{{{0, 1}}, 256, 1e-8},
                 FieldTask{make_grid(-4.0, -1.0, 4.0, 8.0, 81, 81), true, "field.csv"}, sim, roa};
    cfg.seed = 7;
    cfg.notes = {"p = 1, beta(s) = s and G = I are chosen defaults.",
                 "Equilibrium locations do not depend on p (f = 0); stability labels were checked at p = 1 only."};
    return cfg;
}

}  // namespace

ScenarioConfig builtin_scenario(const std::string& name) {
    auto select = [](ScenarioConfig cfg, std::string n, int active) {
        cfg.name = std::move(n);
        cfg.controller.cbfs = {active};
        cfg.output_dir = "out/" + cfg.name;
        return cfg;
    };
    if (name == "fig3") return select(fig3_base(), name, 0);
    if (name == "fig3-h2a1") return select(fig3_base(), name, 1);
    if (name == "fig3-h1a2") return select(fig3_base(), name, 2);
    if (name == "fig3-h2a2") return select(fig3_base(), name, 3);
    if (name == "fig2") return select(fig2_base(), name, 0);
    if (name == "fig2-h2a2") return select(fig2_base(), name, 1);
    std::string valid;
    for (const std::string& n : builtin_names()) {
        valid += (valid.empty() ? "" : ", ") + n;
    }
    throw InvalidParameter("unknown scenario '" + name + "' (valid: " + valid + ")");
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

std::vector<BarrierPair> build_cbfs(const ScenarioConfig& config) {
    const int n = build_model(config).n;
    std::vector<BarrierPair> out;
    for (const CbfDesc& c : config.cbfs) {
        BarrierPair pair;
        if (c.type == CbfDesc::Type::ball) {
            pair = make_ball_cbf(c.center, c.radius, c.form, c.alpha.slope);
        } else {
            TransformStep step;
            step.a = c.a;
            step.b = c.b;
            step.gamma = c.gamma.type == GammaDesc::Type::linear ? ScalarMap::linear(c.gamma.c1)
                                                                 : ScalarMap::quadratic(c.gamma.c1, c.gamma.c2);
            if (c.eta) {
                step.eta = c.eta->type == EtaDesc::Type::constant
                               ? StateFunction::constant(n, c.eta->value)
                               : StateFunction::shifted_quadratic(c.eta->center, c.eta->offset);
            }
            step.alpha = ClassKFunction::linear(c.alpha.slope);
            pair = transform_cbf(out.at(static_cast<std::size_t>(c.base)), step);
        }
        pair.label = c.label;
        out.push_back(std::move(pair));
    }
    return out;
}

SystemModel build_model(const ScenarioConfig& config) {
    SystemModel model = config.system.builtin ? SystemModel::single_integrator_2d()
                                              : SystemModel::linear(*config.system.a, *config.system.b);
    if (config.nominal_gain) {
        model = model.with_nominal_gain(*config.nominal_gain);
    }
    return model;
}

namespace {

ControllerSpec base_controller(const ScenarioConfig& config) {
    ControllerSpec spec;
    spec.kind = config.controller.type;
    spec.model = build_model(config);
    if (config.clf) {
        spec.clf = LyapunovPair::quadratic(config.clf->q, config.clf->xstar,
                                           ClassKFunction::linear(config.clf->beta.slope));
    }
    if (config.controller.g) {
        const Matrix g = *config.controller.g;
        spec.weight = [g](const Vector&) { return g; };
    } else {
        spec.weight = identity_weight(spec.model.m);
    }
    spec.p = config.controller.p;
    return spec;
}

}  // namespace

ControllerSpec build_controller(const ScenarioConfig& config) {
    ControllerSpec spec = base_controller(config);
    const std::vector<BarrierPair> all = build_cbfs(config);
    for (int i : config.controller.cbfs) {
        spec.cbfs.push_back(all.at(static_cast<std::size_t>(i)));
    }
    return spec;
}

ControllerSpec build_controller_for(const ScenarioConfig& config, std::size_t cbf_index) {
    ControllerSpec spec = base_controller(config);
    spec.cbfs.push_back(build_cbfs(config).at(cbf_index));
    return spec;
}

}  // namespace barrier_lab
