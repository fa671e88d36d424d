#include "barrier_lab/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

namespace barrier_lab {

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

Json complex_json(const std::vector<Complex>& values) {
    Json out = Json::array();
    for (const Complex& c : values) {
        out.push_back(Json::array({c.real(), c.imag()}));
    }
    return out;
}

template <class T>
Json optional_json(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write '" + path.string() + "'");
    }
    out << text;
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

std::string fmt(double v, const char* spec = "%.9g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::string vec_text(const Vector& v) {
    std::string out = "(";
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out += (i ? ", " : "") + fmt(std::abs(v(i)) < 5e-13 ? 0.0 : v(i), "%.6f");
    }
    return out + ")";
}

double hausdorff(const std::vector<Vector>& a, const std::vector<Vector>& b) {
    if (a.empty() && b.empty()) {
        return 0.0;
    }
    if (a.empty() || b.empty()) {
        return std::numeric_limits<double>::infinity();
    }
    auto directed = [](const std::vector<Vector>& p, const std::vector<Vector>& q) {
        double worst = 0.0;
        for (const Vector& x : p) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vector& y : q) {
                best = std::min(best, (x - y).norm());
            }
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(directed(a, b), directed(b, a));
}

// Options of the first equilibria task, or a generic box around the origin.
std::pair<BoundarySearchOptions, InteriorSearchOptions> search_options(const ScenarioConfig& config, int n) {
    BoundarySearchOptions boundary;
    InteriorSearchOptions interior;
    interior.lower = Vector::Constant(n, -10.0);
    interior.upper = Vector::Constant(n, 10.0);
    interior.grid.assign(static_cast<std::size_t>(n), 5);
    for (const TaskDesc& t : config.tasks) {
        if (const auto* eq = std::get_if<EquilibriaTask>(&t)) {
            boundary.sweep = eq->boundary_sweep;
            interior.lower = eq->lower;
            interior.upper = eq->upper;
            interior.grid = eq->grid;
            break;
        }
    }
    return {boundary, interior};
}

struct SpectrumEntry {
    std::size_t equilibrium = 0;
    std::optional<SpectralResult> result;
    std::optional<double> fd_max_difference;
    std::optional<double> left_eigen_residual;
    std::string error;
};

struct RunState {
    const ScenarioConfig& config;
    std::filesystem::path out;
    ControllerSpec spec;
    std::optional<EquilibriumSearch> equilibria;
    std::vector<SpectrumEntry> spectra;
    bool spectra_done = false;
    std::vector<std::string> summary_lines;
};

void ensure_equilibria(RunState& st) {
    if (st.equilibria) {
        return;
    }
    const auto [boundary, interior] = search_options(st.config, st.spec.model.n);
    st.equilibria = find_equilibria(st.spec, boundary, interior);
}

std::vector<Vector> equilibrium_points(const RunState& st) {
    std::vector<Vector> out;
    for (const EquilibriumReport& r : st.equilibria->equilibria) {
        out.push_back(r.x_star);
    }
    return out;
}

Json equilibria_json(const RunState& st) {
    Json list = Json::array();
    for (const EquilibriumReport& r : st.equilibria->equilibria) {
        list.push_back(to_json(r));
    }
    return Json{{"scenario", st.config.name},
                {"controller", to_string(st.spec.kind)},
                {"equilibria", list},
                {"warnings", st.equilibria->warnings},
                {"errors", st.equilibria->errors}};
}

SpectrumEntry spectrum_for(const RunState& st, EquilibriumReport& report, std::size_t index) {
    SpectrumEntry entry;
    entry.equilibrium = index;
    ConstancyOptions constancy;
    constancy.seed = st.config.seed;
    try {
        entry.result = attach_spectrum(report, st.spec, constancy);
    } catch (const Error& e) {
        entry.error = e.what();
        return entry;
    }
    if (entry.result && report.kind == EquilibriumKind::boundary) {
        const ControllerSpec& spec = st.spec;
        const Matrix fd = fd_jacobian([&spec](const Vector& y) { return closed_loop_field(spec, y, true); },
                                      report.x_star);
        entry.fd_max_difference = (fd - entry.result->jacobian).cwiseAbs().maxCoeff();
        const BarrierPair& pair = spec.cbfs.at(static_cast<std::size_t>(report.cbf_index));
        const Vector grad = pair.grad_h(report.x_star);
        const double ap = pair.alpha.derivative(0.0);
        entry.left_eigen_residual =
            (grad.transpose() * entry.result->jacobian + ap * grad.transpose()).cwiseAbs().maxCoeff();
    }
    return entry;
}

Json spectra_json(const RunState& st) {
    Json list = Json::array();
    for (const SpectrumEntry& e : st.spectra) {
        const EquilibriumReport& r = st.equilibria->equilibria.at(e.equilibrium);
        Json j;
        j["x_star"] = vec_json(r.x_star);
        j["kind"] = to_string(r.kind);
        j["desirability"] = to_string(r.desirability);
        if (e.result) {
            j["spectrum"] = to_json(*e.result);
        } else {
            j["spectrum"] = nullptr;
        }
        j["fd_max_difference"] = optional_json(e.fd_max_difference);
        j["left_eigen_residual"] = optional_json(e.left_eigen_residual);
        if (!e.error.empty()) {
            j["error"] = e.error;
        }
        list.push_back(j);
    }
    return Json{{"scenario", st.config.name}, {"spectra", list}};
}

// Returns an error message, empty on success.
std::string run_equilibria(RunState& st, const EquilibriaTask& task) {
    BoundarySearchOptions boundary;
    boundary.sweep = task.boundary_sweep;
    InteriorSearchOptions interior;
    interior.lower = task.lower;
    interior.upper = task.upper;
    interior.grid = task.grid;
    st.equilibria = find_equilibria(st.spec, boundary, interior);
    st.spectra.clear();
    st.spectra_done = false;
    write_json(st.out / "equilibria.json", equilibria_json(st));
    std::size_t undesirable = 0;
    for (const auto& r : st.equilibria->equilibria) {
        undesirable += r.desirability == Desirability::undesirable ? 1 : 0;
    }
    st.summary_lines.push_back("equilibria: " + std::to_string(st.equilibria->equilibria.size()) + " found (" +
                               std::to_string(undesirable) + " undesirable)");
    if (!st.equilibria->errors.empty()) {
        return "equilibria: " + st.equilibria->errors.front();
    }
    return {};
}

std::string run_jacobians(RunState& st) {
    ensure_equilibria(st);
    st.spectra.clear();
    std::string error;
    auto& reports = st.equilibria->equilibria;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        SpectrumEntry entry = spectrum_for(st, reports[i], i);
        if (!entry.error.empty() && error.empty()) {
            error = "jacobians at " + vec_text(reports[i].x_star) + ": " + entry.error;
        }
        st.spectra.push_back(std::move(entry));
    }
    st.spectra_done = true;
    write_json(st.out / "spectra.json", spectra_json(st));
    write_json(st.out / "equilibria.json", equilibria_json(st));
    st.summary_lines.push_back("jacobians: " + std::to_string(st.spectra.size()) + " equilibria analysed");
    return error;
}

std::string run_equivalence(RunState& st, const EquivalenceTask& task) {
    const std::vector<BarrierPair> all = build_cbfs(st.config);
    Json list = Json::array();
    std::string error;
    for (const auto& [i, j] : task.pairs) {
        const BarrierPair& h1 = all.at(static_cast<std::size_t>(i));
        const BarrierPair& h2 = all.at(static_cast<std::size_t>(j));
        Json entry{{"pair", Json::array({i, j})}, {"labels", Json::array({h1.label, h2.label})}};
        try {
            const std::vector<Vector> samples = default_boundary_samples(h1, task.samples);
            const EquivalenceReport rep = hessian_equivalence(h1, h2, samples, task.tol);
            entry["report"] = to_json(rep);
            st.summary_lines.push_back("equivalence " + h1.label + " ~ " + h2.label + ": " + to_string(rep.verdict) +
                                       " (max Hessian residual " + fmt(rep.max_hessian_residual(), "%.3g") + ")");
        } catch (const Error& e) {
            entry["error"] = e.what();
            if (error.empty()) {
                error = "equivalence " + h1.label + " ~ " + h2.label + ": " + e.what();
            }
        }
        list.push_back(entry);
    }
    write_json(st.out / "equivalence.json", Json{{"scenario", st.config.name}, {"tol", task.tol}, {"pairs", list}});
    return error;
}

std::string run_field(RunState& st, const FieldTask& task) {
    const std::vector<FieldSample> samples = field_grid(st.spec, task.grid, task.filtered);
    std::ofstream out(st.out / task.file, std::ios::binary);
    write_field_csv(out, samples);
    std::size_t masked = 0;
    for (const FieldSample& s : samples) {
        masked += s.masked ? 1 : 0;
    }
    st.summary_lines.push_back("field: " + std::to_string(samples.size()) + " nodes (" + std::to_string(masked) +
                               " masked) -> " + task.file);
    return {};
}

std::vector<Vector> draw_safe_states(const ControllerSpec& spec, const RandomStates& rs, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Vector> out;
    const std::size_t max_attempts = 1000 * rs.count;
    for (std::size_t attempt = 0; attempt < max_attempts && out.size() < rs.count; ++attempt) {
        Vector x(rs.lower.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            x(i) = rs.lower(i) + unit(rng) * (rs.upper(i) - rs.lower(i));
        }
        const bool safe = std::all_of(spec.cbfs.begin(), spec.cbfs.end(),
                                      [&x](const BarrierPair& p) { return p.h(x) >= 0.0; });
        if (safe) {
            out.push_back(x);
        }
    }
    if (out.size() < rs.count) {
        throw Error("could not draw " + std::to_string(rs.count) + " safe initial states in the box");
    }
    return out;
}

std::string run_simulate(RunState& st, const SimulateTask& task) {
    ensure_equilibria(st);
    std::vector<Vector> starts = task.initial_states;
    if (task.random_initial_states) {
        const std::vector<Vector> drawn = draw_safe_states(st.spec, *task.random_initial_states, st.config.seed);
        starts.insert(starts.end(), drawn.begin(), drawn.end());
    }
    IntegrateOptions options;
    options.horizon = task.horizon;
    options.dt = task.dt;
    options.filtered = task.filtered;
    options.attractors = equilibrium_points(st);
    options.record_stride = task.record_stride;

    std::vector<Trajectory> trajectories(starts.size());
    std::vector<std::string> errors(starts.size());
    parallel_for(starts.size(), [&](std::size_t i) {
        try {
            trajectories[i] = integrate(st.spec, starts[i], options);
        } catch (const Error& e) {
            errors[i] = e.what();
        }
    });

    Json list = Json::array();
    std::string error;
    std::size_t audits_passed = 0;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        Json entry{{"x0", vec_json(starts[i])}};
        if (!errors[i].empty()) {
            entry["error"] = errors[i];
            if (error.empty()) {
                error = "simulate from " + vec_text(starts[i]) + ": " + errors[i];
            }
            list.push_back(entry);
            continue;
        }
        const Trajectory& traj = trajectories[i];
        const std::string file = task.file_prefix + "_" + std::to_string(i) + ".csv";
        std::ofstream out(st.out / file, std::ios::binary);
        write_trajectory_csv(out, traj);
        entry["file"] = file;
        entry["terminal"] = traj.terminal.to_string();
        entry["final_state"] = vec_json(traj.states.back());
        entry["min_h"] = traj.min_h;
        bool ok = true;
        for (double h : traj.min_h) {
            ok = ok && h >= -1e-6;
        }
        entry["invariance_audit"] = task.filtered ? Json(ok ? "pass" : "fail") : Json("not-applicable");
        audits_passed += ok ? 1 : 0;
        if (!traj.terminal.message.empty()) {
            entry["message"] = traj.terminal.message;
        }
        list.push_back(entry);
    }
    write_json(st.out / (task.file_prefix + "_runs.json"), Json{{"scenario", st.config.name},
                                                            {"horizon", task.horizon},
                                                            {"dt", task.dt},
                                                            {"filtered", task.filtered},
                                                            {"trajectories", list}});
    std::string line = "simulate: " + std::to_string(starts.size()) + " trajectories";
    if (task.filtered) {
        line += ", forward invariance " + std::to_string(audits_passed) + "/" + std::to_string(starts.size());
    }
    st.summary_lines.push_back(line);
    return error;
}

std::string run_roa(RunState& st, const RoaTask& task) {
    ensure_equilibria(st);
    const std::vector<RoaCell> cells =
        roa_grid(st.spec, task.grid, equilibrium_points(st), task.horizon, task.dt, task.filtered);
    std::ofstream out(st.out / task.file, std::ios::binary);
    write_roa_csv(out, cells);
    std::map<std::string, std::size_t> counts;
    for (const RoaCell& c : cells) {
        ++counts[c.label];
    }
    std::string line = "roa: " + std::to_string(cells.size()) + " cells ->";
    for (const auto& [label, count] : counts) {
        line += " " + label + ":" + std::to_string(count);
    }
    st.summary_lines.push_back(line);
    return {};
}

std::string summary_text(const RunState& st, const std::vector<std::string>& errors) {
    std::ostringstream os;
    os << "scenario: " << st.config.name << "\n";
    os << "controller: " << to_string(st.spec.kind) << ", active CBFs:";
    for (const BarrierPair& p : st.spec.cbfs) {
        os << " " << p.label;
    }
    os << "\n\n";
    if (st.equilibria) {
        char header[256];
        std::snprintf(header, sizeof(header), "%-28s %-9s %-13s %-22s %-14s %s\n", "x*", "kind", "desirability",
                      "stability", "multiplier", "eigenvalues");
        os << header;
        for (const EquilibriumReport& r : st.equilibria->equilibria) {
            std::string mult = "-";
            if (r.delta_sf) {
                mult = "dsf=" + fmt(*r.delta_sf, "%.6g");
            } else if (r.lambda1 && r.lambda2) {
                mult = "l=" + fmt(*r.lambda1, "%.5g") + "," + fmt(*r.lambda2, "%.5g");
            }
            std::string eig;
            for (const Complex& c : r.eigenvalues) {
                eig += (eig.empty() ? "" : " ") + fmt(c.real(), "%.6g");
                if (c.imag() != 0.0) {
                    eig += (c.imag() > 0 ? "+" : "") + fmt(c.imag(), "%.6g") + "i";
                }
            }
            char line[512];
            std::snprintf(line, sizeof(line), "%-28s %-9s %-13s %-22s %-14s %s\n", vec_text(r.x_star).c_str(),
                          to_string(r.kind).c_str(), to_string(r.desirability).c_str(),
                          r.stability ? to_string(*r.stability).c_str() : "-", mult.c_str(),
                          eig.empty() ? "-" : eig.c_str());
            os << line;
        }
        os << "\n";
    }
    for (const std::string& l : st.summary_lines) {
        os << l << "\n";
    }
    if (!st.config.notes.empty()) {
        os << "\nnotes:\n";
        for (const std::string& n : st.config.notes) {
            os << "  - " << n << "\n";
        }
    }
    os << "\nstatus: " << (errors.empty() ? "ok" : "task error") << "\n";
    for (const std::string& e : errors) {
        os << "  error: " << e << "\n";
    }
    return os.str();
}

}  // namespace

Json to_json(const EquilibriumReport& r) {
    Json j;
    j["x_star"] = vec_json(r.x_star);
    j["kind"] = to_string(r.kind);
    j["desirability"] = to_string(r.desirability);
    j["controller"] = to_string(r.controller);
    j["cbf_index"] = r.cbf_index;
    j["lambda1"] = optional_json(r.lambda1);
    j["lambda2"] = optional_json(r.lambda2);
    j["delta_sf"] = optional_json(r.delta_sf);
    j["residual"] = r.residual;
    j["h_value"] = r.h_value;
    j["stability"] = r.stability ? Json(to_string(*r.stability)) : Json(nullptr);
    j["jacobian"] = r.jacobian ? mat_json(*r.jacobian) : Json(nullptr);
    j["eigenvalues"] = complex_json(r.eigenvalues);
    return j;
}

Json to_json(const SpectralResult& s) {
    Json j;
    j["jacobian"] = mat_json(s.jacobian);
    j["char_poly"] = s.char_poly;
    j["eigenvalues"] = complex_json(s.eigenvalues);
    j["known_factor_root"] = optional_json(s.known_factor_root);
    j["reduced_poly"] = s.reduced_poly;
    j["division_remainder"] = s.division_remainder;
    j["stability"] = to_string(s.stability);
    return j;
}

Json to_json(const EquivalenceReport& r) {
    Json j;
    j["verdict"] = to_string(r.verdict);
    j["max_gradient_residual"] = r.max_gradient_residual();
    j["max_hessian_residual"] = r.max_hessian_residual();
    j["min_zeta"] = r.min_zeta();
    Json samples = Json::array();
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        Json s{{"x", vec_json(r.samples[i])}, {"zeta", r.zeta[i]}, {"gradient_residual", r.gradient_residual[i]}};
        if (i < r.zeta_tilde.size()) {
            s["zeta_tilde"] = vec_json(r.zeta_tilde[i]);
            s["hessian_residual"] = r.hessian_residual[i];
        }
        samples.push_back(s);
    }
    j["samples"] = samples;
    return j;
}

RunResult run_scenario(const ScenarioConfig& config, const std::filesystem::path& out_dir) {
    RunResult result;
    std::filesystem::create_directories(out_dir);
    RunState st{config, out_dir, build_controller(config), std::nullopt, {}, false, {}};
    for (std::size_t i = 0; i < config.tasks.size(); ++i) {
        std::string error;
        try {
            error = std::visit(
                [&st](const auto& task) -> std::string {
                    using T = std::decay_t<decltype(task)>;
                    if constexpr (std::is_same_v<T, EquilibriaTask>) {
                        return run_equilibria(st, task);
                    } else if constexpr (std::is_same_v<T, JacobiansTask>) {
                        return run_jacobians(st);
                    } else if constexpr (std::is_same_v<T, EquivalenceTask>) {
                        return run_equivalence(st, task);
                    } else if constexpr (std::is_same_v<T, FieldTask>) {
                        return run_field(st, task);
                    } else if constexpr (std::is_same_v<T, SimulateTask>) {
                        return run_simulate(st, task);
                    } else {
                        return run_roa(st, task);
                    }
                },
                config.tasks[i]);
        } catch (const std::exception& e) {
            error = e.what();
        }
        if (!error.empty()) {
            result.errors.push_back("task " + std::to_string(i) + ": " + error);
            break;
        }
    }
    result.exit_code = result.errors.empty() ? 0 : 1;
    result.summary = summary_text(st, result.errors);
    write_text(out_dir / "summary.txt", result.summary);
    return result;
}

CompareResult compare_pairs(const ScenarioConfig& config, const std::filesystem::path& out_dir) {
    constexpr double kHausdorffTol = 1e-6;
    constexpr double kPolyTol = 1e-7;
    constexpr double kFieldTol = 1e-9;

    const std::vector<BarrierPair> all = build_cbfs(config);
    if (all.size() < 2) {
        throw PreconditionError("compare needs at least two CBFs");
    }
    const std::vector<Vector> samples = default_boundary_samples(all[0], 256);
    for (std::size_t i = 1; i < all.size(); ++i) {
        EquivalenceReport grad;
        try {
            grad = gradient_report(all[0], all[i], samples);
        } catch (const PreconditionError& e) {
            throw PreconditionError("CBFs '" + all[0].label + "' and '" + all[i].label +
                                    "' do not share their zero level set: " + e.what());
        }
        if (grad.verdict == EquivalenceVerdict::rejected) {
            throw PreconditionError("CBFs '" + all[0].label + "' and '" + all[i].label +
                                    "' fail the gradient relation on the boundary");
        }
    }

    const int n = build_model(config).n;
    const auto [boundary, interior] = search_options(config, n);
    ConstancyOptions constancy;
    constancy.seed = config.seed;

    struct PairData {
        ControllerSpec spec;
        EquilibriumSearch search;
        std::vector<std::optional<SpectralResult>> spectra;
    };
    std::vector<PairData> data;
    Json per_pair = Json::array();
    for (std::size_t i = 0; i < all.size(); ++i) {
        PairData d{build_controller_for(config, i), {}, {}};
        d.search = find_equilibria(d.spec, boundary, interior);
        Json eqs = Json::array();
        for (EquilibriumReport& r : d.search.equilibria) {
            d.spectra.push_back(attach_spectrum(r, d.spec, constancy));
            Json e = to_json(r);
            if (d.spectra.back()) {
                e["reduced_poly"] = d.spectra.back()->reduced_poly;
                e["known_factor_root"] = optional_json(d.spectra.back()->known_factor_root);
            }
            eqs.push_back(e);
        }
        per_pair.push_back(Json{{"label", all[i].label},
                                {"alpha_prime0", all[i].alpha.derivative(0.0)},
                                {"equilibria", eqs}});
        data.push_back(std::move(d));
    }

    auto undesirable_points = [](const PairData& d) {
        std::vector<Vector> pts;
        for (const EquilibriumReport& r : d.search.equilibria) {
            if (r.desirability == Desirability::undesirable) {
                pts.push_back(r.x_star);
            }
        }
        return pts;
    };
    auto interior_points = [](const PairData& d) {
        std::vector<Vector> pts;
        for (const EquilibriumReport& r : d.search.equilibria) {
            if (r.kind == EquilibriumKind::interior) {
                pts.push_back(r.x_star);
            }
        }
        return pts;
    };

    const std::vector<Vector> field_samples = default_boundary_samples(all[0], 512);
    bool passed = true;
    Json comparisons = Json::array();
    const PairData& ref = data[0];
    for (std::size_t i = 1; i < data.size(); ++i) {
        const PairData& other = data[i];
        const double hd = hausdorff(undesirable_points(ref), undesirable_points(other));
        const double hd_interior = hausdorff(interior_points(ref), interior_points(other));

        double poly_diff = 0.0;
        bool poly_ok = true;
        Json per_eq = Json::array();
        for (std::size_t a = 0; a < ref.search.equilibria.size(); ++a) {
            const EquilibriumReport& ra = ref.search.equilibria[a];
            if (ra.desirability != Desirability::undesirable || !ref.spectra[a]) {
                continue;
            }
            std::optional<std::size_t> match;
            for (std::size_t b = 0; b < other.search.equilibria.size(); ++b) {
                if ((other.search.equilibria[b].x_star - ra.x_star).norm() < kHausdorffTol) {
                    match = b;
                }
            }
            Json e{{"x_star", vec_json(ra.x_star)}};
            if (!match || !other.spectra[*match]) {
                e["verdict"] = "unmatched";
                poly_ok = false;
            } else {
                const InvarianceVerdict v = spectral_invariance_check(
                    ref.spectra[a]->jacobian, all[0].alpha.derivative(0.0), other.spectra[*match]->jacobian,
                    all[i].alpha.derivative(0.0), kPolyTol);
                e["verdict"] = to_string(v.outcome);
                e["max_coefficient_difference"] = v.max_coefficient_difference;
                e["known_factor_roots"] = Json::array({-all[0].alpha.derivative(0.0), -all[i].alpha.derivative(0.0)});
                poly_diff = std::max(poly_diff, v.max_coefficient_difference);
                poly_ok = poly_ok && v.passed();
            }
            per_eq.push_back(e);
        }

        double field_diff = 0.0;
        for (const Vector& x : field_samples) {
            const Vector fa = closed_loop_field(ref.spec, x, true);
            const Vector fb = closed_loop_field(other.spec, x, true);
            field_diff = std::max(field_diff, (fa - fb).cwiseAbs().maxCoeff());
        }

        const bool hd_ok = hd < kHausdorffTol;
        const bool interior_ok = hd_interior < kHausdorffTol;
        const bool field_ok = field_diff < kFieldTol;
        passed = passed && hd_ok && interior_ok && poly_ok && field_ok;
        comparisons.push_back(Json{{"pair", Json::array({all[0].label, all[i].label})},
                                   {"undesirable_hausdorff", hd},
                                   {"undesirable_hausdorff_pass", hd_ok},
                                   {"interior_hausdorff", hd_interior},
                                   {"interior_hausdorff_pass", interior_ok},
                                   {"reduced_poly_max_difference", poly_diff},
                                   {"reduced_poly_pass", poly_ok},
                                   {"per_equilibrium", per_eq},
                                   {"boundary_field_max_difference", field_diff},
                                   {"boundary_field_pass", field_ok}});
    }

    CompareResult result;
    result.passed = passed;
    result.report = Json{{"scenario", config.name},
                         {"tolerances", Json{{"hausdorff", kHausdorffTol},
                                             {"reduced_poly", kPolyTol},
                                             {"boundary_field", kFieldTol}}},
                         {"pairs", per_pair},
                         {"comparisons", comparisons},
                         {"passed", passed}};
    std::filesystem::create_directories(out_dir);
    write_json(out_dir / "invariance_report.json", result.report);
    return result;
}

}  // namespace barrier_lab
