#include "kmor/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace kmor {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Configuration parsing

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
    return j.contains(key) ? get<T>(j, key, where) : fallback;
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

FilamentLoop parse_loop(const json& j, const std::string& where) {
    check_keys(j, {"radius", "z", "offset", "wire_radius", "resistance"}, where);
    FilamentLoop lp;
    lp.radius = get<double>(j, "radius", where);
    lp.z = get_or<double>(j, "z", 0.0, where);
    lp.offset = get_or<double>(j, "offset", 0.0, where);
    lp.wire_radius = get_or<double>(j, "wire_radius", lp.wire_radius, where);
    lp.resistance = get_or<double>(j, "resistance", lp.resistance, where);
    return lp;
}

ModelConfig parse_model(const json& j) {
    const std::string w = "model";
    check_keys(j, {"loops", "shell", "sources", "constraints", "jitter"}, w);
    ModelConfig m;
    if (j.contains("shell")) {
        const json& s = j.at("shell");
        check_keys(s, {"n", "r0", "a", "kappa", "wire_radius", "resistance"}, "model.shell");
        try {
            m.spec.loops = shell_rings(get<int>(s, "n", "model.shell"), get<double>(s, "r0", "model.shell"),
                                       get<double>(s, "a", "model.shell"),
                                       get_or<double>(s, "kappa", 1.0, "model.shell"),
                                       get<double>(s, "wire_radius", "model.shell"),
                                       get<double>(s, "resistance", "model.shell"));
        } catch (const GeometryError& e) {
            throw ConfigError(e.what());
        }
    }
    if (j.contains("loops")) {
        const json& loops = j.at("loops");
        require(loops.is_array(), "model.loops: expected an array");
        for (std::size_t i = 0; i < loops.size(); ++i) {
            m.spec.loops.push_back(parse_loop(loops[i], "model.loops[" + std::to_string(i) + "]"));
        }
    }
    require(!m.spec.loops.empty(), "model: needs 'loops' or 'shell'");
    if (j.contains("sources")) {
        const json& src = j.at("sources");
        require(src.is_array(), "model.sources: expected an array");
        for (std::size_t i = 0; i < src.size(); ++i) {
            const std::string sw = "model.sources[" + std::to_string(i) + "]";
            check_keys(src[i], {"name", "family", "loop", "target", "waveform"}, sw);
            SourceSpec s;
            s.name = get<std::string>(src[i], "name", sw);
            s.family = parse_family(get<std::string>(src[i], "family", sw));
            if (s.family == SourceFamily::volt) {
                s.target = get<Index>(src[i], "target", sw);
            } else {
                s.loop = parse_loop(src[i].at("loop"), sw + ".loop");
            }
            s.waveform = get_or<std::string>(src[i], "waveform", "", sw);
            m.spec.sources.push_back(s);
        }
    }
    if (j.contains("constraints")) {
        const json& cs = j.at("constraints");
        require(cs.is_array(), "model.constraints: expected an array");
        for (std::size_t i = 0; i < cs.size(); ++i) {
            const std::string cw = "model.constraints[" + std::to_string(i) + "]";
            check_keys(cs[i], {"members", "waveform"}, cw);
            ConstraintGroup g;
            g.members = get<std::vector<Index>>(cs[i], "members", cw);
            g.waveform = get<std::string>(cs[i], "waveform", cw);
            m.constraints.push_back(g);
        }
    }
    m.jitter = get_or<double>(j, "jitter", 0.0, w);
    require(m.jitter >= 0.0, "model.jitter must be non-negative");
    return m;
}

SolverConfig parse_solver(const json& j) {
    const std::string w = "solver";
    check_keys(j, {"dt", "t_fin", "method", "timing_repeats"}, w);
    SolverConfig s;
    s.dt = get<double>(j, "dt", w);
    s.t_fin = get<double>(j, "t_fin", w);
    s.method = parse_solve_method(get_or<std::string>(j, "method", "direct", w));
    s.timing_repeats = get_or<int>(j, "timing_repeats", 1, w);
    require(s.dt > 0.0 && s.t_fin >= s.dt, "solver: need dt > 0 and t_fin >= dt");
    require(s.timing_repeats >= 1, "solver.timing_repeats must be >= 1");
    return s;
}

MorConfig parse_mor(const json& j) {
    const std::string w = "mor";
    check_keys(j, {"mode", "eps_w", "tol_svd", "eps_mor", "k_max", "wavelet", "max_level", "dt_wavelet",
                   "droptol", "residual"},
               w);
    MorConfig m;
    m.bmor.mode = parse_bmor_mode(get_or<std::string>(j, "mode", bmor_mode_name(m.bmor.mode), w));
    m.bmor.eps_w = get_or<double>(j, "eps_w", m.bmor.eps_w, w);
    m.bmor.tol_svd = get_or<double>(j, "tol_svd", m.bmor.tol_svd, w);
    m.bmor.wavelet = parse_wavelet(get_or<std::string>(j, "wavelet", wavelet_name(m.bmor.wavelet), w));
    m.bmor.max_level = get_or<int>(j, "max_level", m.bmor.max_level, w);
    m.bmor.dt_wavelet = get_or<double>(j, "dt_wavelet", m.bmor.dt_wavelet, w);
    m.bmor.droptol = get_or<double>(j, "droptol", m.bmor.droptol, w);
    m.eps_mor = get_or<double>(j, "eps_mor", m.eps_mor, w);
    m.k_max = get_or<int>(j, "k_max", m.k_max, w);
    m.residual = parse_residual_kind(get_or<std::string>(j, "residual", residual_kind_name(m.residual), w));
    require(m.eps_mor > 0.0 && m.k_max >= 1, "mor: need eps_mor > 0 and k_max >= 1");
    require(m.bmor.eps_w >= 0.0 && m.bmor.tol_svd >= 0.0 && m.bmor.dt_wavelet >= 0.0,
            "mor: tolerances must be non-negative");
    return m;
}

Index source_index(const ModelConfig& m, const json& ref, const std::string& where) {
    std::vector<Index> axi;
    for (std::size_t i = 0; i < m.spec.sources.size(); ++i) {
        if (m.spec.sources[i].family == SourceFamily::axi) axi.push_back(static_cast<Index>(i));
    }
    if (ref.is_number_integer()) {
        const auto k = ref.get<Index>();
        require(k >= 0 && k < static_cast<Index>(axi.size()), where + ": axi source index out of range");
        return k;
    }
    require(ref.is_string(), where + ": expected a source name or axi index");
    const auto name = ref.get<std::string>();
    for (std::size_t k = 0; k < axi.size(); ++k) {
        if (m.spec.sources[static_cast<std::size_t>(axi[k])].name == name) return static_cast<Index>(k);
    }
    throw ConfigError(where + ": no axi source named '" + name + "'");
}

NullfieldConfig parse_nullfield(const json& j, const ModelConfig& m) {
    const std::string w = "nullfield";
    check_keys(j, {"points", "controls", "method", "full_reference"}, w);
    NullfieldConfig n;
    for (const auto& p : j.at("points")) {
        require(p.is_array() && p.size() == 2, "nullfield.points: each point is [r, z]");
        n.points.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    require(!n.points.empty(), "nullfield.points must not be empty");
    for (const auto& c : j.at("controls")) n.controls.push_back(source_index(m, c, "nullfield.controls"));
    require(!n.controls.empty(), "nullfield.controls must not be empty");
    n.method = parse_solve_method(get_or<std::string>(j, "method", "modal", w));
    n.full_reference = get_or<bool>(j, "full_reference", true, w);
    return n;
}

SurrogateConfig parse_surrogate(const json& j) {
    const std::string w = "surrogate";
    check_keys(j, {"ranges", "cs_source", "pf_source", "n_samples", "n_pod", "pod_method", "hidden",
                   "learning_rate", "epochs", "batch_size", "validation_fraction", "test_samples", "tolerance"},
               w);
    SurrogateConfig s;
    if (j.contains("ranges")) {
        const json& r = j.at("ranges");
        check_keys(r, {"a_cs", "t_r_cs", "a_pf", "t_r_pf", "t_fin"}, "surrogate.ranges");
        const char* names[kNumParams] = {"a_cs", "t_r_cs", "a_pf", "t_r_pf", "t_fin"};
        for (std::size_t i = 0; i < kNumParams; ++i) {
            if (!r.contains(names[i])) continue;
            const auto v = get<std::vector<double>>(r, names[i], "surrogate.ranges");
            require(v.size() == 2, std::string("surrogate.ranges.") + names[i] + ": expected [lo, hi]");
            s.ranges.r[i] = {v[0], v[1]};
        }
    }
    s.ranges.validate();
    s.cs_source = get<std::string>(j, "cs_source", w);
    s.pf_source = get<std::string>(j, "pf_source", w);
    s.n_samples = get_or<int>(j, "n_samples", s.n_samples, w);
    s.n_pod = get_or<int>(j, "n_pod", s.n_pod, w);
    s.pod_method = parse_pod_method(get_or<std::string>(j, "pod_method", "svd", w));
    s.train.hidden = get_or<std::vector<int>>(j, "hidden", s.train.hidden, w);
    s.train.learning_rate = get_or<double>(j, "learning_rate", s.train.learning_rate, w);
    s.train.epochs = get_or<int>(j, "epochs", s.train.epochs, w);
    s.train.batch_size = get_or<int>(j, "batch_size", s.train.batch_size, w);
    s.train.validation_fraction = get_or<double>(j, "validation_fraction", s.train.validation_fraction, w);
    s.test_samples = get_or<int>(j, "test_samples", s.test_samples, w);
    s.tolerance = get_or<double>(j, "tolerance", s.tolerance, w);
    require(s.n_samples >= 1 && s.n_pod >= 1 && s.test_samples >= 0, "surrogate: sample counts must be positive");
    require(s.n_pod <= s.n_samples, "surrogate: n_pod must not exceed n_samples");
    require(s.tolerance > 0.0, "surrogate.tolerance must be positive");
    return s;
}

json read_json_file(const fs::path& p) {
    std::ifstream is(p);
    if (!is) throw ConfigError("cannot open " + p.string());
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Artifacts and manifests

std::string read_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw IoError("cannot read " + p.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw IoError("cannot write " + p.string());
    os << text;
    if (!os) throw IoError("write failed for " + p.string());
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::uint64_t hash_outputs(const fs::path& dir, const std::vector<std::string>& files) {
    std::uint64_t h = fnv1a("");
    for (const auto& f : files) {
        h = fnv1a(f, h);
        h = fnv1a(read_bytes(dir / f), h);
    }
    return h;
}

std::vector<std::string> list_files(const fs::path& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string rel = fs::relative(e.path(), dir).generic_string();
        if (rel != "manifest.json") files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::optional<json> read_manifest(const fs::path& dir) {
    const fs::path p = dir / "manifest.json";
    if (!fs::exists(p)) return std::nullopt;
    std::ifstream is(p);
    try {
        return json::parse(is);
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

bool outputs_intact(const fs::path& dir, const json& m) {
    try {
        const auto files = m.at("outputs").get<std::vector<std::string>>();
        for (const auto& f : files) {
            if (!fs::exists(dir / f)) return false;
        }
        return hash_hex(hash_outputs(dir, files)) == m.at("output_hash").get<std::string>();
    } catch (const std::exception&) {
        return false;
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Shared numerical setup

struct Loaded {
    FullOrderModel model;
    NullspaceData ns;
    ProjectedOperators ops;
    Forcing forcing;
};

void save_model(const fs::path& dir, const FullOrderModel& m, const FilamentSpec& spec) {
    write_morb(dir / "l.morb", m.l);
    write_morb(dir / "r.morb", Matrix(m.r));
    write_morb(dir / "f.morb", Matrix(m.f));
    json families = json::array();
    for (std::size_t f = 0; f < kNumSourceFamilies; ++f) {
        const std::string file = std::string("src_") + family_name(static_cast<SourceFamily>(f)) + ".morb";
        write_morb(dir / file, m.sources[f]);
        families.push_back({{"family", family_name(static_cast<SourceFamily>(f))},
                            {"file", file},
                            {"names", m.source_names[f]},
                            {"waveforms", m.source_waveforms[f]}});
    }
    json loops = json::array();
    for (const auto& lp : spec.loops) {
        loops.push_back({{"radius", lp.radius}, {"z", lp.z}, {"offset", lp.offset},
                         {"wire_radius", lp.wire_radius}, {"resistance", lp.resistance}});
    }
    write_json(dir / "model.json", {{"n", m.size()},
                                    {"families", families},
                                    {"constraint_waveforms", m.constraint_waveforms},
                                    {"constraints_rank_deficient", m.constraints_rank_deficient},
                                    {"loops", loops}});
}

FullOrderModel load_model(const fs::path& dir) {
    const json meta = read_json_file(dir / "model.json");
    FullOrderModel m;
    m.l = read_morb(dir / "l.morb");
    m.r = read_morb(dir / "r.morb").sparseView();
    m.f = read_morb(dir / "f.morb").sparseView();
    if (m.f.cols() != m.l.cols()) m.f = SparseMatrix(0, m.l.cols());
    const auto& families = meta.at("families");
    for (std::size_t f = 0; f < kNumSourceFamilies; ++f) {
        m.sources[f] = read_morb(dir / families[f].at("file").get<std::string>());
        if (m.sources[f].rows() != m.size()) m.sources[f] = Matrix(m.size(), 0);
        m.source_names[f] = families[f].at("names").get<std::vector<std::string>>();
        m.source_waveforms[f] = families[f].at("waveforms").get<std::vector<std::string>>();
    }
    m.constraint_waveforms = meta.at("constraint_waveforms").get<std::vector<std::string>>();
    m.constraints_rank_deficient = meta.at("constraints_rank_deficient").get<bool>();
    return m;
}

Loaded load_full(const PipelineConfig& cfg) {
    Loaded d;
    d.model = load_model(stage_dir(cfg, Stage::generate));
    d.ns = build_nullspace(d.model.f, d.model.size());
    d.ops = project_operators(d.model, d.ns.k);
    d.forcing = build_forcing(d.model, d.ns, make_excitation(d.model, cfg.waveforms, cfg.grid()));
    return d;
}

struct NullfieldSetup {
    NullFieldOperators ops;
    std::vector<Index> prescribed;  // axi indices of the Y block, in order
    Matrix y;                       // prescribed currents on the solver grid
};

NullFieldOperators nullfield_operators(const PipelineConfig& cfg, const ReducedModel& rm, const Matrix& k,
                                       std::vector<Index>* prescribed_out) {
    const NullfieldConfig& nc = *cfg.nullfield;
    std::vector<FilamentLoop> axi;
    for (const auto& s : cfg.model.spec.sources) {
        if (s.family == SourceFamily::axi) axi.push_back(s.loop);
    }
    std::vector<FilamentLoop> xs;
    std::vector<FilamentLoop> ys;
    std::vector<Index> prescribed;
    for (Index i = 0; i < static_cast<Index>(axi.size()); ++i) {
        if (std::find(nc.controls.begin(), nc.controls.end(), i) != nc.controls.end()) continue;
        prescribed.push_back(i);
        ys.push_back(axi[static_cast<std::size_t>(i)]);
    }
    for (Index c : nc.controls) xs.push_back(axi[static_cast<std::size_t>(c)]);
    FieldOperator fo;
    fo.q_gamma = field_coefficients(cfg.model.spec.loops, nc.points);
    fo.q_y = field_coefficients(ys, nc.points);
    fo.q_x = field_coefficients(xs, nc.points);
    if (prescribed_out) *prescribed_out = prescribed;
    return assemble_nullfield(make_nullfield_system(rm, k, fo, nc.controls), rm.dt,
                              nc.method == SolveMethod::modal);
}

void check_axi_only(const FullOrderModel& m) {
    if (m.source_block(SourceFamily::three_d).cols() != 0 || m.source_block(SourceFamily::volt).cols() != 0) {
        throw ConfigError("null-field stages support axisymmetric sources only");
    }
}

SurrogateProblem surrogate_problem(const PipelineConfig& cfg, const Loaded& d, const ReducedModel& rm) {
    check_axi_only(d.model);
    std::vector<Index> prescribed;
    SurrogateProblem prob;
    prob.ops = nullfield_operators(cfg, rm, d.ns.k, &prescribed);
    prob.method = cfg.nullfield->method;
    prob.grid = TimeGrid::from_final_time(cfg.solver.dt, cfg.surrogate->ranges.r[4].hi);
    const auto& names = d.model.source_names[static_cast<std::size_t>(SourceFamily::axi)];
    auto row_of = [&](const std::string& name) -> Index {
        for (std::size_t r = 0; r < prescribed.size(); ++r) {
            if (names[static_cast<std::size_t>(prescribed[r])] == name) return static_cast<Index>(r);
        }
        throw ConfigError("surrogate: '" + name + "' is not a prescribed axi source");
    };
    prob.cs_row = row_of(cfg.surrogate->cs_source);
    prob.pf_row = row_of(cfg.surrogate->pf_source);
    return prob;
}

// ---------------------------------------------------------------------------
// Stage bodies. Each writes its files into `dir` and returns manifest data.

json run_generate(const PipelineConfig& cfg, const fs::path& dir) {
    FullOrderModel m = generate_filament_model(cfg.model.spec, cfg.seed, cfg.model.jitter);
    if (!cfg.model.constraints.empty()) {
        attach_constraints(m, assemble_constraints(cfg.model.constraints, m.size()));
    }
    save_model(dir, m, cfg.model.spec);
    return {{"n_full", m.size()}, {"n_constraints", m.f.rows()}};
}

json run_full_transient(const PipelineConfig& cfg, const fs::path& dir) {
    const Loaded d = load_full(cfg);
    TransientConfig tc;
    tc.method = cfg.solver.method;
    TransientResult best;
    for (int r = 0; r < cfg.solver.timing_repeats; ++r) {
        TransientResult res = solve_transient(d.ops, d.forcing, tc);
        if (r == 0 || res.t_trans() < best.t_trans()) best = std::move(res);
    }
    const Matrix currents = reconstruct_currents(best.states, d.ns.k, nullptr, d.forcing.i0);
    write_morb(dir / "currents.morb", currents);
    return {{"n_full", d.model.size()},
            {"n_state", d.ns.k.cols()},
            {"method", solve_method_name(tc.method)},
            {"t_setup", best.t_setup},
            {"t_march", best.t_march}};
}

json run_mor_build(const PipelineConfig& cfg, const fs::path& dir) {
    const Loaded d = load_full(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const CompressedRhs rhs = assemble_bmor(d.forcing, cfg.mor.bmor);
    const double t_bmor = seconds_since(t0);
    KrylovConfig kc;
    kc.dt = cfg.solver.dt;
    kc.eps_mor = cfg.mor.eps_mor;
    kc.k_max = cfg.mor.k_max;
    kc.droptol = cfg.mor.bmor.droptol;
    kc.residual = cfg.mor.residual;
    const auto t1 = std::chrono::steady_clock::now();
    const Matrix b_mor = cfg.nullfield ? with_control_columns(rhs.b_mor, d.forcing, cfg.nullfield->controls,
                                                              cfg.mor.bmor.droptol)
                                       : rhs.b_mor;
    const KrylovResult kr = krylov_enrich(d.ops.r_k, d.ops.l_k, b_mor, kc);
    const double t_kry = seconds_since(t1);
    ReducedModel rm = reduce_model(d.ops, d.forcing, kr.v_r);
    rm.dt = cfg.solver.dt;
    rm.eps_mor = cfg.mor.eps_mor;
    rm.eta = kr.eta_final();
    rm.n_kry = kr.n_kry;
    rm.mode = cfg.mor.bmor.mode;
    save_reduced_model(dir / "rom", rm);
    return {{"n_full", d.model.size()},
            {"n_bmor", b_mor.cols()},
            {"n_mor", kr.n_mor()},
            {"n_kry", kr.n_kry},
            {"eta", kr.eta},
            {"eta_final", kr.eta_final()},
            {"converged", kr.converged},
            {"eps_mor", cfg.mor.eps_mor},
            {"mode", bmor_mode_name(cfg.mor.bmor.mode)},
            {"t_bmor", t_bmor},
            {"t_kry", t_kry}};
}

json run_mor_transient(const PipelineConfig& cfg, const fs::path& dir) {
    const Loaded d = load_full(cfg);
    const ReducedModel rm = load_reduced_model(stage_dir(cfg, Stage::mor_build) / "rom");
    TransientConfig tc;
    tc.method = cfg.solver.method;
    TransientResult best;
    for (int r = 0; r < cfg.solver.timing_repeats; ++r) {
        TransientResult res = solve_transient(rm, d.forcing, tc);
        if (r == 0 || res.t_trans() < best.t_trans()) best = std::move(res);
    }
    const Matrix currents = reconstruct_currents(best.states, d.ns.k, &rm.v_r, d.forcing.i0);
    write_morb(dir / "currents.morb", currents);
    return {{"n_mor", rm.n_red()},
            {"method", solve_method_name(tc.method)},
            {"t_setup", best.t_setup},
            {"t_march", best.t_march}};
}

json run_compare(const PipelineConfig& cfg, const fs::path& dir) {
    const Matrix full = read_morb(stage_dir(cfg, Stage::full_transient) / "currents.morb");
    const Matrix mor = read_morb(stage_dir(cfg, Stage::mor_transient) / "currents.morb");
    if (full.rows() != mor.rows() || full.cols() != mor.cols()) {
        throw StageError("compare: full and reduced current histories have different shapes; rerun both");
    }
    const Vector eps = relative_error_series(full, mor);
    TimeGrid grid = cfg.grid();
    grid.n_t = eps.size();
    write_series_csv(dir / "error.csv", grid, {"eps_I"}, eps.transpose());
    return {{"max_error", eps.size() ? eps.maxCoeff() : 0.0}, {"mean_error", eps.size() ? eps.mean() : 0.0}};
}

json run_nullfield(const PipelineConfig& cfg, const fs::path& dir) {
    const Loaded d = load_full(cfg);
    check_axi_only(d.model);
    const ReducedModel rm = load_reduced_model(stage_dir(cfg, Stage::mor_build) / "rom");
    std::vector<Index> prescribed;
    const NullFieldOperators ops = nullfield_operators(cfg, rm, d.ns.k, &prescribed);
    const ExcitationSet ex = make_excitation(d.model, cfg.waveforms, cfg.grid());
    const Matrix y = ex.family(ExcitationFamily::axi)(prescribed, Eigen::all);
    const ControlResult res = solve_nullfield(ops, y, cfg.grid(), cfg.nullfield->method);
    write_control_csv(dir / "control.csv", res);
    write_morb(dir / "x.morb", res.x);

    const Vector bc = res.b_norm();
    const Vector bu = res.b_norm_uncontrolled();
    double min_ratio = std::numeric_limits<double>::infinity();
    for (Index n = 5; n < bc.size(); ++n) {
        const double ratio = bc(n) > 0.0 ? bu(n) / bc(n) : std::numeric_limits<double>::infinity();
        min_ratio = std::min(min_ratio, ratio);
    }
    json out = {{"n_mor", rm.n_red()},
                {"method", solve_method_name(cfg.nullfield->method)},
                {"min_suppression_ratio", min_ratio},
                {"max_control_residual", res.control_residual.size() ? res.control_residual.maxCoeff() : 0.0}};
    if (cfg.nullfield->full_reference) {
        // The unreduced system is the reduced machinery with V_r = I.
        ReducedModel full = reduce_model(d.ops, d.forcing, Matrix::Identity(d.ops.l_k.rows(), d.ops.l_k.rows()));
        full.dt = cfg.solver.dt;
        const NullFieldOperators fops = nullfield_operators(cfg, full, d.ns.k, nullptr);
        const ControlResult ref = solve_nullfield(fops, y, cfg.grid(), cfg.nullfield->method);
        write_morb(dir / "x_full.morb", ref.x);
        const Vector eps = per_series_relative_error(res.x, ref.x);
        out["eps_pf"] = std::vector<double>(eps.data(), eps.data() + eps.size());
    }
    return out;
}

json run_surrogate_dataset(const PipelineConfig& cfg, const fs::path& dir) {
    const Loaded d = load_full(cfg);
    const ReducedModel rm = load_reduced_model(stage_dir(cfg, Stage::mor_build) / "rom");
    const SurrogateProblem prob = surrogate_problem(cfg, d, rm);
    const auto params = sample_parameters(cfg.surrogate->ranges, cfg.surrogate->n_samples, cfg.seed);
    const auto t0 = std::chrono::steady_clock::now();
    const Matrix x = generate_dataset(prob, params);
    const double t_gen = seconds_since(t0);
    write_morb(dir / "dataset.morb", x);
    write_json(dir / "params.json", params_to_json(params));
    return {{"n_samples", x.cols()}, {"rows", x.rows()}, {"n_t", prob.grid.n_t}, {"t_generate", t_gen}};
}

json run_surrogate_pod(const PipelineConfig& cfg, const fs::path& dir) {
    const Matrix x = read_morb(stage_dir(cfg, Stage::surrogate_dataset) / "dataset.morb");
    const PodBasis pod = build_pod(x, cfg.surrogate->n_pod, cfg.surrogate->pod_method);
    save_pod(dir / "pod", pod);
    const Matrix centered = x.colwise() - pod.mean;
    const double tail = (centered - pod.modes * pod.coeffs).norm();
    return {{"n_pod", pod.n_pod()},
            {"method", pod_method_name(pod.method)},
            {"relative_truncation_error", centered.norm() > 0.0 ? tail / centered.norm() : 0.0}};
}

json run_surrogate_train(const PipelineConfig& cfg, const fs::path& dir) {
    const PodBasis pod = load_pod(stage_dir(cfg, Stage::surrogate_pod) / "pod");
    const auto params = params_from_json(read_json_file(stage_dir(cfg, Stage::surrogate_dataset) / "params.json"));
    TrainConfig tc = cfg.surrogate->train;
    tc.seed = cfg.seed;
    const auto t0 = std::chrono::steady_clock::now();
    const NNModel nn = train_nn(pod.coeffs, params_matrix(params), tc);
    const double t_train = seconds_since(t0);
    write_json(dir / "nn.json", nn.to_json());
    return {{"train_mse", nn.train_mse}, {"validation_mse", nn.validation_mse}, {"t_train", t_train}};
}

json run_surrogate_predict(const PipelineConfig& cfg, const fs::path& dir) {
    const Loaded d = load_full(cfg);
    const ReducedModel rm = load_reduced_model(stage_dir(cfg, Stage::mor_build) / "rom");
    const SurrogateProblem prob = surrogate_problem(cfg, d, rm);
    const PodBasis pod = load_pod(stage_dir(cfg, Stage::surrogate_pod) / "pod");
    const NNModel nn = NNModel::from_json(read_json_file(stage_dir(cfg, Stage::surrogate_train) / "nn.json"));
    // Test draws use the next seed so they never coincide with the training sequence.
    const auto test = sample_parameters(cfg.surrogate->ranges, cfg.surrogate->test_samples, cfg.seed + 1);
    const Index n_c = prob.ops.n_controls();

    std::ostringstream csv;
    csv << "sample,a_cs,t_r_cs,a_pf,t_r_pf,t_fin";
    for (Index c = 0; c < n_c; ++c) csv << ",err_X" << c + 1;
    csv << ",max_err,pass\n";
    int passed = 0;
    double t_infer_max = 0.0;
    double t_infer_sum = 0.0;
    for (std::size_t s = 0; s < test.size(); ++s) {
        const Matrix ref = simulate_controls(prob, test[s]);
        const auto t0 = std::chrono::steady_clock::now();
        const Matrix pred = predict_reconstruct(nn, pod, test[s], n_c);
        const double t_inf = seconds_since(t0);
        t_infer_max = std::max(t_infer_max, t_inf);
        t_infer_sum += t_inf;
        const Vector e = per_series_relative_error(pred, ref);
        const bool pass = e.maxCoeff() <= cfg.surrogate->tolerance;
        passed += pass ? 1 : 0;
        const Vector mu = test[s].as_vector();
        csv << s;
        for (Index i = 0; i < mu.size(); ++i) csv << ',' << format_shortest(mu(i));
        for (Index c = 0; c < n_c; ++c) csv << ',' << format_shortest(e(c));
        csv << ',' << format_shortest(e.maxCoeff()) << ',' << (pass ? 1 : 0) << '\n';
    }
    write_text(dir / "test_errors.csv", csv.str());
    const double n = static_cast<double>(std::max<std::size_t>(test.size(), 1));
    return {{"test_samples", test.size()},
            {"passed", passed},
            {"tolerance", cfg.surrogate->tolerance},
            {"inference_max_ms", t_infer_max * 1e3},
            {"inference_mean_ms", t_infer_sum / n * 1e3}};
}

using StageBody = std::function<json(const PipelineConfig&, const fs::path&)>;

StageBody stage_body(Stage s) {
    switch (s) {
        case Stage::generate: return run_generate;
        case Stage::full_transient: return run_full_transient;
        case Stage::mor_build: return run_mor_build;
        case Stage::mor_transient: return run_mor_transient;
        case Stage::compare: return run_compare;
        case Stage::nullfield: return run_nullfield;
        case Stage::surrogate_dataset: return run_surrogate_dataset;
        case Stage::surrogate_pod: return run_surrogate_pod;
        case Stage::surrogate_train: return run_surrogate_train;
        case Stage::surrogate_predict: return run_surrogate_predict;
    }
    throw ConfigError("unknown stage");
}

// Config sections each stage reads directly.
json stage_inputs(const PipelineConfig& cfg, Stage s) {
    const json& doc = cfg.document;
    auto sec = [&](const char* k) { return doc.contains(k) ? doc.at(k) : json(); };
    // Upstream output hashes cover the rest, so a stage hashes only the keys it reads.
    auto pick = [](const json& j, std::initializer_list<const char*> keys) {
        json out = json::object();
        for (const char* k : keys) {
            if (j.contains(k)) out[k] = j.at(k);
        }
        return out;
    };
    json in = {{"stage", stage_name(s)}, {"seed", cfg.seed}};
    switch (s) {
        case Stage::generate: in["model"] = sec("model"); break;
        case Stage::full_transient:
        case Stage::mor_transient:
            in["waveforms"] = sec("waveforms");
            in["solver"] = sec("solver");
            break;
        case Stage::mor_build:
            in["waveforms"] = sec("waveforms");
            in["solver"] = sec("solver");
            in["mor"] = sec("mor");
            in["controls"] = pick(sec("nullfield"), {"controls"});
            break;
        case Stage::compare: in["solver"] = sec("solver"); break;
        case Stage::nullfield:
            in["model"] = sec("model");
            in["waveforms"] = sec("waveforms");
            in["solver"] = sec("solver");
            in["nullfield"] = sec("nullfield");
            break;
        case Stage::surrogate_dataset:
            in["model"] = sec("model");
            in["solver"] = sec("solver");
            in["nullfield"] = sec("nullfield");
            in["surrogate"] = pick(sec("surrogate"), {"ranges", "cs_source", "pf_source", "n_samples"});
            break;
        case Stage::surrogate_pod: in["surrogate"] = pick(sec("surrogate"), {"n_pod", "pod_method"}); break;
        case Stage::surrogate_train:
            in["surrogate"] = pick(sec("surrogate"),
                                   {"hidden", "learning_rate", "epochs", "batch_size", "validation_fraction"});
            break;
        case Stage::surrogate_predict:
            in["model"] = sec("model");
            in["solver"] = sec("solver");
            in["nullfield"] = sec("nullfield");
            in["surrogate"] =
                pick(sec("surrogate"), {"ranges", "cs_source", "pf_source", "test_samples", "tolerance"});
            break;
    }
    return in;
}

void require_section(const PipelineConfig& cfg, Stage s) {
    const bool nf = s == Stage::nullfield || s == Stage::surrogate_dataset || s == Stage::surrogate_predict;
    const bool sur = s == Stage::surrogate_dataset || s == Stage::surrogate_pod || s == Stage::surrogate_train ||
                     s == Stage::surrogate_predict;
    if (nf && !cfg.nullfield) throw ConfigError(std::string(stage_name(s)) + " needs a 'nullfield' section");
    if (sur && !cfg.surrogate) throw ConfigError(std::string(stage_name(s)) + " needs a 'surrogate' section");
}

// Input hash of a stage given the persisted outputs of its dependencies.
std::string input_hash(const PipelineConfig& cfg, Stage s) {
    json in = stage_inputs(cfg, s);
    json upstream = json::object();
    for (Stage dep : stage_dependencies(s)) {
        const fs::path ddir = stage_dir(cfg, dep);
        const auto m = read_manifest(ddir);
        if (!m || !outputs_intact(ddir, *m)) {
            throw StageError(std::string("stage '") + stage_name(s) + "' needs " + (ddir / "manifest.json").string() +
                             " from stage '" + stage_name(dep) + "', which is missing or incomplete");
        }
        if (m->at("input_hash").get<std::string>() != input_hash(cfg, dep)) {
            throw StageError(std::string("artifact ") + ddir.string() + " is out of date; rerun stage '" +
                             stage_name(dep) + "'");
        }
        upstream[stage_name(dep)] = m->at("output_hash");
    }
    in["upstream"] = upstream;
    return hash_hex(fnv1a(in.dump()));
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string sig3(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (std::isnan(x)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

PipelineConfig parse_config(const json& j_in, const fs::path& base_dir) {
    check_keys(j_in, {"version", "name", "seed", "output_dir", "model", "waveforms", "solver", "mor", "nullfield",
                      "surrogate"},
               "config");
    PipelineConfig cfg;
    cfg.base_dir = base_dir;
    cfg.version = get<int>(j_in, "version", "config");
    require(cfg.version == kConfigVersion,
            "config: unsupported version " + std::to_string(cfg.version) + " (expected " +
                std::to_string(kConfigVersion) + ")");
    json doc = j_in;
    if (doc.contains("model") && doc.at("model").is_string()) {
        fs::path p = doc.at("model").get<std::string>();
        if (p.is_relative()) p = base_dir / p;
        doc["model"] = read_json_file(p);
    }
    cfg.seed = get_or<std::uint64_t>(doc, "seed", 0, "config");
    cfg.output_dir = get_or<std::string>(doc, "output_dir", "out", "config");
    if (cfg.output_dir.is_relative()) cfg.output_dir = base_dir / cfg.output_dir;
    if (!doc.contains("model")) throw ConfigError("config: missing 'model'");
    cfg.model = parse_model(doc.at("model"));
    if (doc.contains("waveforms")) {
        const json& w = doc.at("waveforms");
        require(w.is_object(), "waveforms: expected an object");
        for (const auto& [name, spec] : w.items()) {
            try {
                cfg.waveforms.emplace(name, Waveform::from_json(spec, base_dir));
            } catch (const IoError& e) {
                throw ConfigError("waveform '" + name + "': " + e.what());
            }
        }
    }
    auto bound = [&](const std::string& name, const std::string& who) {
        if (!name.empty() && !cfg.waveforms.count(name)) {
            throw ConfigError(who + " refers to undefined waveform '" + name + "'");
        }
    };
    for (const auto& s : cfg.model.spec.sources) bound(s.waveform, "source '" + s.name + "'");
    for (const auto& g : cfg.model.constraints) bound(g.waveform, "constraint group");
    if (!doc.contains("solver")) throw ConfigError("config: missing 'solver'");
    cfg.solver = parse_solver(doc.at("solver"));
    if (doc.contains("mor")) cfg.mor = parse_mor(doc.at("mor"));
    if (doc.contains("nullfield")) cfg.nullfield = parse_nullfield(doc.at("nullfield"), cfg.model);
    if (doc.contains("surrogate")) {
        require(cfg.nullfield.has_value(), "surrogate: requires a 'nullfield' section");
        cfg.surrogate = parse_surrogate(doc.at("surrogate"));
    }
    doc.erase("output_dir");  // where artifacts land does not change them
    cfg.document = doc;
    return cfg;
}

PipelineConfig load_config(const fs::path& path) {
    return parse_config(read_json_file(path), path.parent_path());
}

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::generate: return "generate";
        case Stage::full_transient: return "full-transient";
        case Stage::mor_build: return "mor-build";
        case Stage::mor_transient: return "mor-transient";
        case Stage::compare: return "compare";
        case Stage::nullfield: return "nullfield";
        case Stage::surrogate_dataset: return "surrogate-dataset";
        case Stage::surrogate_pod: return "surrogate-pod";
        case Stage::surrogate_train: return "surrogate-train";
        case Stage::surrogate_predict: return "surrogate-predict";
    }
    return "?";
}

Stage parse_stage(const std::string& s) {
    for (std::size_t i = 0; i < kNumStages; ++i) {
        if (s == stage_name(static_cast<Stage>(i))) return static_cast<Stage>(i);
    }
    throw ConfigError("unknown stage '" + s + "'");
}

std::vector<Stage> stage_dependencies(Stage s) {
    switch (s) {
        case Stage::generate: return {};
        case Stage::full_transient: return {Stage::generate};
        case Stage::mor_build: return {Stage::generate};
        case Stage::mor_transient: return {Stage::generate, Stage::mor_build};
        case Stage::compare: return {Stage::full_transient, Stage::mor_transient};
        case Stage::nullfield: return {Stage::generate, Stage::mor_build};
        case Stage::surrogate_dataset: return {Stage::generate, Stage::mor_build};
        case Stage::surrogate_pod: return {Stage::surrogate_dataset};
        case Stage::surrogate_train: return {Stage::surrogate_dataset, Stage::surrogate_pod};
        case Stage::surrogate_predict:
            return {Stage::generate, Stage::mor_build, Stage::surrogate_pod, Stage::surrogate_train};
    }
    return {};
}

fs::path stage_dir(const PipelineConfig& cfg, Stage s) { return cfg.output_dir / stage_name(s); }

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<StageOutcome> run_pipeline(const PipelineConfig& cfg, const std::vector<Stage>& stages) {
    std::vector<Stage> order = stages;
    std::sort(order.begin(), order.end());
    order.erase(std::unique(order.begin(), order.end()), order.end());
    std::vector<StageOutcome> outcomes;
    for (Stage s : order) {
        require_section(cfg, s);
        const auto t0 = std::chrono::steady_clock::now();
        const std::string in_hash = input_hash(cfg, s);
        const fs::path dir = stage_dir(cfg, s);
        StageOutcome oc;
        oc.stage = s;
        const auto existing = read_manifest(dir);
        if (existing && existing->value("input_hash", "") == in_hash && outputs_intact(dir, *existing)) {
            oc.skipped = true;
        } else {
            fs::remove_all(dir);
            fs::create_directories(dir);
            const json data = stage_body(s)(cfg, dir);
            const auto files = list_files(dir);
            write_json(dir / "manifest.json", {{"stage", stage_name(s)},
                                               {"seed", cfg.seed},
                                               {"input_hash", in_hash},
                                               {"output_hash", hash_hex(hash_outputs(dir, files))},
                                               {"outputs", files},
                                               {"data", data}});
        }
        oc.seconds = seconds_since(t0);
        outcomes.push_back(oc);
    }
    return outcomes;
}

RunReport collect_report(const PipelineConfig& cfg) {
    RunReport rep;
    rep.seed = cfg.seed;
    std::map<Stage, json> data;
    for (std::size_t i = 0; i < kNumStages; ++i) {
        const auto s = static_cast<Stage>(i);
        if (const auto m = read_manifest(stage_dir(cfg, s))) {
            rep.stages.emplace_back(stage_name(s));
            data[s] = m->at("data");
        }
    }
    if (data.count(Stage::compare) && data.count(Stage::full_transient) && data.count(Stage::mor_build) &&
        data.count(Stage::mor_transient)) {
        const json& full = data[Stage::full_transient];
        const json& mb = data[Stage::mor_build];
        const json& mt = data[Stage::mor_transient];
        const json& cmp = data[Stage::compare];
        ReportRow row;
        row.case_name = cfg.document.value("name", "run");
        row.eps_mor = mb.at("eps_mor").get<double>();
        row.n_full = full.at("n_full").get<Index>();
        row.n_mor = mb.at("n_mor").get<Index>();
        row.n_kry = mb.at("n_kry").get<Index>();
        row.eta = mb.at("eta_final").get<double>();
        row.t_kry_mor = mb.at("t_kry").get<double>();
        row.t_setup_full = full.at("t_setup").get<double>();
        row.t_march_full = full.at("t_march").get<double>();
        row.t_setup_mor = mt.at("t_setup").get<double>();
        row.t_march_mor = mt.at("t_march").get<double>();
        row.max_error = cmp.at("max_error").get<double>();
        row.mean_error = cmp.at("mean_error").get<double>();
        rep.rows.push_back(row);
    }
    if (data.count(Stage::nullfield)) rep.sections["nullfield"] = data[Stage::nullfield];
    json sur = json::object();
    for (Stage s : {Stage::surrogate_dataset, Stage::surrogate_pod, Stage::surrogate_train,
                    Stage::surrogate_predict}) {
        if (data.count(s)) sur[stage_name(s)] = data[s];
    }
    if (!sur.empty()) rep.sections["surrogate"] = sur;
    return rep;
}

double ReportRow::ratio() const {
    return n_mor > 0 ? static_cast<double>(n_full) / static_cast<double>(n_mor)
                     : std::numeric_limits<double>::infinity();
}

double ReportRow::ratio_pow(int p) const { return std::pow(ratio(), p); }

double ReportRow::speedup() const {
    return t_trans_mor() > 0.0 ? t_trans_full() / t_trans_mor() : std::numeric_limits<double>::infinity();
}

namespace {

// JSON has no infinity; non-finite numbers travel as strings.
json num(double x) { return std::isfinite(x) ? json(x) : json(format_shortest(x)); }

double as_num(const json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        throw ConfigError("report: bad number '" + s + "'");
    }
    return j.get<double>();
}

}  // namespace

json RunReport::to_json() const {
    json rows_j = json::array();
    for (const auto& r : rows) {
        rows_j.push_back({{"case", r.case_name},
                          {"eps_mor", num(r.eps_mor)},
                          {"n_full", r.n_full},
                          {"n_mor", r.n_mor},
                          {"n_kry", r.n_kry},
                          {"max_error", num(r.max_error)},
                          {"mean_error", num(r.mean_error)},
                          {"eta", num(r.eta)},
                          {"t_kry_mor", num(r.t_kry_mor)},
                          {"t_setup_full", num(r.t_setup_full)},
                          {"t_march_full", num(r.t_march_full)},
                          {"t_setup_mor", num(r.t_setup_mor)},
                          {"t_march_mor", num(r.t_march_mor)},
                          {"ratio", num(r.ratio())},
                          {"ratio2", num(r.ratio_pow(2))},
                          {"ratio3", num(r.ratio_pow(3))},
                          {"speedup", num(r.speedup())}});
    }
    return {{"format", "kmor-report-1"}, {"seed", seed}, {"stages", stages}, {"rows", rows_j}, {"sections", sections}};
}

RunReport RunReport::from_json(const json& j) {
    RunReport rep;
    try {
        rep.seed = j.at("seed").get<std::uint64_t>();
        rep.stages = j.at("stages").get<std::vector<std::string>>();
        rep.sections = j.at("sections");
        for (const auto& r : j.at("rows")) {
            ReportRow row;
            row.case_name = r.at("case").get<std::string>();
            row.eps_mor = as_num(r.at("eps_mor"));
            row.n_full = r.at("n_full").get<Index>();
            row.n_mor = r.at("n_mor").get<Index>();
            row.n_kry = r.at("n_kry").get<Index>();
            row.max_error = as_num(r.at("max_error"));
            row.mean_error = as_num(r.at("mean_error"));
            row.eta = as_num(r.at("eta"));
            row.t_kry_mor = as_num(r.at("t_kry_mor"));
            row.t_setup_full = as_num(r.at("t_setup_full"));
            row.t_march_full = as_num(r.at("t_march_full"));
            row.t_setup_mor = as_num(r.at("t_setup_mor"));
            row.t_march_mor = as_num(r.at("t_march_mor"));
            rep.rows.push_back(row);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("report: ") + e.what());
    }
    return rep;
}

ReportFormat parse_report_format(const std::string& s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    if (s == "markdown" || s == "md") return ReportFormat::markdown;
    throw ConfigError("unknown report format '" + s + "'");
}

const std::vector<std::string>& report_csv_columns() {
    static const std::vector<std::string> cols = {
        "case",      "eps_mor",     "n_mor",     "n_kry",        "ratio",        "ratio2",       "ratio3",
        "max_error", "t_kry_mor",   "t_trans_mor", "speedup",    "n_full",       "mean_error",   "eta",
        "t_setup_full", "t_march_full", "t_trans_full", "t_setup_mor", "t_march_mor"};
    return cols;
}

std::string render_report(const RunReport& report, ReportFormat format) {
    if (format == ReportFormat::json) return report.to_json().dump(2) + "\n";
    std::ostringstream os;
    if (format == ReportFormat::csv) {
        const auto& cols = report_csv_columns();
        for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
        os << '\n';
        for (const auto& r : report.rows) {
            const auto f = [](double x) { return format_shortest(x); };
            os << csv_escape(r.case_name) << ',' << f(r.eps_mor) << ',' << r.n_mor << ',' << r.n_kry << ','
               << f(r.ratio()) << ',' << f(r.ratio_pow(2)) << ',' << f(r.ratio_pow(3)) << ',' << f(r.max_error)
               << ',' << f(r.t_kry_mor) << ',' << f(r.t_trans_mor()) << ',' << f(r.speedup()) << ',' << r.n_full
               << ',' << f(r.mean_error) << ',' << f(r.eta) << ',' << f(r.t_setup_full) << ','
               << f(r.t_march_full) << ',' << f(r.t_trans_full()) << ',' << f(r.t_setup_mor) << ','
               << f(r.t_march_mor) << '\n';
        }
        return os.str();
    }
    os << "| Case | eps_mor | N_mor | N_kry | N_full/N_mor | (N_full/N_mor)^2 | (N_full/N_mor)^3 | Err. | "
          "T_kry^mor (s) | T_trans^mor (s) | T_trans^full/T_trans^mor |\n";
    os << "|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : report.rows) {
        os << "| " << r.case_name << " | " << sig3(r.eps_mor) << " | " << r.n_mor << " | " << r.n_kry << " | "
           << sig3(r.ratio()) << " | " << sig3(r.ratio_pow(2)) << " | " << sig3(r.ratio_pow(3)) << " | "
           << sig3(r.max_error) << " | " << sig3(r.t_kry_mor) << " | " << sig3(r.t_trans_mor()) << " | "
           << sig3(r.speedup()) << " |\n";
    }
    return os.str();
}

void export_report(const RunReport& report, ReportFormat format, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_text(path, render_report(report, format));
}

}  // namespace kmor
