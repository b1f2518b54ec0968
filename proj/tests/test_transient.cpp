#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "kmor/transient.hpp"
#include "scenarios.hpp"

using namespace kmor;
using kmor::testing::random_small_scenario;

namespace {

Matrix scalar(double x) {
    Matrix m(1, 1);
    m << x;
    return m;
}

double max_relative_difference(const Matrix& a, const Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(a.cwiseAbs().maxCoeff(), 1e-300);
}

struct Prepared {
    NullspaceData ns;
    ProjectedOperators ops;
    Forcing forcing;
};

Prepared prepare(const FullOrderModel& m, const WaveformMap& w, const TimeGrid& g) {
    Prepared p;
    p.ns = build_nullspace(m.f, m.size());
    p.ops = project_operators(m, p.ns.k);
    p.forcing = build_forcing(m, p.ns, make_excitation(m, w, g));
    return p;
}

}  // namespace

TEST_CASE("scalar backward Euler decay", "[transient]") {
    const TimeGrid g = TimeGrid::from_final_time(0.1, 1.0);
    TransientConfig cfg;
    cfg.y0 = Vector::Ones(1);
    for (auto method : {SolveMethod::direct, SolveMethod::modal}) {
        cfg.method = method;
        const auto res = march(scalar(1.0), scalar(1.0), {}, {}, g, cfg);
        CHECK(res.states(0, 0) == 1.0);
        CHECK(std::abs(res.states(0, 1) - 1.0 / 1.1) <= 1e-14);
        for (Index n = 0; n < g.n_t; ++n) {
            CHECK(std::abs(res.states(0, n) - std::pow(1.1, -static_cast<double>(n))) <= 1e-14);
        }
    }
}

TEST_CASE("zero forcing from rest stays at rest", "[transient]") {
    const auto sc = random_small_scenario(8, 2, 1);
    WaveformMap zero;
    for (const auto& [name, _] : sc.waveforms) zero.emplace(name, Waveform::sampled({0.0, 2.0}, {0.0, 0.0}));
    const auto p = prepare(sc.model, zero, sc.grid);
    for (auto method : {SolveMethod::direct, SolveMethod::modal}) {
        TransientConfig cfg;
        cfg.method = method;
        const auto res = solve_transient(p.ops, p.forcing, cfg);
        CHECK(res.states.cwiseAbs().maxCoeff() == 0.0);
        for (Index n = 1; n < sc.grid.n_t; n += 7) CHECK(assemble_rhs(n, p.forcing, p.ops.l_k, res.states.col(n - 1)).norm() == 0.0);
    }
}

TEST_CASE("scalar forced recurrence matches hand expansion", "[transient]") {
    // One loop driven by one coil: L y_n + dt R y_n = L y_{n-1} - M (a_n - a_{n-1}).
    FilamentSpec spec;
    FilamentLoop lp;
    lp.radius = 1.0;
    lp.wire_radius = 0.01;
    lp.resistance = 0.02;
    spec.loops = {lp};
    SourceSpec s;
    s.name = "coil";
    s.loop.radius = 1.5;
    s.loop.z = 0.3;
    s.loop.wire_radius = 0.01;
    s.waveform = "ramp";
    spec.sources = {s};
    const auto m = generate_filament_model(spec, 0);
    const WaveformMap w = {{"ramp", Waveform::ramp_plateau(1e3, 0.05, 0.2)}};
    const TimeGrid g = TimeGrid::from_final_time(1e-2, 0.2);
    const auto p = prepare(m, w, g);
    const auto res = solve_transient(p.ops, p.forcing, TransientConfig{});

    const double l = m.l(0, 0);
    const double r = 0.02;
    const double mm = m.source_block(SourceFamily::axi)(0, 0);
    double y = 0.0;
    for (Index n = 1; n < g.n_t; ++n) {
        const double da = w.at("ramp").eval(g.t(n)) - w.at("ramp").eval(g.t(n - 1));
        y = (l * y - mm * da) / (l + g.dt * r);
        CHECK(std::abs(res.states(0, n) - y) <= 1e-12 * std::abs(y) + 1e-300);
        const Vector b = assemble_rhs(n, p.forcing, p.ops.l_k, res.states.col(n - 1));
        CHECK(std::abs(b(0) - (l * res.states(0, n - 1) - mm * da)) <= 1e-12 * std::abs(b(0)));
    }
}

TEST_CASE("direct and modal marching agree", "[transient][property]") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto sc = random_small_scenario(10, 3, 50 + s);
        const auto p = prepare(sc.model, sc.waveforms, sc.grid);
        TransientConfig cfg;
        const auto direct = solve_transient(p.ops, p.forcing, cfg);
        cfg.method = SolveMethod::modal;
        const auto modal = solve_transient(p.ops, p.forcing, cfg);
        CHECK(max_relative_difference(direct.states, modal.states) <= 1e-9);
        CHECK(direct.t_setup >= 0.0);
        CHECK(direct.t_march >= 0.0);
        CHECK(modal.method == SolveMethod::modal);
    }
}

TEST_CASE("unforced decay dissipates magnetic energy", "[transient][property]") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd;
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto sc = random_small_scenario(12, 1, 80 + s);
        WaveformMap zero;
        for (const auto& [name, _] : sc.waveforms) zero.emplace(name, Waveform::sampled({0.0, 2.0}, {0.0, 0.0}));
        const auto p = prepare(sc.model, zero, sc.grid);
        TransientConfig cfg;
        cfg.y0 = Vector(12);
        for (Index i = 0; i < 12; ++i) cfg.y0(i) = nd(rng);
        const auto res = solve_transient(p.ops, p.forcing, cfg);
        double prev = std::numeric_limits<double>::infinity();
        for (Index n = 0; n < sc.grid.n_t; ++n) {
            const Vector y = res.states.col(n);
            const double e = y.dot(p.ops.l_k * y);
            CHECK(e <= prev * (1 + 1e-13));
            prev = e;
        }
    }
}

TEST_CASE("backward Euler converges at first order", "[transient]") {
    const auto base = kmor::testing::slow_ramp_scenario(30);
    std::vector<Vector> finals;
    for (double dt : {4e-3, 2e-3, 1e-3}) {
        const TimeGrid g = TimeGrid::from_final_time(dt, 0.5);
        const auto p = prepare(base.model, base.waveforms, g);
        finals.push_back(solve_transient(p.ops, p.forcing, TransientConfig{}).states.rightCols(1));
    }
    const double e1 = (finals[0] - finals[1]).norm();
    const double e2 = (finals[1] - finals[2]).norm();
    CHECK(e1 / e2 > 1.7);
    CHECK(e1 / e2 < 2.3);
}

TEST_CASE("current reconstruction", "[transient]") {
    const auto sc = kmor::testing::fast_vde_scenario(40, 2);
    const auto p = prepare(sc.model, sc.waveforms, sc.grid);
    const auto res = solve_transient(p.ops, p.forcing, TransientConfig{});
    const Matrix i = reconstruct_currents(res.states, p.ns.k, nullptr, p.forcing.i0);
    const auto ex = make_excitation(sc.model, sc.waveforms, sc.grid);
    const Matrix& alpha = ex.family(ExcitationFamily::j0);
    const Matrix fd = Matrix(sc.model.f);
    for (Index n = 0; n < sc.grid.n_t; ++n) {
        CHECK((fd * i.col(n) - alpha.col(n)).norm() <= 1e-10 * (1.0 + alpha.col(n).norm()));
    }
    // V_r = I reproduces the full reconstruction.
    const Index nr = p.ops.l_k.rows();
    const Matrix id = Matrix::Identity(nr, nr);
    const auto rm = reduce_model(p.ops, p.forcing, id);
    for (auto method : {SolveMethod::direct, SolveMethod::modal}) {
        TransientConfig cfg;
        cfg.method = method;
        const auto red = solve_transient(rm, p.forcing, cfg);
        CHECK(red.reduced);
        CHECK(max_relative_difference(reconstruct_currents(red.states, p.ns.k, &id, p.forcing.i0), i) <= 1e-9);
    }
    // Unconstrained: I = y.
    const Matrix y = Matrix::Random(4, 6);
    CHECK((reconstruct_currents(y, Matrix::Identity(4, 4), nullptr, Matrix::Zero(4, 6)) - y).norm() == 0.0);
    CHECK_THROWS_AS(reconstruct_currents(y, Matrix::Identity(3, 3), nullptr, Matrix::Zero(3, 6)), ShapeError);
}

TEST_CASE("relative error series", "[transient]") {
    Matrix full(3, 4);
    full << 1, 2, 0, 4, 0, 1, 0, 1, 2, 0, 0, 1;
    CHECK(relative_error_series(full, full).cwiseAbs().maxCoeff() == 0.0);
    const Vector twice = relative_error_series(full, 2 * full);
    CHECK(twice(0) == 1.0);
    CHECK(twice(1) == 1.0);
    CHECK(twice(2) == 0.0);  // 0 / 0
    CHECK(twice(3) == 1.0);

    // Orthogonal perturbation of norm delta.
    Matrix a(3, 1);
    a << 3, 4, 0;
    Matrix b = a;
    b(2, 0) = 0.25;
    CHECK(std::abs(relative_error_series(a, b)(0) - 0.25 / 5.0) < 1e-16);

    Matrix z = Matrix::Zero(3, 1);
    CHECK(std::isinf(relative_error_series(z, a)(0)));
    CHECK(relative_error_series(z, a)(0) == kInfiniteError);
    CHECK_THROWS_AS(relative_error_series(full, Matrix::Zero(3, 3)), ShapeError);
}

TEST_CASE("series CSV", "[transient][io]") {
    const auto path = std::filesystem::temp_directory_path() / "kmor_series.csv";
    const TimeGrid g = TimeGrid::from_final_time(0.5, 1.0);
    Matrix s(2, 3);
    s << 0.1, 0.2, std::numeric_limits<double>::infinity(), 1, 2, 3;
    write_series_csv(path, g, {"a", "b"}, s);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    CHECK(line == "t,a,b");
    std::getline(is, line);
    CHECK(line == "0,0.1,1");
    std::getline(is, line);
    CHECK(line == "0.5,0.2,2");
    std::getline(is, line);
    CHECK(line == "1,inf,3");
    std::filesystem::remove(path);
    CHECK_THROWS_AS(write_series_csv(path, g, {"a"}, s), ShapeError);
    CHECK(parse_solve_method(solve_method_name(SolveMethod::modal)) == SolveMethod::modal);
    CHECK_THROWS_AS(parse_solve_method("rk4"), ConfigError);
}
