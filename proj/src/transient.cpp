#include "kmor/transient.hpp"

#include <chrono>
#include <fstream>
#include <optional>

namespace kmor {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

const char* solve_method_name(SolveMethod m) { return m == SolveMethod::modal ? "modal" : "direct"; }

SolveMethod parse_solve_method(const std::string& s) {
    if (s == "direct") return SolveMethod::direct;
    if (s == "modal") return SolveMethod::modal;
    throw ConfigError("unknown solve method '" + s + "'");
}

Vector assemble_rhs(Index n, const Forcing& forcing, const Matrix& l, const Vector& y_prev) {
    if (n < 1 || n >= forcing.grid.n_t) {
        throw DomainError("assemble_rhs: step " + std::to_string(n) + " has no excitation sample");
    }
    if (l.rows() != forcing.reduced_dim() || y_prev.size() != l.rows()) {
        throw ShapeError("assemble_rhs: inconsistent dimensions");
    }
    Vector b = l * y_prev;
    b += forcing.at_step(n);
    return b;
}

TransientResult march(const Matrix& l, const Matrix& r, const std::vector<const Matrix*>& columns,
                      const std::vector<const Matrix*>& signals, const TimeGrid& grid, const TransientConfig& cfg) {
    const Index n = l.rows();
    if (l.cols() != n || r.rows() != n || r.cols() != n || columns.size() != signals.size()) {
        throw ShapeError("march: inconsistent operator dimensions");
    }
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i]->rows() != n || columns[i]->cols() != signals[i]->rows() || signals[i]->cols() != grid.n_t) {
            throw ShapeError("march: forcing block " + std::to_string(i) + " does not match the system");
        }
    }
    if (cfg.y0.size() != 0 && cfg.y0.size() != n) {
        throw ShapeError("march: initial state has the wrong dimension");
    }
    const double dt = grid.dt;

    TransientResult out;
    out.grid = grid;
    out.method = cfg.method;
    out.states.resize(n, grid.n_t);

    const auto t_setup = Clock::now();
    std::optional<Cholesky> chol;
    EigDecomposition eig;
    if (cfg.method == SolveMethod::direct) {
        chol = Cholesky::factor(Matrix(l + dt * r));
    } else {
        eig = sym_generalized_eig(l, r);
    }
    out.t_setup = seconds_since(t_setup);

    const auto t_march = Clock::now();
    Matrix f = Matrix::Zero(n, grid.n_t);
    for (std::size_t i = 0; i < columns.size(); ++i) {
        f.noalias() += (*columns[i]) * (*signals[i]);
    }
    const Vector y0 = cfg.y0.size() == 0 ? Vector::Zero(n) : cfg.y0;
    out.states.col(0) = y0;
    if (cfg.method == SolveMethod::direct) {
        for (Index s = 1; s < grid.n_t; ++s) {
            Vector b = l * out.states.col(s - 1);
            b += f.col(s);
            out.states.col(s) = chol->solve(b);
        }
    } else {
        // Modal coordinates: y = Phi a, Phi^T L y = Lambda a, Phi^T R Phi = I.
        const Matrix& phi = eig.eigenvectors;
        const Vector& lam = eig.eigenvalues;
        const Matrix g = phi.transpose() * f;
        Matrix a(n, grid.n_t);
        a.col(0) = phi.transpose() * (r * y0);
        const Vector denom = (lam.array() + dt).matrix();
        for (Index s = 1; s < grid.n_t; ++s) {
            a.col(s) = ((lam.array() * a.col(s - 1).array() + g.col(s).array()) / denom.array()).matrix();
        }
        out.states.noalias() = phi * a;
        out.states.col(0) = y0;
    }
    out.t_march = seconds_since(t_march);
    return out;
}

TransientResult solve_transient(const ProjectedOperators& ops, const Forcing& forcing, const TransientConfig& cfg) {
    std::vector<const Matrix*> cols;
    std::vector<const Matrix*> sigs;
    for (const auto& blk : forcing.blocks) {
        if (blk.columns.cols() == 0) continue;
        cols.push_back(&blk.columns);
        sigs.push_back(&blk.signals);
    }
    return march(ops.l_k, ops.r_k, cols, sigs, forcing.grid, cfg);
}

TransientResult solve_transient(const ReducedModel& rm, const Forcing& forcing, const TransientConfig& cfg) {
    std::vector<const Matrix*> cols;
    std::vector<const Matrix*> sigs;
    for (const auto& blk : forcing.blocks) {
        if (blk.columns.cols() == 0) continue;
        const Matrix& proj = rm.source(blk.family);
        if (proj.cols() != blk.columns.cols()) {
            throw ShapeError(std::string("solve_transient: reduced model has no matching '") +
                             excitation_family_name(blk.family) + "' source block");
        }
        cols.push_back(&proj);
        sigs.push_back(&blk.signals);
    }
    auto out = march(rm.l_r, rm.r_r, cols, sigs, forcing.grid, cfg);
    out.reduced = true;
    return out;
}

Matrix reconstruct_currents(const Matrix& states, const Matrix& k, const Matrix* v_r, const Matrix& i0) {
    const Index inner = v_r ? v_r->cols() : k.cols();
    if (states.rows() != inner || (v_r && v_r->rows() != k.cols()) || i0.rows() != k.rows() ||
        i0.cols() != states.cols()) {
        throw ShapeError("reconstruct_currents: inconsistent dimensions");
    }
    if (v_r) {
        const Matrix kv = k * (*v_r);
        return kv * states + i0;
    }
    return k * states + i0;
}

Vector relative_error_series(const Matrix& i_full, const Matrix& i_mor) {
    if (i_full.rows() != i_mor.rows() || i_full.cols() != i_mor.cols()) {
        throw ShapeError("relative_error_series: series are on different grids");
    }
    Vector eps(i_full.cols());
    for (Index n = 0; n < i_full.cols(); ++n) {
        const double num = (i_full.col(n) - i_mor.col(n)).norm();
        const double den = i_full.col(n).norm();
        if (den == 0.0) {
            eps(n) = num == 0.0 ? 0.0 : kInfiniteError;
        } else {
            eps(n) = num / den;
        }
    }
    return eps;
}

void write_series_csv(const std::filesystem::path& path, const TimeGrid& grid, const std::vector<std::string>& names,
                      const Matrix& series) {
    if (static_cast<Index>(names.size()) != series.rows() || series.cols() != grid.n_t) {
        throw ShapeError("write_series_csv: names/series/grid mismatch");
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << 't';
    for (const auto& nm : names) os << ',' << nm;
    os << '\n';
    for (Index n = 0; n < grid.n_t; ++n) {
        os << format_shortest(grid.t(n));
        for (Index r = 0; r < series.rows(); ++r) os << ',' << format_shortest(series(r, n));
        os << '\n';
    }
    if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace kmor
