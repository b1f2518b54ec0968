#include "kmor/nullfield.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace kmor {

PoloidalField loop_field(const FilamentLoop& loop, const FieldPoint& p) {
    if (loop.offset != 0.0) {
        throw GeometryError("loop_field: only coaxial loops have poloidal field coefficients");
    }
    if (!(p.r >= 0.0) || !std::isfinite(p.z)) {
        throw DomainError("loop_field: point must have r >= 0 and finite z");
    }
    const double a = loop.radius;
    const double rho = p.r;
    const double zeta = p.z - loop.z;
    if (std::hypot(rho - a, zeta) < loop.wire_radius) {
        throw SingularityError("loop_field: point lies on the filament wire");
    }
    const double c = kMu0 / (2.0 * std::numbers::pi);
    const double s = (a + rho) * (a + rho) + zeta * zeta;
    const double d = (a - rho) * (a - rho) + zeta * zeta;
    if (rho == 0.0) {
        const double h = a * a + zeta * zeta;
        return {0.0, kMu0 * a * a / (2.0 * h * std::sqrt(h))};
    }
    const double m = 4.0 * a * rho / s;
    const EllipticKE ke = elliptic_ke(std::sqrt(m));
    const double root = std::sqrt(s);
    PoloidalField out;
    out.b_z = c / root * (ke.k + (a * a - rho * rho - zeta * zeta) / d * ke.e);
    // -K + (a^2 + rho^2 + zeta^2)/d E with K - E = K (m/2 + tail).
    const double bracket = -ke.k * (0.5 * m + ke.tail) + 2.0 * a * rho / d * ke.e;
    out.b_r = c * zeta / (rho * root) * bracket;
    return out;
}

Matrix field_coefficients(const std::vector<FilamentLoop>& loops, const std::vector<FieldPoint>& points) {
    Matrix q(2 * static_cast<Index>(points.size()), static_cast<Index>(loops.size()));
    for (std::size_t j = 0; j < loops.size(); ++j) {
        for (std::size_t i = 0; i < points.size(); ++i) {
            const PoloidalField f = loop_field(loops[j], points[i]);
            q(2 * static_cast<Index>(i), static_cast<Index>(j)) = f.b_r;
            q(2 * static_cast<Index>(i) + 1, static_cast<Index>(j)) = f.b_z;
        }
    }
    return q;
}

Matrix with_control_columns(const Matrix& b_mor, const Forcing& forcing, const std::vector<Index>& controls,
                            double droptol) {
    const auto it = std::find_if(forcing.blocks.begin(), forcing.blocks.end(),
                                 [](const ForcingBlock& b) { return b.family == ExcitationFamily::axi; });
    if (it == forcing.blocks.end()) throw ConfigError("with_control_columns: no axi forcing block");
    for (Index c : controls) {
        if (c < 0 || c >= it->columns.cols()) throw ConfigError("with_control_columns: control index out of range");
    }
    const Matrix fresh = block_orthonormalize(it->columns(Eigen::all, controls), b_mor, droptol);
    Matrix out(b_mor.rows(), b_mor.cols() + fresh.cols());
    out << b_mor, fresh;
    return out;
}

NullFieldSystem make_nullfield_system(const ReducedModel& rm, const Matrix& k, const FieldOperator& fo,
                                      const std::vector<Index>& controls) {
    const Matrix& m_all = rm.source(ExcitationFamily::axi);
    if (rm.source(ExcitationFamily::j0).size() != 0) {
        throw ConfigError("null-field problem: the passive model must not carry imposed-current constraints");
    }
    if (k.cols() != rm.n_red() || fo.q_gamma.cols() != k.rows()) {
        throw ShapeError("make_nullfield_system: K, V_r and Q_gamma dimensions disagree");
    }
    const Index n_src = m_all.cols();
    std::vector<bool> is_control(static_cast<std::size_t>(n_src), false);
    for (Index c : controls) {
        if (c < 0 || c >= n_src) throw ConfigError("control index " + std::to_string(c) + " is not an axi source");
        if (is_control[static_cast<std::size_t>(c)]) throw ConfigError("control index listed twice");
        is_control[static_cast<std::size_t>(c)] = true;
    }
    std::vector<Index> prescribed;
    for (Index c = 0; c < n_src; ++c) {
        if (!is_control[static_cast<std::size_t>(c)]) prescribed.push_back(c);
    }
    if (fo.q_x.cols() != static_cast<Index>(controls.size()) ||
        fo.q_y.cols() != static_cast<Index>(prescribed.size())) {
        throw ShapeError("make_nullfield_system: field operator columns do not match the coil split");
    }
    NullFieldSystem sys;
    sys.l_r = rm.l_r;
    sys.r_r = rm.r_r;
    sys.m_y = m_all(Eigen::all, prescribed);
    sys.m_x = m_all(Eigen::all, controls);
    sys.q_q = fo.q_gamma * k * rm.v_r;
    sys.q_y = fo.q_y;
    sys.q_x = fo.q_x;
    return sys;
}

NullFieldOperators assemble_nullfield(const NullFieldSystem& sys, double dt, bool modal) {
    const Index n = sys.l_r.rows();
    if (!(dt > 0.0)) throw DomainError("assemble_nullfield: dt must be positive");
    if (sys.r_r.rows() != n || sys.m_y.rows() != n || sys.m_x.rows() != n || sys.q_q.cols() != n ||
        sys.q_y.rows() != sys.q_q.rows() || sys.q_x.rows() != sys.q_q.rows()) {
        throw ShapeError("assemble_nullfield: inconsistent operator dimensions");
    }
    NullFieldOperators ops;
    ops.dt = dt;
    const Cholesky a_r = Cholesky::factor(build_dynamic_matrix(sys.l_r, sys.r_r, dt));
    ops.a_q = Matrix::Identity(n, n) - dt * a_r.solve(sys.r_r);
    ops.e_q = a_r.solve(sys.m_y);
    ops.f_q = a_r.solve(sys.m_x);
    ops.q_q = sys.q_q;
    ops.q_y = sys.q_y;
    ops.q_x = sys.q_x;
    ops.r_r = sys.r_r;
    ops.d_eff = sys.q_x + sys.q_q * ops.f_q;
    ops.d_pinv = pseudo_inverse(ops.d_eff);
    if (modal) {
        const EigDecomposition eig = sym_generalized_eig(sys.l_r, sys.r_r);
        ops.has_modal = true;
        ops.lambda = eig.eigenvalues;
        ops.s_r = eig.eigenvectors;
        ops.m_y_modal = ops.s_r.transpose() * sys.m_y;
        ops.m_x_modal = ops.s_r.transpose() * sys.m_x;
        ops.q_modal = sys.q_q * ops.s_r;
    }
    return ops;
}

Vector ControlResult::b_norm() const { return b_perp.colwise().norm().transpose(); }

Vector ControlResult::b_norm_uncontrolled() const { return b_perp_uncontrolled.colwise().norm().transpose(); }

namespace {

// One pass of the recursion; `controlled` selects the pseudo-inverse law or X = 0.
void run_recursion(const NullFieldOperators& ops, const Matrix& y, SolveMethod method, const Vector& q0,
                   const Vector& x0, bool controlled, Matrix& q_out, Matrix& x_out, Matrix& b_out,
                   Vector* b_eff_norm, Vector* residual) {
    const Index n_t = y.cols();
    const Index n = ops.n_state();
    q_out.resize(n, n_t);
    x_out = Matrix::Zero(ops.n_controls(), n_t);
    b_out.resize(ops.q_q.rows(), n_t);
    q_out.col(0) = q0;
    if (controlled) x_out.col(0) = x0;
    b_out.col(0) = ops.q_q * q0 + ops.q_y * y.col(0) + ops.q_x * x_out.col(0);
    if (b_eff_norm) b_eff_norm->setZero(n_t);
    if (residual) residual->setZero(n_t);

    const bool use_modal = method == SolveMethod::modal;
    if (use_modal && !ops.has_modal) {
        throw ConfigError("solve_nullfield: modal data was not assembled");
    }
    // Modal pieces: q = S qt, qt_{n+1} = (dt + Lambda)^-1 (Lambda qt_n + S^T M dU).
    Vector qt;
    Vector inv_den;
    Matrix d_eff_modal;
    Matrix q_s_inv;  // Q_q S (dt + Lambda)^-1
    if (use_modal) {
        qt = ops.s_r.transpose() * (ops.r_r * q0);
        inv_den = (ops.lambda.array() + ops.dt).inverse().matrix();
        q_s_inv = ops.q_modal * inv_den.asDiagonal();
    }
    for (Index s = 0; s + 1 < n_t; ++s) {
        const Vector dy = y.col(s + 1) - y.col(s);
        const Vector x_n = x_out.col(s);
        Vector known;
        if (use_modal) {
            const Vector drift = ops.lambda.cwiseProduct(qt) + ops.m_y_modal * dy - ops.m_x_modal * x_n;
            known = q_s_inv * drift + ops.q_y * y.col(s + 1);
        } else {
            known = ops.q_q * (ops.a_q * q_out.col(s) + ops.e_q * dy - ops.f_q * x_n) + ops.q_y * y.col(s + 1);
        }
        Vector x_next = Vector::Zero(ops.n_controls());
        if (controlled) {
            x_next = -(ops.d_pinv * known);
            if (b_eff_norm) (*b_eff_norm)(s + 1) = known.norm();
            if (residual) (*residual)(s + 1) = (ops.d_eff * x_next + known).norm();
        }
        const Vector dx = x_next - x_n;
        if (use_modal) {
            qt = inv_den.cwiseProduct(ops.lambda.cwiseProduct(qt) + ops.m_y_modal * dy + ops.m_x_modal * dx);
            q_out.col(s + 1) = ops.s_r * qt;
        } else {
            q_out.col(s + 1) = ops.a_q * q_out.col(s) + ops.e_q * dy + ops.f_q * dx;
        }
        x_out.col(s + 1) = x_next;
        b_out.col(s + 1) = ops.q_q * q_out.col(s + 1) + ops.q_y * y.col(s + 1) + ops.q_x * x_next;
    }
}

}  // namespace

ControlResult solve_nullfield(const NullFieldOperators& ops, const Matrix& y, const TimeGrid& grid,
                              SolveMethod method, const Vector& q0, const Vector& x0) {
    if (y.rows() != ops.n_prescribed() || y.cols() != grid.n_t) {
        throw ShapeError("solve_nullfield: prescribed-current series does not match the operators and grid");
    }
    const Vector q_init = q0.size() == 0 ? Vector::Zero(ops.n_state()) : q0;
    const Vector x_init = x0.size() == 0 ? Vector::Zero(ops.n_controls()) : x0;
    if (q_init.size() != ops.n_state() || x_init.size() != ops.n_controls()) {
        throw ShapeError("solve_nullfield: initial state or control has the wrong dimension");
    }
    ControlResult res;
    res.grid = grid;
    run_recursion(ops, y, method, q_init, x_init, true, res.q, res.x, res.b_perp, &res.b_eff_norm,
                  &res.control_residual);
    Matrix q_u;
    Matrix x_u;
    run_recursion(ops, y, method, q_init, x_init, false, q_u, x_u, res.b_perp_uncontrolled, nullptr, nullptr);
    return res;
}

BreakdownThreshold breakdown_threshold(double p, double a_eff, double b_t, double b_perp) {
    if (!(p > 0.0 && a_eff > 0.0 && b_t > 0.0 && b_perp > 0.0)) {
        throw DomainError("breakdown_threshold: all inputs must be positive");
    }
    BreakdownThreshold out;
    out.connection_length = 0.25 * a_eff * b_t / b_perp;
    const double arg = 510.0 * p * out.connection_length;
    if (!(arg > 1.0)) {
        throw DomainError("breakdown_threshold: 510 p L must exceed 1 for the formula to apply");
    }
    out.e_min = 1.25e4 * p / std::log(arg);
    return out;
}

void write_control_csv(const std::filesystem::path& path, const ControlResult& res) {
    std::vector<std::string> names;
    for (Index i = 0; i < res.x.rows(); ++i) names.push_back("X" + std::to_string(i + 1));
    names.emplace_back("B_perp_controlled");
    names.emplace_back("B_perp_uncontrolled");
    Matrix series(res.x.rows() + 2, res.grid.n_t);
    series.topRows(res.x.rows()) = res.x;
    series.row(res.x.rows()) = res.b_norm().transpose();
    series.row(res.x.rows() + 1) = res.b_norm_uncontrolled().transpose();
    write_series_csv(path, res.grid, names, series);
}

}  // namespace kmor
