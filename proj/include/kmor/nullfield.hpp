#pragma once

// Null-field control: poloidal field operators of coaxial filaments, the
// reduced eddy-current recursion and pseudo-inverse control currents.

#include <vector>

#include "kmor/mor.hpp"
#include "kmor/transient.hpp"

namespace kmor {

/// Point in the poloidal plane (cylindrical radius r, height z).
struct FieldPoint {
    double r = 0.0;
    double z = 0.0;
};

struct PoloidalField {
    double b_r = 0.0;
    double b_z = 0.0;
};

/// Field of a unit current in a coaxial filament. Throws GeometryError for
/// offset loops and SingularityError within the wire radius.
PoloidalField loop_field(const FilamentLoop& loop, const FieldPoint& p);

/// Rows (2i, 2i+1) hold (B_r, B_z) at point i; column j is loop j.
Matrix field_coefficients(const std::vector<FilamentLoop>& loops, const std::vector<FieldPoint>& points);

struct FieldOperator {
    Matrix q_gamma;  // passive loops
    Matrix q_y;      // prescribed coils
    Matrix q_x;      // control coils
};

/// Ingredients of the recursion in the marched coordinates. The full-order
/// problem is the case V_r = I.
struct NullFieldSystem {
    Matrix l_r;
    Matrix r_r;
    Matrix m_y;  // V_r^T M_Y
    Matrix m_x;  // V_r^T M_X
    Matrix q_q;  // Q_gamma K V_r
    Matrix q_y;
    Matrix q_x;
};

/// Splits the reduced axi source block into prescribed (Y) and control (X)
/// columns. The model must be unconstrained (I0 = 0).
NullFieldSystem make_nullfield_system(const ReducedModel& rm, const Matrix& k, const FieldOperator& fo,
                                      const std::vector<Index>& controls);

/// Control currents are unknown when the basis is built, so their waveforms
/// cannot weight the compression. Appends the control columns of the axi
/// forcing block to B_mor, orthonormalized against the existing columns.
Matrix with_control_columns(const Matrix& b_mor, const Forcing& forcing, const std::vector<Index>& controls,
                            double droptol = 1e-10);

struct NullFieldOperators {
    double dt = 0.0;
    Matrix a_q;
    Matrix e_q;
    Matrix f_q;
    Matrix q_q;
    Matrix q_y;
    Matrix q_x;
    Matrix d_eff;
    Matrix d_pinv;
    Matrix r_r;

    bool has_modal = false;
    Vector lambda;
    Matrix s_r;
    Matrix m_y_modal;  // S_r^T M_Y
    Matrix m_x_modal;  // S_r^T M_X
    Matrix q_modal;    // Q_q S_r

    Index n_state() const { return a_q.rows(); }
    Index n_controls() const { return q_x.cols(); }
    Index n_prescribed() const { return q_y.cols(); }
};

NullFieldOperators assemble_nullfield(const NullFieldSystem& sys, double dt, bool modal = true);

struct ControlResult {
    TimeGrid grid;
    Matrix x;                     // n_controls x n_t
    Matrix q;                     // state x n_t
    Matrix b_perp;                // 2 n_points x n_t
    Matrix b_perp_uncontrolled;   // companion run with X = 0
    Vector b_eff_norm;            // ||B_eff,n|| (0 at n = 0)
    Vector control_residual;      // ||D_eff X_n + B_eff,n|| (0 at n = 0)

    Vector b_norm() const;
    Vector b_norm_uncontrolled() const;
};

/// `y` is n_prescribed x n_t; X_0 = 0 unless x0 is given, q0 defaults to 0.
ControlResult solve_nullfield(const NullFieldOperators& ops, const Matrix& y, const TimeGrid& grid,
                              SolveMethod method = SolveMethod::direct, const Vector& q0 = {},
                              const Vector& x0 = {});

struct BreakdownThreshold {
    double connection_length = 0.0;
    double e_min = 0.0;
};

/// L = 0.25 a_eff B_T / B_perp, E_min = 1.25e4 p / ln(510 p L). Units are
/// whatever the caller uses for p; no conversion is applied.
BreakdownThreshold breakdown_threshold(double p, double a_eff, double b_t, double b_perp);

void write_control_csv(const std::filesystem::path& path, const ControlResult& res);

}  // namespace kmor
