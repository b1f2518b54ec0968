#pragma once

// Backward-Euler marching of (L + dt R) y_n = L y_{n-1} + f_n for the
// null-space and reduced systems.

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "kmor/mor.hpp"

namespace kmor {

enum class SolveMethod { direct, modal };
const char* solve_method_name(SolveMethod m);
SolveMethod parse_solve_method(const std::string& s);

struct TransientConfig {
    SolveMethod method = SolveMethod::direct;
    Vector y0;  // initial state in the marched coordinates; empty means zero
};

struct TransientResult {
    TimeGrid grid;
    Matrix states;  // dim x n_t, column n is y_n (or q_n)
    SolveMethod method = SolveMethod::direct;
    bool reduced = false;
    double t_setup = 0.0;  // seconds
    double t_march = 0.0;  // seconds

    double t_trans() const { return t_setup + t_march; }
};

/// b_n = L y_{n-1} + sum of the forcing blocks at step n.
Vector assemble_rhs(Index n, const Forcing& forcing, const Matrix& l, const Vector& y_prev);

/// Full order in the null-space coordinates.
TransientResult solve_transient(const ProjectedOperators& ops, const Forcing& forcing, const TransientConfig& cfg);

/// Reduced order: uses the stored projected forcing columns with the
/// signals of `forcing`.
TransientResult solve_transient(const ReducedModel& rm, const Forcing& forcing, const TransientConfig& cfg);

/// Generic kernel: `columns[i]` pairs with `signals[i]` and must have l.rows() rows.
TransientResult march(const Matrix& l, const Matrix& r, const std::vector<const Matrix*>& columns,
                      const std::vector<const Matrix*>& signals, const TimeGrid& grid, const TransientConfig& cfg);

/// I_n = K y_n + I0_n, or K V_r q_n + I0_n when v_r is given.
Matrix reconstruct_currents(const Matrix& states, const Matrix& k, const Matrix* v_r, const Matrix& i0);

/// Returned for a zero reference paired with a nonzero approximation.
inline constexpr double kInfiniteError = std::numeric_limits<double>::infinity();

/// eps(t_n) = ||I_full,n - I_mor,n|| / ||I_full,n||; 0/0 gives 0.
Vector relative_error_series(const Matrix& i_full, const Matrix& i_mor);

/// CSV with a leading t column and one column per row of `series`.
void write_series_csv(const std::filesystem::path& path, const TimeGrid& grid,
                      const std::vector<std::string>& names, const Matrix& series);

}  // namespace kmor
