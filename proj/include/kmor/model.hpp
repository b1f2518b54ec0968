#pragma once

// Desk-scale full-order MQS models built from circular filament loops:
// analytic mutual inductances, net-current constraints and the null-space
// change of variables I = K y + I0.

#include <array>
#include <string>
#include <vector>

#include "kmor/numerics.hpp"

namespace kmor {

inline constexpr double kMu0 = 4.0e-7 * 3.14159265358979323846;

/// Complete elliptic integrals K(k), E(k) of modulus k via the
/// arithmetic-geometric mean. `tail` is sum_{n>=1} 2^{n-1} c_n^2, which gives
/// K - E = K (k^2/2 + tail) without cancellation.
struct EllipticKE {
    double k;
    double e;
    double tail;
};
EllipticKE elliptic_ke(double modulus);

/// Circular filament with axis parallel to z. `offset` is the radial distance
/// of its axis from the global z axis (0 for coaxial loops).
struct FilamentLoop {
    double radius = 1.0;
    double z = 0.0;
    double offset = 0.0;
    double wire_radius = 1e-3;
    double resistance = 1.0;
};

void validate_loop(const FilamentLoop& loop);

/// Self inductance of a thin round-wire loop, mu0 a (ln(8a/r_w) - 1.75).
double self_inductance(const FilamentLoop& loop);

/// Mutual inductance between two filaments. Coaxial pairs use Maxwell's
/// closed form; axis-parallel pairs integrate the vector potential of `a`
/// around `b`.
double mutual_inductance(const FilamentLoop& a, const FilamentLoop& b);

/// Smallest distance between the two filament centerlines.
double filament_distance(const FilamentLoop& a, const FilamentLoop& b);

/// Coaxial rings at equal arc length on the ellipse (r0 + a cos t,
/// kappa a sin t). Ring resistance scales with radius / r0.
std::vector<FilamentLoop> shell_rings(int n, double r0, double a, double kappa, double wire_radius,
                                      double resistance);

/// Families of source terms entering the passive structure.
enum class SourceFamily { axi = 0, three_d = 1, volt = 2 };
inline constexpr std::size_t kNumSourceFamilies = 3;
const char* family_name(SourceFamily f);
SourceFamily parse_family(const std::string& name);

/// A driven source. Inductive families (axi, three_d) carry a filament loop
/// excluded from the unknowns; the volt family applies its waveform as a loop
/// voltage on passive loop `target`.
struct SourceSpec {
    std::string name;
    SourceFamily family = SourceFamily::axi;
    FilamentLoop loop;
    Index target = -1;
    std::string waveform;
};

struct FilamentSpec {
    std::vector<FilamentLoop> loops;
    std::vector<SourceSpec> sources;
};

/// Net-current constraint: sum of member loop currents equals the named
/// waveform.
struct ConstraintGroup {
    std::vector<Index> members;
    std::string waveform;
};

struct Constraints {
    SparseMatrix f;  // m x N
    std::vector<std::string> waveforms;
};

Constraints assemble_constraints(const std::vector<ConstraintGroup>& groups, Index n_loops);

struct FullOrderModel {
    SparseMatrix r;  // N x N, ohms
    Matrix l;        // N x N, henries
    SparseMatrix f;  // m x N
    std::vector<std::string> constraint_waveforms;
    bool constraints_rank_deficient = false;
    // Per family: inductive families hold mutual-inductance columns
    // (passive x source, henries); volt holds unit incidence columns.
    std::array<Matrix, kNumSourceFamilies> sources;
    std::array<std::vector<std::string>, kNumSourceFamilies> source_names;
    std::array<std::vector<std::string>, kNumSourceFamilies> source_waveforms;

    Index size() const { return l.rows(); }
    const Matrix& source_block(SourceFamily f) const { return sources[static_cast<std::size_t>(f)]; }
};

/// Builds L, R and the source blocks. `jitter` (meters) perturbs the axial
/// position of every passive loop with a seeded uniform draw; 0 disables it.
FullOrderModel generate_filament_model(const FilamentSpec& spec, std::uint64_t seed,
                                       double jitter = 0.0);

/// Adds constraint rows to an existing model (replacing any present).
void attach_constraints(FullOrderModel& model, const Constraints& c);

struct NullspaceData {
    Matrix k;      // N x (N - rank F), orthonormal columns
    Matrix f_pinv; // N x m, I0(alpha) = f_pinv * alpha
    Index rank = 0;

    Vector particular(const Vector& alpha) const;
    Matrix particular(const Matrix& alpha_series) const;
};

NullspaceData build_nullspace(const SparseMatrix& f, Index n);

struct ProjectedOperators {
    Matrix r_k;
    Matrix l_k;
};

ProjectedOperators project_operators(const FullOrderModel& model, const Matrix& k);

}  // namespace kmor
