#pragma once

// Excitation-driven block-Krylov enrichment and Galerkin reduction.

#include <filesystem>
#include <vector>

#include "kmor/excitation.hpp"

namespace kmor {

/// How q is chosen when evaluating the stopping residual. `minimal` takes
/// the least-squares q over span(V_r), which makes eta non-increasing under
/// basis nesting; `galerkin` solves (V_r^T A V_r) q = V_r^T b.
enum class ResidualKind { minimal, galerkin };
const char* residual_kind_name(ResidualKind k);
ResidualKind parse_residual_kind(const std::string& s);

struct KrylovConfig {
    double dt = 1e-3;
    double eps_mor = 1e-3;
    int k_max = 50;
    double droptol = 1e-10;
    ResidualKind residual = ResidualKind::minimal;
};

void validate(const KrylovConfig& cfg);

/// A = L_K + dt R_K.
Matrix build_dynamic_matrix(const Matrix& l_k, const Matrix& r_k, double dt);

struct KrylovResult {
    Matrix v_r;                       // orthonormal, N_red x N_mor
    std::vector<double> eta;          // eta[0] after the initial block, then one per iteration
    std::vector<Index> block_sizes;   // columns contributed by each block
    int n_kry = 0;                    // enrichment iterations after the initial block
    bool converged = false;

    Index n_mor() const { return v_r.cols(); }
    double eta_final() const { return eta.empty() ? 1.0 : eta.back(); }
};

/// Only R_K is factorized; L_K is applied as a matrix product.
KrylovResult krylov_enrich(const Matrix& r_k, const Matrix& l_k, const Matrix& b_mor, const KrylovConfig& cfg);

/// Frobenius-relative residual of the Galerkin solutions of A y = b for every
/// column b of B. An empty basis gives 1.
double mor_residual(const Matrix& a, const Matrix& v_r, const Matrix& b_mor);

/// Same as mor_residual with A V_r supplied by the caller.
double mor_residual_cached(const Matrix& av, const Matrix& v_r, const Matrix& b_mor);

/// min_q ||A V_r q - B||_F / ||B||_F, from A V_r.
double minimal_residual(const Matrix& av, const Matrix& b_mor);

struct ReducedModel {
    Matrix v_r;
    Matrix l_r;
    Matrix r_r;
    // V_r^T times the forcing columns of each excitation family (empty when
    // the family is absent).
    std::array<Matrix, kNumExcitationFamilies> sources_r;

    double dt = 0.0;
    double eps_mor = 0.0;
    double eta = 1.0;
    int n_kry = 0;
    BmorMode mode = BmorMode::wavelet;

    Index n_mor() const { return v_r.cols(); }
    Index n_red() const { return v_r.rows(); }
    const Matrix& source(ExcitationFamily f) const { return sources_r[static_cast<std::size_t>(f)]; }
};

/// L_r = V_r^T L_K V_r, R_r = V_r^T R_K V_r and every forcing block projected.
ReducedModel reduce_model(const ProjectedOperators& ops, const Forcing& forcing, const Matrix& v_r);

/// Writes v_r/l_r/r_r/source_<family> MORB files and manifest.json into `dir`.
void save_reduced_model(const std::filesystem::path& dir, const ReducedModel& rm);
ReducedModel load_reduced_model(const std::filesystem::path& dir);

}  // namespace kmor
