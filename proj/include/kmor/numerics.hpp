#pragma once

// Dense/sparse linear-algebra kernels shared by every stage of the pipeline.
// Dense storage is column-major 64-bit (Eigen default); sparse operators are
// compressed-column.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <variant>

#include "kmor/errors.hpp"

namespace kmor {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

struct Triplet {
    Index row;
    Index col;
    double value;
};

/// Builds a sparse matrix from triplets; duplicates are summed.
/// Throws ShapeError on out-of-range indices, DomainError on non-finite values.
SparseMatrix make_sparse(Index rows, Index cols, std::span<const Triplet> triplets);

bool all_finite(const Matrix& m);

/// Relative asymmetry ||A - A^T||_max / ||A||_max (0 for the zero matrix).
double asymmetry(const Matrix& a);

/// Averages (A + A^T)/2. Asymmetry above `tol` (relative) is an error, not
/// something to hide.
Matrix symmetrize(const Matrix& a, double tol = 1e-12);

/// Cholesky factorization, reusable across right-hand sides.
class Cholesky {
public:
    static Cholesky factor(const Matrix& a);
    static Cholesky factor(const SparseMatrix& a);

    Index dim() const { return dim_; }
    Matrix solve(const Matrix& b) const;
    Vector solve(const Vector& b) const;

private:
    using Dense = Eigen::LLT<Matrix>;
    using Sparse = Eigen::SimplicialLLT<SparseMatrix>;

    Index dim_ = 0;
    std::variant<std::shared_ptr<const Dense>, std::shared_ptr<const Sparse>> impl_;
};

/// Generalized symmetric-definite eigenproblem L phi = lambda R phi with
/// Phi^T R Phi = I and Phi^T L Phi = diag(lambda). Eigenvalues ascending.
struct EigDecomposition {
    Vector eigenvalues;
    Matrix eigenvectors;
};

EigDecomposition sym_generalized_eig(const Matrix& lm, const Matrix& rm);

struct SvdResult {
    Matrix u;      // rows x rank, orthonormal columns
    Vector sigma;  // rank, descending
    Matrix w;      // cols x rank, orthonormal columns
    Index rank() const { return sigma.size(); }
};

/// Thin SVD truncated at the smallest rank whose discarded tail energy
/// sum_{i>r} sigma_i^2 is at most tol^2 * sum sigma_i^2.
SvdResult truncated_svd(const Matrix& b, double tol);

/// Singular-value cutoff used for every rank decision in pseudo-inverses.
inline constexpr double kPinvCutoff = 1e-12;

/// Moore-Penrose pseudo-inverse with cutoff sigma_i <= kPinvCutoff * sigma_max.
Matrix pseudo_inverse(const Matrix& d);

/// Minimum-norm least-squares solution x = D^+ b.
Vector least_squares_minnorm(const Matrix& d, const Vector& b);

/// Projects W against the orthonormal columns of V and orthonormalizes the
/// remainder with classical Gram-Schmidt applied twice. Columns whose norm
/// after projection falls below droptol times their original norm are dropped.
Matrix block_orthonormalize(const Matrix& w, const Matrix& v, double droptol = 1e-10);

inline double frobenius_norm(const Matrix& m) { return m.norm(); }

/// Largest column 2-norm; the per-vector alternative to the Frobenius norm
/// for block quantities.
double max_column_norm(const Matrix& m);

/// Largest |a_ij|.
double max_abs(const Matrix& m);

/// Shortest decimal text that parses back to the same double; "inf",
/// "-inf" and "nan" for non-finite values.
std::string format_shortest(double x);

/// Binary matrix file: "MORB", rows (u64 LE), cols (u64 LE), then
/// rows*cols float64 LE values in column-major order.
void write_morb(const std::filesystem::path& path, const Matrix& m);
Matrix read_morb(const std::filesystem::path& path);

}  // namespace kmor
