#include "kmor/numerics.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace kmor {

namespace {

std::string shape_str(Index r, Index c) {
    std::ostringstream os;
    os << r << "x" << c;
    return os.str();
}

void require_square(const Matrix& a, const char* what) {
    if (a.rows() != a.cols()) {
        throw ShapeError(std::string(what) + ": expected square matrix, got " +
                         shape_str(a.rows(), a.cols()));
    }
}

}  // namespace

SparseMatrix make_sparse(Index rows, Index cols, std::span<const Triplet> triplets) {
    if (rows < 0 || cols < 0) {
        throw ShapeError("make_sparse: negative dimension");
    }
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(triplets.size());
    for (const auto& t : triplets) {
        if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols) {
            throw ShapeError("make_sparse: triplet (" + std::to_string(t.row) + ", " +
                             std::to_string(t.col) + ") outside " + shape_str(rows, cols));
        }
        if (!std::isfinite(t.value)) {
            throw DomainError("make_sparse: non-finite value");
        }
        trips.emplace_back(t.row, t.col, t.value);
    }
    SparseMatrix s(rows, cols);
    s.setFromTriplets(trips.begin(), trips.end());
    s.makeCompressed();
    return s;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

double asymmetry(const Matrix& a) {
    require_square(a, "asymmetry");
    if (a.size() == 0) {
        return 0.0;
    }
    const double scale = a.cwiseAbs().maxCoeff();
    if (scale == 0.0) {
        return 0.0;
    }
    return (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
}

Matrix symmetrize(const Matrix& a, double tol) {
    const double asym = asymmetry(a);
    if (asym > tol) {
        std::ostringstream os;
        os << "symmetrize: relative asymmetry " << asym << " exceeds " << tol;
        throw NotSymmetric(os.str());
    }
    Matrix s = 0.5 * (a + a.transpose());
    return s;
}

Cholesky Cholesky::factor(const Matrix& a) {
    require_square(a, "cholesky_factor");
    if (!a.allFinite()) {
        throw DomainError("cholesky_factor: non-finite entries");
    }
    if (asymmetry(a) > 1e-12) {
        throw NotSymmetric("cholesky_factor: matrix is not symmetric");
    }
    auto llt = std::make_shared<Dense>(a);
    if (llt->info() != Eigen::Success) {
        throw NotPositiveDefinite("cholesky_factor: non-positive pivot");
    }
    Cholesky c;
    c.dim_ = a.rows();
    c.impl_ = std::shared_ptr<const Dense>(std::move(llt));
    return c;
}

Cholesky Cholesky::factor(const SparseMatrix& a) {
    if (a.rows() != a.cols()) {
        throw ShapeError("cholesky_factor: expected square matrix, got " +
                         shape_str(a.rows(), a.cols()));
    }
    const SparseMatrix diff = a - SparseMatrix(a.transpose());
    double scale = 0.0;
    double asym = 0.0;
    for (Index k = 0; k < a.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(a, k); it; ++it) {
            if (!std::isfinite(it.value())) {
                throw DomainError("cholesky_factor: non-finite entries");
            }
            scale = std::max(scale, std::abs(it.value()));
        }
        for (SparseMatrix::InnerIterator it(diff, k); it; ++it) {
            asym = std::max(asym, std::abs(it.value()));
        }
    }
    if (scale > 0.0 && asym / scale > 1e-12) {
        throw NotSymmetric("cholesky_factor: matrix is not symmetric");
    }
    auto llt = std::make_shared<Sparse>();
    llt->compute(a);
    if (llt->info() != Eigen::Success) {
        throw NotPositiveDefinite("cholesky_factor: non-positive pivot");
    }
    Cholesky c;
    c.dim_ = a.rows();
    c.impl_ = std::shared_ptr<const Sparse>(std::move(llt));
    return c;
}

Matrix Cholesky::solve(const Matrix& b) const {
    if (b.rows() != dim_) {
        throw ShapeError("cholesky solve: rhs has " + std::to_string(b.rows()) +
                         " rows, factor has dimension " + std::to_string(dim_));
    }
    return std::visit([&](const auto& f) -> Matrix { return f->solve(b); }, impl_);
}

Vector Cholesky::solve(const Vector& b) const {
    if (b.size() != dim_) {
        throw ShapeError("cholesky solve: rhs length mismatch");
    }
    return std::visit([&](const auto& f) -> Vector { return f->solve(b); }, impl_);
}

EigDecomposition sym_generalized_eig(const Matrix& lm, const Matrix& rm) {
    require_square(lm, "sym_generalized_eig");
    require_square(rm, "sym_generalized_eig");
    if (lm.rows() != rm.rows()) {
        throw ShapeError("sym_generalized_eig: dimension mismatch");
    }
    // Both factorizations double as the SPD checks.
    (void)Cholesky::factor(lm);
    (void)Cholesky::factor(rm);
    const Matrix ls = symmetrize(lm);
    const Matrix rs = symmetrize(rm);
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(ls, rs, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success) {
        throw NotPositiveDefinite("sym_generalized_eig: decomposition failed");
    }
    return {es.eigenvalues(), es.eigenvectors()};
}

SvdResult truncated_svd(const Matrix& b, double tol) {
    if (!(tol >= 0.0 && tol <= 1.0)) {
        throw DomainError("truncated_svd: tol must lie in [0, 1]");
    }
    SvdResult out;
    if (b.size() == 0) {
        out.u = Matrix(b.rows(), 0);
        out.w = Matrix(b.cols(), 0);
        return out;
    }
    Eigen::BDCSVD<Matrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double total = s.squaredNorm();
    // tail[r] = sum_{i >= r} sigma_i^2, accumulated from the small end.
    Index rank = s.size();
    double tail = 0.0;
    const double budget = tol * tol * total;
    while (rank > 0 && tail + s(rank - 1) * s(rank - 1) <= budget) {
        tail += s(rank - 1) * s(rank - 1);
        --rank;
    }
    out.u = svd.matrixU().leftCols(rank);
    out.sigma = s.head(rank);
    out.w = svd.matrixV().leftCols(rank);
    return out;
}

Matrix pseudo_inverse(const Matrix& d) {
    if (d.size() == 0) {
        return Matrix::Zero(d.cols(), d.rows());
    }
    Eigen::BDCSVD<Matrix> svd(d, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double smax = s.size() > 0 ? s(0) : 0.0;
    Vector inv = Vector::Zero(s.size());
    for (Index i = 0; i < s.size(); ++i) {
        if (s(i) > kPinvCutoff * smax && s(i) > 0.0) {
            inv(i) = 1.0 / s(i);
        }
    }
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Vector least_squares_minnorm(const Matrix& d, const Vector& b) {
    if (d.rows() != b.size()) {
        throw ShapeError("least_squares_minnorm: rhs length mismatch");
    }
    return pseudo_inverse(d) * b;
}

Matrix block_orthonormalize(const Matrix& w, const Matrix& v, double droptol) {
    if (v.cols() > 0 && v.rows() != w.rows()) {
        throw ShapeError("block_orthonormalize: row mismatch between W and V");
    }
    const Index n = w.rows();
    Matrix basis(n, v.cols() + w.cols());
    if (v.cols() > 0) {
        basis.leftCols(v.cols()) = v;
    }
    Index used = v.cols();
    for (Index j = 0; j < w.cols(); ++j) {
        const double original = w.col(j).norm();
        if (original == 0.0) {
            continue;
        }
        Vector x = w.col(j);
        for (int pass = 0; pass < 2; ++pass) {
            if (used > 0) {
                const Vector coeff = basis.leftCols(used).transpose() * x;
                x.noalias() -= basis.leftCols(used) * coeff;
            }
        }
        const double remaining = x.norm();
        if (remaining < droptol * original || remaining == 0.0) {
            continue;
        }
        basis.col(used++) = x / remaining;
    }
    return basis.middleCols(v.cols(), used - v.cols());
}

double max_column_norm(const Matrix& m) {
    return m.cols() == 0 ? 0.0 : m.colwise().norm().maxCoeff();
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

namespace {

constexpr char kMagic[4] = {'M', 'O', 'R', 'B'};

template <typename T>
void put_le(std::ostream& os, T value) {
    static_assert(sizeof(T) == 8);
    std::uint64_t bits;
    std::memcpy(&bits, &value, 8);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffU);
    }
    os.write(reinterpret_cast<const char*>(bytes), 8);
}

template <typename T>
T get_le(std::istream& is) {
    unsigned char bytes[8];
    is.read(reinterpret_cast<char*>(bytes), 8);
    if (!is) {
        throw IoError("read_morb: truncated file");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    }
    T value;
    std::memcpy(&value, &bits, 8);
    return value;
}

}  // namespace

void write_morb(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw IoError("write_morb: cannot open " + path.string());
    }
    os.write(kMagic, 4);
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
    const double* data = m.data();
    for (Index i = 0; i < m.size(); ++i) {
        put_le<double>(os, data[i]);
    }
    if (!os) {
        throw IoError("write_morb: write failed for " + path.string());
    }
}

Matrix read_morb(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("read_morb: cannot open " + path.string());
    }
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("read_morb: bad magic in " + path.string());
    }
    const auto rows = get_le<std::uint64_t>(is);
    const auto cols = get_le<std::uint64_t>(is);
    if (rows > (1ULL << 31) || cols > (1ULL << 31)) {
        throw IoError("read_morb: implausible dimensions in " + path.string());
    }
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    double* data = m.data();
    for (Index i = 0; i < m.size(); ++i) {
        data[i] = get_le<double>(is);
    }
    return m;
}

std::string format_shortest(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), res.ptr);
}

}  // namespace kmor
