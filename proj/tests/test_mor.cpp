#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>

#include "kmor/mor.hpp"
#include "scenarios.hpp"

using namespace kmor;
using kmor::testing::random_spd;

namespace {

Matrix random_matrix(Index r, Index c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
    return m;
}

Matrix orthonormalize(const Matrix& m) {
    const Eigen::HouseholderQR<Matrix> qr(m);
    return qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
}

// Dense per-column Galerkin oracle for the stopping residual.
double galerkin_oracle(const Matrix& a, const Matrix& v, const Matrix& b) {
    if (v.cols() == 0) return 1.0;
    const Matrix ar = v.transpose() * a * v;
    Matrix res(b.rows(), b.cols());
    for (Index j = 0; j < b.cols(); ++j) {
        const Vector q = ar.fullPivLu().solve(v.transpose() * b.col(j));
        res.col(j) = a * v * q - b.col(j);
    }
    return res.norm() / b.norm();
}

}  // namespace

TEST_CASE("dynamic matrix", "[mor]") {
    const Matrix l = random_spd(6, 1);
    const Matrix r = random_spd(6, 2);
    CHECK((build_dynamic_matrix(l, r, 0.0) - l).norm() == 0.0);
    Matrix one(1, 1);
    one << 1.0;
    Matrix two(1, 1);
    two << 2.0;
    CHECK(std::abs(build_dynamic_matrix(one, two, 0.1)(0, 0) - 1.2) < 1e-15);
    CHECK_NOTHROW(Cholesky::factor(build_dynamic_matrix(l, r, 0.3)));
    CHECK_THROWS_AS(build_dynamic_matrix(l, random_spd(5, 2), 0.1), ShapeError);
}

TEST_CASE("stopping residual", "[mor]") {
    const Matrix a = random_spd(5, 7, 0.5, 4.0);
    const Matrix b = random_matrix(5, 2, 8);
    CHECK(mor_residual(a, Matrix(5, 0), b) == 1.0);
    CHECK(mor_residual(a, Matrix::Identity(5, 5), b) <= 1e-10);
    for (Index k = 1; k <= 4; ++k) {
        const Matrix v = orthonormalize(random_matrix(5, k, 20 + static_cast<std::uint64_t>(k)));
        const double oracle = galerkin_oracle(a, v, b);
        CHECK(std::abs(mor_residual(a, v, b) - oracle) <= 1e-12);
        CHECK(std::abs(mor_residual_cached(a * v, v, b) - oracle) <= 1e-12);
        // Least-squares residual never exceeds the Galerkin one.
        CHECK(minimal_residual(a * v, b) <= oracle + 1e-14);
    }
}

TEST_CASE("galerkin residual is orthogonal to the basis", "[mor][property]") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Matrix a = random_spd(30, s, 0.1, 10.0);
        const Matrix v = orthonormalize(random_matrix(30, 6, 100 + s));
        const Vector b = random_matrix(30, 1, 200 + s);
        const Vector q = (v.transpose() * a * v).ldlt().solve(v.transpose() * b);
        CHECK((v.transpose() * (a * v * q - b)).norm() <= 1e-10 * b.norm());
    }
}

TEST_CASE("R = I with an eigenvector forcing stops after one vector", "[mor]") {
    const Matrix l = random_spd(12, 4);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(l);
    const Matrix b = es.eigenvectors().col(5);
    KrylovConfig cfg;
    cfg.eps_mor = 1e-12;
    for (auto kind : {ResidualKind::minimal, ResidualKind::galerkin}) {
        cfg.residual = kind;
        const auto res = krylov_enrich(Matrix::Identity(12, 12), l, b, cfg);
        CHECK(res.n_mor() == 1);
        CHECK(res.n_kry == 0);
        CHECK(res.eta.front() <= 1e-12);
        CHECK(res.converged);
    }
}

TEST_CASE("krylov residual history is non-increasing", "[mor][property]") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Matrix l = random_spd(20, s, 0.1, 10.0);
        const Matrix r = random_spd(20, 1000 + s, 0.5, 2.0);
        const Matrix b = orthonormalize(random_matrix(20, 1 + static_cast<Index>(s % 3), 77 + s));
        KrylovConfig cfg;
        cfg.eps_mor = 1e-14;
        cfg.k_max = 40;
        cfg.dt = 0.05;
        const auto res = krylov_enrich(r, l, b, cfg);
        for (std::size_t k = 1; k < res.eta.size(); ++k) CHECK(res.eta[k] <= res.eta[k - 1] * (1 + 1e-12));
    }
}

TEST_CASE("krylov basis reaching full dimension is exact", "[mor]") {
    const Matrix l = random_spd(15, 3, 0.1, 10.0);
    const Matrix r = random_spd(15, 4, 0.5, 2.0);
    const Matrix b = orthonormalize(random_matrix(15, 1, 5));
    KrylovConfig cfg;
    cfg.eps_mor = 1e-300;
    cfg.k_max = 200;
    cfg.droptol = 1e-14;
    const auto res = krylov_enrich(r, l, b, cfg);
    CHECK(res.n_mor() == 15);
    CHECK(res.eta_final() <= 1e-10);
    CHECK((res.v_r.transpose() * res.v_r - Matrix::Identity(15, 15)).cwiseAbs().maxCoeff() <= 1e-12);
    const Matrix a = build_dynamic_matrix(l, r, cfg.dt);
    CHECK(mor_residual(a, res.v_r, b) <= 1e-10);
}

TEST_CASE("krylov bases are nested across iteration limits", "[mor][property]") {
    const Matrix l = random_spd(25, 9, 0.1, 10.0);
    const Matrix r = random_spd(25, 10, 0.5, 2.0);
    const Matrix b = orthonormalize(random_matrix(25, 2, 11));
    KrylovConfig cfg;
    cfg.eps_mor = 1e-14;
    Matrix prev;
    for (int k = 1; k <= 6; ++k) {
        cfg.k_max = k;
        const auto res = krylov_enrich(r, l, b, cfg);
        if (prev.size() > 0) {
            REQUIRE(res.v_r.cols() >= prev.cols());
            CHECK((res.v_r.leftCols(prev.cols()) - prev).norm() <= 1e-12);
        }
        prev = res.v_r;
    }
}

TEST_CASE("krylov basis spans the Krylov space of R^-1 L seeded with R^-1 B", "[mor]") {
    const Matrix l = random_spd(10, 21, 0.1, 10.0);
    const Matrix r = random_spd(10, 22, 0.5, 2.0);
    const Matrix b = orthonormalize(random_matrix(10, 1, 23));
    KrylovConfig cfg;
    cfg.eps_mor = 1e-14;
    cfg.k_max = 3;
    const auto res = krylov_enrich(r, l, b, cfg);
    REQUIRE(res.n_mor() == 4);
    const Matrix g = r.llt().solve(l);
    Matrix kry(10, 4);
    kry.col(0) = r.llt().solve(b);
    for (Index j = 1; j < 4; ++j) kry.col(j) = g * kry.col(j - 1);
    for (Index j = 0; j < 4; ++j) {
        const Vector v = kry.col(j);
        CHECK((v - res.v_r * (res.v_r.transpose() * v)).norm() <= 1e-9 * v.norm());
    }
}

TEST_CASE("reduced solve is exact on an invariant subspace", "[mor][property]") {
    // A V = V T with B inside span(V): the Galerkin solution reproduces the full one.
    const Matrix l = random_spd(20, 31, 0.1, 10.0);
    const Matrix r = Matrix::Identity(20, 20);
    const Matrix a = build_dynamic_matrix(l, r, 1e-3);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    const Matrix v = es.eigenvectors().leftCols(5);
    const Matrix ar = v.transpose() * a * v;
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Vector b = v * random_matrix(5, 1, 40 + s);
        const Vector full = a.llt().solve(b);
        const Vector red = v * ar.llt().solve(v.transpose() * b);
        CHECK((full - red).norm() <= 1e-10 * full.norm());
    }
    KrylovConfig cfg;
    cfg.eps_mor = 1e-12;
    const auto res = krylov_enrich(r, l, v, cfg);
    CHECK(res.n_mor() == 5);
    CHECK(res.eta_final() <= 1e-10);
}

TEST_CASE("krylov configuration is validated", "[mor]") {
    KrylovConfig cfg;
    cfg.eps_mor = 0.0;
    CHECK_THROWS_AS(validate(cfg), DomainError);
    cfg = KrylovConfig{};
    cfg.k_max = 0;
    CHECK_THROWS_AS(validate(cfg), DomainError);
    cfg = KrylovConfig{};
    cfg.dt = -1.0;
    CHECK_THROWS_AS(validate(cfg), DomainError);
    Matrix bad = -Matrix::Identity(3, 3);
    CHECK_THROWS_AS(krylov_enrich(bad, Matrix::Identity(3, 3), Matrix::Identity(3, 1), KrylovConfig{}),
                    NotPositiveDefinite);
    CHECK(parse_residual_kind(residual_kind_name(ResidualKind::galerkin)) == ResidualKind::galerkin);
}

TEST_CASE("reduction of a generated model", "[mor]") {
    const auto sc = kmor::testing::fast_vde_scenario(40, 5);
    const auto ns = build_nullspace(sc.model.f, sc.model.size());
    const auto ops = project_operators(sc.model, ns.k);
    const auto fo = build_forcing(sc.model, ns, make_excitation(sc.model, sc.waveforms, sc.grid));

    const Index n = ops.l_k.rows();
    const auto same = reduce_model(ops, fo, Matrix::Identity(n, n));
    CHECK((same.l_r - ops.l_k).norm() <= 1e-15 * ops.l_k.norm());
    CHECK((same.r_r - ops.r_k).norm() <= 1e-15 * ops.r_k.norm());
    for (const auto& blk : fo.blocks) CHECK((same.source(blk.family) - blk.columns).norm() == 0.0);

    BmorSettings st;
    st.tol_svd = 1e-4;
    st.eps_w = 1e-4;
    const auto rhs = assemble_bmor(fo, st);
    KrylovConfig cfg;
    cfg.dt = sc.grid.dt;
    cfg.eps_mor = 1e-4;
    const auto kr = krylov_enrich(ops.r_k, ops.l_k, rhs.b_mor, cfg);
    ReducedModel rm = reduce_model(ops, fo, kr.v_r);
    CHECK(rm.l_r.rows() == kr.n_mor());
    CHECK(rm.r_r.cols() == kr.n_mor());
    for (const auto& blk : fo.blocks) CHECK(rm.source(blk.family).rows() == kr.n_mor());
    CHECK_NOTHROW(Cholesky::factor(rm.l_r));
    CHECK_NOTHROW(Cholesky::factor(rm.r_r));
    CHECK_THROWS_AS(reduce_model(ops, fo, Matrix::Identity(n - 1, 2)), ShapeError);

    rm.dt = cfg.dt;
    rm.eps_mor = cfg.eps_mor;
    rm.eta = kr.eta_final();
    rm.n_kry = kr.n_kry;
    const auto dir = std::filesystem::temp_directory_path() / "kmor_mor_roundtrip";
    std::filesystem::remove_all(dir);
    save_reduced_model(dir, rm);
    const auto back = load_reduced_model(dir);
    CHECK((back.v_r.array() == rm.v_r.array()).all());
    CHECK((back.l_r.array() == rm.l_r.array()).all());
    CHECK((back.r_r.array() == rm.r_r.array()).all());
    for (std::size_t f = 0; f < kNumExcitationFamilies; ++f) {
        CHECK(back.sources_r[f].size() == rm.sources_r[f].size());
        if (rm.sources_r[f].size()) CHECK((back.sources_r[f].array() == rm.sources_r[f].array()).all());
    }
    CHECK(back.dt == rm.dt);
    CHECK(back.eta == rm.eta);
    CHECK(back.n_kry == rm.n_kry);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_reduced_model(dir), IoError);
}
