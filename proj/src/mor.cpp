#include "kmor/mor.hpp"

#include <fstream>

namespace kmor {

void validate(const KrylovConfig& cfg) {
    if (!(cfg.dt > 0.0)) throw DomainError("Krylov: dt must be positive");
    if (!(cfg.eps_mor > 0.0)) throw DomainError("Krylov: eps_mor must be positive");
    if (cfg.k_max < 1) throw DomainError("Krylov: k_max must be at least 1");
    if (!(cfg.droptol >= 0.0)) throw DomainError("Krylov: droptol must be non-negative");
}

Matrix build_dynamic_matrix(const Matrix& l_k, const Matrix& r_k, double dt) {
    if (l_k.rows() != l_k.cols() || r_k.rows() != r_k.cols() || l_k.rows() != r_k.rows()) {
        throw ShapeError("build_dynamic_matrix: L_K and R_K must be square and equal size");
    }
    if (!(dt >= 0.0)) throw DomainError("build_dynamic_matrix: dt must be non-negative");
    return l_k + dt * r_k;
}

double mor_residual_cached(const Matrix& av, const Matrix& v_r, const Matrix& b_mor) {
    const double bnorm = b_mor.norm();
    if (bnorm == 0.0) return 0.0;
    if (v_r.cols() == 0) return 1.0;
    Matrix ar = v_r.transpose() * av;
    ar = 0.5 * (ar + ar.transpose());
    Eigen::LLT<Matrix> llt(ar);
    if (llt.info() != Eigen::Success) {
        throw SingularProjection("mor_residual: reduced dynamic matrix is not positive definite");
    }
    const Matrix q = llt.solve(v_r.transpose() * b_mor);
    return (av * q - b_mor).norm() / bnorm;
}

double minimal_residual(const Matrix& av, const Matrix& b_mor) {
    const double bnorm = b_mor.norm();
    if (bnorm == 0.0) return 0.0;
    if (av.cols() == 0) return 1.0;
    const Eigen::HouseholderQR<Matrix> qr(av);
    const Matrix q = qr.householderQ() * Matrix::Identity(av.rows(), av.cols());
    return (b_mor - q * (q.transpose() * b_mor)).norm() / bnorm;
}

const char* residual_kind_name(ResidualKind k) { return k == ResidualKind::minimal ? "minimal" : "galerkin"; }

ResidualKind parse_residual_kind(const std::string& s) {
    if (s == "minimal") return ResidualKind::minimal;
    if (s == "galerkin") return ResidualKind::galerkin;
    throw ConfigError("unknown residual kind '" + s + "'");
}

double mor_residual(const Matrix& a, const Matrix& v_r, const Matrix& b_mor) {
    if (a.rows() != a.cols() || v_r.rows() != a.rows() || b_mor.rows() != a.rows()) {
        throw ShapeError("mor_residual: inconsistent dimensions");
    }
    return mor_residual_cached(a * v_r, v_r, b_mor);
}

KrylovResult krylov_enrich(const Matrix& r_k, const Matrix& l_k, const Matrix& b_mor, const KrylovConfig& cfg) {
    validate(cfg);
    const Index n = l_k.rows();
    if (b_mor.rows() != n) {
        throw ShapeError("krylov_enrich: B_mor has " + std::to_string(b_mor.rows()) + " rows, expected " +
                         std::to_string(n));
    }
    const Matrix a = build_dynamic_matrix(l_k, r_k, cfg.dt);
    const Cholesky r_chol = Cholesky::factor(r_k);

    KrylovResult out;
    out.v_r.resize(n, 0);
    Matrix av(n, 0);
    auto append = [&](const Matrix& block) {
        const Index old = out.v_r.cols();
        out.v_r.conservativeResize(Eigen::NoChange, old + block.cols());
        out.v_r.rightCols(block.cols()) = block;
        av.conservativeResize(Eigen::NoChange, old + block.cols());
        av.rightCols(block.cols()).noalias() = a * block;
        out.block_sizes.push_back(block.cols());
        out.eta.push_back(cfg.residual == ResidualKind::minimal ? minimal_residual(av, b_mor)
                                                                : mor_residual_cached(av, out.v_r, b_mor));
    };

    Matrix block = block_orthonormalize(r_chol.solve(b_mor), out.v_r, cfg.droptol);
    if (block.cols() == 0) {
        out.eta.push_back(b_mor.norm() == 0.0 ? 0.0 : 1.0);
        out.converged = out.eta.back() <= cfg.eps_mor;
        return out;
    }
    append(block);
    while (out.eta.back() > cfg.eps_mor && out.n_kry < cfg.k_max) {
        const Matrix w = r_chol.solve(Matrix(l_k * block));
        block = block_orthonormalize(w, out.v_r, cfg.droptol);
        if (block.cols() == 0) break;
        ++out.n_kry;
        append(block);
    }
    out.converged = out.eta.back() <= cfg.eps_mor;
    return out;
}

ReducedModel reduce_model(const ProjectedOperators& ops, const Forcing& forcing, const Matrix& v_r) {
    const Index n = ops.l_k.rows();
    if (v_r.rows() != n || ops.r_k.rows() != n) {
        throw ShapeError("reduce_model: V_r rows do not match the projected operators");
    }
    ReducedModel rm;
    rm.v_r = v_r;
    rm.l_r = symmetrize(v_r.transpose() * ops.l_k * v_r);
    rm.r_r = symmetrize(v_r.transpose() * ops.r_k * v_r);
    try {
        Cholesky::factor(rm.l_r);
        Cholesky::factor(rm.r_r);
    } catch (const NotPositiveDefinite& e) {
        throw NotPositiveDefinite(std::string("reduce_model: projected operator lost definiteness: ") + e.what());
    }
    for (const auto& blk : forcing.blocks) {
        if (blk.columns.rows() != n) {
            throw ShapeError("reduce_model: forcing block does not live in the null-space coordinates");
        }
        if (blk.columns.cols() == 0) continue;
        rm.sources_r[static_cast<std::size_t>(blk.family)] = v_r.transpose() * blk.columns;
    }
    return rm;
}

void save_reduced_model(const std::filesystem::path& dir, const ReducedModel& rm) {
    std::filesystem::create_directories(dir);
    write_morb(dir / "v_r.morb", rm.v_r);
    write_morb(dir / "l_r.morb", rm.l_r);
    write_morb(dir / "r_r.morb", rm.r_r);
    nlohmann::json families = nlohmann::json::array();
    for (std::size_t f = 0; f < kNumExcitationFamilies; ++f) {
        if (rm.sources_r[f].size() == 0) continue;
        const std::string name = excitation_family_name(static_cast<ExcitationFamily>(f));
        write_morb(dir / ("source_" + name + ".morb"), rm.sources_r[f]);
        families.push_back(name);
    }
    const nlohmann::json manifest = {
        {"eps_mor", rm.eps_mor}, {"eta", rm.eta},       {"n_kry", rm.n_kry},
        {"n_mor", rm.n_mor()},   {"n_red", rm.n_red()}, {"dt", rm.dt},
        {"mode", bmor_mode_name(rm.mode)}, {"source_families", families},
    };
    std::ofstream os(dir / "manifest.json");
    if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
    os << manifest.dump(2) << '\n';
}

ReducedModel load_reduced_model(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw IoError("missing reduced-model manifest in " + dir.string());
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("corrupt reduced-model manifest: ") + e.what());
    }
    ReducedModel rm;
    rm.v_r = read_morb(dir / "v_r.morb");
    rm.l_r = read_morb(dir / "l_r.morb");
    rm.r_r = read_morb(dir / "r_r.morb");
    rm.eps_mor = m.at("eps_mor").get<double>();
    rm.eta = m.at("eta").get<double>();
    rm.n_kry = m.at("n_kry").get<int>();
    rm.dt = m.at("dt").get<double>();
    rm.mode = parse_bmor_mode(m.at("mode").get<std::string>());
    for (const auto& name : m.at("source_families")) {
        for (std::size_t f = 0; f < kNumExcitationFamilies; ++f) {
            if (name.get<std::string>() == excitation_family_name(static_cast<ExcitationFamily>(f))) {
                rm.sources_r[f] = read_morb(dir / ("source_" + name.get<std::string>() + ".morb"));
            }
        }
    }
    if (rm.l_r.rows() != rm.n_mor() || rm.r_r.rows() != rm.n_mor()) {
        throw IoError("reduced-model files in " + dir.string() + " have inconsistent sizes");
    }
    return rm;
}

}  // namespace kmor
