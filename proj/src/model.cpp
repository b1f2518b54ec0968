#include "kmor/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace kmor {

namespace {

// AGM on (1, kc) with c_0 = k. Takes m = k^2 and mc = 1 - m separately so
// callers can pass a complement computed without cancellation.
EllipticKE elliptic_from_parameter(double m, double mc) {
    if (!(m >= 0.0 && m < 1.0) || !(mc > 0.0)) {
        throw DomainError("elliptic integrals: parameter outside [0, 1)");
    }
    double a = 1.0;
    double b = std::sqrt(mc);
    double c = std::sqrt(m);
    double tail = 0.0;
    double weight = 0.5;  // 2^{n-1}
    for (int n = 0; n < 64; ++n) {
        const double a_next = 0.5 * (a + b);
        const double b_next = std::sqrt(a * b);
        // c_{n+1} = c_n^2 / (4 a_{n+1}) avoids forming a_n - b_n.
        const double c_next = c * c / (4.0 * a_next);
        a = a_next;
        b = b_next;
        c = c_next;
        weight *= 2.0;
        tail += weight * c * c;
        if (c * c * weight <= 1e-17 * tail || c == 0.0) {
            break;
        }
    }
    const double kk = std::numbers::pi / (2.0 * a);
    const double e = kk * (1.0 - 0.5 * m - tail);
    return {kk, e, tail};
}

// Azimuthal vector potential per unit current of a coaxial loop of radius a
// at cylindrical radius rho and axial separation dz, in tesla-meters.
double vector_potential(double a, double rho, double dz) {
    if (rho <= 0.0) {
        return 0.0;
    }
    const double denom = (a + rho) * (a + rho) + dz * dz;
    const double m = 4.0 * a * rho / denom;
    const double mc = ((a - rho) * (a - rho) + dz * dz) / denom;
    if (mc <= 0.0) {
        throw SingularityError("vector potential evaluated on the filament");
    }
    const auto ke = elliptic_from_parameter(m, mc);
    // (1 - k^2/2) K - E = K * tail
    return kMu0 / std::numbers::pi * std::sqrt(a / rho) * ke.k * ke.tail / std::sqrt(m);
}

double coaxial_mutual(double a, double b, double dz) {
    const double denom = (a + b) * (a + b) + dz * dz;
    const double m = 4.0 * a * b / denom;
    const double mc = ((a - b) * (a - b) + dz * dz) / denom;
    if (mc <= 0.0) {
        throw GeometryError("mutual inductance of coincident filaments");
    }
    const auto ke = elliptic_from_parameter(m, mc);
    // (2/k - k) K - (2/k) E = (2/k) K tail
    return kMu0 * std::sqrt(a * b) * 2.0 * ke.k * ke.tail / std::sqrt(m);
}

// Integrates A_phi of loop `a` around loop `b` whose axis is displaced by d.
double offset_mutual(const FilamentLoop& a, const FilamentLoop& b, double d) {
    const double dz = b.z - a.z;
    const double rb = b.radius;
    auto integrand = [&](double theta) {
        const double c = std::cos(theta);
        const double rho = std::sqrt(d * d + rb * rb + 2.0 * d * rb * c);
        if (rho == 0.0) {
            return 0.0;
        }
        return vector_potential(a.radius, rho, dz) * rb * (rb + d * c) / rho;
    };
    // Periodic analytic integrand: the trapezoid rule converges geometrically.
    int n = 64;
    double prev = 0.0;
    {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            s += integrand(2.0 * std::numbers::pi * i / n);
        }
        prev = s * 2.0 * std::numbers::pi / n;
    }
    while (n < (1 << 18)) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            s += integrand(2.0 * std::numbers::pi * (i + 0.5) / n);
        }
        const double next = 0.5 * prev + s * std::numbers::pi / n;
        n *= 2;
        if (std::abs(next - prev) <= 1e-14 * std::abs(next)) {
            return next;
        }
        prev = next;
    }
    return prev;
}

}  // namespace

EllipticKE elliptic_ke(double modulus) {
    if (!(modulus >= 0.0 && modulus < 1.0)) {
        throw DomainError("elliptic_ke: modulus must lie in [0, 1)");
    }
    const double m = modulus * modulus;
    return elliptic_from_parameter(m, (1.0 - modulus) * (1.0 + modulus));
}

void validate_loop(const FilamentLoop& loop) {
    std::ostringstream os;
    if (!(loop.radius > 0.0)) {
        os << "loop radius must be positive (got " << loop.radius << ")";
    } else if (!(loop.wire_radius > 0.0 && loop.wire_radius < loop.radius / 10.0)) {
        os << "wire radius must lie in (0, radius/10) (got " << loop.wire_radius << ")";
    } else if (!(loop.resistance > 0.0)) {
        os << "loop resistance must be positive (got " << loop.resistance << ")";
    } else if (!std::isfinite(loop.z) || !(loop.offset >= 0.0)) {
        os << "loop position must be finite with non-negative axis offset";
    } else {
        return;
    }
    throw GeometryError(os.str());
}

double self_inductance(const FilamentLoop& loop) {
    return kMu0 * loop.radius * (std::log(8.0 * loop.radius / loop.wire_radius) - 1.75);
}

double mutual_inductance(const FilamentLoop& a, const FilamentLoop& b) {
    const double d = std::abs(b.offset - a.offset);
    if (d == 0.0) {
        return coaxial_mutual(a.radius, b.radius, b.z - a.z);
    }
    return offset_mutual(a, b, d);
}

double filament_distance(const FilamentLoop& a, const FilamentLoop& b) {
    const double dz = b.z - a.z;
    const double d = std::abs(b.offset - a.offset);
    if (d == 0.0) {
        return std::hypot(a.radius - b.radius, dz);
    }
    // Distance from a point of b to circle a is exact; minimize over b.
    constexpr int kSamples = 4096;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < kSamples; ++i) {
        const double th = 2.0 * std::numbers::pi * i / kSamples;
        const double rho = std::sqrt(d * d + b.radius * b.radius + 2.0 * d * b.radius * std::cos(th));
        best = std::min(best, std::hypot(rho - a.radius, dz));
    }
    return best;
}

const char* family_name(SourceFamily f) {
    switch (f) {
        case SourceFamily::axi:
            return "axi";
        case SourceFamily::three_d:
            return "3d";
        case SourceFamily::volt:
            return "volt";
    }
    return "?";
}

SourceFamily parse_family(const std::string& name) {
    if (name == "axi") return SourceFamily::axi;
    if (name == "3d") return SourceFamily::three_d;
    if (name == "volt") return SourceFamily::volt;
    throw ConfigError("unknown source family '" + name + "'");
}

Constraints assemble_constraints(const std::vector<ConstraintGroup>& groups, Index n_loops) {
    std::vector<Triplet> trips;
    Constraints out;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].members.empty()) {
            throw ConstraintError("constraint group " + std::to_string(g) + " is empty");
        }
        for (Index m : groups[g].members) {
            if (m < 0 || m >= n_loops) {
                throw ConstraintError("constraint group " + std::to_string(g) + " references loop " +
                                      std::to_string(m) + " outside [0, " + std::to_string(n_loops) + ")");
            }
            trips.push_back({static_cast<Index>(g), m, 1.0});
        }
        out.waveforms.push_back(groups[g].waveform);
    }
    out.f = make_sparse(static_cast<Index>(groups.size()), n_loops, trips);
    // Repeated members would sum to 2; a net-current row counts each loop once.
    for (Index k = 0; k < out.f.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(out.f, k); it; ++it) {
            it.valueRef() = 1.0;
        }
    }
    return out;
}

FullOrderModel generate_filament_model(const FilamentSpec& spec, std::uint64_t seed, double jitter) {
    std::vector<FilamentLoop> loops = spec.loops;
    if (jitter > 0.0) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-jitter, jitter);
        for (auto& lp : loops) {
            lp.z += u(rng);
        }
    }
    const auto n = static_cast<Index>(loops.size());
    for (const auto& lp : loops) {
        validate_loop(lp);
    }
    auto check_gap = [](const FilamentLoop& a, const FilamentLoop& b, const std::string& what) {
        if (filament_distance(a, b) < a.wire_radius + b.wire_radius) {
            throw GeometryError("overlapping filaments: " + what);
        }
    };
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            check_gap(loops[i], loops[j], "loops " + std::to_string(i) + " and " + std::to_string(j));
        }
    }

    FullOrderModel model;
    model.l.resize(n, n);
    for (Index i = 0; i < n; ++i) {
        model.l(i, i) = self_inductance(loops[i]);
        for (Index j = i + 1; j < n; ++j) {
            const double m = mutual_inductance(loops[i], loops[j]);
            model.l(i, j) = m;
            model.l(j, i) = m;
        }
    }
    std::vector<Triplet> rt;
    rt.reserve(loops.size());
    for (Index i = 0; i < n; ++i) {
        rt.push_back({i, i, loops[i].resistance});
    }
    model.r = make_sparse(n, n, rt);
    model.f = SparseMatrix(0, n);

    std::array<std::vector<const SourceSpec*>, kNumSourceFamilies> by_family;
    for (const auto& s : spec.sources) {
        by_family[static_cast<std::size_t>(s.family)].push_back(&s);
    }
    for (std::size_t f = 0; f < kNumSourceFamilies; ++f) {
        const auto& list = by_family[f];
        Matrix block = Matrix::Zero(n, static_cast<Index>(list.size()));
        for (std::size_t c = 0; c < list.size(); ++c) {
            const SourceSpec& s = *list[c];
            if (s.family == SourceFamily::volt) {
                if (s.target < 0 || s.target >= n) {
                    throw GeometryError("voltage source '" + s.name + "' targets loop " +
                                        std::to_string(s.target) + " outside the model");
                }
                block(s.target, static_cast<Index>(c)) = 1.0;
            } else {
                validate_loop(s.loop);
                for (Index i = 0; i < n; ++i) {
                    check_gap(loops[i], s.loop, "source '" + s.name + "' and loop " + std::to_string(i));
                    block(i, static_cast<Index>(c)) = mutual_inductance(loops[i], s.loop);
                }
            }
            model.source_names[f].push_back(s.name);
            model.source_waveforms[f].push_back(s.waveform);
        }
        model.sources[f] = std::move(block);
    }
    return model;
}

void attach_constraints(FullOrderModel& model, const Constraints& c) {
    if (c.f.cols() != model.size()) {
        throw ShapeError("attach_constraints: constraint matrix has wrong column count");
    }
    model.f = c.f;
    model.constraint_waveforms = c.waveforms;
    const Matrix fd(c.f);
    if (fd.rows() > 0) {
        Eigen::BDCSVD<Matrix> svd(fd);
        const Vector& s = svd.singularValues();
        Index rank = 0;
        for (Index i = 0; i < s.size(); ++i) {
            if (s(i) > kPinvCutoff * s(0)) ++rank;
        }
        model.constraints_rank_deficient = rank < fd.rows();
    } else {
        model.constraints_rank_deficient = false;
    }
}

Vector NullspaceData::particular(const Vector& alpha) const {
    if (alpha.size() != f_pinv.cols()) {
        throw ShapeError("particular solution: constraint value length mismatch");
    }
    return f_pinv * alpha;
}

Matrix NullspaceData::particular(const Matrix& alpha_series) const {
    if (alpha_series.rows() != f_pinv.cols()) {
        throw ShapeError("particular solution: constraint series row mismatch");
    }
    return f_pinv * alpha_series;
}

NullspaceData build_nullspace(const SparseMatrix& f, Index n) {
    if (f.cols() != n) {
        throw ShapeError("build_nullspace: constraint matrix column count mismatch");
    }
    NullspaceData out;
    if (f.rows() == 0) {
        out.k = Matrix::Identity(n, n);
        out.f_pinv = Matrix::Zero(n, 0);
        out.rank = 0;
        return out;
    }
    const Matrix fd(f);
    Eigen::JacobiSVD<Matrix> svd(fd, Eigen::ComputeFullV);
    const Vector& s = svd.singularValues();
    Index rank = 0;
    for (Index i = 0; i < s.size(); ++i) {
        if (s(i) > kPinvCutoff * s(0)) ++rank;
    }
    out.rank = rank;
    out.k = svd.matrixV().rightCols(n - rank);
    out.f_pinv = pseudo_inverse(fd);
    return out;
}

ProjectedOperators project_operators(const FullOrderModel& model, const Matrix& k) {
    if (k.rows() != model.size()) {
        throw ShapeError("project_operators: K row count does not match the model");
    }
    ProjectedOperators ops;
    const Matrix rk = model.r * k;
    ops.r_k = symmetrize(k.transpose() * rk);
    ops.l_k = symmetrize(k.transpose() * (model.l * k));
    try {
        (void)Cholesky::factor(ops.r_k);
        (void)Cholesky::factor(ops.l_k);
    } catch (const NotPositiveDefinite&) {
        throw NotPositiveDefinite("project_operators: projected operator is not SPD (rank-deficient K?)");
    }
    return ops;
}

std::vector<FilamentLoop> shell_rings(int n, double r0, double a, double kappa, double wire_radius,
                                      double resistance) {
    if (n < 1 || !(r0 > a && a > 0.0 && kappa > 0.0)) {
        throw GeometryError("shell_rings: need n >= 1 and r0 > a > 0, kappa > 0");
    }
    // Equal arc-length spacing along the ellipse (r0 + a cos t, kappa a sin t).
    constexpr int kFine = 20000;
    std::vector<double> arc(kFine + 1, 0.0);
    auto point = [&](double t) { return std::pair{r0 + a * std::cos(t), kappa * a * std::sin(t)}; };
    for (int i = 1; i <= kFine; ++i) {
        const auto [r1, z1] = point(2.0 * std::numbers::pi * (i - 1) / kFine);
        const auto [r2, z2] = point(2.0 * std::numbers::pi * i / kFine);
        arc[static_cast<std::size_t>(i)] = arc[static_cast<std::size_t>(i - 1)] + std::hypot(r2 - r1, z2 - z1);
    }
    std::vector<FilamentLoop> loops;
    std::size_t j = 0;
    for (int k = 0; k < n; ++k) {
        const double target = arc.back() * (k + 0.5) / n;
        while (arc[j + 1] < target) ++j;
        const double w = (target - arc[j]) / (arc[j + 1] - arc[j]);
        const double t = 2.0 * std::numbers::pi * (static_cast<double>(j) + w) / kFine;
        const auto [r, z] = point(t);
        FilamentLoop lp;
        lp.radius = r;
        lp.z = z;
        lp.wire_radius = wire_radius;
        // Resistance scales with circumference.
        lp.resistance = resistance * r / r0;
        loops.push_back(lp);
    }
    return loops;
}

}  // namespace kmor
