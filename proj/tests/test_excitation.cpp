#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "kmor/excitation.hpp"
#include "scenarios.hpp"

using namespace kmor;

namespace {

Vector random_vector(Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = nd(rng);
    return v;
}

double coeff_energy(const WaveletCoeffs& c) {
    double e = c.scaling.squaredNorm();
    for (const auto& d : c.details) e += d.squaredNorm();
    return e;
}

std::set<std::pair<int, Index>> slot_set(const TruncatedCoeffs& t) {
    std::set<std::pair<int, Index>> s;
    for (const auto& slot : t.slots) s.insert({slot.level, slot.shift});
    return s;
}

// Distance of v from span(Q), Q orthonormal.
double out_of_span(const Matrix& q, const Vector& v) { return (v - q * (q.transpose() * v)).norm(); }

}  // namespace

TEST_CASE("ramp-plateau evaluation", "[excitation]") {
    const Waveform w = Waveform::ramp_plateau(1.0, 0.5, 1.0);
    CHECK(eval_waveform(w, 0.25) == 0.5);
    CHECK(eval_waveform(w, 0.9) == 1.0);
    CHECK(eval_waveform(w, 0.5) == 1.0);
    CHECK(eval_waveform(w, 0.0) == 0.0);
    CHECK_THROWS_AS(eval_waveform(w, 1.2), DomainError);
    CHECK_THROWS_AS(eval_waveform(w, -0.1), DomainError);
    CHECK(w.eval_hold(3.0) == 1.0);
    CHECK_THROWS_AS(Waveform::ramp_plateau(1.0, 2.0, 1.0), DomainError);
    // A zero rise time is a step.
    CHECK(eval_waveform(Waveform::ramp_plateau(3.0, 0.0, 1.0), 0.0) == 3.0);
}

TEST_CASE("sampled waveform evaluation", "[excitation]") {
    const Waveform w = Waveform::sampled({0.0, 0.1, 0.3}, {1.0, -2.0, 4.0});
    CHECK(eval_waveform(w, 0.1) == -2.0);
    CHECK(eval_waveform(w, 0.3) == 4.0);
    CHECK(std::abs(eval_waveform(w, 0.2) - 1.0) < 1e-15);
    CHECK_THROWS_AS(eval_waveform(w, 0.31), DomainError);
    CHECK(w.eval_hold(10.0) == 4.0);
    CHECK_THROWS_AS(Waveform::sampled({0.0, 0.0}, {1.0, 2.0}), DomainError);
    CHECK_THROWS_AS(Waveform::sampled({0.0}, {}), DomainError);
}

TEST_CASE("waveforms from JSON and CSV", "[excitation]") {
    const auto dir = std::filesystem::temp_directory_path() / "kmor_excitation_json";
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "w.csv");
        os << "t,value\n0,0\n0.5,2\n1,2\n";
    }
    const Waveform r = Waveform::from_json({{"kind", "ramp_plateau"}, {"amplitude", 2.0}, {"rise_time", 0.5}, {"t_fin", 1.0}});
    CHECK(r.eval(0.25) == 1.0);
    const Waveform t = Waveform::from_json({{"kind", "sampled"}, {"table", {{0.0, 0.0}, {1.0, 4.0}}}});
    CHECK(t.eval(0.25) == 1.0);
    const Waveform c = Waveform::from_json({{"kind", "sampled"}, {"csv", "w.csv"}}, dir);
    CHECK(c.eval(0.75) == 2.0);
    CHECK(std::abs(c.eval(0.25) - 1.0) < 1e-15);
    // Serialized form parses back to the same waveform.
    CHECK(Waveform::from_json(r.to_json()).eval(0.3) == r.eval(0.3));
    CHECK(Waveform::from_json(c.to_json()).eval(0.3) == c.eval(0.3));

    CHECK_THROWS_AS(Waveform::from_json({{"kind", "ramp_plateau"}, {"amplitude", 1.0}, {"rise", 0.5}, {"t_fin", 1.0}}),
                    ConfigError);
    CHECK_THROWS_AS(Waveform::from_json({{"kind", "sine"}}), ConfigError);
    CHECK_THROWS_AS(Waveform::from_json({{"kind", "sampled"}, {"csv", "missing.csv"}}, dir), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("time grid", "[excitation]") {
    const TimeGrid g = TimeGrid::from_final_time(1e-3, 0.2);
    CHECK(g.n_t == 201);
    CHECK(std::abs(g.t_end() - 0.2) < 1e-15);
    CHECK_THROWS_AS(TimeGrid::from_final_time(0.0, 1.0), DomainError);
}

TEST_CASE("wavelet transform examples", "[excitation][wavelet]") {
    const Vector constant = Vector::Constant(16, 3.0);
    const auto c = wavelet_decompose(constant, WaveletFamily::haar, 3);
    for (const auto& d : c.details) CHECK(d.cwiseAbs().maxCoeff() < 1e-15);

    Vector spike = Vector::Zero(16);
    spike(5) = 1.0;
    const auto s = wavelet_decompose(spike, WaveletFamily::haar, 1);
    REQUIRE(s.details.size() == 1);
    const Vector& d1 = s.details[0];
    int nonzero = 0;
    for (Index i = 0; i < d1.size(); ++i) nonzero += d1(i) != 0.0 ? 1 : 0;
    CHECK(nonzero == 1);
    // Two-tap oracle: the pair (4, 5) gives (x4 - x5)/sqrt(2) up to sign convention.
    CHECK(std::abs(std::abs(d1(2)) - 1.0 / std::sqrt(2.0)) < 1e-15);
    CHECK(std::abs(std::abs(s.scaling(2)) - 1.0 / std::sqrt(2.0)) < 1e-15);

    CHECK_THROWS_AS(wavelet_decompose(Vector::Ones(12), WaveletFamily::haar, 1), ShapeError);
    CHECK(is_power_of_two(64));
    CHECK_FALSE(is_power_of_two(48));
    CHECK(next_power_of_two(33) == 64);
    CHECK(next_power_of_two(32) == 32);
    CHECK(parse_wavelet(wavelet_name(WaveletFamily::daubechies2)) == WaveletFamily::daubechies2);
    CHECK_THROWS_AS(parse_wavelet("coif"), ConfigError);
}

TEST_CASE("wavelet round trip and energy preservation", "[excitation][wavelet][property]") {
    for (auto fam : {WaveletFamily::haar, WaveletFamily::daubechies2}) {
        for (int level = 0; level <= 5; ++level) {
            const Vector x = random_vector(64, 10 + static_cast<std::uint64_t>(level));
            const auto c = wavelet_decompose(x, fam, level);
            CHECK(static_cast<int>(c.details.size()) == level);
            CHECK((wavelet_reconstruct(c) - x).cwiseAbs().maxCoeff() <= 1e-12);
            CHECK(std::abs(coeff_energy(c) - x.squaredNorm()) <= 1e-12 * x.squaredNorm());
        }
    }
    // Daubechies-2 annihilates linear trends away from the periodic seam.
    Vector ramp(32);
    for (Index i = 0; i < 32; ++i) ramp(i) = 0.5 * static_cast<double>(i);
    const auto c = wavelet_decompose(ramp, WaveletFamily::daubechies2, 1);
    for (Index i = 0; i + 2 < c.details[0].size(); ++i) CHECK(std::abs(c.details[0](i)) < 1e-12);
}

TEST_CASE("coefficient truncation", "[excitation][wavelet]") {
    std::vector<WaveletCoeffs> fam;
    for (std::uint64_t s = 0; s < 3; ++s) fam.push_back(wavelet_decompose(random_vector(32, s), WaveletFamily::haar, 3));
    const auto all = truncate_coeffs(fam, 0.0);
    CHECK(all.c.cols() == 32);
    CHECK(all.c.rows() == 3);

    const auto top = truncate_coeffs(fam, 1.0);
    CHECK(top.c.cols() == 4 + 1);  // 32 / 2^3 scaling slots plus the largest detail
    for (Index j = 0; j < 4; ++j) CHECK(top.slots[static_cast<std::size_t>(j)].level == 0);

    // Ordering: scaling first, then by (level, shift).
    for (std::size_t j = 1; j < all.slots.size(); ++j) {
        const auto& a = all.slots[j - 1];
        const auto& b = all.slots[j];
        const bool ordered = (a.level == 0 && b.level != 0) || (a.level == b.level && a.shift < b.shift) ||
                             (a.level != 0 && a.level < b.level) || (a.level == 0 && b.level == 0 && a.shift < b.shift);
        CHECK(ordered);
    }
    // Each column reproduces the coefficient it addresses.
    for (std::size_t j = 0; j < all.slots.size(); ++j) {
        const auto& slot = all.slots[j];
        const double v = slot.level == 0 ? fam[1].scaling(slot.shift)
                                         : fam[1].details[static_cast<std::size_t>(slot.level - 1)](slot.shift);
        CHECK(all.c(1, static_cast<Index>(j)) == v);
    }
}

TEST_CASE("spike retains only nearby detail slots", "[excitation][wavelet]") {
    Vector spike = Vector::Zero(64);
    spike(37) = 1.0;
    const auto coeffs = wavelet_decompose(spike, WaveletFamily::daubechies2, 3);
    const auto t = truncate_coeffs({coeffs}, 1e-3);
    for (const auto& slot : t.slots) {
        if (slot.level == 0) continue;
        // Level-j coefficient k covers samples 2^j k .. 2^j k + 3 (2^j - 1), periodically.
        const Index scale = Index{1} << slot.level;
        const Index lo = scale * slot.shift;
        const Index hi = lo + 3 * (scale - 1) + 1;
        bool covers = false;
        for (Index s = lo; s <= hi; ++s) covers = covers || (s % 64) == 37;
        CHECK(covers);
    }
}

TEST_CASE("truncation nests as eps_w decreases", "[excitation][wavelet][property]") {
    std::vector<WaveletCoeffs> fam;
    for (std::uint64_t s = 0; s < 4; ++s) {
        Vector x = random_vector(128, 40 + s);
        for (Index i = 0; i < 128; ++i) x(i) *= std::exp(-0.05 * static_cast<double>(i));
        fam.push_back(wavelet_decompose(x, WaveletFamily::daubechies2, 4));
    }
    std::set<std::pair<int, Index>> prev;
    for (double eps : {1.0, 0.5, 0.1, 1e-2, 1e-3, 0.0}) {
        const auto cur = slot_set(truncate_coeffs(fam, eps));
        for (const auto& s : prev) CHECK(cur.count(s) == 1);
        prev = cur;
    }
}

TEST_CASE("family compression", "[excitation]") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    Matrix v(10, 3);
    for (Index i = 0; i < v.size(); ++i) v.data()[i] = nd(rng);

    const auto id = compress_family(v, Matrix::Identity(3, 3), 0.0);
    const Eigen::JacobiSVD<Matrix> svd(v);
    CHECK((id.sigma - svd.singularValues()).norm() < 1e-12 * svd.singularValues()(0));

    const auto one = compress_family(v.leftCols(1), Matrix::Identity(1, 1), 0.0);
    REQUIRE(one.u.cols() == 1);
    const Vector unit = v.col(0) / v.col(0).norm();
    CHECK(std::min((one.u.col(0) - unit).norm(), (one.u.col(0) + unit).norm()) < 1e-14);

    CHECK_THROWS_AS(compress_family(v, Matrix::Identity(2, 2), 0.0), ShapeError);

    Matrix c(3, 40);
    for (Index i = 0; i < c.size(); ++i) c.data()[i] = nd(rng) * std::pow(0.2, static_cast<double>(i % 3));
    const Matrix b = v * c;
    Index prev_rank = 0;
    for (double tol : {0.5, 1e-1, 1e-2, 1e-4, 0.0}) {
        const auto cf = compress_family(v, c, tol);
        CHECK((b - cf.u * (cf.u.transpose() * b)).norm() <= tol * b.norm() + 1e-12 * b.norm());
        CHECK(cf.u.cols() >= prev_rank);
        prev_rank = cf.u.cols();
    }
}

TEST_CASE("resampling onto the wavelet grid", "[excitation]") {
    const TimeGrid g = TimeGrid::from_final_time(0.01, 1.0);
    Matrix s(1, g.n_t);
    for (Index n = 0; n < g.n_t; ++n) s(0, n) = 3.0 * g.t(n) - 1.0;
    const Matrix same = resample_for_wavelets(s, g, 0.01, 1);
    CHECK(same.cols() == 128);
    CHECK((same.leftCols(g.n_t) - s).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(same.rightCols(128 - g.n_t).cwiseAbs().maxCoeff() == 0.0);
    const Matrix coarse = resample_for_wavelets(s, g, 0.05, 1);
    CHECK(coarse.cols() == 32);
    for (Index k = 0; k <= 20; ++k) CHECK(std::abs(coarse(0, k) - (3.0 * 0.05 * static_cast<double>(k) - 1.0)) < 1e-13);
    CHECK_THROWS_AS(resample_for_wavelets(s, g, 0.0, 1), DomainError);
}

TEST_CASE("excitation sampling binds waveforms and zero signals", "[excitation]") {
    const auto sc = kmor::testing::nullfield_scenario(12, 1e-3, 0.2);
    const auto ex = make_excitation(sc.model, sc.waveforms, sc.grid);
    const Matrix& a = ex.family(ExcitationFamily::axi);
    REQUIRE(a.rows() == 6);
    CHECK(a.cols() == sc.grid.n_t);
    CHECK(a(0, 25) == sc.waveforms.at("cs").eval(sc.grid.t(25)));
    CHECK(a.bottomRows(4).cwiseAbs().maxCoeff() == 0.0);

    WaveformMap partial = sc.waveforms;
    partial.erase("cs");
    CHECK_THROWS_AS(make_excitation(sc.model, partial, sc.grid), ConfigError);
    // Past a waveform's end only the hold option keeps sampling.
    const TimeGrid longer = TimeGrid::from_final_time(1e-3, 0.3);
    CHECK_THROWS_AS(make_excitation(sc.model, sc.waveforms, longer), DomainError);
    const auto held = make_excitation(sc.model, sc.waveforms, longer, true);
    CHECK(held.family(ExcitationFamily::axi)(0, longer.n_t - 1) == 4.5e4);
}

TEST_CASE("forcing block conventions", "[excitation]") {
    const auto sc = kmor::testing::fast_vde_scenario(40, 3);
    const auto ns = build_nullspace(sc.model.f, sc.model.size());
    const auto ex = make_excitation(sc.model, sc.waveforms, sc.grid);
    const auto fo = build_forcing(sc.model, ns, ex);
    REQUIRE(fo.blocks.size() == 4);
    CHECK(fo.reduced_dim() == ns.k.cols());
    CHECK(fo.at_step(0).norm() == 0.0);

    const Matrix& k = ns.k;
    const Matrix& m_axi = sc.model.source_block(SourceFamily::axi);
    const Matrix& e = sc.model.source_block(SourceFamily::volt);
    const Matrix& a_axi = ex.family(ExcitationFamily::axi);
    const Matrix& a_3d = ex.family(ExcitationFamily::three_d);
    const Matrix& a_v = ex.family(ExcitationFamily::volt);
    const Matrix& a_j = ex.family(ExcitationFamily::j0);
    const Matrix fp = ns.f_pinv;
    const Matrix r = Matrix(sc.model.r);
    const double dt = sc.grid.dt;
    for (Index n : {Index{1}, Index{17}, Index{120}}) {
        // Independent assembly of the right-hand side increment.
        Vector expected = -k.transpose() * m_axi * (a_axi.col(n) - a_axi.col(n - 1));
        expected -= k.transpose() * sc.model.source_block(SourceFamily::three_d) * (a_3d.col(n) - a_3d.col(n - 1));
        expected += dt * k.transpose() * e * a_v.col(n);
        expected -= dt * k.transpose() * r * fp * a_j.col(n);
        expected -= k.transpose() * sc.model.l * fp * (a_j.col(n) - a_j.col(n - 1));
        CHECK((fo.at_step(n) - expected).norm() <= 1e-12 * expected.norm());
        CHECK((fo.i0.col(n) - fp * a_j.col(n)).norm() <= 1e-12 * (1.0 + fo.i0.col(n).norm()));
    }
}

TEST_CASE("forcing manifold", "[excitation][mor]") {
    const auto sc = kmor::testing::fast_vde_scenario(40, 3);
    const auto ns = build_nullspace(sc.model.f, sc.model.size());
    const auto ex = make_excitation(sc.model, sc.waveforms, sc.grid);
    const auto fo = build_forcing(sc.model, ns, ex);

    BmorSettings st;
    st.mode = BmorMode::static_sources;
    const auto stat = assemble_bmor(fo, st);
    const Index n_s = stat.b_mor.cols();
    CHECK((stat.b_mor.transpose() * stat.b_mor - Matrix::Identity(n_s, n_s)).cwiseAbs().maxCoeff() <= 1e-10);
    // Every step's forcing lies in the static manifold.
    for (Index n = 1; n < sc.grid.n_t; n += 13) {
        const Vector b = fo.at_step(n);
        CHECK(out_of_span(stat.b_mor, b) <= 1e-10 * b.norm());
    }

    for (auto fam : {WaveletFamily::haar, WaveletFamily::daubechies2}) {
        BmorSettings w;
        w.mode = BmorMode::wavelet;
        w.wavelet = fam;
        w.eps_w = 0.0;
        w.tol_svd = 0.0;
        w.max_level = 3;
        const auto wav = assemble_bmor(fo, w);
        const Index n_w = wav.b_mor.cols();
        CHECK((wav.b_mor.transpose() * wav.b_mor - Matrix::Identity(n_w, n_w)).cwiseAbs().maxCoeff() <= 1e-10);
        // With nothing truncated the wavelet manifold also captures every step.
        for (Index n = 1; n < sc.grid.n_t; n += 13) {
            const Vector b = fo.at_step(n);
            CHECK(out_of_span(wav.b_mor, b) <= 1e-8 * b.norm());
        }
        Index total = 0;
        for (const auto& ext : wav.extents) total += ext.count;
        CHECK(total == n_w);
        CHECK(n_w <= wav.total_retained_rank());
    }

    // Retained rank per family grows as tol_svd shrinks.
    std::vector<Index> prev;
    for (double tol : {1e-1, 1e-2, 1e-3, 1e-5}) {
        BmorSettings w;
        w.tol_svd = tol;
        w.eps_w = 1e-4;
        const auto wav = assemble_bmor(fo, w);
        std::vector<Index> ranks;
        for (const auto& ext : wav.extents) ranks.push_back(ext.retained_rank);
        if (!prev.empty()) {
            REQUIRE(ranks.size() == prev.size());
            for (std::size_t i = 0; i < ranks.size(); ++i) CHECK(ranks[i] >= prev[i]);
        }
        prev = ranks;
    }
}

TEST_CASE("single-family manifold and empty forcing", "[excitation][mor]") {
    const auto sc = kmor::testing::slow_ramp_scenario(30);
    const auto ns = build_nullspace(sc.model.f, sc.model.size());
    const auto ex = make_excitation(sc.model, sc.waveforms, sc.grid);
    BmorSettings w;
    w.tol_svd = 1e-6;
    w.eps_w = 1e-6;
    const auto out = assemble_bmor(sc.model, ns, ex, w);
    REQUIRE(out.extents.size() == 1);
    CHECK(out.extents[0].family == ExcitationFamily::axi);
    CHECK(out.b_mor.cols() == out.extents[0].retained_rank);
    CHECK(out.b_mor.cols() <= 3);

    FullOrderModel bare = sc.model;
    for (auto& s : bare.sources) s = Matrix(bare.size(), 0);
    for (auto& n : bare.source_names) n.clear();
    for (auto& n : bare.source_waveforms) n.clear();
    const auto ex0 = make_excitation(bare, {}, sc.grid);
    CHECK_THROWS_AS(assemble_bmor(bare, ns, ex0, w), EmptyForcingError);
    CHECK(parse_bmor_mode(bmor_mode_name(BmorMode::static_sources)) == BmorMode::static_sources);
}
