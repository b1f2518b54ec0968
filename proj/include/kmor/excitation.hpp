#pragma once

// Temporal excitations and the first MOR stage: compression of the forcing
// into a time-independent orthonormal manifold B_mor.

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "kmor/model.hpp"
#include "kmor/wavelet.hpp"

namespace kmor {

/// Ramp to `amplitude` over `rise_time`, then hold until `t_fin`.
struct RampPlateau {
    double amplitude = 1.0;
    double rise_time = 1.0;
    double t_fin = 1.0;
};

/// Piecewise-linear table with strictly increasing times.
struct SampledTable {
    std::vector<double> t;
    std::vector<double> v;
};

class Waveform {
public:
    static Waveform ramp_plateau(double amplitude, double rise_time, double t_fin);
    static Waveform sampled(std::vector<double> t, std::vector<double> v);
    static Waveform from_csv(const std::filesystem::path& path);
    static Waveform from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

    /// Throws DomainError outside [0, t_end()] (sampled: [t_front, t_back]).
    double eval(double t) const;
    /// Like eval(), but holds the final value past t_end().
    double eval_hold(double t) const;
    double t_end() const;

    nlohmann::json to_json() const;
    const std::variant<RampPlateau, SampledTable>& kind() const { return kind_; }

private:
    explicit Waveform(std::variant<RampPlateau, SampledTable> k) : kind_(std::move(k)) {}
    std::variant<RampPlateau, SampledTable> kind_;
};

double eval_waveform(const Waveform& w, double t);

/// Uniform grid t_i = i * dt, i = 0 .. n_t - 1.
struct TimeGrid {
    double dt = 1.0;
    Index n_t = 1;

    static TimeGrid from_final_time(double dt, double t_fin);
    double t(Index i) const { return static_cast<double>(i) * dt; }
    double t_end() const { return t(n_t - 1); }
};

/// The four excitation families: three source blocks plus imposed currents.
enum class ExcitationFamily { axi = 0, three_d = 1, volt = 2, j0 = 3 };
inline constexpr std::size_t kNumExcitationFamilies = 4;
const char* excitation_family_name(ExcitationFamily f);

using WaveformMap = std::map<std::string, Waveform>;

/// Waveform samples per family (rows follow the model's source order; j0
/// rows follow constraint rows).
struct ExcitationSet {
    TimeGrid grid;
    std::array<Matrix, kNumExcitationFamilies> alpha;

    const Matrix& family(ExcitationFamily f) const { return alpha[static_cast<std::size_t>(f)]; }
};

/// Samples every waveform bound by the model onto `grid`. With hold_last,
/// waveforms ending before the grid keep their final value. An empty
/// waveform name binds the zero signal.
ExcitationSet make_excitation(const FullOrderModel& model, const WaveformMap& waveforms,
                              const TimeGrid& grid, bool hold_last = false);

/// One family's contribution to the discrete right-hand side in null-space
/// coordinates: at step n it adds columns * signals.col(n).
///  - axi/3d: columns = -K^T M, signals = alpha_n - alpha_{n-1}
///  - volt:   columns =  K^T E, signals = dt * alpha_n
///  - j0:     columns = [-K^T R F^+, -K^T L F^+], signals = [dt * a_n; a_n - a_{n-1}]
/// Column 0 of every signal matrix is zero (the initial state has no step).
struct ForcingBlock {
    ExcitationFamily family = ExcitationFamily::axi;
    Matrix columns;
    Matrix signals;
};

struct Forcing {
    TimeGrid grid;
    std::vector<ForcingBlock> blocks;  // fixed order axi, 3d, volt, j0; empty families omitted
    Matrix i0;                         // N x n_t particular solution F^+ alpha_J0

    Index reduced_dim() const;
    /// Sum of every block's contribution at step n.
    Vector at_step(Index n) const;
};

Forcing build_forcing(const FullOrderModel& model, const NullspaceData& ns, const ExcitationSet& ex);

/// Linear resampling of each row of `signals` (defined on `grid`) onto a grid
/// of spacing dt_wavelet covering the same interval, zero-padded to the next
/// power of two (at least 2^min_level).
Matrix resample_for_wavelets(const Matrix& signals, const TimeGrid& grid, double dt_wavelet, int min_level);

/// Left singular vectors of B = V C truncated at tol_svd.
struct CompressedFamily {
    Matrix u;
    Vector sigma;
};
CompressedFamily compress_family(const Matrix& v_block, const Matrix& c, double tol_svd);

enum class BmorMode { static_sources, wavelet };
const char* bmor_mode_name(BmorMode m);
BmorMode parse_bmor_mode(const std::string& s);

struct BmorSettings {
    BmorMode mode = BmorMode::wavelet;
    double eps_w = 1e-3;
    double tol_svd = 1e-3;
    WaveletFamily wavelet = WaveletFamily::daubechies2;
    int max_level = 1;
    double dt_wavelet = 0.0;  // 0: use the solver grid spacing
    double droptol = 1e-10;
};

struct FamilyExtent {
    ExcitationFamily family = ExcitationFamily::axi;
    Index start = 0;          // first column in B_mor
    Index count = 0;          // columns kept after cross-family orthonormalization
    Index retained_rank = 0;  // columns produced by the family compression
    Vector sigma;             // retained singular values (wavelet mode)
    Index retained_slots = 0; // wavelet slots kept in C (wavelet mode)
};

struct CompressedRhs {
    Matrix b_mor;
    std::vector<FamilyExtent> extents;
    BmorMode mode = BmorMode::wavelet;

    Index total_retained_rank() const;
};

CompressedRhs assemble_bmor(const Forcing& forcing, const BmorSettings& settings);
CompressedRhs assemble_bmor(const FullOrderModel& model, const NullspaceData& ns, const ExcitationSet& ex,
                            const BmorSettings& settings);

}  // namespace kmor
