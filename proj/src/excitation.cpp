#include "kmor/excitation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace kmor {

namespace {

constexpr double kTimeSlack = 1e-12;

void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* what) {
    if (!j.is_object()) {
        throw ConfigError(std::string(what) + ": expected an object");
    }
    for (const auto& [key, _] : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) ==
            allowed.end()) {
            throw ConfigError(std::string(what) + ": unknown key '" + key + "'");
        }
    }
}

double table_eval(const SampledTable& tab, double t) {
    const auto it = std::upper_bound(tab.t.begin(), tab.t.end(), t);
    if (it == tab.t.begin()) {
        return tab.v.front();
    }
    if (it == tab.t.end()) {
        return tab.v.back();
    }
    const auto hi = static_cast<std::size_t>(it - tab.t.begin());
    const std::size_t lo = hi - 1;
    const double w = (t - tab.t[lo]) / (tab.t[hi] - tab.t[lo]);
    return (1.0 - w) * tab.v[lo] + w * tab.v[hi];
}

}  // namespace

Waveform Waveform::ramp_plateau(double amplitude, double rise_time, double t_fin) {
    if (!std::isfinite(amplitude) || !(rise_time >= 0.0) || !(t_fin > 0.0) || rise_time > t_fin) {
        throw DomainError("ramp_plateau: requires 0 <= t_r <= t_fin and finite amplitude");
    }
    return Waveform(RampPlateau{amplitude, rise_time, t_fin});
}

Waveform Waveform::sampled(std::vector<double> t, std::vector<double> v) {
    if (t.empty() || t.size() != v.size()) {
        throw DomainError("sampled waveform: time and value tables must be non-empty and equal length");
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i]) || !std::isfinite(v[i])) {
            throw DomainError("sampled waveform: non-finite entry");
        }
        if (i > 0 && !(t[i] > t[i - 1])) {
            throw DomainError("sampled waveform: times must be strictly increasing");
        }
    }
    return Waveform(SampledTable{std::move(t), std::move(v)});
}

Waveform Waveform::from_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw IoError("cannot open waveform table " + path.string());
    }
    std::vector<double> t;
    std::vector<double> v;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double a;
        double b;
        if (!(ls >> a >> b)) {
            // Header rows are allowed only before the first sample.
            if (t.empty()) continue;
            throw ConfigError("malformed waveform row in " + path.string() + ": " + line);
        }
        t.push_back(a);
        v.push_back(b);
    }
    return sampled(std::move(t), std::move(v));
}

Waveform Waveform::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object() || !j.contains("kind")) {
        throw ConfigError("waveform: missing 'kind'");
    }
    const std::string kind = j.at("kind").get<std::string>();
    try {
        if (kind == "ramp_plateau") {
            require_keys(j, {"kind", "amplitude", "rise_time", "t_fin"}, "ramp_plateau waveform");
            return ramp_plateau(j.at("amplitude").get<double>(), j.at("rise_time").get<double>(),
                                j.at("t_fin").get<double>());
        }
        if (kind == "sampled") {
            require_keys(j, {"kind", "table", "csv"}, "sampled waveform");
            if (j.contains("csv")) {
                std::filesystem::path p = j.at("csv").get<std::string>();
                if (p.is_relative()) p = base_dir / p;
                return from_csv(p);
            }
            std::vector<double> t;
            std::vector<double> v;
            for (const auto& row : j.at("table")) {
                if (!row.is_array() || row.size() != 2) {
                    throw ConfigError("sampled waveform: table rows must be [t, value]");
                }
                t.push_back(row[0].get<double>());
                v.push_back(row[1].get<double>());
            }
            return sampled(std::move(t), std::move(v));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("waveform: ") + e.what());
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    throw ConfigError("waveform: unknown kind '" + kind + "'");
}

double Waveform::t_end() const {
    return std::visit(
        [](const auto& k) -> double {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, RampPlateau>) {
                return k.t_fin;
            } else {
                return k.t.back();
            }
        },
        kind_);
}

double Waveform::eval(double t) const {
    return std::visit(
        [t](const auto& k) -> double {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, RampPlateau>) {
                if (!(t >= -kTimeSlack && t <= k.t_fin * (1.0 + kTimeSlack) + kTimeSlack)) {
                    throw DomainError("ramp_plateau evaluated at t = " + std::to_string(t) +
                                      " outside [0, " + std::to_string(k.t_fin) + "]");
                }
                if (t < k.rise_time) {
                    return k.amplitude * std::max(t, 0.0) / k.rise_time;
                }
                return k.amplitude;
            } else {
                const double lo = k.t.front();
                const double hi = k.t.back();
                const double slack = kTimeSlack * std::max({1.0, std::abs(lo), std::abs(hi)});
                if (!(t >= lo - slack && t <= hi + slack)) {
                    throw DomainError("sampled waveform evaluated at t = " + std::to_string(t) +
                                      " outside its table");
                }
                return table_eval(k, t);
            }
        },
        kind_);
}

double Waveform::eval_hold(double t) const { return eval(std::min(t, t_end())); }

nlohmann::json Waveform::to_json() const {
    return std::visit(
        [](const auto& k) -> nlohmann::json {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, RampPlateau>) {
                return {{"kind", "ramp_plateau"}, {"amplitude", k.amplitude}, {"rise_time", k.rise_time},
                        {"t_fin", k.t_fin}};
            } else {
                nlohmann::json table = nlohmann::json::array();
                for (std::size_t i = 0; i < k.t.size(); ++i) table.push_back({k.t[i], k.v[i]});
                return {{"kind", "sampled"}, {"table", table}};
            }
        },
        kind_);
}

double eval_waveform(const Waveform& w, double t) { return w.eval(t); }

TimeGrid TimeGrid::from_final_time(double dt, double t_fin) {
    if (!(dt > 0.0) || !(t_fin >= dt)) {
        throw DomainError("time grid: requires dt > 0 and t_fin >= dt");
    }
    TimeGrid g;
    g.dt = dt;
    g.n_t = static_cast<Index>(std::llround(t_fin / dt)) + 1;
    return g;
}

const char* excitation_family_name(ExcitationFamily f) {
    switch (f) {
        case ExcitationFamily::axi:
            return "axi";
        case ExcitationFamily::three_d:
            return "3d";
        case ExcitationFamily::volt:
            return "volt";
        case ExcitationFamily::j0:
            return "j0";
    }
    return "?";
}

ExcitationSet make_excitation(const FullOrderModel& model, const WaveformMap& waveforms, const TimeGrid& grid,
                              bool hold_last) {
    ExcitationSet ex;
    ex.grid = grid;
    auto sample_rows = [&](const std::vector<std::string>& names) {
        Matrix a(static_cast<Index>(names.size()), grid.n_t);
        for (std::size_t r = 0; r < names.size(); ++r) {
            if (names[r].empty()) {
                a.row(static_cast<Index>(r)).setZero();
                continue;
            }
            const auto it = waveforms.find(names[r]);
            if (it == waveforms.end()) {
                throw ConfigError("no waveform named '" + names[r] + "'");
            }
            for (Index i = 0; i < grid.n_t; ++i) {
                a(static_cast<Index>(r), i) = hold_last ? it->second.eval_hold(grid.t(i)) : it->second.eval(grid.t(i));
            }
        }
        return a;
    };
    for (std::size_t f = 0; f < kNumSourceFamilies; ++f) {
        if (static_cast<Index>(model.source_waveforms[f].size()) != model.sources[f].cols()) {
            throw ShapeError("make_excitation: source count does not match V block columns");
        }
        ex.alpha[f] = sample_rows(model.source_waveforms[f]);
    }
    if (static_cast<Index>(model.constraint_waveforms.size()) != model.f.rows()) {
        throw ShapeError("make_excitation: constraint rows without waveform bindings");
    }
    ex.alpha[static_cast<std::size_t>(ExcitationFamily::j0)] = sample_rows(model.constraint_waveforms);
    return ex;
}

Index Forcing::reduced_dim() const { return blocks.empty() ? 0 : blocks.front().columns.rows(); }

Vector Forcing::at_step(Index n) const {
    Vector b = Vector::Zero(reduced_dim());
    for (const auto& blk : blocks) {
        b.noalias() += blk.columns * blk.signals.col(n);
    }
    return b;
}

namespace {

Matrix backward_difference(const Matrix& a) {
    Matrix d = Matrix::Zero(a.rows(), a.cols());
    for (Index n = 1; n < a.cols(); ++n) {
        d.col(n) = a.col(n) - a.col(n - 1);
    }
    return d;
}

}  // namespace

Forcing build_forcing(const FullOrderModel& model, const NullspaceData& ns, const ExcitationSet& ex) {
    const Index n = model.size();
    if (ns.k.rows() != n) {
        throw ShapeError("build_forcing: null-space basis does not match the model");
    }
    const Matrix& k = ns.k;
    const double dt = ex.grid.dt;
    Forcing out;
    out.grid = ex.grid;

    for (std::size_t f = 0; f < kNumSourceFamilies; ++f) {
        const Matrix& v = model.sources[f];
        const Matrix& a = ex.alpha[f];
        if (v.cols() == 0) continue;
        if (a.rows() != v.cols() || a.cols() != ex.grid.n_t) {
            throw ShapeError("build_forcing: excitation does not match the model's source block");
        }
        ForcingBlock blk;
        blk.family = static_cast<ExcitationFamily>(f);
        if (blk.family == ExcitationFamily::volt) {
            blk.columns = k.transpose() * v;
            blk.signals = dt * a;
            blk.signals.col(0).setZero();
        } else {
            blk.columns = -(k.transpose() * v);
            blk.signals = backward_difference(a);
        }
        out.blocks.push_back(std::move(blk));
    }

    const Matrix& aj = ex.family(ExcitationFamily::j0);
    const Index m = model.f.rows();
    if (aj.rows() != m || (m > 0 && aj.cols() != ex.grid.n_t)) {
        throw ShapeError("build_forcing: imposed-current series does not match constraint rows");
    }
    if (m > 0) {
        out.i0 = ns.f_pinv * aj;
        ForcingBlock blk;
        blk.family = ExcitationFamily::j0;
        blk.columns.resize(k.cols(), 2 * m);
        blk.columns.leftCols(m) = -(k.transpose() * (model.r * ns.f_pinv));
        blk.columns.rightCols(m) = -(k.transpose() * (model.l * ns.f_pinv));
        blk.signals.resize(2 * m, ex.grid.n_t);
        blk.signals.topRows(m) = dt * aj;
        blk.signals.topRows(m).col(0).setZero();
        blk.signals.bottomRows(m) = backward_difference(aj);
        out.blocks.push_back(std::move(blk));
    } else {
        out.i0 = Matrix::Zero(n, ex.grid.n_t);
    }
    if (out.blocks.empty()) {
        // Keep reduced_dim() meaningful for unforced models.
        ForcingBlock blk;
        blk.family = ExcitationFamily::axi;
        blk.columns = Matrix::Zero(k.cols(), 0);
        blk.signals = Matrix::Zero(0, ex.grid.n_t);
        out.blocks.push_back(std::move(blk));
    }
    return out;
}

Matrix resample_for_wavelets(const Matrix& signals, const TimeGrid& grid, double dt_wavelet, int min_level) {
    if (!(dt_wavelet > 0.0)) {
        throw DomainError("resample_for_wavelets: dt_wavelet must be positive");
    }
    const double t_end = grid.t_end();
    const Index n_w = static_cast<Index>(std::floor(t_end / dt_wavelet * (1.0 + 1e-12))) + 1;
    const Index padded = std::max(next_power_of_two(n_w), Index{1} << std::max(min_level, 0));
    Matrix out = Matrix::Zero(signals.rows(), padded);
    for (Index i = 0; i < n_w; ++i) {
        const double t = std::min(static_cast<double>(i) * dt_wavelet, t_end);
        const double pos = t / grid.dt;
        const Index lo = std::min(static_cast<Index>(std::floor(pos)), grid.n_t - 1);
        const Index hi = std::min(lo + 1, grid.n_t - 1);
        const double w = std::clamp(pos - static_cast<double>(lo), 0.0, 1.0);
        out.col(i) = (1.0 - w) * signals.col(lo) + w * signals.col(hi);
    }
    return out;
}

CompressedFamily compress_family(const Matrix& v_block, const Matrix& c, double tol_svd) {
    if (c.rows() != v_block.cols()) {
        throw ShapeError("compress_family: C has " + std::to_string(c.rows()) + " rows but V has " +
                         std::to_string(v_block.cols()) + " columns");
    }
    const Matrix b = v_block * c;
    auto svd = truncated_svd(b, tol_svd);
    return {std::move(svd.u), std::move(svd.sigma)};
}

const char* bmor_mode_name(BmorMode m) { return m == BmorMode::wavelet ? "wavelet" : "static"; }

BmorMode parse_bmor_mode(const std::string& s) {
    if (s == "wavelet") return BmorMode::wavelet;
    if (s == "static") return BmorMode::static_sources;
    throw ConfigError("unknown B_mor mode '" + s + "'");
}

Index CompressedRhs::total_retained_rank() const {
    Index r = 0;
    for (const auto& e : extents) r += e.retained_rank;
    return r;
}

CompressedRhs assemble_bmor(const Forcing& forcing, const BmorSettings& settings) {
    CompressedRhs out;
    out.mode = settings.mode;
    const Index n = forcing.reduced_dim();
    Matrix accepted(n, 0);
    bool any = false;
    for (const auto& blk : forcing.blocks) {
        if (blk.columns.cols() == 0) continue;
        any = true;
        FamilyExtent ext;
        ext.family = blk.family;
        Matrix family_basis;
        if (settings.mode == BmorMode::static_sources) {
            family_basis = blk.columns;
            ext.retained_rank = blk.columns.cols();
        } else {
            const double dtw = settings.dt_wavelet > 0.0 ? settings.dt_wavelet : forcing.grid.dt;
            const Matrix resampled = resample_for_wavelets(blk.signals, forcing.grid, dtw, settings.max_level);
            std::vector<WaveletCoeffs> coeffs;
            coeffs.reserve(static_cast<std::size_t>(resampled.rows()));
            for (Index r = 0; r < resampled.rows(); ++r) {
                coeffs.push_back(wavelet_decompose(resampled.row(r).transpose(), settings.wavelet, settings.max_level));
            }
            const TruncatedCoeffs tc = truncate_coeffs(coeffs, settings.eps_w);
            ext.retained_slots = tc.c.cols();
            auto cf = compress_family(blk.columns, tc.c, settings.tol_svd);
            ext.retained_rank = cf.u.cols();
            ext.sigma = std::move(cf.sigma);
            family_basis = std::move(cf.u);
        }
        const Matrix fresh = block_orthonormalize(family_basis, accepted, settings.droptol);
        ext.start = accepted.cols();
        ext.count = fresh.cols();
        Matrix grown(n, accepted.cols() + fresh.cols());
        grown << accepted, fresh;
        accepted = std::move(grown);
        out.extents.push_back(std::move(ext));
    }
    if (!any) {
        throw EmptyForcingError("assemble_bmor: every excitation family is empty");
    }
    out.b_mor = std::move(accepted);
    return out;
}

CompressedRhs assemble_bmor(const FullOrderModel& model, const NullspaceData& ns, const ExcitationSet& ex,
                            const BmorSettings& settings) {
    return assemble_bmor(build_forcing(model, ns, ex), settings);
}

}  // namespace kmor
