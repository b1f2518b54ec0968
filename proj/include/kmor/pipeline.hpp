#pragma once

// Staged pipeline behind the command-line tool: JSON configuration, artifact
// directories with content-hashed manifests, and run reports.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kmor/excitation.hpp"
#include "kmor/surrogate.hpp"

namespace kmor {

inline constexpr int kConfigVersion = 1;

struct ModelConfig {
    FilamentSpec spec;
    std::vector<ConstraintGroup> constraints;
    double jitter = 0.0;
};

struct SolverConfig {
    double dt = 1e-3;
    double t_fin = 1.0;
    SolveMethod method = SolveMethod::direct;
    int timing_repeats = 1;  // reported timings are the minimum over repeats
};

struct MorConfig {
    BmorSettings bmor;
    double eps_mor = 1e-3;
    int k_max = 50;
    ResidualKind residual = ResidualKind::minimal;
};

struct NullfieldConfig {
    std::vector<FieldPoint> points;
    std::vector<Index> controls;  // axi source indices solved for
    SolveMethod method = SolveMethod::modal;
    bool full_reference = true;   // also solve with the unreduced operators
};

struct SurrogateConfig {
    ParamRanges ranges = ParamRanges::defaults();
    std::string cs_source;  // prescribed axi source names
    std::string pf_source;
    int n_samples = 300;
    int n_pod = kDefaultPodModes;
    PodMethod pod_method = PodMethod::svd;
    TrainConfig train;
    int test_samples = 30;
    double tolerance = 5e-2;  // per-coil relative error counted as a pass
};

struct PipelineConfig {
    int version = kConfigVersion;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "out";
    std::filesystem::path base_dir;  // resolves relative paths in the document
    ModelConfig model;
    WaveformMap waveforms;
    SolverConfig solver;
    MorConfig mor;
    std::optional<NullfieldConfig> nullfield;
    std::optional<SurrogateConfig> surrogate;
    nlohmann::json document;  // normalized source document, used for hashing

    TimeGrid grid() const { return TimeGrid::from_final_time(solver.dt, solver.t_fin); }
};

/// Unknown keys, a missing or wrong version and invalid values raise
/// ConfigError. Waveform CSV paths resolve against base_dir.
PipelineConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

enum class Stage {
    generate,
    full_transient,
    mor_build,
    mor_transient,
    compare,
    nullfield,
    surrogate_dataset,
    surrogate_pod,
    surrogate_train,
    surrogate_predict,
};
inline constexpr std::size_t kNumStages = 10;

const char* stage_name(Stage s);
Stage parse_stage(const std::string& s);
std::vector<Stage> stage_dependencies(Stage s);
/// Artifact directory of a stage below the output directory.
std::filesystem::path stage_dir(const PipelineConfig& cfg, Stage s);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hash_hex(std::uint64_t h);

/// One summary line: a reduced run compared with its full-order run.
struct ReportRow {
    std::string case_name;
    double eps_mor = 0.0;
    Index n_full = 0;
    Index n_mor = 0;
    Index n_kry = 0;
    double max_error = 0.0;
    double mean_error = 0.0;
    double eta = 0.0;
    double t_kry_mor = 0.0;
    double t_setup_full = 0.0;
    double t_march_full = 0.0;
    double t_setup_mor = 0.0;
    double t_march_mor = 0.0;

    double ratio() const;
    double ratio_pow(int p) const;
    double t_trans_full() const { return t_setup_full + t_march_full; }
    double t_trans_mor() const { return t_setup_mor + t_march_mor; }
    double speedup() const;
};

struct RunReport {
    std::uint64_t seed = 0;
    std::vector<std::string> stages;
    std::vector<ReportRow> rows;
    nlohmann::json sections = nlohmann::json::object();  // nullfield / surrogate summaries

    nlohmann::json to_json() const;
    static RunReport from_json(const nlohmann::json& j);
};

enum class ReportFormat { json, csv, markdown };
ReportFormat parse_report_format(const std::string& s);

/// CSV columns, in order: the summary block (case, eps_mor, N_mor, N_kry,
/// ratio, ratio^2, ratio^3, max error, T_kry, T_trans^mor, speedup) followed
/// by N_full, mean error, eta and the raw setup/march timings.
const std::vector<std::string>& report_csv_columns();
std::string render_report(const RunReport& report, ReportFormat format);
void export_report(const RunReport& report, ReportFormat format, const std::filesystem::path& path);

struct StageOutcome {
    Stage stage = Stage::generate;
    bool skipped = false;  // inputs unchanged and outputs intact
    double seconds = 0.0;
};

/// Runs the requested stages in dependency order. A dependency that is not
/// requested must already be on disk with a valid manifest, otherwise
/// StageError names the missing artifact.
std::vector<StageOutcome> run_pipeline(const PipelineConfig& cfg, const std::vector<Stage>& stages);

/// Assembles a report from whatever stage manifests exist under the output
/// directory.
RunReport collect_report(const PipelineConfig& cfg);

}  // namespace kmor
