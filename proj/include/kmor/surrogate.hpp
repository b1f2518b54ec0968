#pragma once

// Parametric surrogate of the null-field control currents: ramp-plateau
// parameter sampling, snapshot dataset, POD compression and a small tanh
// network mapping parameters to POD coefficients.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "kmor/nullfield.hpp"

namespace kmor {

inline constexpr double kNominalCsAmplitude = 45.0e3;
inline constexpr double kNominalPfAmplitude = 50.0e3;
inline constexpr double kNominalRiseTime = 0.25;
inline constexpr int kDefaultPodModes = 20;
inline constexpr std::size_t kNumParams = 5;

struct ParamVector {
    double a_cs = kNominalCsAmplitude;
    double t_r_cs = kNominalRiseTime;
    double a_pf = kNominalPfAmplitude;
    double t_r_pf = kNominalRiseTime;
    double t_fin = 1.0;

    Vector as_vector() const;
    static ParamVector from_vector(const Vector& v);
};

struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;
};

/// Ranges in the order of ParamVector::as_vector().
struct ParamRanges {
    std::array<ParamRange, kNumParams> r;

    /// Amplitudes and rise times span [0.01, 2] x nominal; t_fin spans [0.7, 1.0] s.
    static ParamRanges defaults();
    void validate() const;
    bool contains(const ParamVector& p) const;
};

/// Independent uniform draws per component.
std::vector<ParamVector> sample_parameters(const ParamRanges& ranges, int n_s, std::uint64_t seed);

/// Maps a parameter vector to the prescribed-coil currents and runs the
/// controlled recursion on the common grid.
struct SurrogateProblem {
    NullFieldOperators ops;
    TimeGrid grid;       // common grid; its end is the largest admissible t_fin
    Index cs_row = 0;    // row of the CS coil in the prescribed block
    Index pf_row = 1;    // row of the PF coil in the prescribed block
    SolveMethod method = SolveMethod::modal;
};

/// Runs to the sample's own t_fin, then holds the final control currents to
/// the end of the common grid. Returns n_controls x n_t.
Matrix simulate_controls(const SurrogateProblem& prob, const ParamVector& mu);

/// Snapshot matrix (n_controls * n_t) x N_s, each column the concatenation of
/// the control series.
Matrix generate_dataset(const SurrogateProblem& prob, const std::vector<ParamVector>& params);

Matrix params_matrix(const std::vector<ParamVector>& params);

enum class PodMethod { svd, cpqr };
const char* pod_method_name(PodMethod m);
PodMethod parse_pod_method(const std::string& s);

struct PodBasis {
    Vector mean;
    Matrix modes;    // orthonormal columns
    Vector sigma;    // singular values (svd) or |R_ii| (cpqr)
    Matrix coeffs;   // N_POD x N_s
    PodMethod method = PodMethod::svd;

    Index n_pod() const { return modes.cols(); }
    Vector project(const Vector& x) const;
    Vector reconstruct(const Vector& a) const;
};

PodBasis build_pod(const Matrix& x, int n_pod, PodMethod method = PodMethod::svd);

struct TrainConfig {
    std::vector<int> hidden = {64, 64, 64};
    double learning_rate = 1e-3;
    int epochs = 2000;
    int batch_size = 32;
    double validation_fraction = 0.1;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct NNLayer {
    Matrix w;  // out x in
    Vector b;
};

struct NNModel {
    std::vector<NNLayer> layers;  // tanh on all but the last
    Vector in_mean;
    Vector in_std;
    Vector out_mean;
    Vector out_std;
    std::vector<double> loss_history;  // normalized training MSE per epoch
    double train_mse = 0.0;
    double validation_mse = 0.0;

    Index n_inputs() const { return layers.front().w.cols(); }
    Index n_outputs() const { return layers.back().w.rows(); }
    /// Normalized network output for normalized inputs (columns are samples).
    Matrix forward_normalized(const Matrix& xn) const;
    /// Denormalized coefficients for one raw parameter vector.
    Vector predict(const Vector& mu) const;

    nlohmann::json to_json() const;
    static NNModel from_json(const nlohmann::json& j);
};

/// `targets` is N_POD x N_s, `inputs` is n_params x N_s.
NNModel train_nn(const Matrix& targets, const Matrix& inputs, const TrainConfig& cfg);

/// mean + Psi * a, reshaped to n_series rows.
Matrix predict_reconstruct(const NNModel& nn, const PodBasis& pod, const ParamVector& mu, Index n_series = 4);

/// Per-series relative L2 errors between a prediction and a reference.
Vector per_series_relative_error(const Matrix& pred, const Matrix& ref);

void save_pod(const std::filesystem::path& dir, const PodBasis& pod);
PodBasis load_pod(const std::filesystem::path& dir);

nlohmann::json params_to_json(const std::vector<ParamVector>& params);
std::vector<ParamVector> params_from_json(const nlohmann::json& j);

}  // namespace kmor
